#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace techmap::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// `key = value` lines, `#` starts a comment. Keys may be qualified with a
/// subcommand (`train-recommender.epochs`), which wins over the bare key.
class ConfigFile {
public:
    ConfigFile() = default;
    static ConfigFile parse(std::istream& is);
    static ConfigFile load(const std::string& path);

    std::optional<std::string> get(const std::string& command, const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

/// Runs one command line (without the program name). Output tables go to
/// `out` unless redirected by --out; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace techmap::cli
