#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace techmap {

enum class Source { website, patent, jobs, twitter };

inline constexpr std::array<Source, 4> kAllSources = {Source::website, Source::patent, Source::jobs,
                                                      Source::twitter};

std::string_view to_string(Source s);
/// Throws DataError for anything other than the four source names.
Source parse_source(std::string_view name);

/// Strips a DBpedia resource prefix so entities are keyed by their URI tail.
std::string normalize_entity_id(std::string_view raw);

/// Sorted, duplicate-free list of raw string ids; the dense id is the position.
class Catalog {
public:
    Catalog() = default;
    /// Sorts lexicographically and removes duplicates.
    explicit Catalog(std::vector<std::string> names);

    std::size_t size() const { return names_.size(); }
    bool empty() const { return names_.empty(); }
    const std::string& name(std::size_t id) const { return names_.at(id); }
    std::optional<std::size_t> find(std::string_view name) const;
    /// Like find, but throws DataError naming the id and the catalog kind.
    std::size_t at(std::string_view name, std::string_view kind) const;
    const std::vector<std::string>& names() const { return names_; }

    friend bool operator==(const Catalog&, const Catalog&) = default;

private:
    std::vector<std::string> names_;
};

struct MentionRecord {
    std::string company;
    std::string entity;
    std::int64_t count = 0;
    Source source = Source::website;

    friend bool operator==(const MentionRecord&, const MentionRecord&) = default;
};

/// Mentions from one data source, merged per (company, entity) and sorted.
struct SourceCorpus {
    Source source = Source::website;
    std::vector<MentionRecord> records;
    Catalog companies;
    Catalog entities;

    std::int64_t total_count() const;
};

SourceCorpus parse_mentions(std::istream& is, Source source);
SourceCorpus parse_mentions_file(const std::filesystem::path& path, Source source);
/// One JSON object per line, records in sorted order.
void write_mentions(std::ostream& os, const SourceCorpus& corpus);

struct EmbeddingTable {
    std::size_t dim = 0;
    std::map<std::string, std::vector<double>, std::less<>> vectors;

    const std::vector<double>* find(std::string_view entity) const;
    bool contains(std::string_view entity) const { return find(entity) != nullptr; }
};

EmbeddingTable load_embeddings(std::istream& is);
EmbeddingTable load_embeddings_file(const std::filesystem::path& path);
void write_embeddings(std::ostream& os, const EmbeddingTable& table);

struct TechLabelSet {
    std::map<std::string, bool, std::less<>> labels;

    /// Missing entities count as non-technology.
    bool is_technology(std::string_view entity) const;
};

/// CSV with a `label` column holding 0/1. A header row naming the columns
/// (`entity,label` or `entity,probability,label`) is optional.
TechLabelSet load_labels(std::istream& is);
TechLabelSet load_labels_file(const std::filesystem::path& path);

struct CategoryMap {
    std::map<std::string, std::set<std::string>, std::less<>> categories;

    /// Empty set for unknown ids.
    const std::set<std::string>& of(std::string_view id) const;
    bool contains(std::string_view id) const { return categories.find(id) != categories.end(); }
};

/// CSV `id,category`; an `id,category` header row is optional.
CategoryMap load_categories(std::istream& is);
CategoryMap load_categories_file(const std::filesystem::path& path);

struct SourceStats {
    Source source;
    std::size_t companies = 0;
    std::size_t entities = 0;
    std::size_t records = 0;
    std::int64_t total_count = 0;
};

struct ValidationReport {
    std::vector<SourceStats> sources;
    std::vector<std::string> missing_embeddings;
    std::vector<std::string> missing_labels;

    bool clean() const { return missing_embeddings.empty() && missing_labels.empty(); }
};

/// Reporting only: never throws for coverage gaps. Null tables are not checked.
ValidationReport validate_corpus(std::span<const SourceCorpus> corpora, const EmbeddingTable* embeddings,
                                 const TechLabelSet* labels);

/// Splits one CSV line, honouring double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line);
/// Quotes a field if it contains a comma, quote or newline.
std::string csv_field(std::string_view field);

}  // namespace techmap
