#include "techmap/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "techmap/error.hpp"

namespace techmap {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> values) {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

Vector Affine::apply(std::span<const double> x) const {
    Vector y(bias);
    for (std::size_t o = 0; o < weight.rows(); ++o) y[o] += dot(weight.row(o), x);
    return y;
}

void Affine::glorot_init(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
    for (double& w : weight.values()) w = rng.uniform(-limit, limit);
    std::fill(bias.begin(), bias.end(), 0.0);
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

std::optional<double> parse_double(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
    return value;
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> parse_header(std::string_view line, std::string_view tag) {
    std::map<std::string, std::string> fields;
    bool first = !tag.empty();
    for (auto word : split(trim(line), ' ')) {
        if (word.empty()) continue;
        if (first) {
            if (word != tag) throw DataError("expected '" + std::string(tag) + "' header, found '" + std::string(line) + "'");
            first = false;
            continue;
        }
        const auto eq = word.find('=');
        if (eq == std::string_view::npos) throw DataError("bad header field '" + std::string(word) + "'");
        fields[std::string(word.substr(0, eq))] = std::string(word.substr(eq + 1));
    }
    if (first) throw DataError("missing '" + std::string(tag) + "' header");
    if (fields.empty()) throw DataError("empty header line");
    return fields;
}

const std::string& header_field(const std::map<std::string, std::string>& fields, const std::string& key) {
    auto it = fields.find(key);
    if (it == fields.end()) throw DataError("header is missing field '" + key + "'");
    return it->second;
}

std::size_t header_size(const std::map<std::string, std::string>& fields, const std::string& key) {
    const auto& text = header_field(fields, key);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw DataError("header field " + key + " is not a size: '" + text + "'");
    return v;
}

double header_double(const std::map<std::string, std::string>& fields, const std::string& key) {
    const auto v = parse_double(header_field(fields, key));
    if (!v) throw DataError("header field " + key + " is not a number");
    return *v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

void write_tensor(std::ostream& os, std::string_view name, const Matrix& m) {
    os << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) os << ' ';
            os << format_double(row[c]);
        }
        os << '\n';
    }
}

void write_tensor(std::ostream& os, std::string_view name, std::span<const double> v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.values().begin());
    write_tensor(os, name, m);
}

void write_names(std::ostream& os, std::string_view name, std::span<const std::string> names) {
    os << "names " << name << ' ' << names.size() << '\n';
    for (const auto& n : names) os << n << '\n';
}

std::string TensorReader::line(std::string_view what) {
    std::string text;
    while (std::getline(is_, text)) {
        if (!trim(text).empty()) return text;
    }
    throw DataError("unexpected end of file while reading " + std::string(what));
}

namespace {

std::size_t parse_size(std::string_view text, std::string_view what) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw DataError("bad size '" + std::string(text) + "' in " + std::string(what));
    return v;
}

std::vector<std::string_view> words(std::string_view s) {
    std::vector<std::string_view> out;
    for (auto w : split(trim(s), ' '))
        if (!w.empty()) out.push_back(w);
    return out;
}

}  // namespace

Matrix TensorReader::read_body(std::string_view name, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::string text = line("tensor " + std::string(name));
        const auto fields = words(text);
        if (fields.size() != cols) {
            std::ostringstream msg;
            msg << "shape mismatch in tensor " << name << ": row " << r << " has " << fields.size()
                << " values, expected " << cols;
            throw DataError(msg.str());
        }
        for (std::size_t c = 0; c < cols; ++c) {
            const auto v = parse_double(fields[c]);
            if (!v || !std::isfinite(*v))
                throw DataError("bad value '" + std::string(fields[c]) + "' in tensor " +
                                std::string(name));
            m(r, c) = *v;
        }
    }
    return m;
}

Matrix TensorReader::matrix_any_shape(std::string_view name) {
    const std::string header = line("tensor " + std::string(name));
    const auto f = words(header);
    if (f.size() != 4 || f[0] != "tensor" || f[1] != name)
        throw DataError("expected section 'tensor " + std::string(name) + "', found '" + header + "'");
    const auto rows = parse_size(f[2], name);
    const auto cols = parse_size(f[3], name);
    return read_body(name, rows, cols);
}

Matrix TensorReader::matrix(std::string_view name, std::size_t rows, std::size_t cols) {
    const std::string header = line("tensor " + std::string(name));
    const auto f = words(header);
    if (f.size() != 4 || f[0] != "tensor" || f[1] != name)
        throw DataError("expected section 'tensor " + std::string(name) + "', found '" + header + "'");
    const auto r = parse_size(f[2], name);
    const auto c = parse_size(f[3], name);
    if (r != rows || c != cols) {
        std::ostringstream msg;
        msg << "shape mismatch in tensor " << name << ": file declares " << r << "x" << c
            << ", expected " << rows << "x" << cols;
        throw DataError(msg.str());
    }
    return read_body(name, rows, cols);
}

Vector TensorReader::vector(std::string_view name, std::size_t size) {
    const Matrix m = matrix(name, 1, size);
    return Vector(m.values().begin(), m.values().end());
}

std::vector<std::string> TensorReader::names(std::string_view name, std::size_t count) {
    const std::string header = line("names " + std::string(name));
    const auto f = words(header);
    if (f.size() != 3 || f[0] != "names" || f[1] != name)
        throw DataError("expected section 'names " + std::string(name) + "', found '" + header + "'");
    if (parse_size(f[2], name) != count)
        throw DataError("shape mismatch in names " + std::string(name) + ": expected " +
                        std::to_string(count) + " entries");
    std::vector<std::string> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string n;
        if (!std::getline(is_, n)) throw DataError("unexpected end of file in names " + std::string(name));
        out.emplace_back(trim(n));
    }
    return out;
}

}  // namespace techmap
