#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "techmap/rng.hpp"

namespace techmap {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    static Matrix identity(std::size_t n);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
bool all_finite(std::span<const double> values);

/// Fully connected layer y = W x + b, W is (out x in).
struct Affine {
    Matrix weight;
    Vector bias;

    Affine() = default;
    Affine(std::size_t in, std::size_t out) : weight(out, in), bias(out, 0.0) {}

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }

    Vector apply(std::span<const double> x) const;

    /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    void glorot_init(Rng& rng);

    friend bool operator==(const Affine&, const Affine&) = default;
};

/// Shortest decimal string that parses back to the same double.
std::string format_double(double value);
std::optional<double> parse_double(std::string_view text);

std::string_view trim(std::string_view s);

/// Parses `tag key=value key=value ...`; throws DataError if the tag differs.
/// An empty tag means the line holds only key=value fields.
std::map<std::string, std::string> parse_header(std::string_view line, std::string_view tag);
/// Looks up a header field, throwing DataError naming it when absent.
const std::string& header_field(const std::map<std::string, std::string>& fields, const std::string& key);
std::size_t header_size(const std::map<std::string, std::string>& fields, const std::string& key);
double header_double(const std::map<std::string, std::string>& fields, const std::string& key);
std::vector<std::string_view> split(std::string_view s, char sep);

// Text tensor sections:
//   tensor <name> <rows> <cols>
//   <rows lines of <cols> space-separated values>
//   names <name> <count>
//   <count lines, one name each>
void write_tensor(std::ostream& os, std::string_view name, const Matrix& m);
void write_tensor(std::ostream& os, std::string_view name, std::span<const double> v);
void write_names(std::ostream& os, std::string_view name, std::span<const std::string> names);

/// Sequential reader for the section format above. All failures throw DataError.
class TensorReader {
public:
    explicit TensorReader(std::istream& is) : is_(is) {}

    /// Next non-empty line; throws on end of input.
    std::string line(std::string_view what);

    /// Reads a matrix section and checks its declared and actual shape.
    Matrix matrix(std::string_view name, std::size_t rows, std::size_t cols);
    Vector vector(std::string_view name, std::size_t size);
    std::vector<std::string> names(std::string_view name, std::size_t count);

    /// Matrix section whose shape is taken from its own header.
    Matrix matrix_any_shape(std::string_view name);

private:
    Matrix read_body(std::string_view name, std::size_t rows, std::size_t cols);

    std::istream& is_;
};

}  // namespace techmap
