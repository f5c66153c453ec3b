#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "techmap/corpus.hpp"

namespace techmap {

/// Value stored for an observed pair whose raw tf-idf is zero (term used by
/// every company of a source). Keeps observed distinct from unobserved.
inline constexpr double kObservedZero = 1e-9;

struct SourceWeights {
    std::map<Source, double> weights{{Source::website, 1.0},
                                     {Source::patent, 1.0},
                                     {Source::jobs, 1.0},
                                     {Source::twitter, 1.0}};

    double of(Source s) const;
    void set(Source s, double w) { weights[s] = w; }
    /// Throws DataError if any weight is negative/non-finite or all are zero.
    void validate() const;
};

struct SparseEntry {
    std::size_t col;
    double value;

    friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

using SparseRow = std::vector<SparseEntry>;

/// Sparse company x technology matrix. A missing entry means unobserved;
/// every stored value is strictly positive.
class InteractionMatrix {
public:
    InteractionMatrix() = default;
    /// Triplets are (row, col, value); duplicates are an error.
    InteractionMatrix(Catalog companies, Catalog techs,
                      std::vector<std::tuple<std::size_t, std::size_t, double>> triplets);

    std::size_t n_companies() const { return companies_.size(); }
    std::size_t n_techs() const { return techs_.size(); }
    std::size_t nnz() const;

    const Catalog& companies() const { return companies_; }
    const Catalog& techs() const { return techs_; }

    /// Entries sorted by column.
    const SparseRow& row(std::size_t company) const { return rows_.at(company); }
    std::optional<double> find(std::size_t company, std::size_t tech) const;
    bool observed(std::size_t company, std::size_t tech) const { return find(company, tech).has_value(); }

    /// Calls fn(company, tech, value) in row-major order.
    void for_each(const std::function<void(std::size_t, std::size_t, double)>& fn) const;

    friend bool operator==(const InteractionMatrix&, const InteractionMatrix&) = default;

private:
    Catalog companies_;
    Catalog techs_;
    std::vector<SparseRow> rows_;
};

/// count(c,t) * ln(N / df(t)) over one source, companies as documents.
InteractionMatrix tfidf_source(const SourceCorpus& corpus);

struct SourceMatrix {
    Source source;
    InteractionMatrix matrix;
};

/// f(c,t) = sum_k w_k f_k(c,t) over the union of ids. Sources with weight 0
/// contribute neither values nor observations.
InteractionMatrix combine_sources(std::span<const SourceMatrix> parts, const SourceWeights& weights);

/// Keeps columns whose entity satisfies keep(name); catalog is re-indexed.
InteractionMatrix filter_columns(const InteractionMatrix& m, const std::function<bool(const std::string&)>& keep);
/// Keeps columns classified as technology; entities missing from the map are dropped.
InteractionMatrix filter_technologies(const InteractionMatrix& m, const std::map<std::string, bool, std::less<>>& predictions);
/// Drops companies with no observed entries.
InteractionMatrix drop_empty_rows(const InteractionMatrix& m);

/// Row of M for the company, as (tech id, value) sorted by tech id.
SparseRow company_tfidf_vector(const InteractionMatrix& m, std::string_view company);

/// Header `companies=<n> techs=<m>`, then `<company>\t<tech>\t<value>` lines.
/// Throws std::logic_error for matrices with empty rows (they cannot be
/// represented); call drop_empty_rows first.
void save_matrix(std::ostream& os, const InteractionMatrix& m);
void save_matrix_file(const std::filesystem::path& path, const InteractionMatrix& m);
InteractionMatrix load_matrix(std::istream& is);
InteractionMatrix load_matrix_file(const std::filesystem::path& path);

}  // namespace techmap
