#include "techmap/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "techmap/error.hpp"
#include "techmap/tensor.hpp"

namespace techmap {

double SourceWeights::of(Source s) const {
    auto it = weights.find(s);
    return it == weights.end() ? 0.0 : it->second;
}

void SourceWeights::validate() const {
    bool any_positive = false;
    for (const auto& [s, w] : weights) {
        if (!std::isfinite(w) || w < 0.0)
            throw DataError("weight for source " + std::string(to_string(s)) + " must be finite and >= 0");
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) throw DataError("all source weights are zero");
}

InteractionMatrix::InteractionMatrix(Catalog companies, Catalog techs,
                                     std::vector<std::tuple<std::size_t, std::size_t, double>> triplets)
    : companies_(std::move(companies)), techs_(std::move(techs)), rows_(companies_.size()) {
    for (const auto& [r, c, v] : triplets) {
        if (r >= companies_.size() || c >= techs_.size()) throw std::out_of_range("interaction entry out of range");
        if (!(v > 0.0) || !std::isfinite(v)) throw DataError("interaction values must be positive and finite");
        rows_[r].push_back({c, v});
    }
    for (auto& row : rows_) {
        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.col < b.col; });
        for (std::size_t i = 1; i < row.size(); ++i)
            if (row[i].col == row[i - 1].col) throw DataError("duplicate interaction entry");
    }
}

std::size_t InteractionMatrix::nnz() const {
    std::size_t n = 0;
    for (const auto& row : rows_) n += row.size();
    return n;
}

std::optional<double> InteractionMatrix::find(std::size_t company, std::size_t tech) const {
    const auto& r = rows_.at(company);
    auto it = std::lower_bound(r.begin(), r.end(), tech, [](const SparseEntry& e, std::size_t c) { return e.col < c; });
    if (it == r.end() || it->col != tech) return std::nullopt;
    return it->value;
}

void InteractionMatrix::for_each(const std::function<void(std::size_t, std::size_t, double)>& fn) const {
    for (std::size_t r = 0; r < rows_.size(); ++r)
        for (const auto& e : rows_[r]) fn(r, e.col, e.value);
}

InteractionMatrix tfidf_source(const SourceCorpus& corpus) {
    const double n_docs = static_cast<double>(corpus.companies.size());
    std::vector<std::size_t> df(corpus.entities.size(), 0);
    for (const auto& r : corpus.records) ++df[*corpus.entities.find(r.entity)];

    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets;
    triplets.reserve(corpus.records.size());
    for (const auto& r : corpus.records) {
        const auto row = *corpus.companies.find(r.company);
        const auto col = *corpus.entities.find(r.entity);
        const double idf = std::log(n_docs / static_cast<double>(df[col]));
        double value = static_cast<double>(r.count) * idf;
        if (value <= 0.0) value = kObservedZero;
        triplets.emplace_back(row, col, value);
    }
    return InteractionMatrix(corpus.companies, corpus.entities, std::move(triplets));
}

InteractionMatrix combine_sources(std::span<const SourceMatrix> parts, const SourceWeights& weights) {
    weights.validate();
    std::vector<std::string> companies, techs;
    for (const auto& p : parts) {
        if (weights.of(p.source) == 0.0) continue;
        const auto& m = p.matrix;
        companies.insert(companies.end(), m.companies().names().begin(), m.companies().names().end());
        techs.insert(techs.end(), m.techs().names().begin(), m.techs().names().end());
    }
    Catalog company_cat(std::move(companies)), tech_cat(std::move(techs));

    // sources are summed in the order given, so the result is reproducible bit for bit
    std::map<std::pair<std::size_t, std::size_t>, double> acc;
    for (const auto& p : parts) {
        const double w = weights.of(p.source);
        if (w == 0.0) continue;
        const auto& m = p.matrix;
        std::vector<std::size_t> row_map(m.n_companies()), col_map(m.n_techs());
        for (std::size_t i = 0; i < row_map.size(); ++i) row_map[i] = *company_cat.find(m.companies().name(i));
        for (std::size_t j = 0; j < col_map.size(); ++j) col_map[j] = *tech_cat.find(m.techs().name(j));
        m.for_each([&](std::size_t r, std::size_t c, double v) { acc[{row_map[r], col_map[c]}] += w * v; });
    }
    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets;
    triplets.reserve(acc.size());
    for (const auto& [key, v] : acc) triplets.emplace_back(key.first, key.second, v);
    return InteractionMatrix(std::move(company_cat), std::move(tech_cat), std::move(triplets));
}

InteractionMatrix filter_columns(const InteractionMatrix& m, const std::function<bool(const std::string&)>& keep) {
    std::vector<std::string> kept;
    for (const auto& name : m.techs().names())
        if (keep(name)) kept.push_back(name);
    Catalog techs(std::move(kept));
    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets;
    m.for_each([&](std::size_t r, std::size_t c, double v) {
        if (auto id = techs.find(m.techs().name(c))) triplets.emplace_back(r, *id, v);
    });
    return InteractionMatrix(m.companies(), std::move(techs), std::move(triplets));
}

InteractionMatrix filter_technologies(const InteractionMatrix& m,
                                      const std::map<std::string, bool, std::less<>>& predictions) {
    return filter_columns(m, [&](const std::string& name) {
        auto it = predictions.find(name);
        return it != predictions.end() && it->second;
    });
}

InteractionMatrix drop_empty_rows(const InteractionMatrix& m) {
    std::vector<std::string> kept;
    for (std::size_t r = 0; r < m.n_companies(); ++r)
        if (!m.row(r).empty()) kept.push_back(m.companies().name(r));
    Catalog companies(std::move(kept));
    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets;
    m.for_each([&](std::size_t r, std::size_t c, double v) {
        triplets.emplace_back(*companies.find(m.companies().name(r)), c, v);
    });
    return InteractionMatrix(std::move(companies), m.techs(), std::move(triplets));
}

SparseRow company_tfidf_vector(const InteractionMatrix& m, std::string_view company) {
    return m.row(m.companies().at(company, "company"));
}

void save_matrix(std::ostream& os, const InteractionMatrix& m) {
    std::vector<bool> col_used(m.n_techs(), false);
    for (std::size_t r = 0; r < m.n_companies(); ++r) {
        if (m.row(r).empty())
            throw std::logic_error("cannot save matrix: company '" + m.companies().name(r) + "' has no entries");
        for (const auto& e : m.row(r)) col_used[e.col] = true;
    }
    if (std::find(col_used.begin(), col_used.end(), false) != col_used.end())
        throw std::logic_error("cannot save matrix: a technology column has no entries");
    os << "companies=" << m.n_companies() << " techs=" << m.n_techs() << '\n';
    m.for_each([&](std::size_t r, std::size_t c, double v) {
        os << m.companies().name(r) << '\t' << m.techs().name(c) << '\t' << format_double(v) << '\n';
    });
}

void save_matrix_file(const std::filesystem::path& path, const InteractionMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    save_matrix(out, m);
}

InteractionMatrix load_matrix(std::istream& is) {
    std::string text;
    if (!std::getline(is, text)) throw DataError("matrix file is empty");
    std::size_t n = 0, m = 0;
    {
        std::istringstream header(text);
        std::string a, b;
        header >> a >> b;
        if (!a.starts_with("companies=") || !b.starts_with("techs="))
            throw DataError("matrix header must be 'companies=<n> techs=<m>'");
        try {
            n = std::stoul(a.substr(10));
            m = std::stoul(b.substr(6));
        } catch (const std::exception&) {
            throw DataError("bad matrix header '" + text + "'");
        }
    }
    std::vector<std::tuple<std::string, std::string, double>> rows;
    std::vector<std::string> companies, techs;
    std::size_t line_no = 1;
    while (std::getline(is, text)) {
        ++line_no;
        if (trim(text).empty()) continue;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        const auto f = split(text, '\t');
        const auto v = f.size() == 3 ? parse_double(f[2]) : std::nullopt;
        if (!v || f[0].empty() || f[1].empty())
            throw DataError("matrix line " + std::to_string(line_no) + ": expected <company>\\t<tech>\\t<value>");
        companies.emplace_back(f[0]);
        techs.emplace_back(f[1]);
        rows.emplace_back(std::string(f[0]), std::string(f[1]), *v);
    }
    Catalog company_cat(std::move(companies)), tech_cat(std::move(techs));
    if (company_cat.size() != n || tech_cat.size() != m)
        throw DataError("matrix header declares " + std::to_string(n) + " companies and " + std::to_string(m) +
                        " techs, entries reference " + std::to_string(company_cat.size()) + " and " +
                        std::to_string(tech_cat.size()));
    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets;
    triplets.reserve(rows.size());
    for (const auto& [c, t, v] : rows) triplets.emplace_back(*company_cat.find(c), *tech_cat.find(t), v);
    return InteractionMatrix(std::move(company_cat), std::move(tech_cat), std::move(triplets));
}

InteractionMatrix load_matrix_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return load_matrix(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace techmap
