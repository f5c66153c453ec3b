#include "techmap/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "techmap/error.hpp"

namespace techmap {

namespace {

RankedList make_list(std::string_view query, std::size_t k, const std::vector<std::pair<std::size_t, double>>& ranked,
                     const Catalog& catalog) {
    RankedList list;
    list.query = std::string(query);
    list.k = k;
    for (const auto& [id, s] : ranked) list.items.push_back({id, catalog.name(id), s});
    return list;
}

void require_same_catalogs(const RecommenderModel& model, const InteractionMatrix& m) {
    if (model.companies != m.companies() || model.techs != m.techs())
        throw DataError("interaction matrix and model were built over different companies or technologies");
}

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace

std::vector<std::string> RankedList::names() const {
    std::vector<std::string> out;
    for (const auto& item : items) out.push_back(item.name);
    return out;
}

std::vector<std::pair<std::size_t, double>> top_k(std::vector<std::pair<std::size_t, double>> candidates,
                                                  std::size_t k) {
    const auto before = [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    };
    const std::size_t keep = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      before);
    candidates.resize(keep);
    return candidates;
}

RankedList retrieve_com_tech(const RecommenderModel& model, const InteractionMatrix& m, std::string_view company,
                             std::size_t k, bool include_observed) {
    require_same_catalogs(model, m);
    const std::size_t c = model.companies.at(company, "company");
    std::vector<std::pair<std::size_t, double>> candidates;
    for (std::size_t t = 0; t < model.n_techs(); ++t)
        if (include_observed || !m.observed(c, t)) candidates.emplace_back(t, score(model, c, t));
    return make_list(company, k, top_k(std::move(candidates), k), model.techs);
}

RankedList retrieve_com_com(const RecommenderModel& model, std::string_view company, std::size_t k,
                            CompanySimilarity similarity) {
    const std::size_t q = model.companies.at(company, "company");
    std::vector<std::pair<std::size_t, double>> candidates;
    if (similarity == CompanySimilarity::factor_cosine) {
        const auto query = model.company_factors.row(q);
        if (norm(query) == 0.0) throw DataError("company '" + std::string(company) + "' has a zero embedding");
        for (std::size_t c = 0; c < model.n_companies(); ++c)
            if (c != q) candidates.emplace_back(c, cosine(query, model.company_factors.row(c)));
    } else {
        const Matrix scores = predict_matrix(model);
        if (norm(scores.row(q)) == 0.0)
            throw DataError("company '" + std::string(company) + "' has an all-zero score row");
        for (std::size_t c = 0; c < model.n_companies(); ++c)
            if (c != q) candidates.emplace_back(c, cosine(scores.row(q), scores.row(c)));
    }
    return make_list(company, k, top_k(std::move(candidates), k), model.companies);
}

RankedList retrieve_tech_com(const RecommenderModel& model, std::string_view tech, std::size_t k) {
    const std::size_t t = model.techs.at(tech, "technology");
    std::vector<std::pair<std::size_t, double>> candidates;
    for (std::size_t c = 0; c < model.n_companies(); ++c) candidates.emplace_back(c, score(model, c, t));
    return make_list(tech, k, top_k(std::move(candidates), k), model.companies);
}

RankedList tfidf_retrieve_com_tech(const InteractionMatrix& m, std::string_view company, std::size_t k) {
    std::vector<std::pair<std::size_t, double>> candidates;
    for (const auto& e : company_tfidf_vector(m, company)) candidates.emplace_back(e.col, e.value);
    return make_list(company, k, top_k(std::move(candidates), k), m.techs());
}

double weighted_jaccard(const SparseRow& a, const SparseRow& b) {
    double num = 0.0, den = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].col < b[j].col)) {
            den += a[i++].value;
        } else if (i == a.size() || b[j].col < a[i].col) {
            den += b[j++].value;
        } else {
            num += std::min(a[i].value, b[j].value);
            den += std::max(a[i].value, b[j].value);
            ++i;
            ++j;
        }
    }
    return den > 0.0 ? num / den : 0.0;
}

RankedList tfidf_retrieve_com_com(const InteractionMatrix& m, std::string_view company, std::size_t k) {
    const std::size_t q = m.companies().at(company, "company");
    std::vector<std::pair<std::size_t, double>> candidates;
    for (std::size_t c = 0; c < m.n_companies(); ++c)
        if (c != q) candidates.emplace_back(c, weighted_jaccard(m.row(q), m.row(c)));
    return make_list(company, k, top_k(std::move(candidates), k), m.companies());
}

RankedList tfidf_retrieve_tech_com(const InteractionMatrix& m, std::string_view tech, std::size_t k) {
    const std::size_t t = m.techs().at(tech, "technology");
    std::vector<std::pair<std::size_t, double>> candidates;
    for (std::size_t c = 0; c < m.n_companies(); ++c)
        if (auto v = m.find(c, t)) candidates.emplace_back(c, *v);
    return make_list(tech, k, top_k(std::move(candidates), k), m.companies());
}

}  // namespace techmap
