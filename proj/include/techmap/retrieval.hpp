#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "techmap/interaction.hpp"
#include "techmap/recommender.hpp"

namespace techmap {

struct RankedItem {
    std::size_t id = 0;
    std::string name;
    double score = 0.0;

    friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

/// Scores non-increasing, ties by ascending dense id, length min(k, candidates).
struct RankedList {
    std::string query;
    std::size_t k = 0;
    std::vector<RankedItem> items;

    std::vector<std::string> names() const;

    friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Ranks (id, score) candidates by score descending then id ascending and
/// keeps the first k.
std::vector<std::pair<std::size_t, double>> top_k(std::vector<std::pair<std::size_t, double>> candidates,
                                                  std::size_t k);

/// Technologies for a company by predicted score. With include_observed the
/// whole catalog is ranked; otherwise only technologies the company has not
/// mentioned in M. M must share the model's catalogs.
RankedList retrieve_com_tech(const RecommenderModel& model, const InteractionMatrix& m, std::string_view company,
                             std::size_t k, bool include_observed);

enum class CompanySimilarity {
    /// cosine between learned company factors
    factor_cosine,
    /// cosine between rows of predicted scores
    score_row_cosine,
};

/// Other companies by cosine similarity; throws DataError for a zero-norm query.
RankedList retrieve_com_com(const RecommenderModel& model, std::string_view company, std::size_t k,
                            CompanySimilarity similarity = CompanySimilarity::factor_cosine);

/// Companies for a technology by predicted score.
RankedList retrieve_tech_com(const RecommenderModel& model, std::string_view tech, std::size_t k);

/// Observed technologies of the company by their interaction value.
RankedList tfidf_retrieve_com_tech(const InteractionMatrix& m, std::string_view company, std::size_t k);

/// sum_t min(a_t, b_t) / sum_t max(a_t, b_t); 0 when both rows are empty.
double weighted_jaccard(const SparseRow& a, const SparseRow& b);

/// Other companies by weighted Jaccard over interaction rows.
RankedList tfidf_retrieve_com_com(const InteractionMatrix& m, std::string_view company, std::size_t k);

/// Companies that mention the technology, by interaction value.
RankedList tfidf_retrieve_tech_com(const InteractionMatrix& m, std::string_view tech, std::size_t k);

}  // namespace techmap
