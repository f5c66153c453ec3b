#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "techmap/corpus.hpp"

namespace techmap {

enum class Task { com_com, tech_com };

std::string_view to_string(Task t);
Task parse_task(std::string_view name);

enum class OverlapForm {
    /// |C(q) ∩ C(r)|: number of categories a result shares with the query
    intersection,
    /// |C(q) ∪ C(r)|, kept for comparison only
    union_size,
};

/// (sum over the first k results of the category overlap with the query) / k.
/// Short lists count as zero-overlap padding; results without categories count 0.
double p_at_k(const std::set<std::string>& query_categories, std::span<const std::string> results,
              const CategoryMap& categories, std::size_t k, OverlapForm form = OverlapForm::intersection);

/// Ranked result ids for a query, at least the first k.
using RetrievalFn = std::function<std::vector<std::string>(const std::string& query, std::size_t k)>;

/// Mean of p_at_k over the queries.
double p_at_k_set(std::span<const std::string> queries, const RetrievalFn& retrieve, const CategoryMap& categories,
                  std::size_t k, OverlapForm form = OverlapForm::intersection);

/// Expected p_at_k when the candidates are put in uniformly random order:
/// the mean overlap over the candidate pool (scaled when the pool is shorter than k).
double random_ranking_p_at_k(const std::set<std::string>& query_categories, std::span<const std::string> candidates,
                             const CategoryMap& categories, std::size_t k);

struct PrecisionReport {
    Task task = Task::com_com;
    std::string model;
    std::vector<std::size_t> ks;
    std::map<std::size_t, double> mean;
    /// query -> (k -> p_at_k)
    std::map<std::string, std::map<std::size_t, double>> per_query;
    std::size_t skipped = 0;

    std::size_t n_queries() const { return per_query.size(); }
};

inline const std::vector<std::size_t> kDefaultKs = {5, 10, 15, 20};

/// Runs every query that has categories (others are skipped and counted) and
/// reports mean P@k per k. Throws DataError if no query remains.
PrecisionReport evaluate_task(Task task, std::string model, std::span<const std::string> queries,
                              const RetrievalFn& retrieve, const CategoryMap& categories,
                              std::span<const std::size_t> ks = kDefaultKs,
                              OverlapForm form = OverlapForm::intersection);

/// CSV `task,model,k,mean_p_at_k,n_queries`.
void write_report_csv(std::ostream& os, std::span<const PrecisionReport> reports);
/// Fixed-width table, one row per model, one column per k.
void write_report_table(std::ostream& os, std::span<const PrecisionReport> reports);

}  // namespace techmap
