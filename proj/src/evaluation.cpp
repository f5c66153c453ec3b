#include "techmap/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

#include "techmap/error.hpp"
#include "techmap/tensor.hpp"

namespace techmap {

namespace {

std::size_t overlap(const std::set<std::string>& query, const std::set<std::string>& result, OverlapForm form) {
    std::size_t shared = 0;
    for (const auto& c : result) shared += query.count(c);
    if (form == OverlapForm::intersection) return shared;
    return query.size() + result.size() - shared;
}

}  // namespace

std::string_view to_string(Task t) { return t == Task::com_com ? "com-com" : "tech-com"; }

Task parse_task(std::string_view name) {
    if (name == "com-com") return Task::com_com;
    if (name == "tech-com") return Task::tech_com;
    throw DataError("unknown task '" + std::string(name) + "' (expected com-com or tech-com)");
}

double p_at_k(const std::set<std::string>& query_categories, std::span<const std::string> results,
              const CategoryMap& categories, std::size_t k, OverlapForm form) {
    if (k == 0) throw std::invalid_argument("p_at_k needs k >= 1");
    std::size_t total = 0;
    const std::size_t n = std::min(k, results.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!categories.contains(results[i])) continue;
        total += overlap(query_categories, categories.of(results[i]), form);
    }
    return static_cast<double>(total) / static_cast<double>(k);
}

double p_at_k_set(std::span<const std::string> queries, const RetrievalFn& retrieve, const CategoryMap& categories,
                  std::size_t k, OverlapForm form) {
    if (queries.empty()) throw std::invalid_argument("p_at_k_set needs at least one query");
    double sum = 0.0;
    for (const auto& q : queries) {
        const auto results = retrieve(q, k);
        sum += p_at_k(categories.of(q), results, categories, k, form);
    }
    return sum / static_cast<double>(queries.size());
}

double random_ranking_p_at_k(const std::set<std::string>& query_categories, std::span<const std::string> candidates,
                             const CategoryMap& categories, std::size_t k) {
    if (candidates.empty()) return 0.0;
    double mean_overlap = 0.0;
    for (const auto& c : candidates)
        if (categories.contains(c)) mean_overlap += static_cast<double>(overlap(query_categories, categories.of(c), OverlapForm::intersection));
    mean_overlap /= static_cast<double>(candidates.size());
    const double filled = static_cast<double>(std::min(k, candidates.size()));
    return mean_overlap * filled / static_cast<double>(k);
}

PrecisionReport evaluate_task(Task task, std::string model, std::span<const std::string> queries,
                              const RetrievalFn& retrieve, const CategoryMap& categories,
                              std::span<const std::size_t> ks, OverlapForm form) {
    if (ks.empty()) throw std::invalid_argument("evaluate_task needs at least one k");
    PrecisionReport report;
    report.task = task;
    report.model = std::move(model);
    report.ks.assign(ks.begin(), ks.end());
    const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
    for (const auto& q : queries) {
        if (!categories.contains(q)) {
            ++report.skipped;
            continue;
        }
        const auto results = retrieve(q, max_k);
        auto& row = report.per_query[q];
        for (auto k : ks) row[k] = p_at_k(categories.of(q), results, categories, k, form);
    }
    if (report.per_query.empty())
        throw DataError("no " + std::string(to_string(task)) + " query has categories (" +
                        std::to_string(report.skipped) + " skipped)");
    for (auto k : ks) {
        double sum = 0.0;
        for (const auto& [q, row] : report.per_query) sum += row.at(k);
        report.mean[k] = sum / static_cast<double>(report.per_query.size());
    }
    return report;
}

void write_report_csv(std::ostream& os, std::span<const PrecisionReport> reports) {
    os << "task,model,k,mean_p_at_k,n_queries\n";
    for (const auto& r : reports)
        for (auto k : r.ks)
            os << to_string(r.task) << ',' << csv_field(r.model) << ',' << k << ',' << format_double(r.mean.at(k)) << ','
               << r.n_queries() << '\n';
}

void write_report_table(std::ostream& os, std::span<const PrecisionReport> reports) {
    if (reports.empty()) return;
    std::size_t width = 8;
    for (const auto& r : reports) width = std::max(width, r.model.size() + 2);
    os << std::left << std::setw(static_cast<int>(width)) << "model";
    for (auto k : reports.front().ks) os << std::right << std::setw(10) << ("top-" + std::to_string(k));
    os << '\n';
    for (const auto& r : reports) {
        os << std::left << std::setw(static_cast<int>(width)) << r.model << std::right << std::fixed
           << std::setprecision(4);
        for (auto k : r.ks) os << std::setw(10) << r.mean.at(k);
        os << '\n';
    }
    os.unsetf(std::ios::fixed);
}

}  // namespace techmap
