// Brute-force reference implementations used by the unit and acceptance tests.
// They deliberately avoid the library's own helpers so a shared bug cannot
// hide in both sides of a comparison.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "techmap/classifier.hpp"
#include "techmap/corpus.hpp"
#include "techmap/evaluation.hpp"
#include "techmap/recommender.hpp"

namespace oracle {

using Counts = std::map<std::pair<std::string, std::string>, long long>;

/// tf-idf of one source straight from raw (company, entity) counts.
inline std::map<std::pair<std::string, std::string>, double> tfidf(const Counts& counts) {
    std::set<std::string> companies;
    std::map<std::string, std::set<std::string>> users;
    for (const auto& [key, n] : counts) {
        companies.insert(key.first);
        users[key.second].insert(key.first);
    }
    const double total = static_cast<double>(companies.size());
    std::map<std::pair<std::string, std::string>, double> out;
    for (const auto& [key, n] : counts) {
        const double v = static_cast<double>(n) * std::log(total / static_cast<double>(users[key.second].size()));
        out[key] = v == 0.0 ? techmap::kObservedZero : v;
    }
    return out;
}

/// Weighted sum over sources; weight-0 sources are ignored entirely.
inline std::map<std::pair<std::string, std::string>, double> combined(const std::vector<Counts>& sources,
                                                                      const std::vector<double>& weights) {
    std::map<std::pair<std::string, std::string>, double> out;
    for (std::size_t k = 0; k < sources.size(); ++k) {
        if (weights[k] == 0.0) continue;
        for (const auto& [key, v] : tfidf(sources[k])) out[key] += weights[k] * v;
    }
    return out;
}

/// Category overlap P@k, counting element by element.
inline double p_at_k(const std::set<std::string>& query, const std::vector<std::string>& results,
                     const std::map<std::string, std::set<std::string>, std::less<>>& cats, std::size_t k) {
    double total = 0.0;
    for (std::size_t i = 0; i < k && i < results.size(); ++i) {
        auto it = cats.find(results[i]);
        if (it == cats.end()) continue;
        for (const auto& c : it->second)
            for (const auto& q : query)
                if (c == q) total += 1.0;
    }
    return total / static_cast<double>(k);
}

/// Weighted Jaccard over dense vectors.
inline double weighted_jaccard(const std::vector<double>& a, const std::vector<double>& b) {
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        lo += std::min(a[i], b[i]);
        hi += std::max(a[i], b[i]);
    }
    return hi == 0.0 ? 0.0 : lo / hi;
}

/// Rank-sum AUC by enumerating every positive/negative pair.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t j = 0; j < scores.size(); ++j)
            if (labels[i] == 1 && labels[j] == 0) {
                pairs += 1.0;
                wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
            }
    return wins / pairs;
}

/// Central differences of f over every entry of every tensor in params.
inline std::vector<std::vector<double>> finite_difference(std::vector<std::span<double>> params,
                                                          const std::function<double()>& f, double step) {
    std::vector<std::vector<double>> grad;
    for (auto p : params) {
        std::vector<double> g(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + step;
            const double up = f();
            p[i] = saved - step;
            const double down = f();
            p[i] = saved;
            g[i] = (up - down) / (2.0 * step);
        }
        grad.push_back(std::move(g));
    }
    return grad;
}

/// Largest per-tensor ||a - n|| / max(||a||, ||n||, floor).
inline double max_relative_error(const std::vector<std::vector<double>>& analytic,
                                 const std::vector<std::vector<double>>& numeric, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t t = 0; t < analytic.size(); ++t) {
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < analytic[t].size(); ++i) {
            diff += (analytic[t][i] - numeric[t][i]) * (analytic[t][i] - numeric[t][i]);
            na += analytic[t][i] * analytic[t][i];
            nn += numeric[t][i] * numeric[t][i];
        }
        const double denom = std::max({std::sqrt(na), std::sqrt(nn), floor});
        worst = std::max(worst, std::sqrt(diff) / denom);
    }
    return worst;
}

/// Score recomputed from the public model tensors.
inline double score(const techmap::RecommenderModel& m, std::size_t c, std::size_t t) {
    using techmap::Variant;
    std::vector<double> tech(m.d, 0.0);
    if (techmap::uses_semantic(m.variant)) {
        std::vector<double> s(m.semantic.row(t).begin(), m.semantic.row(t).end());
        for (std::size_t l = 0; l < m.projection.size(); ++l) {
            const auto& layer = m.projection[l];
            std::vector<double> next(layer.out_dim());
            for (std::size_t o = 0; o < next.size(); ++o) {
                double z = layer.bias[o];
                for (std::size_t i = 0; i < s.size(); ++i) z += layer.weight(o, i) * s[i];
                next[o] = (m.projection_relu && l + 1 < m.projection.size()) ? std::max(0.0, z) : z;
            }
            s = next;
        }
        tech = s;
    }
    if (techmap::uses_tech_factors(m.variant))
        for (std::size_t i = 0; i < m.d; ++i) tech[i] += m.tech_factors(t, i);
    double out = 0.0;
    if (techmap::uses_dot(m.variant))
        for (std::size_t i = 0; i < m.d; ++i) out += m.company_factors(c, i) * tech[i];
    if (techmap::uses_scorer(m.variant)) {
        std::vector<double> x(m.company_factors.row(c).begin(), m.company_factors.row(c).end());
        x.insert(x.end(), tech.begin(), tech.end());
        for (std::size_t l = 0; l < m.scorer.size(); ++l) {
            const auto& layer = m.scorer[l];
            std::vector<double> next(layer.out_dim());
            for (std::size_t o = 0; o < next.size(); ++o) {
                double z = layer.bias[o];
                for (std::size_t i = 0; i < x.size(); ++i) z += layer.weight(o, i) * x[i];
                next[o] = l + 1 < m.scorer.size() ? std::max(0.0, z) : z;
            }
            x = next;
        }
        out += x[0];
    }
    return out;
}

/// Smallest |pre-activation| feeding any rectifier for the pair (c, t);
/// infinity when the model has none.
inline double min_relu_margin(const techmap::RecommenderModel& m, std::size_t c, std::size_t t) {
    double worst = INFINITY;
    std::vector<double> tech(m.d, 0.0);
    if (techmap::uses_semantic(m.variant)) {
        std::vector<double> s(m.semantic.row(t).begin(), m.semantic.row(t).end());
        for (std::size_t l = 0; l < m.projection.size(); ++l) {
            const auto& layer = m.projection[l];
            const bool relu = m.projection_relu && l + 1 < m.projection.size();
            std::vector<double> next(layer.out_dim());
            for (std::size_t o = 0; o < next.size(); ++o) {
                double z = layer.bias[o];
                for (std::size_t i = 0; i < s.size(); ++i) z += layer.weight(o, i) * s[i];
                if (relu) worst = std::min(worst, std::abs(z));
                next[o] = relu ? std::max(0.0, z) : z;
            }
            s = next;
        }
        tech = s;
    }
    if (techmap::uses_tech_factors(m.variant))
        for (std::size_t i = 0; i < m.d; ++i) tech[i] += m.tech_factors(t, i);
    if (techmap::uses_scorer(m.variant)) {
        std::vector<double> x(m.company_factors.row(c).begin(), m.company_factors.row(c).end());
        x.insert(x.end(), tech.begin(), tech.end());
        for (std::size_t l = 0; l + 1 < m.scorer.size(); ++l) {
            const auto& layer = m.scorer[l];
            std::vector<double> next(layer.out_dim());
            for (std::size_t o = 0; o < next.size(); ++o) {
                double z = layer.bias[o];
                for (std::size_t i = 0; i < x.size(); ++i) z += layer.weight(o, i) * x[i];
                worst = std::min(worst, std::abs(z));
                next[o] = std::max(0.0, z);
            }
            x = next;
        }
    }
    return worst;
}

}  // namespace oracle
