// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Thresholds are fixed below.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "techmap/classifier.hpp"
#include "techmap/cli.hpp"
#include "techmap/evaluation.hpp"
#include "techmap/interaction.hpp"
#include "techmap/recommender.hpp"
#include "techmap/retrieval.hpp"
#include "techmap/synthetic.hpp"

using namespace techmap;
namespace fs = std::filesystem;

namespace {

// gradient suite
constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradSeeds = 20;
constexpr double kGradSeconds = 60.0;
// cluster recovery
constexpr double kClusterMinP5 = 0.9;
constexpr double kClusterOverRandom = 2.0;
constexpr double kClusterSeconds = 120.0;
// withheld recovery
constexpr double kWithheldOverBaseline = 3.0;
constexpr int kWithheldSeeds = 5;
// oracles
constexpr int kMetricInstances = 100;
constexpr double kTfidfTolerance = 1e-9;
// classifier
constexpr double kClassifierAccuracy = 0.95;
constexpr double kClassifierAuc = 0.99;
constexpr double kClassifierSeconds = 30.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

InteractionMatrix matrix_of(const SyntheticWorld& w) {
    std::vector<SourceMatrix> parts;
    for (const auto& c : w.corpora)
        if (!c.records.empty()) parts.push_back({c.source, tfidf_source(c)});
    return drop_empty_rows(combine_sources(parts, SourceWeights{}));
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
    const auto start = Clock::now();
    double worst = 0.0;
    std::string detail;
    bool pass = true;
    {
        double w = 0.0;
        for (std::uint64_t seed = 1; seed <= kGradSeeds; ++seed) w = std::max(w, gradcheck::classifier_error(seed));
        worst = std::max(worst, w);
        pass &= w < kGradTolerance;
        detail += "classifier " + fmt("%.1e", w);
    }
    for (auto v : kAllVariants) {
        const auto r = gradcheck::recommender_suite(v, kGradSeeds);
        pass &= r.accepted == kGradSeeds && r.worst < kGradTolerance;
        worst = std::max(worst, r.worst);
        detail += ", " + std::string(to_string(v)) + " " + fmt("%.1e", r.worst) + " (" +
                  std::to_string(r.accepted) + " seeds)";
    }
    const double secs = seconds_since(start);
    pass &= secs < kGradSeconds;
    return {pass, detail + "; max rel err " + fmt("%.2e", worst) + " < 1e-4, " + fmt("%.1fs", secs)};
}

Outcome cluster_recovery() {
    const auto start = Clock::now();
    SyntheticSpec spec;
    spec.clusters = 2;
    spec.companies_per_cluster = 10;
    spec.techs_per_cluster = 15;
    spec.mention_density = 0.7;
    spec.semantic_dim = 16;
    spec.seed = 7;
    const auto world = make_world(spec);
    const auto m = matrix_of(world);

    TrainConfig cfg;
    cfg.d = 16;
    cfg.margin = 0.05;
    cfg.epochs = 300;
    cfg.seed = 42;
    const auto model = train(m, &world.embeddings, Variant::SemanticPlusMF, cfg);

    const auto& companies = m.companies().names();
    const auto& techs = m.techs().names();
    const std::vector<std::size_t> ks{5};
    const auto cc = evaluate_task(Task::com_com, "model", companies,
                                  [&](const std::string& q, std::size_t k) { return retrieve_com_com(model, q, k).names(); },
                                  world.categories, ks);
    const auto tc = evaluate_task(Task::tech_com, "model", techs,
                                  [&](const std::string& q, std::size_t k) { return retrieve_tech_com(model, q, k).names(); },
                                  world.categories, ks);
    double rand_cc = 0.0, rand_tc = 0.0;
    for (const auto& q : companies) {
        std::vector<std::string> others;
        for (const auto& c : companies)
            if (c != q) others.push_back(c);
        rand_cc += random_ranking_p_at_k(world.categories.of(q), others, world.categories, 5) / companies.size();
    }
    for (const auto& q : techs)
        rand_tc += random_ranking_p_at_k(world.categories.of(q), companies, world.categories, 5) / techs.size();

    const double p_cc = cc.mean.at(5), p_tc = tc.mean.at(5);
    const double secs = seconds_since(start);
    const bool pass = p_cc >= kClusterMinP5 && p_tc >= kClusterMinP5 && p_cc >= kClusterOverRandom * rand_cc &&
                      p_tc >= kClusterOverRandom * rand_tc && secs < kClusterSeconds;
    return {pass, "com-com P@5 " + fmt("%.3f", p_cc) + " (random " + fmt("%.3f", rand_cc) + "), tech-com P@5 " +
                      fmt("%.3f", p_tc) + " (random " + fmt("%.3f", rand_tc) + "), " + fmt("%.1fs", secs)};
}

/// Expected reciprocal rank of the first of `relevant` items when `n`
/// candidates are shuffled uniformly.
double random_first_rr(std::size_t n, std::size_t relevant) {
    // P(first relevant at rank r) = prod_{i<r} (n-relevant-i)/(n-i) * relevant/(n-r+1)
    double none_yet = 1.0, expected = 0.0;
    for (std::size_t r = 1; r <= n - relevant + 1; ++r) {
        const double remaining = static_cast<double>(n - r + 1);
        expected += none_yet * (static_cast<double>(relevant) / remaining) / static_cast<double>(r);
        none_yet *= (remaining - static_cast<double>(relevant)) / remaining;
    }
    return expected;
}

Outcome withheld_recovery() {
    double model_mrr = 0.0, base_mrr = 0.0;
    for (int s = 0; s < kWithheldSeeds; ++s) {
        SyntheticSpec spec;
        spec.clusters = 4;
        spec.companies_per_cluster = 10;
        spec.techs_per_cluster = 15;
        spec.mention_density = 0.9;
        spec.withheld_fraction = 0.3;
        spec.cross_cluster_noise = 2;
        spec.semantic_dim = 16;
        spec.semantic_noise = 0.5;
        spec.sources = {Source::website, Source::jobs};
        spec.seed = 100 + static_cast<std::uint64_t>(s);
        const auto world = make_world(spec);
        const auto m = matrix_of(world);

        // rank matched to the cluster count; wider factors memorize the
        // withheld items as negatives
        TrainConfig cfg;
        cfg.d = 4;
        cfg.margin = 0.05;
        cfg.epochs = 150;
        cfg.seed = 42 + static_cast<std::uint64_t>(s);
        const auto model = train(m, &world.embeddings, Variant::SemanticPlusMF, cfg);

        double sum_model = 0.0, sum_base = 0.0;
        std::size_t queries = 0;
        for (std::size_t c = 0; c < m.n_companies(); ++c) {
            const auto& name = m.companies().name(c);
            auto it = world.withheld.find(name);
            if (it == world.withheld.end()) continue;
            std::set<std::string> relevant;
            for (const auto& t : it->second)
                if (m.techs().find(t) && !m.observed(c, *m.techs().find(t))) relevant.insert(t);
            if (relevant.empty()) continue;
            const auto ranked = retrieve_com_tech(model, m, name, m.n_techs(), false);
            for (std::size_t r = 0; r < ranked.items.size(); ++r)
                if (relevant.count(ranked.items[r].name)) {
                    sum_model += 1.0 / static_cast<double>(r + 1);
                    break;
                }
            // tf-idf only orders observed items; unobserved ones follow in random order
            sum_base += random_first_rr(ranked.items.size(), relevant.size());
            ++queries;
        }
        model_mrr += sum_model / static_cast<double>(queries) / kWithheldSeeds;
        base_mrr += sum_base / static_cast<double>(queries) / kWithheldSeeds;
    }
    const bool pass = model_mrr > kWithheldOverBaseline * base_mrr;
    return {pass, "model MRR " + fmt("%.3f", model_mrr) + " vs tf-idf random completion " + fmt("%.3f", base_mrr) +
                      " (ratio " + fmt("%.2f", model_mrr / base_mrr) + ", need > 3)"};
}

Outcome metric_oracle() {
    Rng rng(2024);
    int mismatches = 0;
    const std::vector<std::string> pool = {"A", "B", "C", "D"};
    for (int i = 0; i < kMetricInstances; ++i) {
        const std::size_t n = rng.below(16);
        const std::size_t k = 1 + rng.below(10);
        CategoryMap cats;
        std::vector<std::string> results;
        for (std::size_t j = 0; j < n; ++j) {
            const std::string id = "r" + std::to_string(rng.below(20));
            results.push_back(id);
            if (!cats.contains(id) && rng.bernoulli(0.8))
                for (const auto& c : pool)
                    if (rng.bernoulli(0.4)) cats.categories[id].insert(c);
            if (cats.contains(id) && cats.categories[id].empty()) cats.categories.erase(id);
        }
        std::set<std::string> query;
        for (const auto& c : pool)
            if (rng.bernoulli(0.5)) query.insert(c);
        if (p_at_k(query, results, cats, k) != oracle::p_at_k(query, results, cats.categories, k)) ++mismatches;

        std::vector<double> a(n), b(n);
        SparseRow sa, sb;
        for (std::size_t j = 0; j < n; ++j) {
            if (rng.bernoulli(0.6)) sa.push_back({j, a[j] = rng.uniform(0.01, 5.0)});
            if (rng.bernoulli(0.6)) sb.push_back({j, b[j] = rng.uniform(0.01, 5.0)});
        }
        if (weighted_jaccard(sa, sb) != oracle::weighted_jaccard(a, b)) ++mismatches;
    }
    return {mismatches == 0, std::to_string(kMetricInstances) + " instances, " + std::to_string(mismatches) +
                                 " exact mismatches"};
}

Outcome tfidf_oracle() {
    // 5 companies x 8 entities over 3 sources; e0 appears for every website company
    const std::vector<oracle::Counts> raw = {
        {{{"c1", "e0"}, 3}, {{"c2", "e0"}, 1}, {{"c3", "e0"}, 2}, {{"c4", "e0"}, 1}, {{"c5", "e0"}, 4},
         {{"c1", "e1"}, 2}, {{"c3", "e2"}, 5}, {{"c4", "e2"}, 1}, {{"c5", "e3"}, 7}},
        {{{"c1", "e1"}, 1}, {{"c2", "e4"}, 2}, {{"c2", "e5"}, 1}, {{"c4", "e5"}, 3}},
        {{{"c3", "e6"}, 2}, {{"c3", "e7"}, 1}, {{"c5", "e7"}, 6}, {{"c1", "e2"}, 1}, {{"c2", "e6"}, 4}},
    };
    const std::vector<double> weights = {1.0, 0.5, 2.0};
    std::vector<SourceMatrix> parts;
    SourceWeights w;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        std::ostringstream jsonl;
        for (const auto& [key, n] : raw[k])
            jsonl << "{\"company\":\"" << key.first << "\",\"entity\":\"" << key.second << "\",\"count\":" << n
                  << "}\n";
        std::istringstream in(jsonl.str());
        parts.push_back({kAllSources[k], tfidf_source(parse_mentions(in, kAllSources[k]))});
        w.set(kAllSources[k], weights[k]);
    }
    const auto m = combine_sources(parts, w);
    const auto expected = oracle::combined(raw, weights);
    double worst = 0.0;
    std::size_t seen = 0;
    bool keys_match = true;
    m.for_each([&](std::size_t c, std::size_t t, double v) {
        auto it = expected.find({m.companies().name(c), m.techs().name(t)});
        if (it == expected.end()) {
            keys_match = false;
            return;
        }
        worst = std::max(worst, std::abs(v - it->second));
        ++seen;
    });
    keys_match &= seen == expected.size();
    return {keys_match && worst <= kTfidfTolerance && m.n_companies() == 5 && m.n_techs() == 8,
            std::to_string(seen) + " entries, max abs diff " + fmt("%.1e", worst)};
}

Outcome classifier_sanity() {
    const auto start = Clock::now();
    Rng rng(31);
    const std::size_t n = 200, dim = 16;
    Matrix x(n, dim);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        for (std::size_t j = 0; j < dim; ++j) x(i, j) = rng.normal() + (y[i] ? 1.0 : -1.0);
    }
    ClassifierConfig cfg;
    cfg.h1 = 32;
    cfg.h2 = 16;
    cfg.epochs = 200;
    const auto cv = cross_validate(x, y, cfg, 5);
    const double secs = seconds_since(start);
    const double auc = cv.mean.auc.value_or(0.0);
    return {cv.mean.accuracy >= kClassifierAccuracy && auc >= kClassifierAuc && secs < kClassifierSeconds,
            "5-fold accuracy " + fmt("%.3f", cv.mean.accuracy) + ", AUC " + fmt("%.4f", auc) + ", " +
                fmt("%.1fs", secs)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "techmap_acceptance_determinism";
    fs::remove_all(root);
    SyntheticSpec spec;
    spec.generic_entities = 8;
    spec.cross_cluster_noise = 1;
    spec.sources = {Source::website, Source::patent};
    write_world(make_world(spec), root / "data");
    const std::string d = (root / "data").string();

    auto run_once = [&](const fs::path& out) {
        fs::create_directories(out);
        std::ostringstream log, err;
        auto run = [&](std::vector<std::string> args) {
            if (cli::run(args, log, err) != 0) throw std::runtime_error(args[0] + " failed: " + err.str());
        };
        const std::string emb = d + "/embeddings.tsv";
        const std::string o = out.string();
        run({"train-classifier", "--embeddings", emb, "--labels", d + "/labels.csv", "--out", o + "/clf.txt", "--h1",
             "16", "--h2", "8", "--epochs", "40", "--report", o + "/cv.csv"});
        run({"predict-tech", "--embeddings", emb, "--model", o + "/clf.txt", "--out", o + "/pred.csv"});
        run({"build-matrix", "--mentions", "website=" + d + "/mentions_website.jsonl", "--mentions",
             "patent=" + d + "/mentions_patent.jsonl", "--tech-filter", d + "/labels.csv", "--embeddings", emb,
             "--out", o + "/matrix.txt"});
        for (const char* v : {"MF", "NCF", "SemanticPlusMF"})
            run({"train-recommender", "--matrix", o + "/matrix.txt", "--embeddings", emb, "--variant", v, "--d", "8",
                 "--epochs", "30", "--out", o + "/" + v + ".txt"});
        run({"query", "com-tech", "--model", o + "/SemanticPlusMF.txt", "--matrix", o + "/matrix.txt", "--company",
             "co001", "--out", o + "/q1.csv"});
        run({"query", "com-com", "--model", o + "/NCF.txt", "--company", "co004", "--out", o + "/q2.csv"});
        run({"query", "tech-com", "--model", o + "/MF.txt", "--tech", "tech002", "--out", o + "/q3.csv"});
        run({"evaluate", "--categories", d + "/categories.csv", "--model", o + "/MF.txt", "--model",
             o + "/SemanticPlusMF.txt", "--tfidf", "--matrix", o + "/matrix.txt", "--out", o + "/eval.csv"});
        return log.str();
    };
    try {
        const std::string la = run_once(root / "a"), lb = run_once(root / "b");
        std::size_t files = 0, differing = 0;
        for (const auto& e : fs::directory_iterator(root / "a")) {
            ++files;
            if (slurp(e.path()) != slurp(root / "b" / e.path().filename())) ++differing;
        }
        fs::remove_all(root);
        return {differing == 0 && la == lb && files == 11,
                std::to_string(files) + " artifacts compared, " + std::to_string(differing) + " differ"};
    } catch (const std::exception& e) {
        fs::remove_all(root);
        return {false, e.what()};
    }
}

Outcome invariants() {
    std::vector<std::string> broken;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) broken.push_back(what);
    };
    Rng rng(77);

    // hinge monotone in the margin
    {
        SyntheticSpec spec;
        spec.companies_per_cluster = 4;
        spec.techs_per_cluster = 5;
        const auto world = make_world(spec);
        const auto m = matrix_of(world);
        TrainConfig cfg;
        cfg.d = 4;
        const auto model = train(m, &world.embeddings, Variant::SemanticPlusMF, cfg);
        bool mono = true;
        for (int i = 0; i < 100; ++i) {
            const std::size_t c = rng.below(m.n_companies());
            const std::size_t pos = m.row(c)[rng.below(m.row(c).size())].col;
            const std::size_t neg = sample_negative(m, c, rng);
            double last = 0.0;
            for (double margin = 0.0; margin <= 0.5; margin += 0.01) {
                const double l = hinge_loss(model, m, c, pos, neg, margin);
                mono &= l >= last;
                last = l;
            }
        }
        expect(mono, "hinge monotonicity");

        // persistence round-trips
        std::stringstream io;
        save_model(io, model);
        expect(load_model(io) == model, "model round-trip");
        std::stringstream mio;
        save_matrix(mio, m);
        expect(load_matrix(mio) == m, "matrix round-trip");
        std::stringstream cio;
        write_mentions(cio, world.corpora[0]);
        expect(parse_mentions(cio, world.corpora[0].source).records == world.corpora[0].records, "mentions round-trip");
        std::stringstream eio;
        write_embeddings(eio, world.embeddings);
        expect(load_embeddings(eio).vectors == world.embeddings.vectors, "embeddings round-trip");

        // truncation prefix and tie-break on real retrieval lists
        for (std::size_t c = 0; c < m.n_companies(); ++c) {
            const auto& name = m.companies().name(c);
            const auto full = retrieve_com_tech(model, m, name, m.n_techs(), true).items;
            for (std::size_t k = 0; k < full.size(); ++k) {
                const auto part = retrieve_com_tech(model, m, name, k, true).items;
                expect(std::equal(part.begin(), part.end(), full.begin()) && part.size() == k, "truncation prefix");
            }
        }
    }
    // tie-break by ascending id
    {
        std::vector<std::pair<std::size_t, double>> c{{4, 1.0}, {2, 1.0}, {9, 2.0}, {0, 1.0}, {7, 2.0}};
        const auto r = top_k(c, 5);
        expect(r == std::vector<std::pair<std::size_t, double>>{{7, 2.0}, {9, 2.0}, {0, 1.0}, {2, 1.0}, {4, 1.0}},
               "tie-break");
    }
    // AUC under monotone transforms
    {
        bool same = true;
        for (int t = 0; t < 50; ++t) {
            std::vector<double> s(20), u(20);
            std::vector<int> y(20);
            for (std::size_t i = 0; i < 20; ++i) {
                s[i] = std::round(rng.normal() * 3);
                u[i] = std::atan(s[i]) * 5 + 2;
                y[i] = rng.bernoulli(0.4) ? 1 : 0;
            }
            y[0] = 1;
            y[1] = 0;
            same &= roc_auc(s, y) == roc_auc(u, y);
        }
        expect(same, "AUC monotone invariance");
    }
    // batch-norm statistics
    {
        Block block(6, 5);
        block.linear.glorot_init(rng);
        Matrix x(8, 6);
        for (double& v : x.values()) v = rng.normal() * 2 + 0.5;
        std::vector<Vector> pre;
        for (std::size_t b = 0; b < 8; ++b) pre.push_back(block.linear.apply(x.row(b)));
        const Matrix out = block_forward(block, x, Mode::train);
        bool ok = true;
        for (std::size_t u = 0; u < 5; ++u) {
            double rm = 0, rv = 0, mean = 0, var = 0;
            for (std::size_t b = 0; b < 8; ++b) rm += pre[b][u] / 8;
            for (std::size_t b = 0; b < 8; ++b) rv += (pre[b][u] - rm) * (pre[b][u] - rm) / 8;
            std::vector<double> z(8);
            for (std::size_t b = 0; b < 8; ++b) mean += (z[b] = std::log(out(b, u) / (1 - out(b, u)))) / 8;
            for (std::size_t b = 0; b < 8; ++b) var += (z[b] - mean) * (z[b] - mean) / 8;
            ok &= std::abs(mean) < 1e-6 && std::abs(var - rv / (rv + block.epsilon)) < 1e-5;
        }
        expect(ok, "batch-norm statistics");
    }
    // dropout: eval identity, train expectation within 2%
    {
        Matrix x(2, 5);
        for (double& v : x.values()) v = rng.uniform(0.5, 1.5);
        bool ok = apply_dropout(x, 0.2, Mode::eval, rng) == x;
        Matrix sum(2, 5);
        for (int i = 0; i < 20000; ++i) {
            const Matrix y = apply_dropout(x, 0.2, Mode::train, rng);
            for (std::size_t j = 0; j < 10; ++j) sum.values()[j] += y.values()[j];
        }
        for (std::size_t j = 0; j < 10; ++j) ok &= std::abs(sum.values()[j] / 20000 - x.values()[j]) < 0.02 * x.values()[j];
        expect(ok, "dropout expectation");
    }
    // classifier head round-trip
    {
        ClassifierConfig cfg;
        cfg.h1 = 5;
        cfg.h2 = 3;
        ClassifierHead head(4, cfg, rng);
        Matrix x(6, 4);
        for (double& v : x.values()) v = rng.normal();
        head_forward(head, x, Mode::train, rng);
        std::stringstream io;
        save_head(io, head);
        expect(predict(load_head(io), x) == predict(head, x), "classifier round-trip");
    }
    std::string detail = broken.empty() ? "hinge, AUC, batch-norm, dropout, truncation, tie-break, round-trips hold"
                                        : "violated:";
    for (const auto& b : broken) detail += " " + b + ";";
    return {broken.empty(), detail};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient suite", gradient_suite},
        {"synthetic cluster recovery", cluster_recovery},
        {"withheld technology recovery vs tf-idf", withheld_recovery},
        {"metric oracle", metric_oracle},
        {"tf-idf oracle", tfidf_oracle},
        {"classifier sanity", classifier_sanity},
        {"determinism", determinism},
        {"invariant suite", invariants},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
