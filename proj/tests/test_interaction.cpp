#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "techmap/error.hpp"
#include "techmap/interaction.hpp"
#include "techmap/rng.hpp"

using namespace techmap;

namespace {

SourceCorpus corpus_from(const oracle::Counts& counts, Source s) {
    std::ostringstream raw;
    for (const auto& [key, n] : counts)
        raw << "{\"company\":\"" << key.first << "\",\"entity\":\"" << key.second << "\",\"count\":" << n << "}\n";
    std::istringstream in(raw.str());
    return parse_mentions(in, s);
}

oracle::Counts random_counts(Rng& rng, int companies, int entities, double density) {
    oracle::Counts c;
    for (int i = 0; i < companies; ++i)
        for (int j = 0; j < entities; ++j)
            if (rng.bernoulli(density))
                c[{"c" + std::to_string(i), "e" + std::to_string(j)}] = 1 + static_cast<long long>(rng.below(6));
    return c;
}

std::map<std::pair<std::string, std::string>, double> entries(const InteractionMatrix& m) {
    std::map<std::pair<std::string, std::string>, double> out;
    m.for_each([&](std::size_t c, std::size_t t, double v) { out[{m.companies().name(c), m.techs().name(t)}] = v; });
    return out;
}

InteractionMatrix build(const std::vector<oracle::Counts>& sources, const std::vector<double>& w) {
    std::vector<SourceMatrix> parts;
    SourceWeights weights;
    for (std::size_t k = 0; k < sources.size(); ++k) {
        const Source s = kAllSources[k];
        parts.push_back({s, tfidf_source(corpus_from(sources[k], s))});
        weights.set(s, w[k]);
    }
    return combine_sources(parts, weights);
}

}  // namespace

TEST_CASE("single-source tf-idf matches the hand computation") {
    // 3 companies; Python used by all (idf 0), Rust by one, Go by two
    oracle::Counts c{{{"a", "Python"}, 4}, {{"b", "Python"}, 1}, {{"c", "Python"}, 2},
                     {{"a", "Rust"}, 3},   {{"b", "Go"}, 2},     {{"c", "Go"}, 5}};
    const auto m = tfidf_source(corpus_from(c, Source::website));
    const auto e = entries(m);
    CHECK(e.at({"a", "Python"}) == kObservedZero);
    CHECK(e.at({"a", "Rust"}) == doctest::Approx(3 * std::log(3.0)).epsilon(1e-12));
    CHECK(e.at({"c", "Go"}) == doctest::Approx(5 * std::log(1.5)).epsilon(1e-12));
    CHECK(m.nnz() == 6);
    CHECK_FALSE(m.observed(m.companies().at("a", "company"), m.techs().at("Go", "tech")));
}

TEST_CASE("combined matrix matches the brute-force oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<oracle::Counts> sources;
        std::vector<double> w;
        for (int k = 0; k < 3; ++k) {
            sources.push_back(random_counts(rng, 6, 9, 0.4));
            w.push_back(rng.bernoulli(0.2) ? 0.0 : rng.uniform(0.1, 3.0));
        }
        if (w[0] + w[1] + w[2] == 0.0) w[0] = 1.0;
        const auto expected = oracle::combined(sources, w);
        const auto got = entries(build(sources, w));
        REQUIRE(got.size() == expected.size());
        for (const auto& [key, v] : expected) CHECK(got.at(key) == doctest::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("combination properties") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<oracle::Counts> s{random_counts(rng, 5, 7, 0.5), random_counts(rng, 5, 7, 0.5)};
        const auto base = entries(build(s, {1.0, 1.0}));
        SUBCASE("monotone in each weight") {
            const auto more = entries(build(s, {1.0, 2.5}));
            for (const auto& [key, v] : base) CHECK(more.at(key) >= v);
        }
        SUBCASE("scale equivariant") {
            const auto scaled = entries(build(s, {3.0, 3.0}));
            for (const auto& [key, v] : base) CHECK(scaled.at(key) == doctest::Approx(3.0 * v).epsilon(1e-12));
        }
        SUBCASE("sparsity bound") {
            std::size_t sum = 0, shared = 0;
            for (const auto& [key, n] : s[0]) shared += s[1].count(key);
            sum = s[0].size() + s[1].size();
            CHECK(base.size() == sum - shared);
        }
        SUBCASE("deterministic") { CHECK(build(s, {1.0, 0.5}) == build(s, {1.0, 0.5})); }
    }
}

TEST_CASE("weights are validated") {
    SourceWeights w;
    CHECK_NOTHROW(w.validate());
    w.set(Source::jobs, -1.0);
    CHECK_THROWS_AS(w.validate(), DataError);
    SourceWeights zero;
    for (auto s : kAllSources) zero.set(s, 0.0);
    CHECK_THROWS_AS(zero.validate(), DataError);
}

TEST_CASE("zero-weight sources add no observations") {
    oracle::Counts a{{{"x", "Python"}, 1}, {{"y", "Rust"}, 1}};
    oracle::Counts b{{{"z", "Go"}, 2}, {{"y", "Go"}, 1}};
    const auto m = build({a, b}, {1.0, 0.0});
    CHECK(m.companies().names() == std::vector<std::string>{"x", "y"});
    CHECK(m.techs().names() == std::vector<std::string>{"Python", "Rust"});
}

TEST_CASE("column filters re-index and drop empty rows") {
    oracle::Counts a{{{"x", "Python"}, 1}, {{"y", "Paris"}, 1}, {{"z", "Rust"}, 2}, {{"z", "Paris"}, 1}};
    const auto m = build({a}, {1.0});
    const auto f = filter_technologies(m, {{"Python", true}, {"Paris", false}, {"Rust", true}});
    CHECK(f.techs().names() == std::vector<std::string>{"Python", "Rust"});
    CHECK(f.n_companies() == 3);
    const auto d = drop_empty_rows(f);
    CHECK(d.companies().names() == std::vector<std::string>{"x", "z"});
    CHECK(d.nnz() == 2);
    // unknown entities are dropped
    CHECK(filter_technologies(m, {{"Python", true}}).n_techs() == 1);
    const auto kept = filter_columns(m, [](const std::string& t) { return t != "Paris"; });
    CHECK(kept.n_techs() == 2);
    const auto row = company_tfidf_vector(m, "z");
    REQUIRE(row.size() == 2);
    CHECK(row[0].col < row[1].col);
}

TEST_CASE("matrix file round-trip and errors") {
    Rng rng(8);
    const auto m = drop_empty_rows(build({random_counts(rng, 7, 10, 0.4), random_counts(rng, 7, 10, 0.3)}, {1.0, 0.7}));
    std::stringstream io;
    save_matrix(io, m);
    CHECK(load_matrix(io) == m);

    const auto with_empty = filter_columns(m, [](const std::string&) { return false; });
    std::ostringstream sink;
    CHECK_THROWS_AS(save_matrix(sink, with_empty), std::logic_error);

    std::istringstream bad_count("companies=2 techs=1\na\tt\t1\n");
    CHECK_THROWS_AS(load_matrix(bad_count), DataError);
    std::istringstream bad_value("companies=1 techs=1\na\tt\t-1\n");
    CHECK_THROWS_AS(load_matrix(bad_value), DataError);
    std::istringstream dup("companies=1 techs=1\na\tt\t1\na\tt\t2\n");
    CHECK_THROWS_AS(load_matrix(dup), DataError);
}

TEST_CASE("constructor rejects non-positive values") {
    Catalog c(std::vector<std::string>{"a"}), t(std::vector<std::string>{"t"});
    CHECK_THROWS(InteractionMatrix(c, t, {{0, 0, 0.0}}));
    CHECK_THROWS(InteractionMatrix(c, t, {{0, 0, 1.0}, {0, 0, 2.0}}));
}
