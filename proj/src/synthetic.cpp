#include "techmap/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "techmap/error.hpp"
#include "techmap/rng.hpp"

namespace techmap {

namespace {

std::string numbered(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
    return buf;
}

std::vector<double> random_direction(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n = 0.0;
    for (double& x : v) {
        x = rng.normal();
        n += x * x;
    }
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

}  // namespace

SyntheticWorld make_world(const SyntheticSpec& spec) {
    if (spec.clusters == 0 || spec.companies_per_cluster == 0 || spec.techs_per_cluster == 0 || spec.sources.empty())
        throw std::invalid_argument("synthetic world needs at least one cluster, company, technology and source");
    Rng rng(spec.seed);
    SyntheticWorld world;
    const std::size_t n_companies = spec.clusters * spec.companies_per_cluster;
    const std::size_t n_techs = spec.clusters * spec.techs_per_cluster;
    for (std::size_t i = 0; i < n_companies; ++i) world.companies.push_back(numbered("co", i));
    for (std::size_t j = 0; j < n_techs; ++j) world.techs.push_back(numbered("tech", j));
    auto company_cluster = [&](std::size_t i) { return i / spec.companies_per_cluster; };
    auto tech_cluster = [&](std::size_t j) { return j / spec.techs_per_cluster; };
    auto cluster_name = [](std::size_t c) { return numbered("cluster", c); };

    // (company, entity) -> count, later split across sources
    std::map<std::pair<std::string, std::string>, std::int64_t> mentions;
    auto draw_count = [&] { return 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(spec.max_count))); };

    for (std::size_t i = 0; i < n_companies; ++i) {
        const std::size_t cl = company_cluster(i);
        std::vector<std::size_t> chosen;
        for (std::size_t j = cl * spec.techs_per_cluster; j < (cl + 1) * spec.techs_per_cluster; ++j)
            if (rng.bernoulli(spec.mention_density)) chosen.push_back(j);
        if (chosen.empty()) chosen.push_back(cl * spec.techs_per_cluster + rng.below(spec.techs_per_cluster));

        std::vector<std::size_t> kept;
        for (auto j : chosen) {
            if (rng.bernoulli(spec.withheld_fraction))
                world.withheld[world.companies[i]].insert(world.techs[j]);
            else
                kept.push_back(j);
        }
        if (kept.empty()) {
            // every company keeps at least one observed technology
            kept.push_back(chosen.front());
            auto& w = world.withheld[world.companies[i]];
            w.erase(world.techs[chosen.front()]);
            if (w.empty()) world.withheld.erase(world.companies[i]);
        }
        for (auto j : kept) mentions[{world.companies[i], world.techs[j]}] += draw_count();

        for (std::size_t r = 0; r < spec.cross_cluster_noise && spec.clusters > 1; ++r) {
            std::size_t j = rng.below(n_techs);
            while (tech_cluster(j) == cl) j = rng.below(n_techs);
            mentions[{world.companies[i], world.techs[j]}] += 1;
        }
        for (std::size_t g = 0; g < spec.generic_entities; ++g)
            if (rng.bernoulli(0.5)) mentions[{world.companies[i], numbered("generic", g)}] += draw_count();
    }

    std::map<Source, std::ostringstream> streams;
    for (const auto& [key, count] : mentions) {
        const Source s = spec.sources[rng.below(spec.sources.size())];
        streams[s] << R"({"company":")" << key.first << R"(","entity":")" << key.second << R"(","count":)" << count
                   << "}\n";
    }
    for (Source s : spec.sources) {
        std::istringstream in(streams[s].str());
        world.corpora.push_back(parse_mentions(in, s));
    }

    world.embeddings.dim = spec.semantic_dim;
    std::vector<std::vector<double>> centroids;
    for (std::size_t c = 0; c <= spec.clusters; ++c) centroids.push_back(random_direction(rng, spec.semantic_dim));
    auto noisy = [&](const std::vector<double>& centre) {
        std::vector<double> v = centre;
        for (double& x : v) x += spec.semantic_noise * rng.normal();
        return v;
    };
    for (std::size_t j = 0; j < n_techs; ++j) {
        world.embeddings.vectors[world.techs[j]] = noisy(centroids[tech_cluster(j)]);
        world.labels.labels[world.techs[j]] = true;
        world.categories.categories[world.techs[j]] = {cluster_name(tech_cluster(j))};
    }
    for (std::size_t g = 0; g < spec.generic_entities; ++g) {
        world.embeddings.vectors[numbered("generic", g)] = noisy(centroids[spec.clusters]);
        world.labels.labels[numbered("generic", g)] = false;
    }
    for (std::size_t i = 0; i < n_companies; ++i)
        world.categories.categories[world.companies[i]] = {cluster_name(company_cluster(i))};
    return world;
}

void write_world(const SyntheticWorld& world, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const std::string& name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / name).string());
        return out;
    };
    for (const auto& corpus : world.corpora) {
        auto out = open("mentions_" + std::string(to_string(corpus.source)) + ".jsonl");
        write_mentions(out, corpus);
    }
    {
        auto out = open("embeddings.tsv");
        write_embeddings(out, world.embeddings);
    }
    {
        auto out = open("labels.csv");
        out << "entity,label\n";
        for (const auto& [e, l] : world.labels.labels) out << csv_field(e) << ',' << (l ? 1 : 0) << '\n';
    }
    {
        auto out = open("categories.csv");
        out << "id,category\n";
        for (const auto& [id, cats] : world.categories.categories)
            for (const auto& c : cats) out << csv_field(id) << ',' << csv_field(c) << '\n';
    }
}

}  // namespace techmap
