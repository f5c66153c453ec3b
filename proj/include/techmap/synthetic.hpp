#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "techmap/corpus.hpp"

namespace techmap {

/// Parameters of a generated clustered company/technology world.
struct SyntheticSpec {
    std::size_t clusters = 2;
    std::size_t companies_per_cluster = 10;
    std::size_t techs_per_cluster = 15;
    /// Probability that a company mentions a technology of its own cluster.
    double mention_density = 0.7;
    /// Fraction of within-cluster mentions removed from the corpora.
    double withheld_fraction = 0.0;
    /// Out-of-cluster technologies each company mentions once.
    std::size_t cross_cluster_noise = 0;
    /// Generic entities (labeled non-technology) mentioned at random.
    std::size_t generic_entities = 0;
    std::size_t semantic_dim = 8;
    double semantic_noise = 0.3;
    std::int64_t max_count = 5;
    std::vector<Source> sources = {Source::website};
    std::uint64_t seed = 1;
};

struct SyntheticWorld {
    std::vector<SourceCorpus> corpora;
    EmbeddingTable embeddings;
    TechLabelSet labels;
    /// Companies and technologies labeled with their cluster name.
    CategoryMap categories;
    /// company -> technologies of its cluster it would have mentioned but did not
    std::map<std::string, std::set<std::string>> withheld;
    std::vector<std::string> companies;
    std::vector<std::string> techs;
};

SyntheticWorld make_world(const SyntheticSpec& spec);

/// Writes mentions_<source>.jsonl, embeddings.tsv, labels.csv, categories.csv.
void write_world(const SyntheticWorld& world, const std::filesystem::path& dir);

}  // namespace techmap
