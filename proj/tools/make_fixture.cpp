// Writes the bundled synthetic fixture: 20 companies in two clusters across
// three sources, plus generic non-technology entities for the classifier.
#include <iostream>

#include "techmap/synthetic.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixture <output-dir>\n";
        return 1;
    }
    techmap::SyntheticSpec spec;
    spec.clusters = 2;
    spec.companies_per_cluster = 10;
    spec.techs_per_cluster = 15;
    spec.mention_density = 0.6;
    spec.cross_cluster_noise = 1;
    spec.generic_entities = 12;
    spec.sources = {techmap::Source::website, techmap::Source::patent, techmap::Source::jobs};
    spec.seed = 2020;
    techmap::write_world(techmap::make_world(spec), argv[1]);
    return 0;
}
