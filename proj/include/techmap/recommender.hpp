#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "techmap/corpus.hpp"
#include "techmap/interaction.hpp"
#include "techmap/rng.hpp"
#include "techmap/tensor.hpp"

namespace techmap {

enum class Variant { MF, MLP, NCF, SemanticOnly, SemanticPlusMF };

inline constexpr Variant kAllVariants[] = {Variant::MF, Variant::MLP, Variant::NCF, Variant::SemanticOnly,
                                           Variant::SemanticPlusMF};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

/// Variant uses the semantic projection chain.
bool uses_semantic(Variant v);
/// Variant uses the free per-technology factors E.
bool uses_tech_factors(Variant v);
/// Variant has an MLP scorer over [c || t].
bool uses_scorer(Variant v);
/// Variant has the c . t dot-product term.
bool uses_dot(Variant v);

enum class HingeForm {
    /// max(0, m - s(c, t+) + s(c, t-))
    pairwise,
    /// max(0, m + M(c, t+) - s(c, t-)), the observed value in place of the
    /// positive score. Kept for comparison only.
    observed_value,
};

struct TrainConfig {
    double margin = 0.01;
    double learning_rate = 0.05;
    std::size_t epochs = 100;
    std::size_t negatives_per_positive = 1;
    std::size_t d = 64;
    std::uint64_t seed = 42;
    /// Hidden sizes of the semantic projection; the last layer always maps to d.
    /// Unset means a single hidden layer of width 2d.
    std::optional<std::vector<std::size_t>> projection_hidden;
    /// Rectifiers between projection layers. Off: a pure affine chain.
    bool projection_relu = false;
    /// Hidden sizes of the MLP scorer over [c || t]. Unset means {d, max(1, d/2)}.
    std::optional<std::vector<std::size_t>> scorer_hidden;
    HingeForm hinge = HingeForm::pairwise;

    void validate() const;
    std::vector<std::size_t> projection_sizes() const;
    std::vector<std::size_t> scorer_sizes() const;
};

struct RecommenderModel {
    Variant variant = Variant::MF;
    std::size_t d = 0;
    Catalog companies;
    Catalog techs;
    /// n x d
    Matrix company_factors;
    /// m x d
    Matrix tech_factors;
    /// m x semantic dim; 0 columns for variants without semantics.
    Matrix semantic;
    std::vector<Affine> projection;
    bool projection_relu = false;
    /// Layers over [c || t] (2d inputs) ending in one output unit.
    std::vector<Affine> scorer;

    std::size_t n_companies() const { return company_factors.rows(); }
    std::size_t n_techs() const { return tech_factors.rows(); }

    /// Every trainable tensor in a fixed order: company factors, tech
    /// factors, projection layers (W, b), scorer layers (W, b).
    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;

    friend bool operator==(const RecommenderModel&, const RecommenderModel&) = default;
};

/// Seeded initialization: C, E uniform in +-0.1/sqrt(d), then projection and
/// scorer layers Glorot-uniform. Semantic variants copy s0 for every technology
/// column of M and throw DataError listing the technologies without one.
RecommenderModel initialize_model(const InteractionMatrix& m, const EmbeddingTable* semantic, Variant variant,
                                  const TrainConfig& config);

/// s(k) = W_k(...(W_1 s(0) + b_1)...) + b_k
Vector semantic_projection(const RecommenderModel& model, std::size_t tech);
/// SemanticPlusMF: s(k) + e; SemanticOnly: s(k); otherwise e.
Vector final_tech_embedding(const RecommenderModel& model, std::size_t tech);
/// Output of the MLP scorer on [c || t].
double scorer_output(const RecommenderModel& model, std::span<const double> company,
                     std::span<const double> tech);
double score(const RecommenderModel& model, std::size_t company, std::size_t tech);

/// max(0, margin - pos + neg)
inline double hinge(double positive_score, double negative_score, double margin) {
    const double v = margin - positive_score + negative_score;
    return v > 0.0 ? v : 0.0;
}

/// Requires (company, pos) observed and (company, neg) unobserved in M.
double hinge_loss(const RecommenderModel& model, const InteractionMatrix& m, std::size_t company,
                  std::size_t pos, std::size_t neg, double margin, HingeForm form = HingeForm::pairwise);

/// Sum of squared residuals over the observed entries of M.
double squared_loss(const RecommenderModel& model, const InteractionMatrix& m);

/// Uniform over the technologies the company has not mentioned.
std::size_t sample_negative(const InteractionMatrix& m, std::size_t company, Rng& rng);

struct AffineGradient {
    Matrix weight;
    Vector bias;
};

/// Gradient of one hinge term. Only the rows it touches are materialized.
struct PairGradient {
    double loss = 0.0;
    Vector company;
    /// d loss / d E[pos], d loss / d E[neg]; empty when E is unused.
    Vector pos_tech;
    Vector neg_tech;
    std::vector<AffineGradient> projection;
    std::vector<AffineGradient> scorer;
};

/// `observed_value` is M(company, pos); only read by HingeForm::observed_value.
PairGradient hinge_gradient(const RecommenderModel& model, std::size_t company, std::size_t pos,
                            std::size_t neg, double margin, HingeForm form = HingeForm::pairwise,
                            double observed_value = 0.0);

/// Scatters a pair gradient into the flat layout of RecommenderModel::parameters().
std::vector<Vector> dense_gradient(const RecommenderModel& model, std::size_t company, std::size_t pos,
                                   std::size_t neg, const PairGradient& g);

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::size_t updates = 0;
};

using ProgressFn = std::function<void(const EpochStats&)>;

/// Pairwise SGD: each epoch visits the observed pairs in seeded shuffled order
/// and, per pair, draws `negatives_per_positive` negatives and applies the
/// hinge gradient. Companies that mention every technology have no negatives
/// and are skipped. Throws NumericalError on non-finite parameters.
RecommenderModel train(const InteractionMatrix& m, const EmbeddingTable* semantic, Variant variant,
                       const TrainConfig& config, const ProgressFn& progress = {});

/// n x m matrix of scores for every pair.
Matrix predict_matrix(const RecommenderModel& model);

void save_model(std::ostream& os, const RecommenderModel& model);
void save_model_file(const std::filesystem::path& path, const RecommenderModel& model);
RecommenderModel load_model(std::istream& is);
RecommenderModel load_model_file(const std::filesystem::path& path);

}  // namespace techmap
