#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "techmap/corpus.hpp"
#include "techmap/rng.hpp"
#include "techmap/tensor.hpp"

namespace techmap {

enum class Mode { train, eval };

/// linear -> batch normalization -> logistic sigmoid
struct Block {
    Affine linear;
    Vector gamma;
    Vector beta;
    Vector running_mean;
    Vector running_var;
    double epsilon = 1e-5;
    double momentum = 0.1;

    Block() = default;
    Block(std::size_t in, std::size_t out, double eps = 1e-5, double mom = 0.1);

    std::size_t in_dim() const { return linear.in_dim(); }
    std::size_t out_dim() const { return linear.out_dim(); }
};

/// Forward pass over a batch (rows are examples). In train mode the batch
/// statistics are used and the running statistics are updated with momentum;
/// eval mode normalizes with the running statistics. Train mode needs at
/// least two rows.
Matrix block_forward(Block& block, const Matrix& batch, Mode mode);

/// Inverted dropout: entries zeroed with probability `rate`, survivors scaled
/// by 1 / (1 - rate).
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);
/// Identity in eval mode.
Matrix apply_dropout(const Matrix& x, double rate, Mode mode, Rng& rng);

struct ClassifierConfig {
    std::size_t h1 = 256;
    std::size_t h2 = 64;
    double dropout_rate = 0.2;
    double learning_rate = 0.01;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.1;

    void validate() const;
};

/// Two blocks with dropout between them, then a single linear output unit.
struct ClassifierHead {
    Block block1;
    Block block2;
    Vector out_weight;
    double out_bias = 0.0;
    double dropout_rate = 0.0;

    ClassifierHead() = default;
    /// Seeded Glorot-uniform initialization.
    ClassifierHead(std::size_t input_dim, const ClassifierConfig& config, Rng& rng);

    std::size_t input_dim() const { return block1.in_dim(); }

    /// Views over every trainable tensor, in a fixed order:
    /// block1 W, b, gamma, beta; block2 W, b, gamma, beta; out w; out b.
    std::vector<std::span<double>> parameters();
};

/// Probabilities for each row. Train mode draws a dropout mask from rng and
/// updates batch-norm running statistics.
Vector head_forward(ClassifierHead& head, const Matrix& batch, Mode mode, Rng& rng);

/// Eval-mode probabilities; does not modify the head.
Vector predict(const ClassifierHead& head, const Matrix& batch);

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> probs, std::span<const int> labels);

struct LossAndGradient {
    double loss = 0.0;
    /// Same layout as ClassifierHead::parameters().
    std::vector<Vector> gradient;
};

/// Train-mode BCE loss and its analytic gradient for one batch, including the
/// paths through the batch statistics. Running statistics are not touched.
/// The dropout mask is drawn from rng (none when the rate is 0).
LossAndGradient bce_gradient(const ClassifierHead& head, const Matrix& batch, std::span<const int> labels,
                             Rng& rng);

/// Minibatch SGD on BCE. X rows are examples, labels in {0,1}.
ClassifierHead train_head(const Matrix& features, std::span<const int> labels, const ClassifierConfig& config);

struct LabeledExamples {
    std::vector<std::string> entities;
    Matrix features;
    std::vector<int> labels;
};

/// Joins labels with embeddings (sorted by entity). Throws DataError listing
/// every labeled entity lacking an embedding, or if a class has < 2 examples.
LabeledExamples labeled_examples(const EmbeddingTable& embeddings, const TechLabelSet& labels);

ClassifierHead train_classifier(const EmbeddingTable& embeddings, const TechLabelSet& labels,
                                const ClassifierConfig& config);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Shuffled k-fold partition of 0..n-1; the first n % k test folds get one extra id.
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct EvalReport {
    double f1 = 0.0;
    double accuracy = 0.0;
    /// Undefined when only one class is present.
    std::optional<double> auc;
};

EvalReport metrics(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Probability that a random positive outranks a random negative, ties 1/2.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);

struct CrossValidationReport {
    std::vector<EvalReport> folds;
    EvalReport mean;
};

CrossValidationReport cross_validate(const Matrix& features, std::span<const int> labels,
                                     const ClassifierConfig& config, std::size_t k);

void save_head(std::ostream& os, const ClassifierHead& head);
void save_head_file(const std::filesystem::path& path, const ClassifierHead& head);
ClassifierHead load_head(std::istream& is);
ClassifierHead load_head_file(const std::filesystem::path& path);

}  // namespace techmap
