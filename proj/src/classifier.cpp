#include "techmap/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "techmap/error.hpp"

namespace techmap {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct BlockCache {
    Matrix input;
    Matrix xhat;
    Matrix output;
    Vector mean;
    Vector var;
    Vector inv_std;
};

struct HeadCache {
    BlockCache block1;
    BlockCache block2;
    Matrix mask;  // empty when dropout is off
    Vector probs;
};

Matrix block_compute(const Block& block, const Matrix& x, Mode mode, BlockCache& cache) {
    const std::size_t batch = x.rows();
    const std::size_t out = block.out_dim();
    if (x.cols() != block.in_dim())
        throw std::invalid_argument("batch has " + std::to_string(x.cols()) + " columns, block expects " +
                                    std::to_string(block.in_dim()));
    if (mode == Mode::train && batch < 2)
        throw std::invalid_argument("train-mode batch normalization needs a batch of at least 2 rows");

    Matrix pre(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto row = x.row(b);
        for (std::size_t o = 0; o < out; ++o) pre(b, o) = dot(block.linear.weight.row(o), row) + block.linear.bias[o];
    }

    cache.mean.assign(out, 0.0);
    cache.var.assign(out, 0.0);
    if (mode == Mode::train) {
        for (std::size_t o = 0; o < out; ++o) {
            double m = 0.0;
            for (std::size_t b = 0; b < batch; ++b) m += pre(b, o);
            m /= static_cast<double>(batch);
            double v = 0.0;
            for (std::size_t b = 0; b < batch; ++b) v += (pre(b, o) - m) * (pre(b, o) - m);
            cache.mean[o] = m;
            cache.var[o] = v / static_cast<double>(batch);
        }
    } else {
        cache.mean = block.running_mean;
        cache.var = block.running_var;
    }
    cache.inv_std.resize(out);
    for (std::size_t o = 0; o < out; ++o) cache.inv_std[o] = 1.0 / std::sqrt(cache.var[o] + block.epsilon);

    cache.input = x;
    cache.xhat = Matrix(batch, out);
    cache.output = Matrix(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < out; ++o) {
            const double xh = (pre(b, o) - cache.mean[o]) * cache.inv_std[o];
            cache.xhat(b, o) = xh;
            cache.output(b, o) = sigmoid(block.gamma[o] * xh + block.beta[o]);
        }
    }
    return cache.output;
}

void update_running(Block& block, const BlockCache& cache, std::size_t batch) {
    const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
    for (std::size_t o = 0; o < block.out_dim(); ++o) {
        block.running_mean[o] = (1.0 - block.momentum) * block.running_mean[o] + block.momentum * cache.mean[o];
        block.running_var[o] = (1.0 - block.momentum) * block.running_var[o] + block.momentum * cache.var[o] * unbias;
    }
}

/// Backward through sigmoid, train-mode batch norm and the affine map.
/// Appends W, b, gamma, beta gradients and returns d(input).
Matrix block_backward(const Block& block, const BlockCache& cache, const Matrix& d_output,
                      std::vector<Vector>& grads) {
    const std::size_t batch = d_output.rows();
    const std::size_t out = block.out_dim();
    const std::size_t in = block.in_dim();
    const double nb = static_cast<double>(batch);

    Vector d_gamma(out, 0.0), d_beta(out, 0.0);
    Matrix d_pre(batch, out);
    for (std::size_t o = 0; o < out; ++o) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        std::vector<double> dxhat(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            const double a = cache.output(b, o);
            const double dy = d_output(b, o) * a * (1.0 - a);
            d_gamma[o] += dy * cache.xhat(b, o);
            d_beta[o] += dy;
            dxhat[b] = dy * block.gamma[o];
            sum_dxhat += dxhat[b];
            sum_dxhat_xhat += dxhat[b] * cache.xhat(b, o);
        }
        for (std::size_t b = 0; b < batch; ++b)
            d_pre(b, o) = cache.inv_std[o] / nb * (nb * dxhat[b] - sum_dxhat - cache.xhat(b, o) * sum_dxhat_xhat);
    }

    Vector d_w(out * in, 0.0), d_b(out, 0.0);
    Matrix d_input(batch, in);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto x = cache.input.row(b);
        for (std::size_t o = 0; o < out; ++o) {
            const double g = d_pre(b, o);
            d_b[o] += g;
            const auto w = block.linear.weight.row(o);
            for (std::size_t i = 0; i < in; ++i) {
                d_w[o * in + i] += g * x[i];
                d_input(b, i) += g * w[i];
            }
        }
    }
    grads.push_back(std::move(d_w));
    grads.push_back(std::move(d_b));
    grads.push_back(std::move(d_gamma));
    grads.push_back(std::move(d_beta));
    return d_input;
}

Vector head_compute(const ClassifierHead& head, const Matrix& batch, Mode mode, Rng* rng, HeadCache& cache) {
    Matrix hidden = block_compute(head.block1, batch, mode, cache.block1);
    cache.mask = Matrix();
    if (mode == Mode::train && head.dropout_rate > 0.0) {
        cache.mask = dropout_mask(hidden.rows(), hidden.cols(), head.dropout_rate, *rng);
        for (std::size_t i = 0; i < hidden.values().size(); ++i) hidden.values()[i] *= cache.mask.values()[i];
    }
    const Matrix h2 = block_compute(head.block2, hidden, mode, cache.block2);
    cache.probs.resize(batch.rows());
    for (std::size_t b = 0; b < batch.rows(); ++b)
        cache.probs[b] = sigmoid(dot(head.out_weight, h2.row(b)) + head.out_bias);
    return cache.probs;
}

LossAndGradient head_backward(const ClassifierHead& head, const HeadCache& cache, std::span<const int> labels) {
    const std::size_t batch = cache.probs.size();
    const double nb = static_cast<double>(batch);
    LossAndGradient result;
    result.loss = bce_loss(cache.probs, labels);

    // d loss / d logit; zero where the probability sits in the clamped region
    Vector d_logit(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const double p = cache.probs[b];
        const bool clamped = p < kProbabilityClamp || p > 1.0 - kProbabilityClamp;
        d_logit[b] = clamped ? 0.0 : (p - static_cast<double>(labels[b])) / nb;
    }

    const Matrix& h2 = cache.block2.output;
    const std::size_t h2_dim = h2.cols();
    Vector d_out_w(h2_dim, 0.0);
    double d_out_b = 0.0;
    Matrix d_h2(batch, h2_dim);
    for (std::size_t b = 0; b < batch; ++b) {
        d_out_b += d_logit[b];
        for (std::size_t j = 0; j < h2_dim; ++j) {
            d_out_w[j] += d_logit[b] * h2(b, j);
            d_h2(b, j) = d_logit[b] * head.out_weight[j];
        }
    }

    std::vector<Vector> block2_grads, block1_grads;
    Matrix d_hidden = block_backward(head.block2, cache.block2, d_h2, block2_grads);
    if (!cache.mask.empty())
        for (std::size_t i = 0; i < d_hidden.values().size(); ++i) d_hidden.values()[i] *= cache.mask.values()[i];
    block_backward(head.block1, cache.block1, d_hidden, block1_grads);

    result.gradient = std::move(block1_grads);
    for (auto& g : block2_grads) result.gradient.push_back(std::move(g));
    result.gradient.push_back(std::move(d_out_w));
    result.gradient.push_back(Vector{d_out_b});
    return result;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> ids) {
    Matrix out(ids.size(), m.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) std::copy(m.row(ids[i]).begin(), m.row(ids[i]).end(), out.row(i).begin());
    return out;
}

}  // namespace

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix mask(rows, cols);
    for (double& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep_scale;
    return mask;
}

Matrix apply_dropout(const Matrix& x, double rate, Mode mode, Rng& rng) {
    if (mode == Mode::eval || rate == 0.0) return x;
    Matrix out = x;
    const Matrix mask = dropout_mask(x.rows(), x.cols(), rate, rng);
    for (std::size_t i = 0; i < out.values().size(); ++i) out.values()[i] *= mask.values()[i];
    return out;
}

Block::Block(std::size_t in, std::size_t out, double eps, double mom)
    : linear(in, out),
      gamma(out, 1.0),
      beta(out, 0.0),
      running_mean(out, 0.0),
      running_var(out, 1.0),
      epsilon(eps),
      momentum(mom) {}

Matrix block_forward(Block& block, const Matrix& batch, Mode mode) {
    BlockCache cache;
    Matrix out = block_compute(block, batch, mode, cache);
    if (mode == Mode::train) update_running(block, cache, batch.rows());
    return out;
}

void ClassifierConfig::validate() const {
    if (h1 == 0 || h2 == 0 || batch_size == 0) throw std::invalid_argument("classifier sizes must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
    if (!(learning_rate > 0.0) || !(bn_epsilon > 0.0) || !(bn_momentum > 0.0 && bn_momentum <= 1.0))
        throw std::invalid_argument("learning rate, epsilon and momentum must be positive");
}

ClassifierHead::ClassifierHead(std::size_t input_dim, const ClassifierConfig& config, Rng& rng)
    : block1(input_dim, config.h1, config.bn_epsilon, config.bn_momentum),
      block2(config.h1, config.h2, config.bn_epsilon, config.bn_momentum),
      out_weight(config.h2, 0.0),
      dropout_rate(config.dropout_rate) {
    block1.linear.glorot_init(rng);
    block2.linear.glorot_init(rng);
    const double limit = std::sqrt(6.0 / static_cast<double>(config.h2 + 1));
    for (double& w : out_weight) w = rng.uniform(-limit, limit);
}

std::vector<std::span<double>> ClassifierHead::parameters() {
    return {block1.linear.weight.values(), block1.linear.bias, block1.gamma, block1.beta,
            block2.linear.weight.values(), block2.linear.bias, block2.gamma, block2.beta,
            out_weight,                    std::span<double>(&out_bias, 1)};
}

Vector head_forward(ClassifierHead& head, const Matrix& batch, Mode mode, Rng& rng) {
    HeadCache cache;
    Vector probs = head_compute(head, batch, mode, &rng, cache);
    if (mode == Mode::train) {
        update_running(head.block1, cache.block1, batch.rows());
        update_running(head.block2, cache.block2, batch.rows());
    }
    return probs;
}

Vector predict(const ClassifierHead& head, const Matrix& batch) {
    HeadCache cache;
    return head_compute(head, batch, Mode::eval, nullptr, cache);
}

double bce_loss(std::span<const double> probs, std::span<const int> labels) {
    if (probs.size() != labels.size())
        throw std::invalid_argument("bce_loss: " + std::to_string(probs.size()) + " probabilities vs " +
                                    std::to_string(labels.size()) + " labels");
    if (probs.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
        total -= labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

LossAndGradient bce_gradient(const ClassifierHead& head, const Matrix& batch, std::span<const int> labels, Rng& rng) {
    if (labels.size() != batch.rows()) throw std::invalid_argument("bce_gradient: label count differs from batch");
    HeadCache cache;
    head_compute(head, batch, Mode::train, &rng, cache);
    return head_backward(head, cache, labels);
}

ClassifierHead train_head(const Matrix& features, std::span<const int> labels, const ClassifierConfig& config) {
    config.validate();
    if (features.rows() != labels.size()) throw std::invalid_argument("train_head: label count differs from rows");
    Rng rng(config.seed);
    ClassifierHead head(features.cols(), config, rng);
    if (features.rows() < 2) throw DataError("classifier training needs at least two examples");

    std::vector<std::size_t> order(features.rows());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        // a trailing batch of one row is folded into the previous batch
        std::vector<std::pair<std::size_t, std::size_t>> batches;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size)
            batches.emplace_back(start, std::min(order.size(), start + config.batch_size));
        if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
            batches.pop_back();
            batches.back().second = order.size();
        }
        for (const auto& [begin, end] : batches) {
            const std::span<const std::size_t> ids(order.data() + begin, end - begin);
            const Matrix x = gather_rows(features, ids);
            std::vector<int> y(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i) y[i] = labels[ids[i]];

            HeadCache cache;
            head_compute(head, x, Mode::train, &rng, cache);
            const auto lg = head_backward(head, cache, y);
            update_running(head.block1, cache.block1, x.rows());
            update_running(head.block2, cache.block2, x.rows());
            auto params = head.parameters();
            for (std::size_t t = 0; t < params.size(); ++t)
                for (std::size_t i = 0; i < params[t].size(); ++i)
                    params[t][i] -= config.learning_rate * lg.gradient[t][i];
        }
        for (auto p : head.parameters())
            if (!all_finite(p)) throw NumericalError("classifier parameters became non-finite at epoch " + std::to_string(epoch));
    }
    return head;
}

LabeledExamples labeled_examples(const EmbeddingTable& embeddings, const TechLabelSet& labels) {
    LabeledExamples ex;
    std::vector<std::string> missing;
    for (const auto& [entity, label] : labels.labels)
        if (!embeddings.contains(entity)) missing.push_back(entity);
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw DataError("labeled entities without an embedding: " + list);
    }
    ex.features = Matrix(labels.labels.size(), embeddings.dim);
    std::size_t positives = 0, i = 0;
    for (const auto& [entity, label] : labels.labels) {
        const auto& v = *embeddings.find(entity);
        std::copy(v.begin(), v.end(), ex.features.row(i).begin());
        ex.entities.push_back(entity);
        ex.labels.push_back(label ? 1 : 0);
        positives += label ? 1 : 0;
        ++i;
    }
    if (positives < 2 || ex.labels.size() - positives < 2)
        throw DataError("classifier training needs at least 2 examples of each class (have " +
                        std::to_string(positives) + " technology, " + std::to_string(ex.labels.size() - positives) +
                        " other)");
    return ex;
}

ClassifierHead train_classifier(const EmbeddingTable& embeddings, const TechLabelSet& labels,
                                const ClassifierConfig& config) {
    const auto ex = labeled_examples(embeddings, labels);
    return train_head(ex.features, ex.labels, config);
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k-fold split needs k >= 2");
    if (n < k) throw std::invalid_argument("k-fold split needs n >= k");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span(perm));

    std::vector<Fold> folds(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].test.assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                             perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(folds[f].test.begin(), folds[f].test.end());
        pos += size;
    }
    for (std::size_t f = 0; f < k; ++f)
        for (std::size_t g = 0; g < k; ++g)
            if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(), folds[g].test.end());
    for (auto& fold : folds) std::sort(fold.train.begin(), fold.train.end());
    return folds;
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos = 0.0, neg = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t t = i; t < j; ++t)
            if (labels[idx[t]]) rank_sum += avg_rank;
        i = j;
    }
    for (int y : labels) (y ? pos : neg) += 1.0;
    if (pos == 0.0 || neg == 0.0) return std::nullopt;
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

EvalReport metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
    if (scores.size() != labels.size()) throw std::invalid_argument("metrics: score and label counts differ");
    if (scores.empty()) throw std::invalid_argument("metrics: empty input");
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] != 0;
        correct += predicted == actual ? 1 : 0;
        tp += predicted && actual ? 1 : 0;
        fp += predicted && !actual ? 1 : 0;
        fn += !predicted && actual ? 1 : 0;
    }
    EvalReport r;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    r.auc = roc_auc(scores, labels);
    return r;
}

CrossValidationReport cross_validate(const Matrix& features, std::span<const int> labels,
                                     const ClassifierConfig& config, std::size_t k) {
    CrossValidationReport report;
    double auc_sum = 0.0;
    std::size_t auc_count = 0;
    for (const auto& fold : kfold_split(features.rows(), k, config.seed)) {
        std::vector<int> train_y, test_y;
        for (auto i : fold.train) train_y.push_back(labels[i]);
        for (auto i : fold.test) test_y.push_back(labels[i]);
        const auto head = train_head(gather_rows(features, fold.train), train_y, config);
        const auto probs = predict(head, gather_rows(features, fold.test));
        const auto r = metrics(probs, test_y);
        report.folds.push_back(r);
        report.mean.f1 += r.f1;
        report.mean.accuracy += r.accuracy;
        if (r.auc) {
            auc_sum += *r.auc;
            ++auc_count;
        }
    }
    const double nf = static_cast<double>(report.folds.size());
    report.mean.f1 /= nf;
    report.mean.accuracy /= nf;
    if (auc_count) report.mean.auc = auc_sum / static_cast<double>(auc_count);
    return report;
}

void save_head(std::ostream& os, const ClassifierHead& head) {
    os << "classifier version=1 input=" << head.input_dim() << " h1=" << head.block1.out_dim()
       << " h2=" << head.block2.out_dim() << " dropout=" << format_double(head.dropout_rate)
       << " epsilon=" << format_double(head.block1.epsilon) << " momentum=" << format_double(head.block1.momentum)
       << '\n';
    const Block* blocks[] = {&head.block1, &head.block2};
    const char* names[] = {"block1", "block2"};
    for (int i = 0; i < 2; ++i) {
        const Block& b = *blocks[i];
        const std::string p = names[i];
        write_tensor(os, p + ".weight", b.linear.weight);
        write_tensor(os, p + ".bias", b.linear.bias);
        write_tensor(os, p + ".gamma", b.gamma);
        write_tensor(os, p + ".beta", b.beta);
        write_tensor(os, p + ".running_mean", b.running_mean);
        write_tensor(os, p + ".running_var", b.running_var);
    }
    write_tensor(os, "out.weight", head.out_weight);
    write_tensor(os, "out.bias", std::span<const double>(&head.out_bias, 1));
}

void save_head_file(const std::filesystem::path& path, const ClassifierHead& head) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    save_head(out, head);
}

ClassifierHead load_head(std::istream& is) {
    TensorReader reader(is);
    const auto h = parse_header(reader.line("classifier header"), "classifier");
    if (header_field(h, "version") != "1") throw DataError("unsupported classifier version " + header_field(h, "version"));
    ClassifierConfig cfg;
    const auto input = header_size(h, "input");
    cfg.h1 = header_size(h, "h1");
    cfg.h2 = header_size(h, "h2");
    cfg.dropout_rate = header_double(h, "dropout");
    cfg.bn_epsilon = header_double(h, "epsilon");
    cfg.bn_momentum = header_double(h, "momentum");
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("classifier header: ") + e.what());
    }
    Rng unused(0);
    ClassifierHead head(input, cfg, unused);
    Block* blocks[] = {&head.block1, &head.block2};
    const char* names[] = {"block1", "block2"};
    for (int i = 0; i < 2; ++i) {
        Block& b = *blocks[i];
        const std::string p = names[i];
        b.linear.weight = reader.matrix(p + ".weight", b.out_dim(), b.in_dim());
        b.linear.bias = reader.vector(p + ".bias", b.out_dim());
        b.gamma = reader.vector(p + ".gamma", b.out_dim());
        b.beta = reader.vector(p + ".beta", b.out_dim());
        b.running_mean = reader.vector(p + ".running_mean", b.out_dim());
        b.running_var = reader.vector(p + ".running_var", b.out_dim());
        for (double v : b.running_var)
            if (!(v > 0.0)) throw DataError(p + ".running_var must be positive");
    }
    head.out_weight = reader.vector("out.weight", cfg.h2);
    head.out_bias = reader.vector("out.bias", 1)[0];
    return head;
}

ClassifierHead load_head_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return load_head(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace techmap
