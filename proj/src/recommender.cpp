#include "techmap/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "techmap/error.hpp"

namespace techmap {

namespace {

struct ChainTrace {
    std::vector<Vector> inputs;
    std::vector<Vector> pre;
    Vector output;
};

ChainTrace run_chain(const std::vector<Affine>& layers, Vector x, bool relu_between) {
    ChainTrace trace;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Vector z = layers[l].apply(x);
        trace.inputs.push_back(std::move(x));
        x = z;
        if (relu_between && l + 1 < layers.size())
            for (double& v : x) v = v > 0.0 ? v : 0.0;
        trace.pre.push_back(std::move(z));
    }
    trace.output = std::move(x);
    return trace;
}

/// Accumulates layer gradients and returns d(chain input).
Vector chain_backward(const std::vector<Affine>& layers, const ChainTrace& trace, bool relu_between, Vector g,
                      std::vector<AffineGradient>& grads) {
    for (std::size_t l = layers.size(); l-- > 0;) {
        if (relu_between && l + 1 < layers.size())
            for (std::size_t i = 0; i < g.size(); ++i)
                if (!(trace.pre[l][i] > 0.0)) g[i] = 0.0;
        const auto& layer = layers[l];
        auto& grad = grads[l];
        const auto& x = trace.inputs[l];
        Vector gx(layer.in_dim(), 0.0);
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            if (g[o] == 0.0) continue;
            grad.bias[o] += g[o];
            auto w = layer.weight.row(o);
            auto gw = grad.weight.row(o);
            for (std::size_t i = 0; i < x.size(); ++i) {
                gw[i] += g[o] * x[i];
                gx[i] += g[o] * w[i];
            }
        }
        g = std::move(gx);
    }
    return g;
}

struct TechTrace {
    ChainTrace projection;
    Vector embedding;
};

TechTrace trace_tech(const RecommenderModel& model, std::size_t tech) {
    TechTrace t;
    if (uses_semantic(model.variant)) {
        const auto s0 = model.semantic.row(tech);
        t.projection = run_chain(model.projection, Vector(s0.begin(), s0.end()), model.projection_relu);
        t.embedding = t.projection.output;
        if (uses_tech_factors(model.variant)) {
            const auto e = model.tech_factors.row(tech);
            for (std::size_t i = 0; i < t.embedding.size(); ++i) t.embedding[i] += e[i];
        }
    } else {
        const auto e = model.tech_factors.row(tech);
        t.embedding.assign(e.begin(), e.end());
    }
    return t;
}

Vector concat(std::span<const double> a, std::span<const double> b) {
    Vector v(a.begin(), a.end());
    v.insert(v.end(), b.begin(), b.end());
    return v;
}

double score_traced(const RecommenderModel& model, std::span<const double> company, const TechTrace& tech,
                    ChainTrace* scorer_trace) {
    double s = 0.0;
    if (uses_dot(model.variant)) s += dot(company, tech.embedding);
    if (uses_scorer(model.variant)) {
        ChainTrace tr = run_chain(model.scorer, concat(company, tech.embedding), true);
        s += tr.output[0];
        if (scorer_trace) *scorer_trace = std::move(tr);
    }
    return s;
}

/// Backpropagates an upstream gradient on one score into `g`.
void score_backward(const RecommenderModel& model, std::span<const double> company, const TechTrace& tech,
                    const ChainTrace& scorer_trace, double upstream, PairGradient& g, Vector* tech_factor_grad) {
    const std::size_t d = model.d;
    Vector dt(d, 0.0);
    if (uses_dot(model.variant)) {
        for (std::size_t i = 0; i < d; ++i) {
            g.company[i] += upstream * tech.embedding[i];
            dt[i] += upstream * company[i];
        }
    }
    if (uses_scorer(model.variant)) {
        const Vector dh = chain_backward(model.scorer, scorer_trace, true, Vector{upstream}, g.scorer);
        for (std::size_t i = 0; i < d; ++i) {
            g.company[i] += dh[i];
            dt[i] += dh[d + i];
        }
    }
    if (uses_tech_factors(model.variant) && tech_factor_grad)
        for (std::size_t i = 0; i < d; ++i) (*tech_factor_grad)[i] += dt[i];
    if (uses_semantic(model.variant)) chain_backward(model.projection, tech.projection, model.projection_relu, dt, g.projection);
}

std::vector<AffineGradient> zero_like(const std::vector<Affine>& layers) {
    std::vector<AffineGradient> out;
    for (const auto& l : layers) out.push_back({Matrix(l.out_dim(), l.in_dim()), Vector(l.out_dim(), 0.0)});
    return out;
}

void check_ids(const RecommenderModel& model, std::size_t company, std::size_t tech) {
    if (company >= model.n_companies()) throw DataError("unknown company id " + std::to_string(company));
    if (tech >= model.n_techs()) throw DataError("unknown technology id " + std::to_string(tech));
}

std::string join_sizes(const std::vector<std::size_t>& sizes) {
    if (sizes.empty()) return "-";
    std::string s;
    for (auto v : sizes) s += (s.empty() ? "" : ",") + std::to_string(v);
    return s;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    if (text == "-") return out;
    for (auto f : split(text, ',')) {
        try {
            out.push_back(std::stoul(std::string(f)));
        } catch (const std::exception&) {
            throw DataError("bad layer size list '" + text + "'");
        }
    }
    return out;
}

std::vector<Affine> build_chain(std::size_t in, const std::vector<std::size_t>& sizes) {
    std::vector<Affine> layers;
    for (auto out : sizes) {
        layers.emplace_back(in, out);
        in = out;
    }
    return layers;
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::MF: return "MF";
        case Variant::MLP: return "MLP";
        case Variant::NCF: return "NCF";
        case Variant::SemanticOnly: return "SemanticOnly";
        case Variant::SemanticPlusMF: return "SemanticPlusMF";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : kAllVariants)
        if (to_string(v) == name) return v;
    throw DataError("unknown model variant '" + std::string(name) +
                    "' (expected MF, MLP, NCF, SemanticOnly or SemanticPlusMF)");
}

bool uses_semantic(Variant v) { return v == Variant::SemanticOnly || v == Variant::SemanticPlusMF; }
bool uses_tech_factors(Variant v) { return v != Variant::SemanticOnly; }
bool uses_scorer(Variant v) { return v == Variant::MLP || v == Variant::NCF; }
bool uses_dot(Variant v) { return v != Variant::MLP; }

void TrainConfig::validate() const {
    if (!(margin > 0.0) || !std::isfinite(margin)) throw std::invalid_argument("margin must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (d == 0) throw std::invalid_argument("embedding size d must be >= 1");
    if (negatives_per_positive == 0) throw std::invalid_argument("negatives per positive must be >= 1");
    for (auto s : projection_sizes())
        if (s == 0) throw std::invalid_argument("projection layer sizes must be positive");
    for (auto s : scorer_sizes())
        if (s == 0) throw std::invalid_argument("scorer layer sizes must be positive");
}

std::vector<std::size_t> TrainConfig::projection_sizes() const {
    std::vector<std::size_t> sizes = projection_hidden.value_or(std::vector<std::size_t>{2 * d});
    sizes.push_back(d);
    return sizes;
}

std::vector<std::size_t> TrainConfig::scorer_sizes() const {
    std::vector<std::size_t> sizes = scorer_hidden.value_or(std::vector<std::size_t>{d, std::max<std::size_t>(1, d / 2)});
    sizes.push_back(1);
    return sizes;
}

std::vector<std::span<double>> RecommenderModel::parameters() {
    std::vector<std::span<double>> p{company_factors.values(), tech_factors.values()};
    for (auto& l : projection) {
        p.push_back(l.weight.values());
        p.push_back(l.bias);
    }
    for (auto& l : scorer) {
        p.push_back(l.weight.values());
        p.push_back(l.bias);
    }
    return p;
}

std::vector<std::span<const double>> RecommenderModel::parameters() const {
    auto mutable_view = const_cast<RecommenderModel*>(this)->parameters();
    return {mutable_view.begin(), mutable_view.end()};
}

RecommenderModel initialize_model(const InteractionMatrix& m, const EmbeddingTable* semantic, Variant variant,
                                  const TrainConfig& config) {
    config.validate();
    RecommenderModel model;
    model.variant = variant;
    model.d = config.d;
    model.companies = m.companies();
    model.techs = m.techs();
    model.projection_relu = config.projection_relu;

    if (uses_semantic(variant)) {
        if (!semantic) throw DataError(std::string(to_string(variant)) + " needs a semantic embedding table");
        std::string missing;
        for (const auto& t : m.techs().names())
            if (!semantic->contains(t)) missing += (missing.empty() ? "" : ", ") + t;
        if (!missing.empty()) throw DataError("technologies without a semantic embedding: " + missing);
        model.semantic = Matrix(m.n_techs(), semantic->dim);
        for (std::size_t j = 0; j < m.n_techs(); ++j) {
            const auto& v = *semantic->find(m.techs().name(j));
            std::copy(v.begin(), v.end(), model.semantic.row(j).begin());
        }
    } else {
        model.semantic = Matrix(m.n_techs(), 0);
    }

    Rng rng(config.seed);
    const double limit = 0.1 / std::sqrt(static_cast<double>(config.d));
    model.company_factors = Matrix(m.n_companies(), config.d);
    model.tech_factors = Matrix(m.n_techs(), config.d);
    for (double& v : model.company_factors.values()) v = rng.uniform(-limit, limit);
    for (double& v : model.tech_factors.values()) v = rng.uniform(-limit, limit);
    if (uses_semantic(variant)) {
        model.projection = build_chain(model.semantic.cols(), config.projection_sizes());
        for (auto& l : model.projection) l.glorot_init(rng);
    }
    if (uses_scorer(variant)) {
        model.scorer = build_chain(2 * config.d, config.scorer_sizes());
        for (auto& l : model.scorer) l.glorot_init(rng);
    }
    return model;
}

Vector semantic_projection(const RecommenderModel& model, std::size_t tech) {
    if (!uses_semantic(model.variant) || model.semantic.cols() == 0)
        throw DataError("model variant " + std::string(to_string(model.variant)) + " has no semantic vectors");
    if (tech >= model.n_techs()) throw DataError("unknown technology id " + std::to_string(tech));
    const auto s0 = model.semantic.row(tech);
    return run_chain(model.projection, Vector(s0.begin(), s0.end()), model.projection_relu).output;
}

Vector final_tech_embedding(const RecommenderModel& model, std::size_t tech) {
    if (tech >= model.n_techs()) throw DataError("unknown technology id " + std::to_string(tech));
    return trace_tech(model, tech).embedding;
}

double scorer_output(const RecommenderModel& model, std::span<const double> company, std::span<const double> tech) {
    return run_chain(model.scorer, concat(company, tech), true).output.at(0);
}

double score(const RecommenderModel& model, std::size_t company, std::size_t tech) {
    check_ids(model, company, tech);
    return score_traced(model, model.company_factors.row(company), trace_tech(model, tech), nullptr);
}

double hinge_loss(const RecommenderModel& model, const InteractionMatrix& m, std::size_t company, std::size_t pos,
                  std::size_t neg, double margin, HingeForm form) {
    const auto observed = m.find(company, pos);
    if (!observed)
        throw DataError("positive pair (" + m.companies().name(company) + ", " + m.techs().name(pos) +
                        ") is not observed");
    if (m.observed(company, neg))
        throw DataError("negative pair (" + m.companies().name(company) + ", " + m.techs().name(neg) +
                        ") is observed");
    if (form == HingeForm::observed_value) return hinge(score(model, company, neg), *observed, margin);
    return hinge(score(model, company, pos), score(model, company, neg), margin);
}

double squared_loss(const RecommenderModel& model, const InteractionMatrix& m) {
    double total = 0.0;
    m.for_each([&](std::size_t c, std::size_t t, double v) {
        const double r = v - score(model, c, t);
        total += r * r;
    });
    return total;
}

std::size_t sample_negative(const InteractionMatrix& m, std::size_t company, Rng& rng) {
    const auto& row = m.row(company);
    const std::size_t free = m.n_techs() - row.size();
    if (free == 0)
        throw DataError("company '" + m.companies().name(company) + "' has observed every technology");
    std::size_t r = static_cast<std::size_t>(rng.below(free));
    for (const auto& e : row) {
        if (e.col <= r)
            ++r;
        else
            break;
    }
    return r;
}

PairGradient hinge_gradient(const RecommenderModel& model, std::size_t company, std::size_t pos, std::size_t neg,
                            double margin, HingeForm form, double observed_value) {
    check_ids(model, company, pos);
    check_ids(model, company, neg);
    PairGradient g;
    g.company.assign(model.d, 0.0);
    if (uses_tech_factors(model.variant)) {
        g.pos_tech.assign(model.d, 0.0);
        g.neg_tech.assign(model.d, 0.0);
    }
    g.projection = zero_like(model.projection);
    g.scorer = zero_like(model.scorer);

    const auto c = model.company_factors.row(company);
    const TechTrace neg_trace = trace_tech(model, neg);
    ChainTrace neg_scorer;
    const double s_neg = score_traced(model, c, neg_trace, &neg_scorer);

    if (form == HingeForm::observed_value) {
        g.loss = hinge(s_neg, observed_value, margin);
        if (g.loss > 0.0) score_backward(model, c, neg_trace, neg_scorer, -1.0, g, &g.neg_tech);
        return g;
    }

    const TechTrace pos_trace = trace_tech(model, pos);
    ChainTrace pos_scorer;
    const double s_pos = score_traced(model, c, pos_trace, &pos_scorer);
    g.loss = hinge(s_pos, s_neg, margin);
    if (g.loss > 0.0) {
        score_backward(model, c, pos_trace, pos_scorer, -1.0, g, &g.pos_tech);
        score_backward(model, c, neg_trace, neg_scorer, 1.0, g, &g.neg_tech);
    }
    return g;
}

std::vector<Vector> dense_gradient(const RecommenderModel& model, std::size_t company, std::size_t pos,
                                   std::size_t neg, const PairGradient& g) {
    const std::size_t d = model.d;
    std::vector<Vector> out;
    Vector dc(model.company_factors.values().size(), 0.0);
    std::copy(g.company.begin(), g.company.end(), dc.begin() + static_cast<std::ptrdiff_t>(company * d));
    out.push_back(std::move(dc));
    Vector de(model.tech_factors.values().size(), 0.0);
    for (std::size_t i = 0; i < g.pos_tech.size(); ++i) de[pos * d + i] += g.pos_tech[i];
    for (std::size_t i = 0; i < g.neg_tech.size(); ++i) de[neg * d + i] += g.neg_tech[i];
    out.push_back(std::move(de));
    for (const auto* layers : {&g.projection, &g.scorer}) {
        for (const auto& l : *layers) {
            out.emplace_back(l.weight.values().begin(), l.weight.values().end());
            out.push_back(l.bias);
        }
    }
    return out;
}

namespace {

void sgd_step(std::vector<Affine>& layers, const std::vector<AffineGradient>& grads, double lr) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto w = layers[l].weight.values();
        const auto gw = grads[l].weight.values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
        for (std::size_t i = 0; i < layers[l].bias.size(); ++i) layers[l].bias[i] -= lr * grads[l].bias[i];
    }
}

void axpy_row(std::span<double> row, std::span<const double> g, double lr) {
    for (std::size_t i = 0; i < g.size(); ++i) row[i] -= lr * g[i];
}

}  // namespace

RecommenderModel train(const InteractionMatrix& m, const EmbeddingTable* semantic, Variant variant,
                       const TrainConfig& config, const ProgressFn& progress) {
    if (m.nnz() == 0) throw DataError("interaction matrix is empty");
    RecommenderModel model = initialize_model(m, semantic, variant, config);
    Rng rng(config.seed ^ 0x5DEECE66DULL);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    m.for_each([&](std::size_t c, std::size_t t, double) {
        if (m.row(c).size() < m.n_techs()) pairs.emplace_back(c, t);
    });
    const double lr = config.learning_rate;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span(pairs));
        double loss_sum = 0.0;
        std::size_t terms = 0, updates = 0;
        for (const auto& [c, pos] : pairs) {
            for (std::size_t k = 0; k < config.negatives_per_positive; ++k) {
                const std::size_t neg = sample_negative(m, c, rng);
                const double observed = config.hinge == HingeForm::observed_value ? *m.find(c, pos) : 0.0;
                const PairGradient g = hinge_gradient(model, c, pos, neg, config.margin, config.hinge, observed);
                loss_sum += g.loss;
                ++terms;
                if (g.loss <= 0.0) continue;
                ++updates;
                axpy_row(model.company_factors.row(c), g.company, lr);
                if (!g.pos_tech.empty()) axpy_row(model.tech_factors.row(pos), g.pos_tech, lr);
                if (!g.neg_tech.empty()) axpy_row(model.tech_factors.row(neg), g.neg_tech, lr);
                sgd_step(model.projection, g.projection, lr);
                sgd_step(model.scorer, g.scorer, lr);
            }
        }
        for (auto p : model.parameters())
            if (!all_finite(p))
                throw NumericalError("recommender parameters became non-finite at epoch " + std::to_string(epoch));
        if (progress) progress({epoch, terms ? loss_sum / static_cast<double>(terms) : 0.0, updates});
    }
    return model;
}

Matrix predict_matrix(const RecommenderModel& model) {
    std::vector<TechTrace> techs;
    techs.reserve(model.n_techs());
    for (std::size_t j = 0; j < model.n_techs(); ++j) techs.push_back(trace_tech(model, j));
    Matrix out(model.n_companies(), model.n_techs());
    for (std::size_t i = 0; i < model.n_companies(); ++i) {
        const auto c = model.company_factors.row(i);
        for (std::size_t j = 0; j < model.n_techs(); ++j) out(i, j) = score_traced(model, c, techs[j], nullptr);
    }
    return out;
}

void save_model(std::ostream& os, const RecommenderModel& model) {
    os << "variant=" << to_string(model.variant) << " d=" << model.d << " n=" << model.n_companies()
       << " m=" << model.n_techs() << " version=1\n";
    std::vector<std::size_t> proj, scorer;
    for (const auto& l : model.projection) proj.push_back(l.out_dim());
    for (const auto& l : model.scorer) scorer.push_back(l.out_dim());
    os << "architecture semantic_dim=" << model.semantic.cols() << " projection=" << join_sizes(proj)
       << " projection_relu=" << (model.projection_relu ? 1 : 0) << " scorer=" << join_sizes(scorer) << '\n';
    write_names(os, "companies", model.companies.names());
    write_names(os, "techs", model.techs.names());
    write_tensor(os, "company_factors", model.company_factors);
    write_tensor(os, "tech_factors", model.tech_factors);
    if (model.semantic.cols() > 0) write_tensor(os, "semantic", model.semantic);
    for (std::size_t l = 0; l < model.projection.size(); ++l) {
        write_tensor(os, "projection." + std::to_string(l) + ".weight", model.projection[l].weight);
        write_tensor(os, "projection." + std::to_string(l) + ".bias", model.projection[l].bias);
    }
    for (std::size_t l = 0; l < model.scorer.size(); ++l) {
        write_tensor(os, "scorer." + std::to_string(l) + ".weight", model.scorer[l].weight);
        write_tensor(os, "scorer." + std::to_string(l) + ".bias", model.scorer[l].bias);
    }
    os << "end\n";
}

void save_model_file(const std::filesystem::path& path, const RecommenderModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    save_model(out, model);
}

RecommenderModel load_model(std::istream& is) {
    TensorReader reader(is);
    const auto h = parse_header(reader.line("model header"), "");
    const auto version = header_field(h, "version");
    if (version != "1") throw DataError("model version mismatch: file has version " + version + ", expected 1");
    RecommenderModel model;
    model.variant = parse_variant(header_field(h, "variant"));
    model.d = header_size(h, "d");
    const auto n = header_size(h, "n");
    const auto m = header_size(h, "m");
    if (model.d == 0) throw DataError("model header has d=0");

    const auto arch = parse_header(reader.line("architecture"), "architecture");
    const auto semantic_dim = header_size(arch, "semantic_dim");
    const auto proj = parse_sizes(header_field(arch, "projection"));
    const auto scorer = parse_sizes(header_field(arch, "scorer"));
    model.projection_relu = header_field(arch, "projection_relu") == "1";
    if (uses_semantic(model.variant) != (semantic_dim > 0 && !proj.empty()))
        throw DataError("semantic layers do not match variant " + std::string(to_string(model.variant)));
    if (!proj.empty() && proj.back() != model.d) throw DataError("projection does not end in d");
    if (uses_scorer(model.variant) != !scorer.empty() || (!scorer.empty() && scorer.back() != 1))
        throw DataError("scorer layers do not match variant " + std::string(to_string(model.variant)));

    model.companies = Catalog(reader.names("companies", n));
    model.techs = Catalog(reader.names("techs", m));
    if (model.companies.size() != n || model.techs.size() != m)
        throw DataError("model catalogs contain duplicate ids");
    model.company_factors = reader.matrix("company_factors", n, model.d);
    model.tech_factors = reader.matrix("tech_factors", m, model.d);
    model.semantic = semantic_dim > 0 ? reader.matrix("semantic", m, semantic_dim) : Matrix(m, 0);
    model.projection = build_chain(semantic_dim, proj);
    for (std::size_t l = 0; l < model.projection.size(); ++l) {
        auto& layer = model.projection[l];
        layer.weight = reader.matrix("projection." + std::to_string(l) + ".weight", layer.out_dim(), layer.in_dim());
        layer.bias = reader.vector("projection." + std::to_string(l) + ".bias", layer.out_dim());
    }
    model.scorer = build_chain(2 * model.d, scorer);
    for (std::size_t l = 0; l < model.scorer.size(); ++l) {
        auto& layer = model.scorer[l];
        layer.weight = reader.matrix("scorer." + std::to_string(l) + ".weight", layer.out_dim(), layer.in_dim());
        layer.bias = reader.vector("scorer." + std::to_string(l) + ".bias", layer.out_dim());
    }
    if (trim(reader.line("end marker")) != "end") throw DataError("model file has trailing data");
    return model;
}

RecommenderModel load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return load_model(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace techmap
