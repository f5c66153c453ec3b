#include "techmap/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "techmap/classifier.hpp"
#include "techmap/corpus.hpp"
#include "techmap/error.hpp"
#include "techmap/evaluation.hpp"
#include "techmap/interaction.hpp"
#include "techmap/recommender.hpp"
#include "techmap/retrieval.hpp"

namespace techmap::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trimmed(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// Config-backed defaults for one subcommand.
class Defaults {
public:
    Defaults(const ConfigFile& cfg, std::string command) : cfg_(cfg), command_(std::move(command)) {}

    std::string str(const std::string& key, std::string fallback = {}) const {
        return cfg_.get(command_, key).value_or(std::move(fallback));
    }
    double real(const std::string& key, double fallback) const {
        const auto v = cfg_.get(command_, key);
        if (!v) return fallback;
        const auto d = parse_double(*v);
        if (!d) throw UsageError("config key '" + key + "' is not a number: '" + *v + "'");
        return *d;
    }
    std::uint64_t size(const std::string& key, std::uint64_t fallback) const {
        const auto v = cfg_.get(command_, key);
        if (!v) return fallback;
        try {
            std::size_t used = 0;
            const auto n = std::stoull(*v, &used);
            if (used != v->size()) throw std::invalid_argument(*v);
            return n;
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "' is not a non-negative integer: '" + *v + "'");
        }
    }
    bool flag(const std::string& key, bool fallback) const {
        const auto v = cfg_.get(command_, key);
        if (!v) return fallback;
        if (*v == "1" || *v == "true" || *v == "yes") return true;
        if (*v == "0" || *v == "false" || *v == "no") return false;
        throw UsageError("config key '" + key + "' is not a boolean: '" + *v + "'");
    }
    /// `mentions.website = path` style keys become `website=path` entries.
    std::vector<std::string> prefixed(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const auto& [key, value] : cfg_.entries())
            if (key.starts_with(prefix + ".")) out.push_back(key.substr(prefix.size() + 1) + "=" + value);
        return out;
    }

private:
    const ConfigFile& cfg_;
    std::string command_;
};

void require(const std::string& value, const std::string& option) {
    if (value.empty()) throw UsageError("missing required option --" + option);
}

fs::path existing(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw DataError(what + " file not found: " + path);
    return path;
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& option) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
        throw UsageError("--" + option + " expects <source>=<value>, got '" + text + "'");
    return {text.substr(0, eq), text.substr(eq + 1)};
}

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& option) {
    std::vector<std::size_t> out;
    if (text.empty()) return out;
    for (auto part : split(text, ',')) {
        const std::string s = trimmed(part);
        try {
            std::size_t used = 0;
            const auto v = std::stoul(s, &used);
            if (used != s.size() || v == 0) throw std::invalid_argument(s);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("--" + option + " expects positive integers separated by commas, got '" + text + "'");
        }
    }
    return out;
}

std::vector<SourceCorpus> load_corpora(const std::vector<std::string>& specs) {
    if (specs.empty()) throw UsageError("at least one --mentions <source>=<path> is required");
    std::vector<SourceCorpus> corpora;
    std::set<Source> seen;
    for (const auto& spec : specs) {
        const auto [name, path] = split_assignment(spec, "mentions");
        const Source s = parse_source(name);
        if (!seen.insert(s).second) throw UsageError("source " + name + " given more than once");
        corpora.push_back(parse_mentions_file(existing(path, "mentions"), s));
    }
    return corpora;
}

/// Writes to the file when a path is given, otherwise to `fallback`.
class Output {
public:
    Output(const std::string& path, std::ostream& fallback) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw DataError("cannot write " + path);
        }
        os_ = path.empty() ? &fallback : &file_;
    }
    std::ostream& stream() { return *os_; }

private:
    std::ofstream file_;
    std::ostream* os_;
};

// ---- subcommands ----------------------------------------------------------

struct IngestArgs {
    std::vector<std::string> mentions;
    std::string embeddings, labels, out, missing;
};

int do_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
    const auto corpora = load_corpora(a.mentions);
    std::optional<EmbeddingTable> emb;
    std::optional<TechLabelSet> labels;
    if (!a.embeddings.empty()) emb = load_embeddings_file(existing(a.embeddings, "embeddings"));
    if (!a.labels.empty()) labels = load_labels_file(existing(a.labels, "labels"));
    const auto report = validate_corpus(corpora, emb ? &*emb : nullptr, labels ? &*labels : nullptr);

    Output o(a.out, out);
    o.stream() << "source,companies,entities,records,total_count\n";
    for (const auto& s : report.sources)
        o.stream() << to_string(s.source) << ',' << s.companies << ',' << s.entities << ',' << s.records << ','
                   << s.total_count << '\n';
    if (!a.missing.empty()) {
        Output m(a.missing, out);
        m.stream() << "kind,entity\n";
        for (const auto& e : report.missing_embeddings) m.stream() << "embedding," << csv_field(e) << '\n';
        for (const auto& e : report.missing_labels) m.stream() << "label," << csv_field(e) << '\n';
    }
    if (emb) err << report.missing_embeddings.size() << " mentioned entities have no embedding\n";
    if (labels) err << report.missing_labels.size() << " mentioned entities have no label\n";
    return kOk;
}

struct BuildMatrixArgs {
    std::vector<std::string> mentions, weights;
    std::string tech_filter, embeddings, out;
};

int do_build_matrix(const BuildMatrixArgs& a, std::ostream&, std::ostream& err) {
    require(a.out, "out");
    const auto corpora = load_corpora(a.mentions);
    SourceWeights weights;
    for (const auto& w : a.weights) {
        const auto [name, value] = split_assignment(w, "weight");
        const auto v = parse_double(value);
        if (!v) throw UsageError("--weight " + name + " is not a number: '" + value + "'");
        weights.set(parse_source(name), *v);
    }

    std::vector<SourceMatrix> parts;
    for (const auto& c : corpora) {
        if (c.records.empty()) continue;
        parts.push_back({c.source, tfidf_source(c)});
    }
    InteractionMatrix m = combine_sources(parts, weights);
    const std::size_t entities = m.n_techs();

    if (!a.tech_filter.empty()) {
        const auto predictions = load_labels_file(existing(a.tech_filter, "technology filter"));
        m = filter_technologies(m, predictions.labels);
        err << "technology filter kept " << m.n_techs() << " of " << entities << " entities\n";
    }
    if (!a.embeddings.empty()) {
        const auto emb = load_embeddings_file(existing(a.embeddings, "embeddings"));
        const std::size_t before = m.n_techs();
        m = filter_columns(m, [&](const std::string& t) { return emb.contains(t); });
        if (m.n_techs() != before)
            err << "warning: dropped " << before - m.n_techs() << " technologies without an embedding\n";
    }
    m = drop_empty_rows(m);
    if (m.nnz() == 0) throw DataError("empty matrix: no technology entries remain");
    save_matrix_file(a.out, m);
    err << "matrix: " << m.n_companies() << " companies, " << m.n_techs() << " technologies, " << m.nnz()
        << " observed entries\n";
    return kOk;
}

struct TrainClassifierArgs {
    std::string embeddings, labels, out, report;
    std::size_t folds = 5;
    ClassifierConfig config;
};

int do_train_classifier(const TrainClassifierArgs& a, std::ostream& out, std::ostream& err) {
    require(a.embeddings, "embeddings");
    require(a.labels, "labels");
    require(a.out, "out");
    a.config.validate();
    const auto emb = load_embeddings_file(existing(a.embeddings, "embeddings"));
    const auto labels = load_labels_file(existing(a.labels, "labels"));
    const auto ex = labeled_examples(emb, labels);

    if (a.folds > 0) {
        const auto cv = cross_validate(ex.features, ex.labels, a.config, a.folds);
        Output o(a.report, out);
        auto auc = [](const EvalReport& r) { return r.auc ? format_double(*r.auc) : std::string("nan"); };
        o.stream() << "fold,f1,accuracy,auc\n";
        for (std::size_t f = 0; f < cv.folds.size(); ++f)
            o.stream() << f << ',' << format_double(cv.folds[f].f1) << ',' << format_double(cv.folds[f].accuracy) << ','
                       << auc(cv.folds[f]) << '\n';
        o.stream() << "mean," << format_double(cv.mean.f1) << ',' << format_double(cv.mean.accuracy) << ','
                   << auc(cv.mean) << '\n';
    }
    const auto head = train_head(ex.features, ex.labels, a.config);
    save_head_file(a.out, head);
    err << "classifier trained on " << ex.labels.size() << " labeled entities\n";
    return kOk;
}

struct PredictArgs {
    std::string embeddings, model, out;
    double threshold = 0.5;
};

int do_predict(const PredictArgs& a, std::ostream& out, std::ostream&) {
    require(a.embeddings, "embeddings");
    require(a.model, "model");
    const auto emb = load_embeddings_file(existing(a.embeddings, "embeddings"));
    const auto head = load_head_file(existing(a.model, "classifier model"));
    if (head.input_dim() != emb.dim)
        throw DataError("classifier expects dim " + std::to_string(head.input_dim()) + ", embeddings have dim " +
                        std::to_string(emb.dim));
    Matrix x(emb.vectors.size(), emb.dim);
    std::size_t i = 0;
    for (const auto& [e, v] : emb.vectors) std::copy(v.begin(), v.end(), x.row(i++).begin());
    const auto probs = x.rows() ? predict(head, x) : Vector{};
    Output o(a.out, out);
    o.stream() << "entity,probability,label\n";
    i = 0;
    for (const auto& [e, v] : emb.vectors) {
        o.stream() << csv_field(e) << ',' << format_double(probs[i]) << ',' << (probs[i] >= a.threshold ? 1 : 0) << '\n';
        ++i;
    }
    return kOk;
}

struct TrainRecommenderArgs {
    std::string matrix, embeddings, variant = "SemanticPlusMF", out, progress, projection_hidden, scorer_hidden,
                                    hinge = "pairwise";
    TrainConfig config;
};

int do_train_recommender(TrainRecommenderArgs a, std::ostream&, std::ostream& err) {
    require(a.matrix, "matrix");
    require(a.out, "out");
    const Variant variant = parse_variant(a.variant);
    if (!a.projection_hidden.empty()) {
        a.config.projection_hidden = a.projection_hidden == "none"
                                         ? std::vector<std::size_t>{}
                                         : parse_size_list(a.projection_hidden, "projection-hidden");
    }
    if (!a.scorer_hidden.empty()) a.config.scorer_hidden = parse_size_list(a.scorer_hidden, "scorer-hidden");
    if (a.hinge == "pairwise")
        a.config.hinge = HingeForm::pairwise;
    else if (a.hinge == "observed-value")
        a.config.hinge = HingeForm::observed_value;
    else
        throw UsageError("--hinge must be pairwise or observed-value");
    a.config.validate();

    const auto m = load_matrix_file(existing(a.matrix, "matrix"));
    std::optional<EmbeddingTable> emb;
    if (uses_semantic(variant)) {
        require(a.embeddings, "embeddings");
        emb = load_embeddings_file(existing(a.embeddings, "embeddings"));
    }
    std::optional<Output> progress;
    if (!a.progress.empty()) {
        progress.emplace(a.progress, err);
        progress->stream() << "epoch,mean_loss,updates\n";
    }
    const auto model = train(m, emb ? &*emb : nullptr, variant, a.config, [&](const EpochStats& s) {
        if (progress) progress->stream() << s.epoch << ',' << format_double(s.mean_loss) << ',' << s.updates << '\n';
    });
    save_model_file(a.out, model);
    err << to_string(variant) << " model trained: " << model.n_companies() << " companies, " << model.n_techs()
        << " technologies, d=" << model.d << "\n";
    return kOk;
}

struct QueryArgs {
    std::string task, model, matrix, company, tech, format = "csv", baseline, similarity = "factor", out;
    std::size_t top = 10;
    bool include_observed = false;
};

CompanySimilarity parse_similarity(const std::string& s) {
    if (s == "factor") return CompanySimilarity::factor_cosine;
    if (s == "score-row") return CompanySimilarity::score_row_cosine;
    throw UsageError("--similarity must be factor or score-row");
}

void write_ranked(std::ostream& os, const RankedList& list, const std::string& format) {
    if (format == "csv") {
        os << "rank,id,score\n";
        for (std::size_t i = 0; i < list.items.size(); ++i)
            os << i + 1 << ',' << csv_field(list.items[i].name) << ',' << format_double(list.items[i].score) << '\n';
    } else {
        for (std::size_t i = 0; i < list.items.size(); ++i) {
            nlohmann::ordered_json j;
            j["rank"] = i + 1;
            j["id"] = list.items[i].name;
            j["score"] = list.items[i].score;
            os << j.dump() << '\n';
        }
    }
}

int do_query(const QueryArgs& a, std::ostream& out, std::ostream&) {
    if (a.format != "csv" && a.format != "jsonl") throw UsageError("--format must be csv or jsonl");
    if (a.top == 0) throw UsageError("--top must be >= 1");
    if (!a.baseline.empty() && a.baseline != "tfidf") throw UsageError("--baseline only supports tfidf");
    const bool tfidf = a.baseline == "tfidf";
    const bool by_company = a.task == "com-tech" || a.task == "com-com";
    if (!by_company && a.task != "tech-com") throw UsageError("query task must be com-tech, com-com or tech-com");
    if (by_company) require(a.company, "company");
    else require(a.tech, "tech");

    std::optional<InteractionMatrix> m;
    if (tfidf || a.task == "com-tech") {
        require(a.matrix, "matrix");
        m = load_matrix_file(existing(a.matrix, "matrix"));
    }
    std::optional<RecommenderModel> model;
    if (!tfidf) {
        require(a.model, "model");
        model = load_model_file(existing(a.model, "model"));
    }

    RankedList list;
    if (a.task == "com-tech")
        list = tfidf ? tfidf_retrieve_com_tech(*m, a.company, a.top)
                     : retrieve_com_tech(*model, *m, a.company, a.top, a.include_observed);
    else if (a.task == "com-com")
        list = tfidf ? tfidf_retrieve_com_com(*m, a.company, a.top)
                     : retrieve_com_com(*model, a.company, a.top, parse_similarity(a.similarity));
    else
        list = tfidf ? tfidf_retrieve_tech_com(*m, a.tech, a.top) : retrieve_tech_com(*model, a.tech, a.top);
    Output o(a.out, out);
    write_ranked(o.stream(), list, a.format);
    return kOk;
}

struct EvaluateArgs {
    std::string task = "com-com", ks = "5,10,15,20", categories, matrix, out, overlap = "intersection",
                similarity = "factor";
    std::vector<std::string> models;
    bool tfidf = false;
    bool table = false;
};

int do_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
    require(a.categories, "categories");
    const Task task = parse_task(a.task);
    const auto ks = parse_size_list(a.ks, "k");
    if (ks.empty()) throw UsageError("--k needs at least one value");
    OverlapForm form = OverlapForm::intersection;
    if (a.overlap == "union")
        form = OverlapForm::union_size;
    else if (a.overlap != "intersection")
        throw UsageError("--overlap must be intersection or union");
    if (a.models.empty() && !a.tfidf) throw UsageError("evaluate needs at least one --model or --tfidf");
    const auto cats = load_categories_file(existing(a.categories, "categories"));
    const auto similarity = parse_similarity(a.similarity);

    std::vector<PrecisionReport> reports;
    std::map<std::string, int> tag_uses;
    for (const auto& path : a.models) {
        const auto model = load_model_file(existing(path, "model"));
        std::string tag(to_string(model.variant));
        if (tag_uses[tag]++) tag += "(" + fs::path(path).stem().string() + ")";
        const auto& queries = task == Task::com_com ? model.companies.names() : model.techs.names();
        RetrievalFn fn = [&](const std::string& q, std::size_t k) {
            return task == Task::com_com ? retrieve_com_com(model, q, k, similarity).names()
                                         : retrieve_tech_com(model, q, k).names();
        };
        reports.push_back(evaluate_task(task, tag, queries, fn, cats, ks, form));
    }
    if (a.tfidf) {
        require(a.matrix, "matrix");
        const auto m = load_matrix_file(existing(a.matrix, "matrix"));
        const auto& queries = task == Task::com_com ? m.companies().names() : m.techs().names();
        RetrievalFn fn = [&](const std::string& q, std::size_t k) {
            return task == Task::com_com ? tfidf_retrieve_com_com(m, q, k).names()
                                         : tfidf_retrieve_tech_com(m, q, k).names();
        };
        reports.push_back(evaluate_task(task, "tf-idf", queries, fn, cats, ks, form));
    }
    {
        Output o(a.out, out);
        write_report_csv(o.stream(), reports);
    }
    if (a.table) write_report_table(a.out.empty() ? out : std::cout, reports);
    return kOk;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& is) {
    ConfigFile cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string text = trimmed(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trimmed(std::string_view(text).substr(0, eq));
        if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
        cfg.entries_[key] = trimmed(std::string_view(text).substr(eq + 1));
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config file not found: " + path);
    return parse(in);
}

std::optional<std::string> ConfigFile::get(const std::string& command, const std::string& key) const {
    if (auto it = entries_.find(command + "." + key); it != entries_.end()) return it->second;
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        // the config file supplies defaults, so it is read before the flags are declared
        ConfigFile cfg;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) cfg = ConfigFile::load(args[i + 1]);
            else if (args[i].starts_with("--config=")) cfg = ConfigFile::load(args[i].substr(9));
        }

        CLI::App app{"Company and technology retrieval engine"};
        app.name("techmap");
        app.require_subcommand(1);
        app.fallthrough();
        std::string config_path;
        app.add_option("--config", config_path, "key = value config file; flags override it");

        // ingest
        Defaults d_ing(cfg, "ingest");
        IngestArgs ing{d_ing.prefixed("mentions"), d_ing.str("embeddings"), d_ing.str("labels"), d_ing.str("out"),
                       d_ing.str("missing")};
        auto* ingest = app.add_subcommand("ingest", "Parse and validate mention corpora");
        ingest->add_option("--mentions", ing.mentions, "<source>=<path> mentions JSONL (repeatable)");
        ingest->add_option("--embeddings", ing.embeddings, "Embeddings TSV to check coverage against");
        ingest->add_option("--labels", ing.labels, "Technology labels CSV to check coverage against");
        ingest->add_option("--out", ing.out, "Per-source statistics CSV (default stdout)");
        ingest->add_option("--missing", ing.missing, "CSV of entities missing embeddings/labels");

        // build-matrix
        Defaults d_bm(cfg, "build-matrix");
        BuildMatrixArgs bm{d_bm.prefixed("mentions"), d_bm.prefixed("weight"), d_bm.str("tech-filter"),
                           d_bm.str("embeddings"), d_bm.str("out")};
        auto* build = app.add_subcommand("build-matrix", "Build the company x technology interaction matrix");
        build->add_option("--mentions", bm.mentions, "<source>=<path> mentions JSONL (repeatable)");
        build->add_option("--weight", bm.weights, "<source>=<w> source weight, default 1 (repeatable)");
        build->add_option("--tech-filter", bm.tech_filter, "Predictions or labels CSV selecting technologies");
        build->add_option("--embeddings", bm.embeddings, "Drop technologies absent from this embeddings TSV");
        build->add_option("--out", bm.out, "Output matrix file");

        // train-classifier
        Defaults d_tc(cfg, "train-classifier");
        TrainClassifierArgs tc;
        tc.embeddings = d_tc.str("embeddings");
        tc.labels = d_tc.str("labels");
        tc.out = d_tc.str("out");
        tc.report = d_tc.str("report");
        tc.folds = d_tc.size("folds", 5);
        tc.config.h1 = d_tc.size("h1", tc.config.h1);
        tc.config.h2 = d_tc.size("h2", tc.config.h2);
        tc.config.dropout_rate = d_tc.real("dropout", tc.config.dropout_rate);
        tc.config.learning_rate = d_tc.real("lr", tc.config.learning_rate);
        tc.config.epochs = d_tc.size("epochs", tc.config.epochs);
        tc.config.batch_size = d_tc.size("batch-size", tc.config.batch_size);
        tc.config.seed = d_tc.size("seed", tc.config.seed);
        tc.config.bn_epsilon = d_tc.real("bn-epsilon", tc.config.bn_epsilon);
        tc.config.bn_momentum = d_tc.real("bn-momentum", tc.config.bn_momentum);
        auto* trc = app.add_subcommand("train-classifier", "Train the technology classifier head");
        trc->add_option("--embeddings", tc.embeddings, "Entity embeddings TSV");
        trc->add_option("--labels", tc.labels, "Technology labels CSV");
        trc->add_option("--out", tc.out, "Output classifier model");
        trc->add_option("--report", tc.report, "Cross-validation CSV (default stdout)");
        trc->add_option("--folds", tc.folds, "Cross-validation folds, 0 to skip")->capture_default_str();
        trc->add_option("--h1", tc.config.h1, "First hidden size")->capture_default_str();
        trc->add_option("--h2", tc.config.h2, "Second hidden size")->capture_default_str();
        trc->add_option("--dropout", tc.config.dropout_rate, "Dropout rate between blocks")->capture_default_str();
        trc->add_option("--lr", tc.config.learning_rate, "SGD learning rate")->capture_default_str();
        trc->add_option("--epochs", tc.config.epochs, "Training epochs")->capture_default_str();
        trc->add_option("--batch-size", tc.config.batch_size, "Minibatch size")->capture_default_str();
        trc->add_option("--seed", tc.config.seed, "Random seed")->capture_default_str();
        trc->add_option("--bn-epsilon", tc.config.bn_epsilon, "Batch-norm epsilon")->capture_default_str();
        trc->add_option("--bn-momentum", tc.config.bn_momentum, "Batch-norm running-stat momentum")->capture_default_str();

        // predict-tech
        Defaults d_pt(cfg, "predict-tech");
        PredictArgs pt{d_pt.str("embeddings"), d_pt.str("model"), d_pt.str("out"), d_pt.real("threshold", 0.5)};
        auto* prd = app.add_subcommand("predict-tech", "Classify entities as technologies");
        prd->add_option("--embeddings", pt.embeddings, "Entity embeddings TSV");
        prd->add_option("--model", pt.model, "Classifier model");
        prd->add_option("--out", pt.out, "Predictions CSV entity,probability,label (default stdout)");
        prd->add_option("--threshold", pt.threshold, "Probability threshold for label 1")->capture_default_str();

        // train-recommender
        Defaults d_tr(cfg, "train-recommender");
        TrainRecommenderArgs tr;
        tr.matrix = d_tr.str("matrix");
        tr.embeddings = d_tr.str("embeddings");
        tr.variant = d_tr.str("variant", tr.variant);
        tr.out = d_tr.str("out");
        tr.progress = d_tr.str("progress");
        tr.projection_hidden = d_tr.str("projection-hidden");
        tr.scorer_hidden = d_tr.str("scorer-hidden");
        tr.hinge = d_tr.str("hinge", tr.hinge);
        tr.config.d = d_tr.size("d", tr.config.d);
        tr.config.margin = d_tr.real("margin", tr.config.margin);
        tr.config.learning_rate = d_tr.real("lr", tr.config.learning_rate);
        tr.config.epochs = d_tr.size("epochs", tr.config.epochs);
        tr.config.negatives_per_positive = d_tr.size("negatives", tr.config.negatives_per_positive);
        tr.config.seed = d_tr.size("seed", tr.config.seed);
        tr.config.projection_relu = d_tr.flag("projection-relu", false);
        auto* trr = app.add_subcommand("train-recommender", "Train a recommender model on the interaction matrix");
        trr->add_option("--matrix", tr.matrix, "Interaction matrix file");
        trr->add_option("--embeddings", tr.embeddings, "Semantic embeddings TSV (semantic variants)");
        trr->add_option("--variant", tr.variant, "MF, MLP, NCF, SemanticOnly or SemanticPlusMF")->capture_default_str();
        trr->add_option("--out", tr.out, "Output model file");
        trr->add_option("--progress", tr.progress, "Per-epoch CSV epoch,mean_loss,updates");
        trr->add_option("--d", tr.config.d, "Embedding size")->capture_default_str();
        trr->add_option("--margin", tr.config.margin, "Hinge-loss margin")->capture_default_str();
        trr->add_option("--lr", tr.config.learning_rate, "SGD learning rate")->capture_default_str();
        trr->add_option("--epochs", tr.config.epochs, "Training epochs")->capture_default_str();
        trr->add_option("--negatives", tr.config.negatives_per_positive, "Negatives per observed pair")
            ->capture_default_str();
        trr->add_option("--seed", tr.config.seed, "Random seed")->capture_default_str();
        trr->add_option("--projection-hidden", tr.projection_hidden,
                        "Hidden sizes of the semantic projection, e.g. 128 (default 2d; 'none' for one layer)");
        trr->add_flag("--projection-relu,!--no-projection-relu", tr.config.projection_relu,
                      "Rectifiers between projection layers");
        trr->add_option("--scorer-hidden", tr.scorer_hidden, "Hidden sizes of the MLP scorer (default d,d/2)");
        trr->add_option("--hinge", tr.hinge, "pairwise or observed-value")->capture_default_str();

        // query
        Defaults d_q(cfg, "query");
        QueryArgs q;
        q.model = d_q.str("model");
        q.matrix = d_q.str("matrix");
        q.format = d_q.str("format", q.format);
        q.top = d_q.size("top", q.top);
        q.similarity = d_q.str("similarity", q.similarity);
        q.out = d_q.str("out");
        auto* qry = app.add_subcommand("query", "Rank technologies or companies for one query");
        qry->add_option("task", q.task, "com-tech, com-com or tech-com")->required();
        qry->add_option("--model", q.model, "Recommender model file");
        qry->add_option("--matrix", q.matrix, "Interaction matrix (com-tech and tf-idf baseline)");
        qry->add_option("--company", q.company, "Query company id");
        qry->add_option("--tech", q.tech, "Query technology id");
        qry->add_option("--top", q.top, "Number of results")->capture_default_str();
        qry->add_flag("--include-observed", q.include_observed, "com-tech: also rank mentioned technologies");
        qry->add_option("--format", q.format, "csv or jsonl")->capture_default_str();
        qry->add_option("--baseline", q.baseline, "Use the tf-idf baseline instead of a model (tfidf)");
        qry->add_option("--similarity", q.similarity, "com-com similarity: factor or score-row")->capture_default_str();
        qry->add_option("--out", q.out, "Output file (default stdout)");

        // evaluate
        Defaults d_e(cfg, "evaluate");
        EvaluateArgs ev;
        ev.task = d_e.str("task", ev.task);
        ev.ks = d_e.str("k", ev.ks);
        ev.categories = d_e.str("categories");
        ev.matrix = d_e.str("matrix");
        ev.out = d_e.str("out");
        ev.overlap = d_e.str("overlap", ev.overlap);
        ev.similarity = d_e.str("similarity", ev.similarity);
        ev.tfidf = d_e.flag("tfidf", false);
        if (auto m = cfg.get("evaluate", "model")) ev.models = {*m};
        auto* evl = app.add_subcommand("evaluate", "Category-overlap P@k for com-com or tech-com retrieval");
        evl->add_option("--task", ev.task, "com-com or tech-com")->capture_default_str();
        evl->add_option("--k", ev.ks, "Comma-separated cutoffs")->capture_default_str();
        evl->add_option("--categories", ev.categories, "Categories CSV id,category");
        evl->add_option("--model", ev.models, "Recommender model file (repeatable)");
        evl->add_flag("--tfidf", ev.tfidf, "Also evaluate the tf-idf baseline (needs --matrix)");
        evl->add_option("--matrix", ev.matrix, "Interaction matrix for the tf-idf baseline");
        evl->add_option("--overlap", ev.overlap, "intersection or union")->capture_default_str();
        evl->add_option("--similarity", ev.similarity, "com-com similarity: factor or score-row")->capture_default_str();
        evl->add_option("--out", ev.out, "Report CSV (default stdout)");
        evl->add_flag("--table", ev.table, "Also print a human-readable table");

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::CallForHelp& e) {
            out << app.help();
            return kOk;
        } catch (const CLI::CallForAllHelp& e) {
            out << app.help("", CLI::AppFormatMode::All);
            return kOk;
        } catch (const CLI::ParseError& e) {
            // subcommand --help surfaces as CallForHelp from the subcommand
            err << "error: " << e.what() << '\n';
            return kUsage;
        }

        if (ingest->parsed()) return do_ingest(ing, out, err);
        if (build->parsed()) return do_build_matrix(bm, out, err);
        if (trc->parsed()) return do_train_classifier(tc, out, err);
        if (prd->parsed()) return do_predict(pt, out, err);
        if (trr->parsed()) return do_train_recommender(tr, out, err);
        if (qry->parsed()) return do_query(q, out, err);
        if (evl->parsed()) return do_evaluate(ev, out, err);
        return kUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kData;
    }
}

}  // namespace techmap::cli
