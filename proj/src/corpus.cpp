#include "techmap/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "techmap/error.hpp"
#include "techmap/tensor.hpp"

namespace techmap {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::string at_line(std::size_t line_no) { return "line " + std::to_string(line_no); }

}  // namespace

std::string_view to_string(Source s) {
    switch (s) {
        case Source::website: return "website";
        case Source::patent: return "patent";
        case Source::jobs: return "jobs";
        case Source::twitter: return "twitter";
    }
    return "unknown";
}

Source parse_source(std::string_view name) {
    for (Source s : kAllSources)
        if (to_string(s) == name) return s;
    throw DataError("unknown source '" + std::string(name) + "' (expected website, patent, jobs or twitter)");
}

std::string normalize_entity_id(std::string_view raw) {
    static constexpr std::string_view prefixes[] = {"http://dbpedia.org/resource/",
                                                    "https://dbpedia.org/resource/", "dbr:"};
    for (auto p : prefixes)
        if (raw.starts_with(p)) return std::string(raw.substr(p.size()));
    return std::string(raw);
}

Catalog::Catalog(std::vector<std::string> names) : names_(std::move(names)) {
    std::sort(names_.begin(), names_.end());
    names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

std::optional<std::size_t> Catalog::find(std::string_view name) const {
    auto it = std::lower_bound(names_.begin(), names_.end(), name);
    if (it == names_.end() || *it != name) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
}

std::size_t Catalog::at(std::string_view name, std::string_view kind) const {
    if (auto id = find(name)) return *id;
    throw DataError("unknown " + std::string(kind) + " '" + std::string(name) + "'");
}

std::int64_t SourceCorpus::total_count() const {
    std::int64_t total = 0;
    for (const auto& r : records) total += r.count;
    return total;
}

SourceCorpus parse_mentions(std::istream& is, Source source) {
    std::map<std::pair<std::string, std::string>, std::int64_t> merged;
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(is, text)) {
        ++line_no;
        if (trim(text).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            throw DataError(at_line(line_no) + ": not a JSON object");
        }
        if (!obj.is_object() || obj.size() != 3 || !obj.contains("company") || !obj.contains("entity") ||
            !obj.contains("count"))
            throw DataError(at_line(line_no) + ": expected exactly the keys company, entity, count");
        const auto& company = obj["company"];
        const auto& entity = obj["entity"];
        const auto& count = obj["count"];
        if (!company.is_string() || !entity.is_string())
            throw DataError(at_line(line_no) + ": company and entity must be strings");
        if (!count.is_number_integer())
            throw DataError(at_line(line_no) + ": count must be an integer");
        const auto n = count.get<std::int64_t>();
        if (n < 1) throw DataError(at_line(line_no) + ": count must be >= 1, got " + std::to_string(n));
        std::string c = company.get<std::string>();
        std::string e = normalize_entity_id(entity.get<std::string>());
        if (c.empty() || e.empty()) throw DataError(at_line(line_no) + ": empty company or entity");
        merged[{std::move(c), std::move(e)}] += n;
    }

    SourceCorpus corpus;
    corpus.source = source;
    std::vector<std::string> companies, entities;
    corpus.records.reserve(merged.size());
    for (auto& [key, n] : merged) {
        companies.push_back(key.first);
        entities.push_back(key.second);
        corpus.records.push_back({key.first, key.second, n, source});
    }
    corpus.companies = Catalog(std::move(companies));
    corpus.entities = Catalog(std::move(entities));
    return corpus;
}

SourceCorpus parse_mentions_file(const std::filesystem::path& path, Source source) {
    auto in = open_input(path);
    try {
        return parse_mentions(in, source);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_mentions(std::ostream& os, const SourceCorpus& corpus) {
    for (const auto& r : corpus.records) {
        nlohmann::ordered_json obj;
        obj["company"] = r.company;
        obj["entity"] = r.entity;
        obj["count"] = r.count;
        os << obj.dump() << '\n';
    }
}

const std::vector<double>* EmbeddingTable::find(std::string_view entity) const {
    auto it = vectors.find(entity);
    return it == vectors.end() ? nullptr : &it->second;
}

EmbeddingTable load_embeddings(std::istream& is) {
    EmbeddingTable table;
    std::string text;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(is, text)) {
        ++line_no;
        if (trim(text).empty()) continue;
        if (!have_header) {
            const auto header = trim(text);
            if (!header.starts_with("dim=")) throw DataError(at_line(line_no) + ": expected header dim=<D>");
            std::size_t dim = 0;
            try {
                std::size_t used = 0;
                dim = std::stoul(std::string(header.substr(4)), &used);
                if (used != header.size() - 4) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw DataError(at_line(line_no) + ": bad dim header '" + std::string(header) + "'");
            }
            if (dim == 0) throw DataError(at_line(line_no) + ": dim must be positive");
            table.dim = dim;
            have_header = true;
            continue;
        }
        const auto tab = text.find('\t');
        if (tab == std::string::npos) throw DataError(at_line(line_no) + ": expected <entity>\\t<values>");
        const std::string entity = normalize_entity_id(trim(std::string_view(text).substr(0, tab)));
        if (entity.empty()) throw DataError(at_line(line_no) + ": empty entity id");
        const auto fields = split(trim(std::string_view(text).substr(tab + 1)), ',');
        if (fields.size() != table.dim)
            throw DataError("embedding for '" + entity + "' has " + std::to_string(fields.size()) +
                            " values, expected dim=" + std::to_string(table.dim));
        std::vector<double> v;
        v.reserve(table.dim);
        for (auto f : fields) {
            const auto x = parse_double(f);
            if (!x) throw DataError("embedding for '" + entity + "': bad value '" + std::string(f) + "'");
            if (!std::isfinite(*x)) throw DataError("embedding for '" + entity + "': non-finite value");
            v.push_back(*x);
        }
        if (!table.vectors.emplace(entity, std::move(v)).second)
            throw DataError("duplicate embedding for '" + entity + "'");
    }
    if (!have_header) throw DataError("embeddings file is missing the dim=<D> header");
    return table;
}

EmbeddingTable load_embeddings_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return load_embeddings(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_embeddings(std::ostream& os, const EmbeddingTable& table) {
    os << "dim=" << table.dim << '\n';
    for (const auto& [entity, v] : table.vectors) {
        os << entity << '\t';
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) os << ',';
            os << format_double(v[i]);
        }
        os << '\n';
    }
}

bool TechLabelSet::is_technology(std::string_view entity) const {
    auto it = labels.find(entity);
    return it != labels.end() && it->second;
}

TechLabelSet load_labels(std::istream& is) {
    TechLabelSet set;
    std::string text;
    std::size_t line_no = 0;
    std::size_t label_col = 1;
    bool first = true;
    while (std::getline(is, text)) {
        ++line_no;
        if (trim(text).empty()) continue;
        auto fields = split_csv_line(text);
        if (first) {
            first = false;
            if (!fields.empty() && fields[0] == "entity") {
                auto it = std::find(fields.begin(), fields.end(), "label");
                if (it == fields.end()) throw DataError(at_line(line_no) + ": header has no label column");
                label_col = static_cast<std::size_t>(it - fields.begin());
                continue;
            }
        }
        if (fields.size() <= label_col)
            throw DataError(at_line(line_no) + ": expected entity and label columns");
        const std::string entity = normalize_entity_id(fields[0]);
        const auto label = trim(fields[label_col]);
        if (entity.empty()) throw DataError(at_line(line_no) + ": empty entity id");
        if (label != "0" && label != "1")
            throw DataError(at_line(line_no) + ": label must be 0 or 1, got '" + std::string(label) + "'");
        if (!set.labels.emplace(entity, label == "1").second)
            throw DataError(at_line(line_no) + ": entity '" + entity + "' labeled more than once");
    }
    return set;
}

TechLabelSet load_labels_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return load_labels(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

const std::set<std::string>& CategoryMap::of(std::string_view id) const {
    static const std::set<std::string> none;
    auto it = categories.find(id);
    return it == categories.end() ? none : it->second;
}

CategoryMap load_categories(std::istream& is) {
    CategoryMap map;
    std::string text;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(is, text)) {
        ++line_no;
        if (trim(text).empty()) continue;
        const auto fields = split_csv_line(text);
        if (first) {
            first = false;
            if (fields.size() == 2 && fields[0] == "id" && fields[1] == "category") continue;
        }
        if (fields.size() != 2) throw DataError(at_line(line_no) + ": expected id,category");
        const auto id = trim(fields[0]);
        const auto category = trim(fields[1]);
        if (id.empty()) throw DataError(at_line(line_no) + ": empty id");
        if (category.empty()) throw DataError(at_line(line_no) + ": empty category for '" + std::string(id) + "'");
        map.categories[std::string(id)].emplace(category);
    }
    return map;
}

CategoryMap load_categories_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return load_categories(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

ValidationReport validate_corpus(std::span<const SourceCorpus> corpora, const EmbeddingTable* embeddings,
                                 const TechLabelSet* labels) {
    ValidationReport report;
    std::set<std::string> missing_emb, missing_lab;
    for (const auto& corpus : corpora) {
        report.sources.push_back({corpus.source, corpus.companies.size(), corpus.entities.size(),
                                  corpus.records.size(), corpus.total_count()});
        for (const auto& e : corpus.entities.names()) {
            if (embeddings && !embeddings->contains(e)) missing_emb.insert(e);
            if (labels && labels->labels.find(e) == labels->labels.end()) missing_lab.insert(e);
        }
    }
    report.missing_embeddings.assign(missing_emb.begin(), missing_emb.end());
    report.missing_labels.assign(missing_lab.begin(), missing_lab.end());
    return report;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (quoted) throw DataError("unterminated quoted CSV field");
    fields.push_back(std::move(cur));
    return fields;
}

std::string csv_field(std::string_view field) {
    if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

}  // namespace techmap
