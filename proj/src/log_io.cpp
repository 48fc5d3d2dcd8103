#include "cascade/log_io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace cascade {

using ordered_json = nlohmann::ordered_json;

std::string to_string(LogSchema schema) {
    return schema == LogSchema::Classification ? "classification" : "seq2seq";
}

LogSchema log_schema_from_string(const std::string& name) {
    if (name == "classification") return LogSchema::Classification;
    if (name == "seq2seq") return LogSchema::Seq2Seq;
    throw Error("unknown log schema \"" + name + "\"");
}

namespace {

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line_no,
                             const std::string& what) {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

ClassDistribution parse_class_distribution(const ordered_json& rec) {
    if (!rec.contains("probs") || !rec["probs"].is_array()) {
        throw Error("missing \"probs\" array");
    }
    ClassDistribution dist;
    for (const auto& p : rec["probs"]) {
        if (!p.is_number()) {
            throw Error("non-numeric probability in \"probs\"");
        }
        dist.probs.push_back(p.get<double>());
    }
    dist.validate();
    return dist;
}

std::vector<TokenDistribution> parse_token_distributions(const ordered_json& rec) {
    if (!rec.contains("tokens") || !rec["tokens"].is_array()) {
        throw Error("missing \"tokens\" array");
    }
    std::vector<TokenDistribution> tokens;
    for (const auto& tok : rec["tokens"]) {
        if (!tok.is_object() || !tok.contains("top") || !tok["top"].is_array()) {
            throw Error("token entry missing \"top\" list");
        }
        TokenDistribution dist;
        for (const auto& pair : tok["top"]) {
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
                !pair[1].is_number()) {
                throw Error("token \"top\" entries must be [string, number] pairs");
            }
            dist.top.push_back({pair[0].get<std::string>(), pair[1].get<double>()});
        }
        dist.validate();
        tokens.push_back(std::move(dist));
    }
    if (tokens.empty()) {
        throw Error("record has an empty \"tokens\" list");
    }
    return tokens;
}

PredictionRecord parse_record(const ordered_json& rec, LogSchema schema,
                              const IngestOptions& options) {
    if (!rec.is_object()) {
        throw Error("record is not a JSON object");
    }
    if (!rec.contains("example_id") || !rec["example_id"].is_string()) {
        throw Error("missing \"example_id\" string");
    }
    if (!rec.contains("prediction") || !rec["prediction"].is_string()) {
        throw Error("missing \"prediction\" string");
    }
    PredictionRecord record;
    record.example_id = rec["example_id"].get<std::string>();
    record.prediction = rec["prediction"].get<std::string>();
    if (rec.contains("gold")) {
        if (!rec["gold"].is_string()) {
            throw Error("\"gold\" must be a string");
        }
        record.gold = rec["gold"].get<std::string>();
        record.correct = exact_match(record.prediction, *record.gold, options.normalize_answers);
    }
    if (schema == LogSchema::Classification) {
        record.output = parse_class_distribution(rec);
        if (rec.contains("labels")) {
            if (!rec["labels"].is_array()) {
                throw Error("\"labels\" must be an array of strings");
            }
            std::vector<std::string> labels;
            for (const auto& l : rec["labels"]) {
                if (!l.is_string()) {
                    throw Error("\"labels\" must be an array of strings");
                }
                labels.push_back(l.get<std::string>());
            }
            if (labels.size() != record.class_dist().probs.size()) {
                throw Error("\"labels\" length does not match \"probs\" length");
            }
            record.labels = std::move(labels);
        }
    } else {
        record.output = parse_token_distributions(rec);
    }
    return record;
}

} // namespace

ModelRun load_prediction_log(const std::filesystem::path& path, LogSchema schema,
                             const IngestOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open prediction log " + path.string());
    }
    ModelRun run;
    run.model_id = path.stem().string();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        ordered_json rec;
        try {
            rec = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            line_error(path, line_no, std::string("malformed record: ") + e.what());
        }
        PredictionRecord record;
        try {
            record = parse_record(rec, schema, options);
        } catch (const Error& e) {
            line_error(path, line_no, e.what());
        }
        auto [it, inserted] = run.records.emplace(record.example_id, std::move(record));
        if (!inserted) {
            line_error(path, line_no, "duplicate example_id \"" + it->first + "\"");
        }
    }
    if (run.records.empty()) {
        throw Error("prediction log " + path.string() + " has no records");
    }
    return run;
}

LogSchema detect_log_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open prediction log " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        ordered_json rec;
        try {
            rec = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            line_error(path, line_no, std::string("malformed record: ") + e.what());
        }
        if (rec.is_object() && rec.contains("probs")) {
            return LogSchema::Classification;
        }
        if (rec.is_object() && rec.contains("tokens")) {
            return LogSchema::Seq2Seq;
        }
        line_error(path, line_no, "record has neither \"probs\" nor \"tokens\"");
    }
    throw Error("prediction log " + path.string() + " has no records");
}

ModelRun load_prediction_log_auto(const std::filesystem::path& path,
                                  const IngestOptions& options) {
    return load_prediction_log(path, detect_log_schema(path), options);
}

void write_prediction_log(const ModelRun& run, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write prediction log " + path.string());
    }
    for (const auto& [id, rec] : run.records) {
        ordered_json line;
        line["example_id"] = rec.example_id;
        if (rec.gold) {
            line["gold"] = *rec.gold;
        }
        line["prediction"] = rec.prediction;
        if (rec.is_classification()) {
            line["probs"] = rec.class_dist().probs;
            if (rec.labels) {
                line["labels"] = *rec.labels;
            }
        } else {
            ordered_json tokens = ordered_json::array();
            for (const auto& tok : rec.token_dists()) {
                ordered_json top = ordered_json::array();
                for (const auto& [token, prob] : tok.top) {
                    top.push_back(ordered_json::array({token, prob}));
                }
                tokens.push_back(ordered_json{{"top", std::move(top)}});
            }
            line["tokens"] = std::move(tokens);
        }
        out << line.dump() << '\n';
    }
    if (!out) {
        throw Error("failed while writing prediction log " + path.string());
    }
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open manifest " + path.string());
    }
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error("manifest " + path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("runs") || !doc["runs"].is_array()) {
        throw Error("manifest " + path.string() + " must be an object with a \"runs\" array");
    }
    Manifest manifest;
    manifest.dataset = doc.value("dataset", std::string{});
    manifest.split = doc.value("split", std::string{});
    for (const auto& entry : doc["runs"]) {
        if (!entry.is_object() || !entry.contains("path")) {
            throw Error("manifest " + path.string() + ": run entry missing \"path\"");
        }
        ManifestEntry me;
        me.path = entry["path"].get<std::string>();
        if (entry.contains("size_tag")) {
            me.size_tag = size_tag_from_string(entry["size_tag"].get<std::string>());
        }
        me.run_index = entry.value("run_index", 0);
        manifest.entries.push_back(std::move(me));
    }
    return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    ordered_json doc;
    doc["dataset"] = manifest.dataset;
    doc["split"] = manifest.split;
    ordered_json runs = ordered_json::array();
    for (const auto& entry : manifest.entries) {
        runs.push_back(ordered_json{{"path", entry.path},
                                    {"size_tag", to_string(entry.size_tag)},
                                    {"run_index", entry.run_index}});
    }
    doc["runs"] = std::move(runs);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write manifest " + path.string());
    }
    out << doc.dump(2) << '\n';
}

std::vector<ModelRun> load_manifest_runs(const std::filesystem::path& path,
                                         const IngestOptions& options) {
    Manifest manifest = load_manifest(path);
    if (manifest.entries.empty()) {
        throw Error("manifest " + path.string() + " lists no runs");
    }
    const std::filesystem::path base = path.parent_path();
    std::vector<ModelRun> runs;
    for (const auto& entry : manifest.entries) {
        std::filesystem::path log_path = entry.path;
        if (log_path.is_relative()) {
            log_path = base / log_path;
        }
        ModelRun run = load_prediction_log_auto(log_path, options);
        run.size_tag = entry.size_tag;
        run.run_index = entry.run_index;
        runs.push_back(std::move(run));
    }
    return runs;
}

std::string format_real(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value,
                                   std::chars_format::general, 10);
    if (ec != std::errc{}) {
        throw Error("failed to format real value");
    }
    return std::string(buf, ptr);
}

namespace {

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) {
        return field;
    }
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') {
            quoted += "\"\"";
        } else {
            quoted += c;
        }
    }
    quoted += '"';
    return quoted;
}

std::string format_cell(const Table::Cell& cell) {
    if (std::holds_alternative<std::string>(cell)) {
        return csv_escape(std::get<std::string>(cell));
    }
    if (std::holds_alternative<double>(cell)) {
        return format_real(std::get<double>(cell));
    }
    return std::to_string(std::get<std::int64_t>(cell));
}

} // namespace

void write_table(const Table& table, const std::filesystem::path& path) {
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (table.rows[i].size() != table.header.size()) {
            throw Error("table row " + std::to_string(i) + " has " +
                        std::to_string(table.rows[i].size()) + " cells, header has " +
                        std::to_string(table.header.size()));
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write table " + path.string());
    }
    std::ostringstream buf;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i > 0) buf << ',';
        buf << csv_escape(table.header[i]);
    }
    buf << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) buf << ',';
            buf << format_cell(row[i]);
        }
        buf << '\n';
    }
    out << buf.str();
    if (!out) {
        throw Error("failed while writing table " + path.string());
    }
}

} // namespace cascade
