#include "deplab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "deplab/decoder.hpp"
#include "deplab/stats.hpp"

namespace fs = std::filesystem;

namespace deplab {

namespace {

// ---- small parsing helpers ----------------------------------------------

long to_long(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) {
        fail(ErrorKind::parse, what + ": '" + s + "' is not an integer");
    }
    return v;
}

uint64_t to_u64(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || s[0] == '-' || end != s.c_str() + s.size()) {
        fail(ErrorKind::parse, what + ": '" + s + "' is not a nonnegative integer");
    }
    return v;
}

double to_double(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        fail(ErrorKind::parse, what + ": '" + s + "' is not a number");
    }
    return v;
}

std::string resolve_path(const std::string& base, const std::string& p) {
    if (base.empty() || p.empty()) return p;
    fs::path fp(p);
    if (fp.is_absolute()) return p;
    return (fs::path(base) / fp).lexically_normal().string();
}

// ---- CSV -----------------------------------------------------------------

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> csv_fields(const std::string& line, size_t line_no,
                                    const std::string& file) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) {
        fail(ErrorKind::parse,
             file + ": unterminated quote (line " + std::to_string(line_no) + ")");
    }
    out.push_back(cur);
    return out;
}

struct CsvFile {
    std::vector<std::vector<std::string>> rows;  // without the header
};

CsvFile read_csv(const std::string& path, const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path);
    CsvFile out;
    std::string line;
    size_t line_no = 0;
    const size_t n_cols = csv_fields(expected_header, 0, path).size();
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != expected_header) {
                fail(ErrorKind::parse, path + ": expected header '" + expected_header +
                                           "', found '" + line + "'");
            }
            continue;
        }
        if (strip(line).empty()) continue;
        std::vector<std::string> fields = csv_fields(line, line_no, path);
        if (fields.size() != n_cols) {
            fail(ErrorKind::parse, path + ": expected " + std::to_string(n_cols) +
                                       " fields, found " + std::to_string(fields.size()) +
                                       " (line " + std::to_string(line_no) + ")");
        }
        out.rows.push_back(std::move(fields));
    }
    if (line_no == 0) fail(ErrorKind::parse, path + ": file is empty");
    return out;
}

constexpr const char* kRunsHeader = "language,model,metric,seed,value";
constexpr const char* kAggHeader = "language,model,metric,mean,sd";
constexpr const char* kMetaHeader = "language,train_sentences,tokens,mattr";
constexpr const char* kFailedHeader = "language,model,seed,error";

void check_metric(const std::string& metric, const std::string& context) {
    if (metric != "las" && metric != "uas") {
        fail(ErrorKind::invalid_argument,
             context + ": metric must be 'las' or 'uas', found '" + metric + "'");
    }
}

}  // namespace

// ---- config ----------------------------------------------------------------

namespace {

struct SectionState {
    std::string name;          // experiment | hyperparams | grid | language
    int language_index = -1;   // into cfg.languages when name == language
    std::set<std::string> seen_keys;
};

void apply_experiment_key(ExperimentConfig& cfg, const std::string& key,
                          const std::string& value, size_t line_no) {
    const std::string ctx = "line " + std::to_string(line_no);
    if (key == "punct") {
        if (value == "include") cfg.exclude_punct = false;
        else if (value == "exclude") cfg.exclude_punct = true;
        else fail(ErrorKind::parse, ctx + ": punct must be 'include' or 'exclude'");
    } else if (key == "single_root") {
        if (value == "on") cfg.single_root = true;
        else if (value == "off") cfg.single_root = false;
        else fail(ErrorKind::parse, ctx + ": single_root must be 'on' or 'off'");
    } else if (key == "baseline_model") {
        cfg.baseline_model = value;
    } else if (key == "model") {
        cfg.model = value;
    } else if (key == "seeds") {
        cfg.seeds.clear();
        for (const std::string& f : split_ws(value)) cfg.seeds.push_back(to_u64(f, ctx));
        if (cfg.seeds.empty()) fail(ErrorKind::parse, ctx + ": seeds is empty");
        std::set<uint64_t> uniq(cfg.seeds.begin(), cfg.seeds.end());
        if (uniq.size() != cfg.seeds.size()) fail(ErrorKind::parse, ctx + ": duplicate seed");
    } else if (key == "mattr_window") {
        cfg.mattr_window = static_cast<int>(to_long(value, ctx));
    } else if (key == "min_word_frequency") {
        cfg.min_word_frequency = static_cast<int>(to_long(value, ctx));
    } else {
        fail(ErrorKind::parse, ctx + ": unknown key '" + key + "' in [experiment]");
    }
}

void apply_hyperparams_key(Hyperparams& hp, const std::string& key, const std::string& value,
                           size_t line_no) {
    const std::string ctx = "line " + std::to_string(line_no);
    if (key == "word_dim") hp.word_dim = static_cast<int>(to_long(value, ctx));
    else if (key == "char_dim") hp.char_dim = static_cast<int>(to_long(value, ctx));
    else if (key == "pos_dim") hp.pos_dim = static_cast<int>(to_long(value, ctx));
    else if (key == "static_dim") hp.static_dim = static_cast<int>(to_long(value, ctx));
    else if (key == "hidden_dim") hp.hidden_dim = static_cast<int>(to_long(value, ctx));
    else if (key == "layers") hp.layers = static_cast<int>(to_long(value, ctx));
    else if (key == "arc_dim") hp.arc_dim = static_cast<int>(to_long(value, ctx));
    else if (key == "label_dim") hp.label_dim = static_cast<int>(to_long(value, ctx));
    else if (key == "char_window") hp.char_window = static_cast<int>(to_long(value, ctx));
    else if (key == "learning_rate") hp.learning_rate = to_double(value, ctx);
    else if (key == "decay_rate") hp.decay_rate = to_double(value, ctx);
    else if (key == "decay_steps") hp.decay_steps = static_cast<int>(to_long(value, ctx));
    else if (key == "max_epochs") hp.max_epochs = static_cast<int>(to_long(value, ctx));
    else if (key == "patience") hp.patience = static_cast<int>(to_long(value, ctx));
    else if (key == "dropout") hp.dropout = to_double(value, ctx);
    else if (key == "batch_size") hp.batch_size = static_cast<int>(to_long(value, ctx));
    else if (key == "seed") hp.seed = to_u64(value, ctx);
    else fail(ErrorKind::parse, ctx + ": unknown key '" + key + "' in [hyperparams]");
}

void apply_grid_key(GridSpec& grid, const std::string& key, const std::string& value,
                    size_t line_no) {
    const std::string ctx = "line " + std::to_string(line_no);
    if (key == "learning_rates") {
        grid.learning_rates.clear();
        for (const std::string& f : split_ws(value)) {
            grid.learning_rates.push_back(to_double(f, ctx));
        }
    } else if (key == "decay_rates") {
        grid.decay_rates.clear();
        for (const std::string& f : split_ws(value)) grid.decay_rates.push_back(to_double(f, ctx));
    } else if (key == "decay_steps") {
        grid.decay_steps.clear();
        for (const std::string& f : split_ws(value)) {
            grid.decay_steps.push_back(static_cast<int>(to_long(f, ctx)));
        }
    } else if (key == "budget_fraction") {
        grid.budget_fraction = to_double(value, ctx);
    } else {
        fail(ErrorKind::parse, ctx + ": unknown key '" + key + "' in [grid]");
    }
}

void apply_language_key(LanguageConfig& lang, const std::string& key, const std::string& value,
                        const std::string& base_dir, size_t line_no) {
    const std::string ctx = "line " + std::to_string(line_no);
    if (key == "treebank") lang.treebank = resolve_path(base_dir, value);
    else if (key == "train") lang.train_path = resolve_path(base_dir, value);
    else if (key == "dev") lang.dev_path = resolve_path(base_dir, value);
    else if (key == "test") lang.test_path = resolve_path(base_dir, value);
    else if (key == "embeddings") lang.embeddings = resolve_path(base_dir, value);
    else if (key == "split_ratios") {
        lang.split_ratios.clear();
        for (const std::string& f : split_ws(value)) {
            lang.split_ratios.push_back(to_double(f, ctx));
        }
        if (lang.split_ratios.size() != 3) {
            fail(ErrorKind::parse, ctx + ": split_ratios needs three values");
        }
    } else if (key == "split_seed") lang.split_seed = to_u64(value, ctx);
    else if (key == "train_sentences") lang.declared_train_sentences = to_long(value, ctx);
    else if (key == "tokens") lang.declared_tokens = to_long(value, ctx);
    else if (key == "mattr") lang.declared_mattr = to_double(value, ctx);
    else fail(ErrorKind::parse, ctx + ": unknown key '" + key + "' in [language]");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
    ExperimentConfig cfg;
    SectionState section;
    std::set<std::string> seen_sections;
    std::istringstream in(text);
    std::string raw;
    size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = strip(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                fail(ErrorKind::parse,
                     "line " + std::to_string(line_no) + ": unterminated section header");
            }
            const std::string inside = strip(line.substr(1, line.size() - 2));
            const std::vector<std::string> parts = split_ws(inside);
            section = SectionState{};
            if (parts.size() == 2 && parts[0] == "language") {
                for (const LanguageConfig& l : cfg.languages) {
                    if (l.code == parts[1]) {
                        fail(ErrorKind::parse, "line " + std::to_string(line_no) +
                                                   ": duplicate [language " + parts[1] + "]");
                    }
                }
                LanguageConfig lang;
                lang.code = parts[1];
                cfg.languages.push_back(lang);
                section.name = "language";
                section.language_index = static_cast<int>(cfg.languages.size()) - 1;
            } else if (parts.size() == 1 &&
                       (parts[0] == "experiment" || parts[0] == "hyperparams" ||
                        parts[0] == "grid")) {
                if (!seen_sections.insert(parts[0]).second) {
                    fail(ErrorKind::parse, "line " + std::to_string(line_no) +
                                               ": duplicate [" + parts[0] + "] section");
                }
                section.name = parts[0];
            } else {
                fail(ErrorKind::parse,
                     "line " + std::to_string(line_no) + ": unknown section [" + inside + "]");
            }
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::parse,
                 "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty()) {
            fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": empty key");
        }
        if (section.name.empty()) {
            fail(ErrorKind::parse,
                 "line " + std::to_string(line_no) + ": key outside any section");
        }
        if (!section.seen_keys.insert(key).second) {
            fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": duplicate key '" +
                                       key + "' in this section");
        }
        if (section.name == "experiment") {
            apply_experiment_key(cfg, key, value, line_no);
        } else if (section.name == "hyperparams") {
            apply_hyperparams_key(cfg.hyperparams, key, value, line_no);
        } else if (section.name == "grid") {
            apply_grid_key(cfg.grid, key, value, line_no);
        } else {
            apply_language_key(cfg.languages[static_cast<size_t>(section.language_index)], key,
                               value, base_dir, line_no);
        }
    }

    if (cfg.mattr_window < 1) fail(ErrorKind::parse, "mattr_window must be positive");
    if (cfg.min_word_frequency < 1) fail(ErrorKind::parse, "min_word_frequency must be positive");
    if (cfg.baseline_model.empty() || cfg.model.empty()) {
        fail(ErrorKind::parse, "model names cannot be empty");
    }
    validate_hyperparams(cfg.hyperparams);
    for (const LanguageConfig& lang : cfg.languages) {
        const bool has_tb = !lang.treebank.empty();
        const bool has_splits =
            !lang.train_path.empty() && !lang.dev_path.empty() && !lang.test_path.empty();
        const bool has_any_split =
            !lang.train_path.empty() || !lang.dev_path.empty() || !lang.test_path.empty();
        if (has_tb == has_any_split || (has_any_split && !has_splits)) {
            fail(ErrorKind::parse, "[language " + lang.code +
                                       "] needs either treebank or all of train/dev/test");
        }
        if (lang.declared_train_sentences == 0 || lang.declared_tokens == 0) {
            fail(ErrorKind::parse,
                 "[language " + lang.code + "] declared counts must be positive");
        }
        if (lang.declared_mattr >= 0.0 &&
            !(lang.declared_mattr > 0.0 && lang.declared_mattr <= 1.0)) {
            fail(ErrorKind::parse, "[language " + lang.code + "] mattr must lie in (0, 1]");
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config(read_file(path), fs::path(path).parent_path().string());
}

// ---- results store ---------------------------------------------------------

ResultsStore ResultsStore::open(const std::string& dir) {
    ResultsStore store(dir);
    const fs::path base(dir);
    if (fs::exists(base / "runs.csv")) {
        const CsvFile csv = read_csv((base / "runs.csv").string(), kRunsHeader);
        for (const auto& row : csv.rows) {
            RunRecord r{row[0], row[1], row[2], to_u64(row[3], "runs.csv seed"),
                        to_double(row[4], "runs.csv value")};
            store.add_run(r);
        }
    }
    if (fs::exists(base / "language_meta.csv")) {
        const CsvFile csv = read_csv((base / "language_meta.csv").string(), kMetaHeader);
        for (const auto& row : csv.rows) {
            MetaRecord m{row[0], to_long(row[1], "language_meta.csv train_sentences"),
                         to_long(row[2], "language_meta.csv tokens"),
                         to_double(row[3], "language_meta.csv mattr")};
            store.set_meta(m);
        }
    }
    if (fs::exists(base / "aggregates.csv")) {
        // aggregates.csv holds both ingested rows and rows derived from
        // runs.csv; re-derive and keep only the remainder as ingested.
        std::map<AggKey, std::pair<double, double>> derived;
        {
            ResultsStore tmp(dir);
            tmp.runs_ = store.runs_;
            derived = tmp.aggregates();
        }
        const CsvFile csv = read_csv((base / "aggregates.csv").string(), kAggHeader);
        for (const auto& row : csv.rows) {
            const AggKey key{row[0], row[1], row[2]};
            if (derived.count(key)) continue;
            AggregateRecord a{row[0], row[1], row[2], to_double(row[3], "aggregates.csv mean"),
                              to_double(row[4], "aggregates.csv sd")};
            store.ingest_aggregate(a, (base / "aggregates.csv").string());
        }
    }
    if (fs::exists(base / "failed_runs.csv")) {
        const CsvFile csv = read_csv((base / "failed_runs.csv").string(), kFailedHeader);
        for (const auto& row : csv.rows) {
            store.failed_[{row[0], row[1], to_u64(row[2], "failed_runs.csv seed")}] = row[3];
        }
    }
    return store;
}

void ResultsStore::add_run(const RunRecord& r) {
    if (r.language.empty() || r.model.empty()) {
        fail(ErrorKind::invalid_argument, "run rows need a language and a model");
    }
    check_metric(r.metric, "run row");
    if (!(r.value >= 0.0 && r.value <= 100.0)) {
        fail(ErrorKind::invalid_argument, "run value must lie in [0, 100]");
    }
    const RunKey key{r.language, r.model, r.metric, r.seed};
    if (!runs_.emplace(key, r.value).second) {
        fail(ErrorKind::state, "run " + r.language + "/" + r.model + "/" + r.metric +
                                   "/seed=" + std::to_string(r.seed) + " is already recorded");
    }
}

void ResultsStore::ingest_aggregate(const AggregateRecord& a, const std::string& context) {
    if (a.language.empty() || a.model.empty()) {
        fail(ErrorKind::invalid_argument, context + ": rows need a language and a model");
    }
    check_metric(a.metric, context);
    if (!(a.mean >= 0.0 && a.mean <= 100.0)) {
        fail(ErrorKind::invalid_argument, context + ": mean must lie in [0, 100]");
    }
    if (!(a.sd >= 0.0)) {
        fail(ErrorKind::invalid_argument, context + ": sd must be nonnegative");
    }
    const AggKey key{a.language, a.model, a.metric};
    if (!ingested_.emplace(key, std::make_pair(a.mean, a.sd)).second) {
        fail(ErrorKind::state, context + ": duplicate row for " + a.language + "/" + a.model +
                                   "/" + a.metric);
    }
}

void ResultsStore::set_meta(const MetaRecord& m) {
    if (m.language.empty()) fail(ErrorKind::invalid_argument, "metadata needs a language");
    if (m.train_sentences < 1) {
        fail(ErrorKind::invalid_argument, "metadata train_sentences must be positive");
    }
    if (m.tokens < 1) fail(ErrorKind::invalid_argument, "metadata tokens must be positive");
    if (!(m.mattr > 0.0 && m.mattr <= 1.0)) {
        fail(ErrorKind::invalid_argument, "metadata mattr must lie in (0, 1]");
    }
    meta_[m.language] = m;
}

void ResultsStore::add_failed(const FailedRecord& f) {
    std::string msg = f.error;
    for (char& c : msg) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    failed_[{f.language, f.model, f.seed}] = msg;
}

std::map<ResultsStore::AggKey, std::pair<double, double>> ResultsStore::aggregates() const {
    std::map<AggKey, std::pair<double, double>> out;
    std::map<AggKey, std::vector<double>> grouped;
    for (const auto& [key, value] : runs_) {
        grouped[{std::get<0>(key), std::get<1>(key), std::get<2>(key)}].push_back(value);
    }
    for (const auto& [key, values] : grouped) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double sd = 0.0;
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - mean) * (v - mean);
            sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
        }
        out[key] = {mean, sd};
    }
    for (const auto& [key, value] : ingested_) {
        if (out.count(key)) {
            fail(ErrorKind::state, "scores for " + std::get<0>(key) + "/" + std::get<1>(key) +
                                       "/" + std::get<2>(key) +
                                       " are both ingested and derived from runs");
        }
        out[key] = value;
    }
    return out;
}

void ResultsStore::save() const {
    fs::create_directories(dir_);
    {
        std::ostringstream os;
        os << kRunsHeader << '\n';
        for (const auto& [key, value] : runs_) {
            os << csv_escape(std::get<0>(key)) << ',' << csv_escape(std::get<1>(key)) << ','
               << std::get<2>(key) << ',' << std::get<3>(key) << ',' << format_double(value)
               << '\n';
        }
        write_file((fs::path(dir_) / "runs.csv").string(), os.str());
    }
    {
        std::ostringstream os;
        os << kAggHeader << '\n';
        for (const auto& [key, value] : aggregates()) {
            os << csv_escape(std::get<0>(key)) << ',' << csv_escape(std::get<1>(key)) << ','
               << std::get<2>(key) << ',' << format_double(value.first) << ','
               << format_double(value.second) << '\n';
        }
        write_file((fs::path(dir_) / "aggregates.csv").string(), os.str());
    }
    {
        std::ostringstream os;
        os << kMetaHeader << '\n';
        for (const auto& [lang, m] : meta_) {
            os << csv_escape(lang) << ',' << m.train_sentences << ',' << m.tokens << ','
               << format_double(m.mattr) << '\n';
        }
        write_file((fs::path(dir_) / "language_meta.csv").string(), os.str());
    }
    {
        std::ostringstream os;
        os << kFailedHeader << '\n';
        for (const auto& [key, msg] : failed_) {
            os << csv_escape(std::get<0>(key)) << ',' << csv_escape(std::get<1>(key)) << ','
               << std::get<2>(key) << ',' << csv_escape(msg) << '\n';
        }
        write_file((fs::path(dir_) / "failed_runs.csv").string(), os.str());
    }
}

void ingest_scores(ResultsStore& store, const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) fail(ErrorKind::io, "cannot open " + csv_path);
    std::string header;
    if (!std::getline(in, header)) fail(ErrorKind::parse, csv_path + ": file is empty");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    in.close();

    if (header == kRunsHeader) {
        const CsvFile csv = read_csv(csv_path, kRunsHeader);
        size_t row_no = 1;
        for (const auto& row : csv.rows) {
            ++row_no;
            const std::string ctx = csv_path + " row " + std::to_string(row_no);
            RunRecord r{row[0], row[1], row[2], to_u64(row[3], ctx), to_double(row[4], ctx)};
            try {
                store.add_run(r);
            } catch (const Error& e) {
                fail(e.kind(), ctx + ": " + e.what());
            }
        }
    } else if (header == kAggHeader) {
        const CsvFile csv = read_csv(csv_path, kAggHeader);
        size_t row_no = 1;
        for (const auto& row : csv.rows) {
            ++row_no;
            const std::string ctx = csv_path + " row " + std::to_string(row_no);
            AggregateRecord a{row[0], row[1], row[2], to_double(row[3], ctx),
                              to_double(row[4], ctx)};
            store.ingest_aggregate(a, ctx);
        }
    } else {
        fail(ErrorKind::parse, csv_path + ": header must be '" + std::string(kRunsHeader) +
                                   "' or '" + kAggHeader + "'");
    }
}

void ingest_meta(ResultsStore& store, const std::string& csv_path) {
    const CsvFile csv = read_csv(csv_path, kMetaHeader);
    std::set<std::string> seen;
    size_t row_no = 1;
    for (const auto& row : csv.rows) {
        ++row_no;
        const std::string ctx = csv_path + " row " + std::to_string(row_no);
        if (!seen.insert(row[0]).second) {
            fail(ErrorKind::state, ctx + ": duplicate language '" + row[0] + "'");
        }
        MetaRecord m{row[0], to_long(row[1], ctx), to_long(row[2], ctx), to_double(row[3], ctx)};
        try {
            store.set_meta(m);
        } catch (const Error& e) {
            fail(e.kind(), ctx + ": " + e.what());
        }
    }
}

// ---- experiment ------------------------------------------------------------

namespace {

struct LanguageData {
    std::vector<DepSentence> train, dev, test;
    Vocabulary vocab;
    EmbeddingTable table{0};
};

LanguageData load_language(const ExperimentConfig& cfg, const LanguageConfig& lang) {
    LanguageData data;
    if (!lang.treebank.empty()) {
        const std::vector<DepSentence> all = parse_conllu_file(lang.treebank, lang.code);
        TreebankSplit split =
            split_treebank(all, lang.split_ratios[0], lang.split_ratios[1],
                           lang.split_ratios[2], lang.split_seed);
        data.train = std::move(split.train);
        data.dev = std::move(split.dev);
        data.test = std::move(split.test);
    } else {
        data.train = parse_conllu_file(lang.train_path, lang.code);
        data.dev = parse_conllu_file(lang.dev_path, lang.code);
        data.test = parse_conllu_file(lang.test_path, lang.code);
    }
    if (data.train.empty() || data.dev.empty() || data.test.empty()) {
        fail(ErrorKind::invalid_argument, "language " + lang.code + " has an empty split");
    }
    data.vocab = build_vocab(data.train, cfg.min_word_frequency);
    if (cfg.hyperparams.static_dim > 0) {
        if (lang.embeddings.empty()) {
            fail(ErrorKind::invalid_argument,
                 "language " + lang.code + " needs an embeddings path for static_dim > 0");
        }
        data.table = load_embeddings_file(lang.embeddings, cfg.hyperparams.static_dim);
    } else if (!lang.embeddings.empty()) {
        fail(ErrorKind::invalid_argument,
             "language " + lang.code + " provides embeddings but static_dim is 0");
    }
    return data;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, ResultsStore& store,
                          const RunOverrides& overrides, std::ostream* log) {
    if (cfg.languages.empty()) {
        fail(ErrorKind::invalid_argument, "config defines no [language] sections");
    }
    TrainOptions options;
    options.single_root = overrides.single_root.value_or(cfg.single_root);
    options.exclude_punct = overrides.exclude_punct.value_or(cfg.exclude_punct);
    const std::vector<uint64_t> seeds =
        overrides.seed ? std::vector<uint64_t>{*overrides.seed} : cfg.seeds;

    RunOutcome outcome;
    for (const LanguageConfig& lang : cfg.languages) {
        LanguageData data;
        try {
            data = load_language(cfg, lang);
        } catch (const Error& e) {
            for (uint64_t seed : seeds) {
                store.add_failed({lang.code, cfg.model, seed, e.what()});
                ++outcome.failed;
            }
            if (log) *log << lang.code << " failed to load: " << e.what() << '\n';
            continue;
        }

        {
            std::vector<std::string> forms;
            for (const DepSentence& s : data.train) {
                for (const DepToken& t : s.tokens) forms.push_back(t.form);
            }
            MetaRecord meta;
            meta.language = lang.code;
            meta.train_sentences = lang.declared_train_sentences > 0
                                       ? lang.declared_train_sentences
                                       : static_cast<long>(data.train.size());
            meta.tokens = lang.declared_tokens > 0 ? lang.declared_tokens
                                                   : static_cast<long>(forms.size());
            meta.mattr = lang.declared_mattr > 0.0 ? lang.declared_mattr
                                                   : mattr(forms, cfg.mattr_window);
            store.set_meta(meta);
        }

        for (uint64_t seed : seeds) {
            try {
                Hyperparams hp = cfg.hyperparams;
                hp.seed = seed;
                Parser parser(data.vocab, data.table, hp);
                const TrainResult tr = parser.train(data.train, data.dev, options);

                std::vector<DepSentence> preds;
                preds.reserve(data.test.size());
                for (const DepSentence& s : data.test) {
                    preds.push_back(parser.predict(s, options.single_root));
                }
                const AttachmentScores sc = evaluate(data.test, preds, options.exclude_punct);

                store.add_run({lang.code, cfg.model, "las", seed, sc.las});
                store.add_run({lang.code, cfg.model, "uas", seed, sc.uas});

                const std::string stem =
                    lang.code + "-" + cfg.model + "-" + std::to_string(seed);
                const std::string ckpt_rel = "checkpoints/" + stem + ".bin";
                fs::create_directories(fs::path(store.dir()) / "checkpoints");
                fs::create_directories(fs::path(store.dir()) / "manifests");
                parser.save((fs::path(store.dir()) / ckpt_rel).string());

                nlohmann::json j;
                j["language"] = lang.code;
                j["model"] = cfg.model;
                j["seed"] = seed;
                j["single_root"] = options.single_root;
                j["exclude_punct"] = options.exclude_punct;
                j["train_sentences"] = data.train.size();
                j["dev_sentences"] = data.dev.size();
                j["test_sentences"] = data.test.size();
                j["vocab_fingerprint"] = hex64(data.vocab.fingerprint());
                j["parameters"] = parser.params().count();
                j["best_epoch"] = tr.best_epoch;
                j["epochs_run"] = tr.epochs.size();
                j["steps"] = tr.steps;
                j["dev_las"] = tr.best_dev_las;
                j["dev_uas"] = tr.best_dev_uas;
                j["test_las"] = sc.las;
                j["test_uas"] = sc.uas;
                j["checkpoint"] = ckpt_rel;
                nlohmann::json hj;
                hj["word_dim"] = hp.word_dim;
                hj["char_dim"] = hp.char_dim;
                hj["pos_dim"] = hp.pos_dim;
                hj["static_dim"] = hp.static_dim;
                hj["hidden_dim"] = hp.hidden_dim;
                hj["layers"] = hp.layers;
                hj["arc_dim"] = hp.arc_dim;
                hj["label_dim"] = hp.label_dim;
                hj["char_window"] = hp.char_window;
                hj["learning_rate"] = hp.learning_rate;
                hj["decay_rate"] = hp.decay_rate;
                hj["decay_steps"] = hp.decay_steps;
                hj["max_epochs"] = hp.max_epochs;
                hj["patience"] = hp.patience;
                hj["dropout"] = hp.dropout;
                hj["batch_size"] = hp.batch_size;
                hj["min_word_frequency"] = cfg.min_word_frequency;
                j["hyperparams"] = hj;
                write_file((fs::path(store.dir()) / "manifests" / (stem + ".json")).string(),
                           j.dump(2) + "\n");

                if (log) {
                    *log << lang.code << " seed=" << seed << " best_epoch=" << tr.best_epoch
                         << " dev_las=" << format_double(tr.best_dev_las)
                         << " test_uas=" << format_double(sc.uas)
                         << " test_las=" << format_double(sc.las) << '\n';
                }
                ++outcome.trained;
            } catch (const Error& e) {
                store.add_failed({lang.code, cfg.model, seed, e.what()});
                ++outcome.failed;
                if (log) {
                    *log << lang.code << " seed=" << seed << " failed: " << e.what() << '\n';
                }
            }
        }
    }
    return outcome;
}

std::string grid_search_experiment(const ExperimentConfig& cfg, std::ostream* log) {
    if (cfg.languages.empty()) {
        fail(ErrorKind::invalid_argument, "config defines no [language] sections");
    }
    if (cfg.grid.learning_rates.empty() && cfg.grid.decay_rates.empty() &&
        cfg.grid.decay_steps.empty()) {
        fail(ErrorKind::invalid_argument, "config defines no [grid] axes");
    }
    GridSpec spec = cfg.grid;
    if (spec.learning_rates.empty()) spec.learning_rates = {cfg.hyperparams.learning_rate};
    if (spec.decay_rates.empty()) spec.decay_rates = {cfg.hyperparams.decay_rate};
    if (spec.decay_steps.empty()) spec.decay_steps = {cfg.hyperparams.decay_steps};
    TrainOptions options;
    options.single_root = cfg.single_root;
    options.exclude_punct = cfg.exclude_punct;

    std::map<std::string, std::string> kv;
    for (const LanguageConfig& lang : cfg.languages) {
        const LanguageData data = load_language(cfg, lang);
        const GridResult res = grid_search(data.vocab, data.table, cfg.hyperparams, spec,
                                           data.train, data.dev, options);
        kv[lang.code + ".best_learning_rate"] = format_double(res.best.learning_rate);
        kv[lang.code + ".best_decay_rate"] = format_double(res.best.decay_rate);
        kv[lang.code + ".best_decay_steps"] = std::to_string(res.best.decay_steps);
        kv[lang.code + ".best_dev_las"] = format_double(res.best_dev_las);
        kv[lang.code + ".runs"] = std::to_string(res.runs);
        if (log) {
            *log << lang.code << " grid: lr=" << format_double(res.best.learning_rate)
                 << " decay=" << format_double(res.best.decay_rate)
                 << " steps=" << res.best.decay_steps
                 << " dev_las=" << format_double(res.best_dev_las) << '\n';
        }
    }
    std::string out;
    for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
    return out;
}

AttachmentScores evaluate_files(const std::string& gold_path, const std::string& pred_path,
                                bool exclude_punct) {
    const std::vector<DepSentence> gold = parse_conllu_file(gold_path, "");
    const std::vector<DepSentence> pred = parse_conllu_file(pred_path, "");
    return evaluate(gold, pred, exclude_punct);
}

AttachmentScores evaluate_checkpoint(const std::string& checkpoint_path,
                                     const std::string& test_path,
                                     const std::string& embeddings_path, bool single_root,
                                     bool exclude_punct) {
    EmbeddingTable table(0);
    if (!embeddings_path.empty()) table = load_embeddings_file(embeddings_path, -1);
    const Parser parser = Parser::load(checkpoint_path, std::move(table));
    const std::vector<DepSentence> test = parse_conllu_file(test_path, "");
    std::vector<DepSentence> preds;
    preds.reserve(test.size());
    for (const DepSentence& s : test) preds.push_back(parser.predict(s, single_root));
    return evaluate(test, preds, exclude_punct);
}

std::pair<double, long> mattr_file(const std::string& path, int window) {
    std::vector<std::string> tokens;
    if (path.size() >= 7 && path.substr(path.size() - 7) == ".conllu") {
        for (const DepSentence& s : parse_conllu_file(path, "")) {
            for (const DepToken& t : s.tokens) tokens.push_back(t.form);
        }
    } else {
        tokens = split_ws(read_file(path));
    }
    return {mattr(tokens, window), static_cast<long>(tokens.size())};
}

// ---- derived reports ---------------------------------------------------------

namespace {

using AggMap = std::map<ResultsStore::AggKey, std::pair<double, double>>;

std::vector<std::string> comparison_models(const AggMap& aggs, const std::string& baseline) {
    std::set<std::string> models;
    for (const auto& [key, value] : aggs) {
        if (std::get<1>(key) != baseline) models.insert(std::get<1>(key));
    }
    return {models.begin(), models.end()};
}

// language -> model -> rer, from aggregate means
std::map<std::string, std::map<std::string, double>> rer_from_aggregates(
    const AggMap& aggs, const std::string& baseline, const std::string& metric) {
    std::map<std::string, std::map<std::string, double>> out;
    std::set<std::string> missing;
    for (const auto& [key, value] : aggs) {
        const auto& [lang, model, m] = key;
        if (m != metric || model == baseline) continue;
        const auto base = aggs.find({lang, baseline, metric});
        if (base == aggs.end()) {
            missing.insert(lang);
            continue;
        }
        out[lang][model] = relative_error_rate(base->second.first, value.first);
    }
    if (!missing.empty()) {
        std::string list;
        for (const std::string& l : missing) list += (list.empty() ? "" : ", ") + l;
        fail(ErrorKind::state,
             "no '" + baseline + "' " + metric + " scores for: " + list);
    }
    return out;
}

struct Obs {
    std::string language;
    uint64_t seed = 0;
    bool per_seed = false;
    double rer = 0.0;
};

// Observations for one comparison model: per-seed pairs where runs exist on
// both sides, aggregate means otherwise.
std::vector<Obs> fit_observations(const ResultsStore& store, const AggMap& aggs,
                                  const std::string& baseline, const std::string& model,
                                  const std::string& metric) {
    std::set<std::string> languages;
    std::map<std::string, std::map<uint64_t, double>> base_runs, model_runs;
    for (const auto& [key, value] : store.runs()) {
        const auto& [lang, m, met, seed] = key;
        if (met != metric) continue;
        if (m == baseline) base_runs[lang][seed] = value;
        if (m == model) {
            model_runs[lang][seed] = value;
            languages.insert(lang);
        }
    }
    for (const auto& [key, value] : aggs) {
        if (std::get<1>(key) == model && std::get<2>(key) == metric) {
            languages.insert(std::get<0>(key));
        }
    }

    std::vector<Obs> out;
    for (const std::string& lang : languages) {
        bool paired = false;
        const auto bit = base_runs.find(lang);
        const auto mit = model_runs.find(lang);
        if (bit != base_runs.end() && mit != model_runs.end()) {
            for (const auto& [seed, mv] : mit->second) {
                const auto bv = bit->second.find(seed);
                if (bv == bit->second.end()) continue;
                out.push_back({lang, seed, true, relative_error_rate(bv->second, mv)});
                paired = true;
            }
        }
        if (!paired) {
            const auto ma = aggs.find({lang, model, metric});
            const auto ba = aggs.find({lang, baseline, metric});
            if (ma == aggs.end()) continue;
            if (ba == aggs.end()) {
                fail(ErrorKind::state,
                     "no '" + baseline + "' " + metric + " scores for: " + lang);
            }
            out.push_back({lang, 0, false, relative_error_rate(ba->second.first,
                                                               ma->second.first)});
        }
    }
    return out;
}

std::string csv_line(std::initializer_list<std::string> fields) {
    std::string out;
    bool first = true;
    for (const std::string& f : fields) {
        if (!first) out += ',';
        out += csv_escape(f);
        first = false;
    }
    out += '\n';
    return out;
}

// z-scores of the languages' MATTR values over the given set.
std::map<std::string, double> mattr_z_by_language(const ResultsStore& store,
                                                  const std::set<std::string>& languages) {
    std::vector<std::string> order(languages.begin(), languages.end());
    std::vector<double> values;
    std::set<std::string> missing;
    for (const std::string& lang : order) {
        const auto it = store.meta().find(lang);
        if (it == store.meta().end()) {
            missing.insert(lang);
            continue;
        }
        values.push_back(it->second.mattr);
    }
    if (!missing.empty()) {
        std::string list;
        for (const std::string& l : missing) list += (list.empty() ? "" : ", ") + l;
        fail(ErrorKind::state, "no language metadata for: " + list);
    }
    const std::vector<double> z = zscores(values);
    std::map<std::string, double> out;
    for (size_t i = 0; i < order.size(); ++i) out[order[i]] = z[i];
    return out;
}

long meta_train_sentences(const ResultsStore& store, const std::string& lang) {
    const auto it = store.meta().find(lang);
    if (it == store.meta().end()) {
        fail(ErrorKind::state, "no language metadata for: " + lang);
    }
    return it->second.train_sentences;
}

struct ScalingArtifacts {
    std::map<std::string, std::string> kv;  // scaling_fits.txt lines
    std::string lrt_csv;
    std::string crossovers_csv;
    std::string correlations_csv;
    std::map<std::string, std::string> plot_files;
};

ScalingArtifacts compute_scaling(const ExperimentConfig& cfg, const ResultsStore& store) {
    const AggMap aggs = store.aggregates();
    if (aggs.empty()) fail(ErrorKind::state, "store has no scores to analyze");
    const std::vector<std::string> models = comparison_models(aggs, cfg.baseline_model);

    ScalingArtifacts art;
    std::string lrt_rows, cross_rows, corr_rows;
    const std::vector<std::string> metrics = {"las", "uas"};
    for (const std::string& metric : metrics) {
        std::string plot_rows;
        std::string partial_rows;
        for (const std::string& model : models) {
            const std::string tag = model + "." + metric + ".";
            const std::vector<Obs> obs =
                fit_observations(store, aggs, cfg.baseline_model, model, metric);
            std::set<std::string> langs;
            for (const Obs& o : obs) langs.insert(o.language);
            if (obs.size() < 4 || langs.size() < 2) {
                art.kv[tag + "skipped"] = "too few observations";
                continue;
            }

            const std::map<std::string, double> z = mattr_z_by_language(store, langs);
            const long n = static_cast<long>(obs.size());
            Eigen::MatrixXd x1(n, 2), x2(n, 3);
            Eigen::VectorXd y(n);
            std::vector<std::string> groups;
            long per_seed_count = 0;
            for (long i = 0; i < n; ++i) {
                const Obs& o = obs[static_cast<size_t>(i)];
                const double lx =
                    std::log10(static_cast<double>(meta_train_sentences(store, o.language)));
                x1(i, 0) = 1.0;
                x1(i, 1) = lx;
                x2(i, 0) = 1.0;
                x2(i, 1) = lx;
                x2(i, 2) = z.at(o.language);
                y(i) = o.rer;
                groups.push_back(o.language);
                if (o.per_seed) ++per_seed_count;

                plot_rows += o.language + '\t' + model + '\t' +
                             (o.per_seed ? std::to_string(o.seed) : std::string("mean")) +
                             '\t' + format_double(lx) + '\t' +
                             format_double(z.at(o.language)) + '\t' + format_double(o.rer) +
                             '\n';
            }

            const MixedFit size_fit = fit_mixed_model(x1, y, groups, true);
            art.kv[tag + "observations"] = std::to_string(n);
            art.kv[tag + "languages"] = std::to_string(langs.size());
            art.kv[tag + "per_seed_observations"] = std::to_string(per_seed_count);
            art.kv[tag + "intercept"] = format_double(size_fit.beta(0));
            art.kv[tag + "slope"] = format_double(size_fit.beta(1));
            art.kv[tag + "intercept_se"] = format_double(size_fit.se(0));
            art.kv[tag + "slope_se"] = format_double(size_fit.se(1));
            art.kv[tag + "sigma2_b"] = format_double(size_fit.sigma2_b);
            art.kv[tag + "sigma2_e"] = format_double(size_fit.sigma2_e);
            art.kv[tag + "psi"] = format_double(size_fit.psi);
            art.kv[tag + "reml_loglik"] = format_double(size_fit.loglik);
            art.kv[tag + "ols_fallback"] = size_fit.ols_fallback ? "1" : "0";

            const MixedFit ml_null = fit_mixed_model(x1, y, groups, false);
            const MixedFit ml_alt = fit_mixed_model(x2, y, groups, false);
            const LrtResult lrt = likelihood_ratio_test(ml_null, ml_alt, 1);
            art.kv[tag + "ml_null_loglik"] = format_double(ml_null.loglik);
            art.kv[tag + "ml_mattr_loglik"] = format_double(ml_alt.loglik);
            art.kv[tag + "mattr_coef"] = format_double(ml_alt.beta(2));
            art.kv[tag + "mattr_se"] = format_double(ml_alt.se(2));
            art.kv[tag + "lrt_chi2"] = format_double(lrt.chi2);
            art.kv[tag + "lrt_df"] = std::to_string(lrt.df);
            art.kv[tag + "lrt_p"] = format_double(lrt.p_value);
            lrt_rows += csv_line({model, metric, format_double(lrt.chi2),
                                  std::to_string(lrt.df), format_double(lrt.p_value)});

            try {
                const Crossover c = crossover(size_fit.beta(0), size_fit.beta(1));
                art.kv[tag + "crossover_log10"] = format_double(c.log10_sentences);
                art.kv[tag + "crossover_sentences"] = std::to_string(c.sentences);
                cross_rows += csv_line({model, metric, format_double(c.log10_sentences),
                                        std::to_string(c.sentences)});
            } catch (const Error&) {
                art.kv[tag + "crossover_log10"] = "undefined";
            }

            // rank correlation of per-language mean RER against raw size
            {
                const auto table = rer_from_aggregates(aggs, cfg.baseline_model, metric);
                std::vector<double> sizes, rers;
                for (const auto& [lang, per_model] : table) {
                    const auto it = per_model.find(model);
                    if (it == per_model.end()) continue;
                    sizes.push_back(
                        static_cast<double>(meta_train_sentences(store, lang)));
                    rers.push_back(it->second);
                }
                if (sizes.size() >= 3) {
                    const SpearmanResult sp = spearman(sizes, rers);
                    art.kv[tag + "spearman_rho"] = format_double(sp.rho);
                    art.kv[tag + "spearman_p"] = format_double(sp.p_value);
                    corr_rows += csv_line({model, metric, format_double(sp.rho),
                                           format_double(sp.p_value),
                                           std::to_string(sp.n)});
                }
            }

            // residual-on-residual view of the diversity term
            {
                const PartialRegression pr = partial_regression(x2, y, 2);
                for (size_t i = 0; i < pr.x_residuals.size(); ++i) {
                    partial_rows += model + '\t' + format_double(pr.x_residuals[i]) + '\t' +
                                    format_double(pr.y_residuals[i]) + '\n';
                }
            }
        }
        art.plot_files["report/plotdata/rer_" + metric + ".tsv"] =
            "language\tmodel\tseed\tlog10_sentences\tmattr_z\trer\n" + plot_rows;
        art.plot_files["report/plotdata/partial_" + metric + ".tsv"] =
            "model\tmattr_z_residual\trer_residual\n" + partial_rows;
    }
    art.lrt_csv = "model,metric,chi2,df,p\n" + lrt_rows;
    art.crossovers_csv = "model,metric,log10_sentences,sentences\n" + cross_rows;
    art.correlations_csv = "model,metric,rho,p,n\n" + corr_rows;
    return art;
}

std::string rer_csv(const AggMap& aggs, const std::string& baseline,
                    const std::string& metric) {
    const auto table = rer_from_aggregates(aggs, baseline, metric);
    std::string out = "language,model,rer\n";
    for (const auto& [lang, per_model] : table) {
        for (const auto& [model, rer] : per_model) {
            out += csv_line({lang, model, format_double(rer)});
        }
    }
    return out;
}

}  // namespace

ReportBundle emit_rer(const ExperimentConfig& cfg, const ResultsStore& store) {
    const AggMap aggs = store.aggregates();
    if (aggs.empty()) fail(ErrorKind::state, "store has no scores to analyze");
    ReportBundle bundle;
    for (const std::string metric : {"las", "uas"}) {
        const std::string content = rer_csv(aggs, cfg.baseline_model, metric);
        bundle.files["report/rer_" + metric + ".csv"] = content;
        bundle.summary += "# rer_" + metric + "\n" + content;
    }
    return bundle;
}

ReportBundle scaling_fit(const ExperimentConfig& cfg, const ResultsStore& store) {
    const ScalingArtifacts art = compute_scaling(cfg, store);
    ReportBundle bundle;
    std::string txt;
    for (const auto& [key, value] : art.kv) txt += key + " = " + value + "\n";
    bundle.files["report/scaling_fits.txt"] = txt;
    bundle.files["report/lrt.csv"] = art.lrt_csv;
    bundle.files["report/crossovers.csv"] = art.crossovers_csv;
    bundle.files["report/correlations.csv"] = art.correlations_csv;
    bundle.summary = txt;
    return bundle;
}

ReportBundle emit_report(const ExperimentConfig& cfg, const ResultsStore& store) {
    const AggMap aggs = store.aggregates();
    if (aggs.empty()) fail(ErrorKind::state, "store has no scores to analyze");
    ReportBundle bundle = emit_rer(cfg, store);
    bundle.summary.clear();

    {
        std::string content = std::string(kAggHeader) + "\n";
        for (const auto& [key, value] : aggs) {
            content += csv_line({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                                 format_double(value.first), format_double(value.second)});
        }
        bundle.files["report/attachment_scores.csv"] = content;
    }

    if (store.meta().size() >= 2) {
        std::vector<double> values;
        for (const auto& [lang, m] : store.meta()) values.push_back(m.mattr);
        const std::vector<double> z = zscores(values);
        std::string content = "language,train_sentences,tokens,mattr,mattr_z\n";
        size_t i = 0;
        for (const auto& [lang, m] : store.meta()) {
            content += csv_line({lang, std::to_string(m.train_sentences),
                                 std::to_string(m.tokens), format_double(m.mattr),
                                 format_double(z[i++])});
        }
        bundle.files["report/mattr.csv"] = content;
    }

    const ReportBundle scaling = scaling_fit(cfg, store);
    for (const auto& [path, content] : scaling.files) bundle.files[path] = content;
    const ScalingArtifacts art = compute_scaling(cfg, store);
    for (const auto& [path, content] : art.plot_files) bundle.files[path] = content;

    for (const auto& [path, content] : bundle.files) {
        bundle.summary += path + "\n";
    }
    return bundle;
}

void write_bundle(const std::string& store_dir, const ReportBundle& bundle) {
    for (const auto& [rel, content] : bundle.files) {
        const fs::path target = fs::path(store_dir) / rel;
        fs::create_directories(target.parent_path());
        write_file(target.string(), content);
    }
}

}  // namespace deplab
