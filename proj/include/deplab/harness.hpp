#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "deplab/metrics.hpp"
#include "deplab/parser.hpp"

namespace deplab {

struct LanguageConfig {
    std::string code;
    std::string treebank;  // one file to split; exclusive with the explicit paths
    std::string train_path;
    std::string dev_path;
    std::string test_path;
    std::string embeddings;
    std::vector<double> split_ratios = {0.8, 0.1, 0.1};
    uint64_t split_seed = 1;
    // Declared metadata wins over values computed from the data.
    long declared_train_sentences = -1;
    long declared_tokens = -1;
    double declared_mattr = -1.0;
};

struct ExperimentConfig {
    bool exclude_punct = true;
    bool single_root = true;
    std::string baseline_model = "biaffine-lstm";
    std::string model = "biaffine-lstm";
    std::vector<uint64_t> seeds = {1};
    int mattr_window = 500;
    int min_word_frequency = 2;
    Hyperparams hyperparams;
    GridSpec grid;
    std::vector<LanguageConfig> languages;
};

// INI-style text: [experiment], [hyperparams], [grid], and one
// [language CODE] section per treebank.  Unknown sections or keys are
// errors.  base_dir, when nonempty, anchors relative paths.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path);

struct RunRecord {
    std::string language;
    std::string model;
    std::string metric;  // las | uas
    uint64_t seed = 0;
    double value = 0.0;
};

struct AggregateRecord {
    std::string language;
    std::string model;
    std::string metric;
    double mean = 0.0;
    double sd = 0.0;
};

struct MetaRecord {
    std::string language;
    long train_sentences = 0;
    long tokens = 0;
    double mattr = 0.0;
};

struct FailedRecord {
    std::string language;
    std::string model;
    uint64_t seed = 0;
    std::string error;
};

// CSV-backed result files under one directory: runs.csv, aggregates.csv,
// language_meta.csv, failed_runs.csv.  All iteration is over sorted maps,
// and nothing written contains a timestamp, so identical contents produce
// identical bytes.
class ResultsStore {
public:
    using RunKey = std::tuple<std::string, std::string, std::string, uint64_t>;
    using AggKey = std::tuple<std::string, std::string, std::string>;

    static ResultsStore open(const std::string& dir);
    const std::string& dir() const { return dir_; }
    void save() const;

    void add_run(const RunRecord& r);
    void ingest_aggregate(const AggregateRecord& a, const std::string& context);
    void set_meta(const MetaRecord& m);
    void add_failed(const FailedRecord& f);

    const std::map<RunKey, double>& runs() const { return runs_; }
    const std::map<AggKey, std::pair<double, double>>& ingested() const { return ingested_; }
    const std::map<std::string, MetaRecord>& meta() const { return meta_; }
    const std::map<std::tuple<std::string, std::string, uint64_t>, std::string>& failed() const {
        return failed_;
    }

    // Ingested rows merged with aggregates computed from runs (sample sd,
    // zero for a single seed).  A key present on both sides is an error.
    std::map<AggKey, std::pair<double, double>> aggregates() const;

private:
    explicit ResultsStore(std::string dir) : dir_(std::move(dir)) {}
    std::string dir_;
    std::map<RunKey, double> runs_;
    std::map<AggKey, std::pair<double, double>> ingested_;
    std::map<std::string, MetaRecord> meta_;
    std::map<std::tuple<std::string, std::string, uint64_t>, std::string> failed_;
};

// Reads a scores CSV into the store.  The header decides the shape:
// per-run rows (language,model,metric,seed,value) or aggregate rows
// (language,model,metric,mean,sd).
void ingest_scores(ResultsStore& store, const std::string& csv_path);

// language,train_sentences,tokens,mattr
void ingest_meta(ResultsStore& store, const std::string& csv_path);

struct RunOverrides {
    std::optional<uint64_t> seed;
    std::optional<bool> exclude_punct;
    std::optional<bool> single_root;
};

struct RunOutcome {
    int trained = 0;
    int failed = 0;
};

// Trains cfg.model for every language and seed, evaluates on the test
// split, and records rows, metadata, manifests, and checkpoints in the
// store.  A failing run is recorded and skipped, not fatal.
RunOutcome run_experiment(const ExperimentConfig& cfg, ResultsStore& store,
                          const RunOverrides& overrides, std::ostream* log);

// Runs the hyperparameter grid for every language on the reduced epoch
// budget.  Grid axes left empty fall back to the base hyperparameter; at
// least one axis must be set.  Returns sorted "language.key = value" lines.
std::string grid_search_experiment(const ExperimentConfig& cfg, std::ostream* log);

AttachmentScores evaluate_files(const std::string& gold_path, const std::string& pred_path,
                                bool exclude_punct);
AttachmentScores evaluate_checkpoint(const std::string& checkpoint_path,
                                     const std::string& test_path,
                                     const std::string& embeddings_path, bool single_root,
                                     bool exclude_punct);

// Tokens of a .conllu file (forms in corpus order) or of a whitespace-split
// text file.
std::pair<double, long> mattr_file(const std::string& path, int window);

// A set of derived report files (relative path -> content) plus the text a
// command prints.  Rebuilding from an unchanged store yields identical
// bytes.
struct ReportBundle {
    std::map<std::string, std::string> files;
    std::string summary;
};

ReportBundle emit_rer(const ExperimentConfig& cfg, const ResultsStore& store);
ReportBundle scaling_fit(const ExperimentConfig& cfg, const ResultsStore& store);
ReportBundle emit_report(const ExperimentConfig& cfg, const ResultsStore& store);
void write_bundle(const std::string& store_dir, const ReportBundle& bundle);

}  // namespace deplab
