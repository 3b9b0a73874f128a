#include "deplab/deplab.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "deplab/decoder.hpp"
#include "deplab/harness.hpp"
#include "deplab/stats.hpp"

struct deplab_config {
    deplab::ExperimentConfig cfg;
};

struct deplab_store {
    deplab::ResultsStore store;
};

namespace {

thread_local std::string g_last_error;

deplab_status map_kind(deplab::ErrorKind kind) {
    switch (kind) {
        case deplab::ErrorKind::io: return DEPLAB_ERR_IO;
        case deplab::ErrorKind::parse: return DEPLAB_ERR_PARSE;
        case deplab::ErrorKind::invalid_argument: return DEPLAB_ERR_INVALID_ARGUMENT;
        case deplab::ErrorKind::numeric: return DEPLAB_ERR_NUMERIC;
        case deplab::ErrorKind::state: return DEPLAB_ERR_STATE;
    }
    return DEPLAB_ERR_INTERNAL;
}

template <typename Fn>
deplab_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return DEPLAB_OK;
    } catch (const deplab::Error& e) {
        g_last_error = e.what();
        return map_kind(e.kind());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DEPLAB_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return DEPLAB_ERR_INTERNAL;
    }
}

deplab_status invalid(const char* message) {
    g_last_error = message;
    return DEPLAB_ERR_INVALID_ARGUMENT;
}

// malloc so the buffer can be freed from plain C
char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::ostream* log_stream(int verbose) {
    return verbose != 0 ? &std::cerr : nullptr;
}

}  // namespace

extern "C" {

const char* deplab_version(void) { return "1.0.0"; }

const char* deplab_last_error(void) { return g_last_error.c_str(); }

void deplab_string_free(char* s) { std::free(s); }

deplab_status deplab_config_load(const char* path, deplab_config** out) {
    if (path == nullptr || out == nullptr) return invalid("null argument");
    *out = nullptr;
    return guarded([&] { *out = new deplab_config{deplab::load_config(path)}; });
}

void deplab_config_free(deplab_config* cfg) { delete cfg; }

deplab_status deplab_store_open(const char* dir, deplab_store** out) {
    if (dir == nullptr || out == nullptr) return invalid("null argument");
    *out = nullptr;
    return guarded([&] { *out = new deplab_store{deplab::ResultsStore::open(dir)}; });
}

deplab_status deplab_store_save(deplab_store* store) {
    if (store == nullptr) return invalid("null argument");
    return guarded([&] { store->store.save(); });
}

void deplab_store_free(deplab_store* store) { delete store; }

deplab_status deplab_ingest_scores(deplab_store* store, const char* csv_path) {
    if (store == nullptr || csv_path == nullptr) return invalid("null argument");
    return guarded([&] { deplab::ingest_scores(store->store, csv_path); });
}

deplab_status deplab_ingest_meta(deplab_store* store, const char* csv_path) {
    if (store == nullptr || csv_path == nullptr) return invalid("null argument");
    return guarded([&] { deplab::ingest_meta(store->store, csv_path); });
}

deplab_status deplab_run_experiment(const deplab_config* cfg, deplab_store* store,
                                    long long seed_override, int exclude_punct,
                                    int single_root, int verbose, int* trained, int* failed) {
    if (cfg == nullptr || store == nullptr) return invalid("null argument");
    return guarded([&] {
        deplab::RunOverrides overrides;
        if (seed_override >= 0) overrides.seed = static_cast<uint64_t>(seed_override);
        if (exclude_punct >= 0) overrides.exclude_punct = exclude_punct != 0;
        if (single_root >= 0) overrides.single_root = single_root != 0;
        const deplab::RunOutcome outcome =
            deplab::run_experiment(cfg->cfg, store->store, overrides, log_stream(verbose));
        if (trained != nullptr) *trained = outcome.trained;
        if (failed != nullptr) *failed = outcome.failed;
    });
}

deplab_status deplab_grid_search(const deplab_config* cfg, int verbose, char** summary) {
    if (cfg == nullptr || summary == nullptr) return invalid("null argument");
    *summary = nullptr;
    return guarded([&] {
        *summary = dup_string(deplab::grid_search_experiment(cfg->cfg, log_stream(verbose)));
    });
}

deplab_status deplab_evaluate_files(const char* gold_path, const char* pred_path,
                                    int exclude_punct, double* uas, double* las,
                                    long long* tokens) {
    if (gold_path == nullptr || pred_path == nullptr) return invalid("null argument");
    return guarded([&] {
        const deplab::AttachmentScores sc =
            deplab::evaluate_files(gold_path, pred_path, exclude_punct != 0);
        if (uas != nullptr) *uas = sc.uas;
        if (las != nullptr) *las = sc.las;
        if (tokens != nullptr) *tokens = sc.scored_tokens;
    });
}

deplab_status deplab_evaluate_checkpoint(const char* checkpoint_path, const char* test_path,
                                         const char* embeddings_path, int single_root,
                                         int exclude_punct, double* uas, double* las,
                                         long long* tokens) {
    if (checkpoint_path == nullptr || test_path == nullptr) return invalid("null argument");
    return guarded([&] {
        const deplab::AttachmentScores sc = deplab::evaluate_checkpoint(
            checkpoint_path, test_path,
            embeddings_path == nullptr ? std::string() : std::string(embeddings_path),
            single_root != 0, exclude_punct != 0);
        if (uas != nullptr) *uas = sc.uas;
        if (las != nullptr) *las = sc.las;
        if (tokens != nullptr) *tokens = sc.scored_tokens;
    });
}

deplab_status deplab_mattr_file(const char* path, int window, double* value,
                                long long* tokens) {
    if (path == nullptr) return invalid("null argument");
    return guarded([&] {
        const auto [v, n] = deplab::mattr_file(path, window);
        if (value != nullptr) *value = v;
        if (tokens != nullptr) *tokens = n;
    });
}

deplab_status deplab_emit_rer(const deplab_config* cfg, deplab_store* store, char** summary) {
    if (cfg == nullptr || store == nullptr) return invalid("null argument");
    return guarded([&] {
        const deplab::ReportBundle bundle = deplab::emit_rer(cfg->cfg, store->store);
        deplab::write_bundle(store->store.dir(), bundle);
        if (summary != nullptr) *summary = dup_string(bundle.summary);
    });
}

deplab_status deplab_scaling_fit(const deplab_config* cfg, deplab_store* store,
                                 char** summary) {
    if (cfg == nullptr || store == nullptr) return invalid("null argument");
    return guarded([&] {
        const deplab::ReportBundle bundle = deplab::scaling_fit(cfg->cfg, store->store);
        deplab::write_bundle(store->store.dir(), bundle);
        if (summary != nullptr) *summary = dup_string(bundle.summary);
    });
}

deplab_status deplab_emit_report(const deplab_config* cfg, deplab_store* store,
                                 char** summary) {
    if (cfg == nullptr || store == nullptr) return invalid("null argument");
    return guarded([&] {
        const deplab::ReportBundle bundle = deplab::emit_report(cfg->cfg, store->store);
        deplab::write_bundle(store->store.dir(), bundle);
        if (summary != nullptr) *summary = dup_string(bundle.summary);
    });
}

deplab_status deplab_decode_mst(const double* scores, int n_tokens, int single_root,
                                int* heads) {
    if (scores == nullptr || heads == nullptr) return invalid("null argument");
    if (n_tokens < 1) return invalid("n_tokens must be positive");
    return guarded([&] {
        Eigen::MatrixXd m(n_tokens + 1, n_tokens);
        for (int h = 0; h <= n_tokens; ++h) {
            for (int d = 0; d < n_tokens; ++d) m(h, d) = scores[h * n_tokens + d];
        }
        const std::vector<int> out = deplab::chu_liu_edmonds(m, single_root != 0);
        for (int d = 0; d < n_tokens; ++d) heads[d] = out[static_cast<size_t>(d)];
    });
}

deplab_status deplab_rer_value(double baseline, double comparison, double* rer) {
    if (rer == nullptr) return invalid("null argument");
    return guarded([&] { *rer = deplab::relative_error_rate(baseline, comparison); });
}

deplab_status deplab_chi2_sf(double x, double df, double* p) {
    if (p == nullptr) return invalid("null argument");
    return guarded([&] { *p = deplab::chi2_sf(x, df); });
}

deplab_status deplab_crossover(double intercept, double slope, double* log10_sentences,
                               long long* sentences) {
    return guarded([&] {
        const deplab::Crossover c = deplab::crossover(intercept, slope);
        if (log10_sentences != nullptr) *log10_sentences = c.log10_sentences;
        if (sentences != nullptr) *sentences = c.sentences;
    });
}

}  // extern "C"
