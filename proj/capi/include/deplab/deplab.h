#ifndef DEPLAB_H
#define DEPLAB_H

/* C interface to the dependency-parsing experiment laboratory.
 *
 * Every function returns a deplab_status; on failure deplab_last_error()
 * holds a message for the calling thread, valid until the next call on
 * that thread.  Strings returned through char** are heap copies owned by
 * the caller and must be released with deplab_string_free().  Output
 * pointers may be NULL when the caller does not need the value.
 */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum deplab_status {
    DEPLAB_OK = 0,
    DEPLAB_ERR_IO = 1,
    DEPLAB_ERR_PARSE = 2,
    DEPLAB_ERR_INVALID_ARGUMENT = 3,
    DEPLAB_ERR_NUMERIC = 4,
    DEPLAB_ERR_STATE = 5,
    DEPLAB_ERR_INTERNAL = 70
} deplab_status;

typedef struct deplab_config deplab_config;
typedef struct deplab_store deplab_store;

const char* deplab_version(void);
const char* deplab_last_error(void);
void deplab_string_free(char* s);

/* Experiment configuration (INI text; see the repository README).
 * Relative paths inside the file resolve against its directory. */
deplab_status deplab_config_load(const char* path, deplab_config** out);
void deplab_config_free(deplab_config* cfg);

/* Results directory holding runs.csv, aggregates.csv, language_meta.csv,
 * and failed_runs.csv.  Opening a missing directory yields an empty store;
 * nothing is written until deplab_store_save(). */
deplab_status deplab_store_open(const char* dir, deplab_store** out);
deplab_status deplab_store_save(deplab_store* store);
void deplab_store_free(deplab_store* store);

/* CSV of per-run rows (language,model,metric,seed,value) or aggregate rows
 * (language,model,metric,mean,sd); the header decides. */
deplab_status deplab_ingest_scores(deplab_store* store, const char* csv_path);

/* CSV of language,train_sentences,tokens,mattr rows. */
deplab_status deplab_ingest_meta(deplab_store* store, const char* csv_path);

/* Trains the configured model for every language/seed and records scores,
 * checkpoints, and manifests in the store (call deplab_store_save after).
 * seed_override >= 0 replaces the configured seed list with that one seed;
 * exclude_punct and single_root accept -1 (keep the config value), 0, or 1.
 * Progress goes to stderr when verbose is nonzero.  Failed runs are
 * recorded, counted, and skipped. */
deplab_status deplab_run_experiment(const deplab_config* cfg, deplab_store* store,
                                    long long seed_override, int exclude_punct,
                                    int single_root, int verbose, int* trained,
                                    int* failed);

/* Hyperparameter grid on a reduced epoch budget, per language.  The summary
 * is sorted "language.key = value" lines. */
deplab_status deplab_grid_search(const deplab_config* cfg, int verbose, char** summary);

/* Attachment scores of a prediction file against a gold file. */
deplab_status deplab_evaluate_files(const char* gold_path, const char* pred_path,
                                    int exclude_punct, double* uas, double* las,
                                    long long* tokens);

/* Attachment scores of a saved checkpoint on a test file.  embeddings_path
 * may be NULL or empty for models trained without static vectors. */
deplab_status deplab_evaluate_checkpoint(const char* checkpoint_path, const char* test_path,
                                         const char* embeddings_path, int single_root,
                                         int exclude_punct, double* uas, double* las,
                                         long long* tokens);

/* Moving-average type-token ratio of a .conllu or whitespace-tokenized
 * text file. */
deplab_status deplab_mattr_file(const char* path, int window, double* value,
                                long long* tokens);

/* Derived reports.  Each emits files under <store dir>/report/ and returns
 * the text the matching CLI command prints. */
deplab_status deplab_emit_rer(const deplab_config* cfg, deplab_store* store, char** summary);
deplab_status deplab_scaling_fit(const deplab_config* cfg, deplab_store* store,
                                 char** summary);
deplab_status deplab_emit_report(const deplab_config* cfg, deplab_store* store,
                                 char** summary);

/* Maximum spanning arborescence over row-major scores[(n_tokens+1) * n_tokens],
 * where scores[h * n_tokens + (d - 1)] is the score of head h for token d and
 * row 0 is the artificial root.  heads receives n_tokens entries in [0, n]. */
deplab_status deplab_decode_mst(const double* scores, int n_tokens, int single_root,
                                int* heads);

/* Relative error reduction of a comparison score against a baseline, both
 * percentages in [0, 100]. */
deplab_status deplab_rer_value(double baseline, double comparison, double* rer);

/* Upper tail of the chi-squared distribution. */
deplab_status deplab_chi2_sf(double x, double df, double* p);

/* Training-set size where intercept + slope * log10(n) crosses zero. */
deplab_status deplab_crossover(double intercept, double slope, double* log10_sentences,
                               long long* sentences);

#ifdef __cplusplus
}
#endif

#endif /* DEPLAB_H */
