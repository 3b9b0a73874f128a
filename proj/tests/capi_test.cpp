// Exercises the shared library strictly through the C header.
#include <deplab/deplab.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void check_impl(bool ok, const char* expr, int line) {
    if (!ok) {
        std::fprintf(stderr, "capi_test:%d: CHECK failed: %s\n", line, expr);
        ++g_failures;
    }
}

#define CHECK(cond) check_impl((cond), #cond, __LINE__)

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

bool contains(const char* haystack, const char* needle) {
    return haystack != nullptr && std::strstr(haystack, needle) != nullptr;
}

bool near(double a, double b, double tol) { return std::fabs(a - b) < tol; }

std::string tiny_treebank() {
    std::string out;
    for (int i = 1; i <= 5; ++i) {
        const std::string w = "w" + std::to_string(i);
        const std::string v = "v" + std::to_string(i);
        out += "1\t" + w + "\t_\tNOUN\t_\t_\t2\tnsubj\t_\t_\n";
        out += "2\t" + v + "\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n";
        out += "1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_\n";
        out += "2\t" + w + "\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_\n";
        out += "3\t" + v + "\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n";
    }
    return out;
}

}  // namespace

int main() {
    const fs::path root = fs::temp_directory_path() / "deplab-capi-tests";
    fs::remove_all(root);
    fs::create_directories(root);

    CHECK(std::strcmp(deplab_version(), "1.0.0") == 0);

    // null arguments are rejected up front
    deplab_config* cfg = nullptr;
    CHECK(deplab_config_load(nullptr, &cfg) == DEPLAB_ERR_INVALID_ARGUMENT);
    CHECK(contains(deplab_last_error(), "null argument"));
    CHECK(deplab_config_load("x.ini", nullptr) == DEPLAB_ERR_INVALID_ARGUMENT);
    CHECK(deplab_grid_search(nullptr, 0, nullptr) == DEPLAB_ERR_INVALID_ARGUMENT);
    CHECK(deplab_run_experiment(nullptr, nullptr, -1, -1, -1, 0, nullptr, nullptr) ==
          DEPLAB_ERR_INVALID_ARGUMENT);
    CHECK(deplab_decode_mst(nullptr, 3, 0, nullptr) == DEPLAB_ERR_INVALID_ARGUMENT);

    // error kinds map onto distinct statuses
    CHECK(deplab_config_load((root / "absent.ini").string().c_str(), &cfg) == DEPLAB_ERR_IO);
    CHECK(cfg == nullptr);
    write_text(root / "broken.ini", "stray = 1\n");
    CHECK(deplab_config_load((root / "broken.ini").string().c_str(), &cfg) ==
          DEPLAB_ERR_PARSE);
    CHECK(contains(deplab_last_error(), "line 1"));

    double rer = 0.0;
    CHECK(deplab_rer_value(100.0, 95.0, &rer) == DEPLAB_ERR_NUMERIC);
    CHECK(deplab_rer_value(93.51, 95.81, &rer) == DEPLAB_OK);
    CHECK(near(rer, -0.3543913713, 1e-9));
    CHECK(deplab_rer_value(70.38, 61.08, &rer) == DEPLAB_OK);
    CHECK(near(rer, 0.3139770425, 1e-9));

    double p = 0.0;
    CHECK(deplab_chi2_sf(6.01, 1.0, &p) == DEPLAB_OK);
    CHECK(near(p, 0.0142250275056, 1e-9));
    CHECK(deplab_chi2_sf(-1.0, 1.0, &p) == DEPLAB_ERR_INVALID_ARGUMENT);

    double lg = 0.0;
    long long sentences = 0;
    CHECK(deplab_crossover(2.923, -1.0, &lg, &sentences) == DEPLAB_OK);
    CHECK(lg == 2.923);
    CHECK(sentences == 838);
    CHECK(deplab_crossover(1.0, 0.0, &lg, &sentences) != DEPLAB_OK);
    CHECK(deplab_crossover(20.0, -1.0, &lg, &sentences) == DEPLAB_ERR_NUMERIC);

    // maximum spanning tree over an explicit score matrix
    {
        const double scores[12] = {10, 1, 1, 0, 8, 2, 0, 0, 9, 0, 0, 0};
        int heads[3] = {-1, -1, -1};
        CHECK(deplab_decode_mst(scores, 3, 0, heads) == DEPLAB_OK);
        CHECK(heads[0] == 0);
        CHECK(heads[1] == 1);
        CHECK(heads[2] == 2);
        CHECK(deplab_decode_mst(scores, 3, 1, heads) == DEPLAB_OK);
        CHECK(heads[0] == 0);
        CHECK(heads[1] == 1);
        CHECK(heads[2] == 2);
        CHECK(deplab_decode_mst(scores, 0, 0, heads) == DEPLAB_ERR_INVALID_ARGUMENT);
    }
    {
        // two root-worthy tokens: the single-root decode keeps only one
        const double scores[6] = {10, 10, 0, 1, 1, 0};
        int heads[2] = {-1, -1};
        CHECK(deplab_decode_mst(scores, 2, 0, heads) == DEPLAB_OK);
        CHECK(heads[0] == 0);
        CHECK(heads[1] == 0);
        CHECK(deplab_decode_mst(scores, 2, 1, heads) == DEPLAB_OK);
        CHECK((heads[0] == 0) != (heads[1] == 0));
        CHECK((heads[0] == 0 && heads[1] == 1) || (heads[1] == 0 && heads[0] == 2));
    }

    // file evaluation and lexical diversity
    const fs::path gold = root / "gold.conllu";
    write_text(gold, tiny_treebank());
    double uas = 0.0, las = 0.0;
    long long tokens = 0;
    CHECK(deplab_evaluate_files(gold.string().c_str(), gold.string().c_str(), 0, &uas, &las,
                                &tokens) == DEPLAB_OK);
    CHECK(uas == 100.0);
    CHECK(las == 100.0);
    CHECK(tokens == 25);

    const fs::path words = root / "words.txt";
    write_text(words, "a a b b\n");
    double mattr = 0.0;
    CHECK(deplab_mattr_file(words.string().c_str(), 2, &mattr, &tokens) == DEPLAB_OK);
    CHECK(near(mattr, 2.0 / 3.0, 1e-12));
    CHECK(tokens == 4);
    CHECK(deplab_mattr_file(gold.string().c_str(), 10, &mattr, &tokens) == DEPLAB_OK);
    CHECK(tokens == 25);

    // published-score ingestion feeding the RER report
    const fs::path rer_store = root / "rer-store";
    const fs::path scores_csv = root / "published.csv";
    write_text(scores_csv,
               "language,model,metric,mean,sd\n"
               "fra,biaffine-lstm,las,93.51,0.2\n"
               "fra,afroxlmr-large,las,95.81,0.2\n"
               "xho,biaffine-lstm,las,70.38,0.2\n"
               "xho,rembert,las,61.08,0.2\n");
    write_text(root / "rer.ini", "[experiment]\nmodel = afroxlmr-large\n");
    deplab_config* rer_cfg = nullptr;
    CHECK(deplab_config_load((root / "rer.ini").string().c_str(), &rer_cfg) == DEPLAB_OK);
    deplab_store* store = nullptr;
    CHECK(deplab_store_open(rer_store.string().c_str(), &store) == DEPLAB_OK);
    CHECK(deplab_ingest_scores(store, scores_csv.string().c_str()) == DEPLAB_OK);
    CHECK(deplab_ingest_scores(store, scores_csv.string().c_str()) == DEPLAB_ERR_STATE);
    CHECK(deplab_ingest_scores(store, (root / "absent.csv").string().c_str()) ==
          DEPLAB_ERR_IO);
    char* summary = nullptr;
    CHECK(deplab_emit_rer(rer_cfg, store, &summary) == DEPLAB_OK);
    CHECK(contains(summary, "fra,afroxlmr-large,-0.3543913713"));
    CHECK(contains(summary, "xho,rembert,0.3139770425"));
    deplab_string_free(summary);
    CHECK(deplab_store_save(store) == DEPLAB_OK);
    CHECK(fs::exists(rer_store / "aggregates.csv"));
    CHECK(fs::exists(rer_store / "report" / "rer_las.csv"));
    deplab_store_free(store);

    // scaling fit over ingested aggregates and metadata
    const fs::path fit_store_dir = root / "fit-store";
    write_text(root / "fit.ini", "[experiment]\nbaseline_model = base\nmodel = xmod\n");
    write_text(root / "fit_scores.csv",
               "language,model,metric,mean,sd\n"
               "p1,base,las,50,1\np1,xmod,las,60,1\n"
               "p2,base,las,40,1\np2,xmod,las,55,1\n"
               "p3,base,las,30,1\np3,xmod,las,45,1\n"
               "p4,base,las,20,1\np4,xmod,las,35,1\n");
    write_text(root / "fit_meta.csv",
               "language,train_sentences,tokens,mattr\n"
               "p1,100,2000,0.5\np2,300,6000,0.55\np3,1000,20000,0.7\np4,10000,200000,0.72\n");
    deplab_config* fit_cfg = nullptr;
    CHECK(deplab_config_load((root / "fit.ini").string().c_str(), &fit_cfg) == DEPLAB_OK);
    deplab_store* fit_store = nullptr;
    CHECK(deplab_store_open(fit_store_dir.string().c_str(), &fit_store) == DEPLAB_OK);
    CHECK(deplab_ingest_scores(fit_store, (root / "fit_scores.csv").string().c_str()) ==
          DEPLAB_OK);
    CHECK(deplab_ingest_meta(fit_store, (root / "fit_meta.csv").string().c_str()) == DEPLAB_OK);
    summary = nullptr;
    CHECK(deplab_scaling_fit(fit_cfg, fit_store, &summary) == DEPLAB_OK);
    CHECK(contains(summary, "xmod.las.observations = 4"));
    CHECK(contains(summary, "xmod.las.ols_fallback = 1"));  // four singleton groups
    CHECK(contains(summary, "xmod.las.spearman_rho = "));
    CHECK(contains(summary, "xmod.uas.skipped = too few observations"));
    deplab_string_free(summary);
    summary = nullptr;
    CHECK(deplab_emit_report(fit_cfg, fit_store, &summary) == DEPLAB_OK);
    CHECK(contains(summary, "report/scaling_fits.txt"));
    CHECK(contains(summary, "report/mattr.csv"));
    deplab_string_free(summary);
    CHECK(fs::exists(fit_store_dir / "report" / "scaling_fits.txt"));
    CHECK(fs::exists(fit_store_dir / "report" / "plotdata" / "rer_las.tsv"));
    deplab_store_free(fit_store);
    deplab_config_free(fit_cfg);

    // a full train/evaluate pass through the C surface
    const fs::path exp_dir = root / "experiment";
    fs::create_directories(exp_dir);
    write_text(exp_dir / "tin.conllu", tiny_treebank());
    write_text(exp_dir / "exp.ini",
               "[experiment]\n"
               "model = toy\n"
               "seeds = 1\n"
               "min_word_frequency = 1\n"
               "punct = include\n"
               "[hyperparams]\n"
               "word_dim = 6\nchar_dim = 3\npos_dim = 3\nstatic_dim = 0\n"
               "hidden_dim = 6\nlayers = 1\narc_dim = 6\nlabel_dim = 4\n"
               "learning_rate = 0.1\ndecay_rate = 0.9\ndecay_steps = 50\n"
               "max_epochs = 3\npatience = 3\nbatch_size = 4\ndropout = 0\n"
               "[language tin]\n"
               "treebank = tin.conllu\n"
               "split_ratios = 0.6 0.2 0.2\n");
    deplab_config* exp_cfg = nullptr;
    CHECK(deplab_config_load((exp_dir / "exp.ini").string().c_str(), &exp_cfg) == DEPLAB_OK);
    deplab_store* exp_store = nullptr;
    CHECK(deplab_store_open((exp_dir / "results").string().c_str(), &exp_store) == DEPLAB_OK);
    int trained = -1, failed = -1;
    CHECK(deplab_run_experiment(exp_cfg, exp_store, -1, -1, -1, 0, &trained, &failed) ==
          DEPLAB_OK);
    CHECK(trained == 1);
    CHECK(failed == 0);
    CHECK(deplab_store_save(exp_store) == DEPLAB_OK);
    CHECK(fs::exists(exp_dir / "results" / "runs.csv"));
    const fs::path ckpt = exp_dir / "results" / "checkpoints" / "tin-toy-1.bin";
    CHECK(fs::exists(ckpt));
    uas = -1.0;
    las = -1.0;
    tokens = 0;
    CHECK(deplab_evaluate_checkpoint(ckpt.string().c_str(),
                                     (exp_dir / "tin.conllu").string().c_str(), nullptr, 1, 0,
                                     &uas, &las, &tokens) == DEPLAB_OK);
    CHECK(tokens == 25);
    CHECK(uas >= 0.0);
    CHECK(uas <= 100.0);
    CHECK(las <= uas);
    deplab_store_free(exp_store);
    deplab_config_free(exp_cfg);
    deplab_config_free(rer_cfg);

    if (g_failures != 0) {
        std::fprintf(stderr, "capi_test: %d check(s) failed\n", g_failures);
        return 1;
    }
    std::printf("capi_test: all checks passed\n");
    return 0;
}
