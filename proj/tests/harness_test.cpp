#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deplab/common.hpp"
#include "deplab/conllu.hpp"
#include "deplab/embeddings.hpp"
#include "deplab/harness.hpp"
#include "deplab/parser.hpp"
#include "support/synthetic.hpp"

using namespace deplab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "deplab-harness-tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void check_config_error(const std::string& text, const std::string& needle) {
    INFO("config text:\n", text);
    CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains(needle.c_str()), Error);
}

Hyperparams tiny_hyperparams() {
    Hyperparams hp;
    hp.word_dim = 8;
    hp.char_dim = 4;
    hp.pos_dim = 4;
    hp.static_dim = 0;
    hp.hidden_dim = 8;
    hp.layers = 1;
    hp.arc_dim = 8;
    hp.label_dim = 6;
    hp.char_window = 3;
    hp.learning_rate = 0.1;
    hp.decay_rate = 0.9;
    hp.decay_steps = 100;
    hp.max_epochs = 5;
    hp.patience = 5;
    hp.batch_size = 8;
    hp.dropout = 0.0;
    return hp;
}

// Four languages; aa and bb carry per-seed runs for both models, cc and dd
// only ingested aggregates.  Mean RER falls monotonically with treebank
// size, so the rank correlation against size is exactly -1.
ResultsStore scaling_store(const std::string& dir) {
    ResultsStore store = ResultsStore::open(dir);
    const std::vector<std::pair<std::string, double>> bases = {{"aa", 70.0}, {"bb", 60.0}};
    for (const auto& [lang, base] : bases) {
        for (uint64_t seed = 1; seed <= 3; ++seed) {
            const double off = static_cast<double>(seed - 1);
            store.add_run({lang, "base", "las", seed, base + off});
            store.add_run({lang, "xmod", "las", seed, base + 10.0 + (lang == "bb" ? 2.0 : 0.0) + off});
            store.add_run({lang, "base", "uas", seed, base + 5.0 + off});
            store.add_run({lang, "xmod", "uas", seed, base + 16.0 + off});
        }
    }
    store.ingest_aggregate({"cc", "base", "las", 55.0, 1.0}, "fixture");
    store.ingest_aggregate({"cc", "xmod", "las", 68.0, 1.0}, "fixture");
    store.ingest_aggregate({"dd", "base", "las", 50.0, 1.0}, "fixture");
    store.ingest_aggregate({"dd", "xmod", "las", 60.0, 1.0}, "fixture");
    store.ingest_aggregate({"cc", "base", "uas", 60.0, 1.0}, "fixture");
    store.ingest_aggregate({"cc", "xmod", "uas", 72.0, 1.0}, "fixture");
    store.ingest_aggregate({"dd", "base", "uas", 55.0, 1.0}, "fixture");
    store.ingest_aggregate({"dd", "xmod", "uas", 65.0, 1.0}, "fixture");
    store.ingest_aggregate({"cc", "ymod", "las", 58.0, 1.0}, "fixture");
    store.set_meta({"aa", 8000, 100000, 0.8});
    store.set_meta({"bb", 3000, 50000, 0.7});
    store.set_meta({"cc", 1000, 20000, 0.6});
    store.set_meta({"dd", 200, 5000, 0.5});
    return store;
}

}  // namespace

TEST_CASE("parse_config reads a full experiment file") {
    const std::string text =
        "# resource-scaling experiment\n"
        "[experiment]\n"
        "punct = include\n"
        "single_root = off\n"
        "baseline_model = base-x\n"
        "model = comp-y\n"
        "seeds = 3 5 9\n"
        "mattr_window = 250\n"
        "min_word_frequency = 1\n"
        "\n"
        "[hyperparams]\n"
        "word_dim = 10\n"
        "hidden_dim = 12\n"
        "max_epochs = 7\n"
        "\n"
        "[grid]\n"
        "learning_rates = 0.1 0.05\n"
        "budget_fraction = 0.5\n"
        "\n"
        "; first treebank is split on the fly\n"
        "[language aa]\n"
        "treebank = data/aa.conllu\n"
        "split_ratios = 0.7 0.2 0.1\n"
        "split_seed = 4\n"
        "train_sentences = 120\n"
        "tokens = 2000\n"
        "mattr = 0.55\n"
        "\n"
        "[language bb]\n"
        "train = bb/train.conllu\n"
        "dev = /abs/bb-dev.conllu\n"
        "test = bb/test.conllu\n"
        "embeddings = vec/bb.vec\n";
    const ExperimentConfig cfg = parse_config(text, "/base");

    CHECK(cfg.exclude_punct == false);
    CHECK(cfg.single_root == false);
    CHECK(cfg.baseline_model == "base-x");
    CHECK(cfg.model == "comp-y");
    CHECK(cfg.seeds == std::vector<uint64_t>{3, 5, 9});
    CHECK(cfg.mattr_window == 250);
    CHECK(cfg.min_word_frequency == 1);

    CHECK(cfg.hyperparams.word_dim == 10);
    CHECK(cfg.hyperparams.hidden_dim == 12);
    CHECK(cfg.hyperparams.max_epochs == 7);
    CHECK(cfg.hyperparams.char_dim == Hyperparams{}.char_dim);  // untouched default

    CHECK(cfg.grid.learning_rates == std::vector<double>{0.1, 0.05});
    CHECK(cfg.grid.decay_rates.empty());
    CHECK(cfg.grid.budget_fraction == 0.5);

    REQUIRE(cfg.languages.size() == 2);
    const LanguageConfig& aa = cfg.languages[0];
    CHECK(aa.code == "aa");
    CHECK(aa.treebank == "/base/data/aa.conllu");
    CHECK(aa.split_ratios == std::vector<double>{0.7, 0.2, 0.1});
    CHECK(aa.split_seed == 4);
    CHECK(aa.declared_train_sentences == 120);
    CHECK(aa.declared_tokens == 2000);
    CHECK(aa.declared_mattr == 0.55);

    const LanguageConfig& bb = cfg.languages[1];
    CHECK(bb.code == "bb");
    CHECK(bb.treebank.empty());
    CHECK(bb.train_path == "/base/bb/train.conllu");
    CHECK(bb.dev_path == "/abs/bb-dev.conllu");  // absolute paths stay put
    CHECK(bb.test_path == "/base/bb/test.conllu");
    CHECK(bb.embeddings == "/base/vec/bb.vec");
    CHECK(bb.declared_train_sentences == -1);
    CHECK(bb.declared_mattr == -1.0);
}

TEST_CASE("parse_config rejects malformed input") {
    check_config_error("punct = include\n", "key outside any section");
    check_config_error("[experiment\npunct = include\n", "unterminated section header");
    check_config_error("[bogus]\n", "unknown section [bogus]");
    check_config_error("[experiment]\n[experiment]\n", "duplicate [experiment] section");
    check_config_error("[language aa]\ntreebank = t.conllu\n[language aa]\ntreebank = u.conllu\n",
                       "duplicate [language aa]");
    check_config_error("[experiment]\npunct = maybe\n", "punct must be 'include' or 'exclude'");
    check_config_error("[experiment]\nsingle_root = yes\n", "single_root must be 'on' or 'off'");
    check_config_error("[experiment]\nseeds =\n", "seeds is empty");
    check_config_error("[experiment]\nseeds = 4 4\n", "duplicate seed");
    check_config_error("[experiment]\nseeds = 3 -2\n", "is not a nonnegative integer");
    check_config_error("[experiment]\ncolor = red\n", "unknown key 'color' in [experiment]");
    check_config_error("[hyperparams]\nwidth = 3\n", "unknown key 'width' in [hyperparams]");
    check_config_error("[grid]\nmomentum = 0.9\n", "unknown key 'momentum' in [grid]");
    check_config_error("[language aa]\nfoo = 1\n", "unknown key 'foo' in [language]");
    check_config_error("[experiment]\nmodel comp\n", "expected 'key = value'");
    check_config_error("[experiment]\n= 3\n", "empty key");
    check_config_error("[experiment]\nmodel = a\nmodel = b\n", "duplicate key 'model'");
    check_config_error("[experiment]\nmattr_window = ten\n", "is not an integer");
    check_config_error("[experiment]\nmattr_window = 0\n", "mattr_window must be positive");
    check_config_error("[experiment]\nmin_word_frequency = 0\n",
                       "min_word_frequency must be positive");
    check_config_error("[experiment]\nmodel =\n", "model names cannot be empty");
    check_config_error("[hyperparams]\nmax_epochs = 0\n", "need at least one epoch");
    check_config_error("[grid]\nbudget_fraction = fast\n", "is not a number");
    // language sections need exactly one data source
    check_config_error("[language aa]\nsplit_seed = 2\n",
                       "needs either treebank or all of train/dev/test");
    check_config_error("[language aa]\ntreebank = t\ntrain = u\ndev = v\ntest = w\n",
                       "needs either treebank or all of train/dev/test");
    check_config_error("[language aa]\ntrain = u\ndev = v\n",
                       "needs either treebank or all of train/dev/test");
    check_config_error("[language aa]\ntreebank = t\nsplit_ratios = 0.8 0.2\n",
                       "split_ratios needs three values");
    check_config_error("[language aa]\ntreebank = t\ntrain_sentences = 0\n",
                       "declared counts must be positive");
    check_config_error("[language aa]\ntreebank = t\nmattr = 1.5\n", "mattr must lie in (0, 1]");
}

TEST_CASE("load_config resolves paths against the config directory") {
    const fs::path dir = fresh_dir("config-load");
    const std::string text = "[experiment]\nmodel = m1\n[language aa]\ntreebank = tb/aa.conllu\n";
    write_file((dir / "exp.ini").string(), text);
    const ExperimentConfig cfg = load_config((dir / "exp.ini").string());
    REQUIRE(cfg.languages.size() == 1);
    CHECK(cfg.languages[0].treebank == (dir / "tb" / "aa.conllu").string());
    CHECK_THROWS_AS(load_config((dir / "absent.ini").string()), Error);
}

TEST_CASE("results store aggregates runs and round-trips through disk") {
    const fs::path dir = fresh_dir("store-roundtrip");
    ResultsStore store = ResultsStore::open(dir.string());
    CHECK(store.runs().empty());

    store.add_run({"fra", "bi", "las", 1, 92.0});
    store.add_run({"fra", "bi", "las", 2, 94.0});
    store.add_run({"fra", "bi", "uas", 1, 95.5});
    store.set_meta({"fra", 100, 2000, 0.57});
    store.ingest_aggregate({"xho", "bi", "las", 70.38, 0.5}, "fixture");
    store.add_failed({"yor", "bi", 3, "exploded\nmid-epoch"});

    const auto aggs = store.aggregates();
    REQUIRE(aggs.size() == 3);
    CHECK(aggs.at({"fra", "bi", "las"}).first == doctest::Approx(93.0).epsilon(1e-12));
    CHECK(aggs.at({"fra", "bi", "las"}).second ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(aggs.at({"fra", "bi", "uas"}).first == 95.5);
    CHECK(aggs.at({"fra", "bi", "uas"}).second == 0.0);  // single seed
    CHECK(aggs.at({"xho", "bi", "las"}) == std::make_pair(70.38, 0.5));
    CHECK(store.failed().at({"yor", "bi", 3}) == "exploded mid-epoch");

    store.save();
    const std::string runs_bytes = read_file((dir / "runs.csv").string());
    const std::string agg_bytes = read_file((dir / "aggregates.csv").string());
    CHECK(runs_bytes.substr(0, runs_bytes.find('\n')) == "language,model,metric,seed,value");

    ResultsStore back = ResultsStore::open(dir.string());
    CHECK(back.runs() == store.runs());
    CHECK(back.meta().at("fra").tokens == 2000);
    CHECK(back.failed() == store.failed());
    // rows derived from runs are re-derived, not treated as ingested
    REQUIRE(back.ingested().size() == 1);
    CHECK(back.ingested().count({"xho", "bi", "las"}) == 1);
    CHECK(back.aggregates() == aggs);

    back.save();
    CHECK(read_file((dir / "runs.csv").string()) == runs_bytes);
    CHECK(read_file((dir / "aggregates.csv").string()) == agg_bytes);
}

TEST_CASE("results store rejects bad rows") {
    const fs::path dir = fresh_dir("store-errors");
    ResultsStore store = ResultsStore::open(dir.string());
    store.add_run({"fra", "bi", "las", 1, 92.0});

    CHECK_THROWS_WITH_AS(store.add_run({"fra", "bi", "las", 1, 93.0}),
                         doctest::Contains("run fra/bi/las/seed=1 is already recorded"), Error);
    CHECK_THROWS_WITH_AS(store.add_run({"fra", "bi", "las", 2, 101.0}),
                         doctest::Contains("[0, 100]"), Error);
    CHECK_THROWS_WITH_AS(store.add_run({"fra", "bi", "f1", 2, 90.0}), doctest::Contains("las"),
                         Error);
    CHECK_THROWS_WITH_AS(store.add_run({"", "bi", "las", 2, 90.0}),
                         doctest::Contains("language"), Error);
    CHECK_THROWS_WITH_AS(store.ingest_aggregate({"fra", "bi", "uas", 90.0, -0.1}, "t"),
                         doctest::Contains("nonnegative"), Error);
    store.ingest_aggregate({"ron", "bi", "las", 80.0, 0.4}, "t");
    CHECK_THROWS_WITH_AS(store.ingest_aggregate({"ron", "bi", "las", 81.0, 0.4}, "t"),
                         doctest::Contains("duplicate row for ron/bi/las"), Error);
    CHECK_THROWS_WITH_AS(store.set_meta({"fra", 0, 2000, 0.5}), doctest::Contains("positive"),
                         Error);
    CHECK_THROWS_WITH_AS(store.set_meta({"fra", 10, 2000, 0.0}), doctest::Contains("(0, 1]"),
                         Error);

    // a key both ingested and derivable from runs is a conflict
    store.ingest_aggregate({"fra", "bi", "las", 92.0, 0.0}, "t");
    CHECK_THROWS_WITH_AS(store.aggregates(),
                         doctest::Contains("both ingested and derived from runs"), Error);

    const fs::path bad = fresh_dir("store-corrupt");
    write_file((bad / "runs.csv").string(), "bogus\n");
    CHECK_THROWS_WITH_AS(ResultsStore::open(bad.string()), doctest::Contains("expected header"),
                         Error);
    write_file((bad / "runs.csv").string(), "language,model,metric,seed,value\nfra,bi,las,1\n");
    CHECK_THROWS_WITH_AS(ResultsStore::open(bad.string()), doctest::Contains("expected 5"),
                         Error);
}

TEST_CASE("ingest_scores handles both csv shapes") {
    const fs::path dir = fresh_dir("ingest");
    const std::string runs_csv = (dir / "published_runs.csv").string();
    write_file(runs_csv,
               "language,model,metric,seed,value\nfra,bi,las,1,92\nfra,bi,las,2,94\n");
    const std::string agg_csv = (dir / "published_aggs.csv").string();
    write_file(agg_csv, "language,model,metric,mean,sd\nxho,bi,las,70.38,0.5\n");

    ResultsStore store = ResultsStore::open((dir / "store").string());
    ingest_scores(store, runs_csv);
    ingest_scores(store, agg_csv);
    CHECK(store.runs().size() == 2);
    CHECK(store.runs().at({"fra", "bi", "las", 2}) == 94.0);
    CHECK(store.ingested().at({"xho", "bi", "las"}) == std::make_pair(70.38, 0.5));

    const std::string bad_header = (dir / "bad_header.csv").string();
    write_file(bad_header, "lang,model\nx,y\n");
    CHECK_THROWS_WITH_AS(ingest_scores(store, bad_header), doctest::Contains("header must be"),
                         Error);
    const std::string bad_seed = (dir / "bad_seed.csv").string();
    write_file(bad_seed, "language,model,metric,seed,value\nfra,bi,las,x,92\n");
    CHECK_THROWS_WITH_AS(ingest_scores(store, bad_seed), doctest::Contains("row 2"), Error);

    const std::string meta_csv = (dir / "meta.csv").string();
    write_file(meta_csv, "language,train_sentences,tokens,mattr\nfra,100,2000,0.57\n");
    ingest_meta(store, meta_csv);
    CHECK(store.meta().at("fra").mattr == 0.57);
    write_file(meta_csv, "language,train_sentences,tokens,mattr\nfra,100,2000,1.5\n");
    CHECK_THROWS_WITH_AS(ingest_meta(store, meta_csv), doctest::Contains("(0, 1]"), Error);
}

TEST_CASE("emit_rer derives relative error rates from aggregates") {
    const fs::path dir = fresh_dir("rer-bundle");
    ResultsStore store = ResultsStore::open(dir.string());
    store.ingest_aggregate({"fra", "biaffine-lstm", "las", 93.51, 0.2}, "t");
    store.ingest_aggregate({"fra", "afroxlmr-large", "las", 95.81, 0.2}, "t");
    store.ingest_aggregate({"xho", "biaffine-lstm", "las", 70.38, 0.2}, "t");
    store.ingest_aggregate({"xho", "rembert", "las", 61.08, 0.2}, "t");

    const ExperimentConfig cfg;  // baseline_model defaults to biaffine-lstm
    const ReportBundle bundle = emit_rer(cfg, store);
    REQUIRE(bundle.files.size() == 2);
    const std::string& las = bundle.files.at("report/rer_las.csv");
    CHECK(las.substr(0, las.find('\n')) == "language,model,rer");
    // a model beating the baseline has negative RER, a weaker one positive
    CHECK(las.find("fra,afroxlmr-large,-0.3543913713\n") != std::string::npos);
    CHECK(las.find("xho,rembert,0.3139770425\n") != std::string::npos);
    CHECK(bundle.files.at("report/rer_uas.csv") == "language,model,rer\n");
    CHECK(bundle.summary == "# rer_las\n" + las + "# rer_uas\nlanguage,model,rer\n");

    ResultsStore missing = ResultsStore::open((dir / "missing").string());
    missing.ingest_aggregate({"fra", "afroxlmr-large", "las", 95.81, 0.2}, "t");
    CHECK_THROWS_WITH_AS(emit_rer(cfg, missing),
                         doctest::Contains("no 'biaffine-lstm' las scores for: fra"), Error);

    ResultsStore empty = ResultsStore::open((dir / "empty").string());
    CHECK_THROWS_WITH_AS(emit_rer(cfg, empty), doctest::Contains("no scores"), Error);
}

TEST_CASE("scaling_fit profiles the fits and emit_report bundles everything") {
    const fs::path dir = fresh_dir("scaling");
    ResultsStore store = scaling_store(dir.string());
    ExperimentConfig cfg;
    cfg.baseline_model = "base";

    const ReportBundle fit = scaling_fit(cfg, store);
    REQUIRE(fit.files.size() == 4);
    const std::string& txt = fit.files.at("report/scaling_fits.txt");
    CHECK(fit.summary == txt);
    CHECK(txt.find("xmod.las.observations = 8\n") != std::string::npos);
    CHECK(txt.find("xmod.las.languages = 4\n") != std::string::npos);
    CHECK(txt.find("xmod.las.per_seed_observations = 6\n") != std::string::npos);
    CHECK(txt.find("xmod.las.slope = ") != std::string::npos);
    CHECK(txt.find("xmod.las.psi = ") != std::string::npos);
    CHECK(txt.find("xmod.las.ols_fallback = 0\n") != std::string::npos);
    CHECK(txt.find("xmod.las.ml_null_loglik = ") != std::string::npos);
    CHECK(txt.find("xmod.las.mattr_coef = ") != std::string::npos);
    CHECK(txt.find("xmod.las.lrt_df = 1\n") != std::string::npos);
    CHECK(txt.find("xmod.las.crossover_log10 = ") != std::string::npos);
    // mean RER falls strictly with treebank size in this fixture
    CHECK(txt.find("xmod.las.spearman_rho = -1\n") != std::string::npos);
    CHECK(txt.find("xmod.uas.observations = 8\n") != std::string::npos);
    // one language is not enough for a fit
    CHECK(txt.find("ymod.las.skipped = too few observations\n") != std::string::npos);
    CHECK(txt.find("ymod.uas.skipped = too few observations\n") != std::string::npos);

    const std::string& lrt = fit.files.at("report/lrt.csv");
    CHECK(lrt.substr(0, lrt.find('\n')) == "model,metric,chi2,df,p");
    CHECK(lrt.find("xmod,las,") != std::string::npos);
    CHECK(lrt.find("xmod,uas,") != std::string::npos);
    CHECK(lrt.find("ymod") == std::string::npos);
    const std::string& corr = fit.files.at("report/correlations.csv");
    CHECK(corr.find("xmod,las,-1,0,4\n") != std::string::npos);
    CHECK(fit.files.count("report/crossovers.csv") == 1);

    // identical store, identical bytes
    const ReportBundle again = scaling_fit(cfg, store);
    CHECK(again.files == fit.files);

    const ReportBundle report = emit_report(cfg, store);
    REQUIRE(report.files.size() == 12);
    CHECK(report.files.count("report/attachment_scores.csv") == 1);
    CHECK(report.files.at("report/scaling_fits.txt") == txt);
    const std::string& attach = report.files.at("report/attachment_scores.csv");
    CHECK(attach.find("aa,xmod,las,81,1\n") != std::string::npos);  // derived mean/sd
    CHECK(attach.find("cc,ymod,las,58,1\n") != std::string::npos);  // ingested
    const std::string& mat = report.files.at("report/mattr.csv");
    CHECK(mat.substr(0, mat.find('\n')) == "language,train_sentences,tokens,mattr,mattr_z");
    CHECK(mat.find("aa,8000,100000,0.8,1.161895004\n") != std::string::npos);
    CHECK(mat.find("dd,200,5000,0.5,-1.161895004\n") != std::string::npos);
    const std::string& rer_las = report.files.at("report/rer_las.csv");
    CHECK(rer_las.find("cc,ymod,-0.06666666667\n") != std::string::npos);
    const std::string& plot = report.files.at("report/plotdata/rer_las.tsv");
    CHECK(plot.substr(0, plot.find('\n')) ==
          "language\tmodel\tseed\tlog10_sentences\tmattr_z\trer");
    CHECK(plot.find("aa\txmod\t1\t3.903089987\t1.161895004\t") != std::string::npos);
    CHECK(plot.find("cc\txmod\tmean\t3\t-0.3872983346\t-0.2888888889\n") != std::string::npos);
    const std::string& partial = report.files.at("report/plotdata/partial_las.tsv");
    CHECK(partial.substr(0, partial.find('\n')) == "model\tmattr_z_residual\trer_residual");
    CHECK(partial.find("xmod\t") != std::string::npos);

    // the summary lists every file, sorted
    std::string expected_summary;
    for (const auto& [path, content] : report.files) expected_summary += path + "\n";
    CHECK(report.summary == expected_summary);

    const fs::path out = fresh_dir("scaling-out");
    write_bundle(out.string(), report);
    CHECK(read_file((out / "report" / "scaling_fits.txt").string()) == txt);
    CHECK(fs::exists(out / "report" / "plotdata" / "rer_las.tsv"));

    // fitting requires metadata for every language in the table
    ResultsStore nometa = ResultsStore::open((dir / "nometa").string());
    nometa.ingest_aggregate({"aa", "base", "las", 50.0, 0.1}, "t");
    nometa.ingest_aggregate({"aa", "xm", "las", 60.0, 0.1}, "t");
    nometa.ingest_aggregate({"bb", "base", "las", 40.0, 0.1}, "t");
    nometa.ingest_aggregate({"bb", "xm", "las", 55.0, 0.1}, "t");
    nometa.ingest_aggregate({"cc", "base", "las", 30.0, 0.1}, "t");
    nometa.ingest_aggregate({"cc", "xm", "las", 45.0, 0.1}, "t");
    nometa.ingest_aggregate({"dd", "base", "las", 20.0, 0.1}, "t");
    nometa.ingest_aggregate({"dd", "xm", "las", 35.0, 0.1}, "t");
    nometa.set_meta({"aa", 100, 1000, 0.5});
    nometa.set_meta({"bb", 200, 2000, 0.6});
    nometa.set_meta({"cc", 300, 3000, 0.7});
    CHECK_THROWS_WITH_AS(scaling_fit(cfg, nometa),
                         doctest::Contains("no language metadata for: dd"), Error);
}

TEST_CASE("run_experiment trains, records and reruns deterministically") {
    using testsupport::synthetic_corpus;
    const fs::path dir = fresh_dir("experiment");
    const std::vector<DepSentence> corpus = synthetic_corpus(30, 17);
    const std::string treebank = (dir / "syn.conllu").string();
    write_file(treebank, serialize_conllu(corpus));

    ExperimentConfig cfg;
    cfg.model = "toy";
    cfg.exclude_punct = false;
    cfg.seeds = {1, 2};
    cfg.min_word_frequency = 1;
    cfg.mattr_window = 100;
    cfg.hyperparams = tiny_hyperparams();
    LanguageConfig lang;
    lang.code = "syn";
    lang.treebank = treebank;
    cfg.languages = {lang};

    const fs::path store_dir = dir / "results";
    ResultsStore store = ResultsStore::open(store_dir.string());
    const RunOutcome outcome = run_experiment(cfg, store, {}, nullptr);
    CHECK(outcome.trained == 2);
    CHECK(outcome.failed == 0);
    REQUIRE(store.runs().size() == 4);  // las and uas for two seeds
    REQUIRE(store.meta().count("syn") == 1);
    CHECK(store.meta().at("syn").train_sentences == 24);  // 30 minus two 10% splits
    CHECK(store.meta().at("syn").tokens > 0);
    CHECK(store.meta().at("syn").mattr > 0.0);
    CHECK(store.meta().at("syn").mattr <= 1.0);
    store.save();

    const fs::path ckpt = store_dir / "checkpoints" / "syn-toy-1.bin";
    const fs::path manifest = store_dir / "manifests" / "syn-toy-1.json";
    REQUIRE(fs::exists(ckpt));
    REQUIRE(fs::exists(manifest));
    const nlohmann::json j = nlohmann::json::parse(read_file(manifest.string()));
    CHECK(j.at("language") == "syn");
    CHECK(j.at("model") == "toy");
    CHECK(j.at("seed") == 1);
    CHECK(j.at("checkpoint") == "checkpoints/syn-toy-1.bin");
    CHECK(j.at("train_sentences") == 24);
    CHECK(j.at("dev_sentences") == 3);
    CHECK(j.at("test_sentences") == 3);
    CHECK(j.at("parameters").get<long>() > 0);
    CHECK(j.at("hyperparams").at("min_word_frequency") == 1);
    CHECK(j.at("test_las").get<double>() == store.runs().at({"syn", "toy", "las", 1}));
    CHECK(j.at("vocab_fingerprint").get<std::string>().size() == 16);

    // the saved checkpoint reproduces the in-memory model
    const AttachmentScores via_file =
        evaluate_checkpoint(ckpt.string(), treebank, "", true, false);
    Parser restored = Parser::load(ckpt.string(), EmbeddingTable{0});
    std::vector<DepSentence> preds;
    for (const DepSentence& s : corpus) preds.push_back(restored.predict(s, true));
    const AttachmentScores direct = evaluate(corpus, preds, false);
    CHECK(via_file.uas == direct.uas);
    CHECK(via_file.las == direct.las);
    CHECK(via_file.scored_tokens == direct.scored_tokens);

    // a rerun over the same store collides with the recorded runs
    const RunOutcome rerun = run_experiment(cfg, store, {}, nullptr);
    CHECK(rerun.trained == 0);
    CHECK(rerun.failed == 2);
    CHECK(store.failed().at({"syn", "toy", 1}).find("already recorded") != std::string::npos);

    // load failures are recorded per seed, not thrown
    ExperimentConfig broken = cfg;
    broken.languages[0].code = "bad";
    broken.languages[0].treebank = (dir / "missing.conllu").string();
    ResultsStore store_b = ResultsStore::open((dir / "results-bad").string());
    const RunOutcome failed = run_experiment(broken, store_b, {}, nullptr);
    CHECK(failed.trained == 0);
    CHECK(failed.failed == 2);
    REQUIRE(store_b.failed().size() == 2);
    CHECK_FALSE(store_b.failed().at({"bad", "toy", 1}).empty());

    // a seed override narrows the sweep to one run
    ResultsStore store_c = ResultsStore::open((dir / "results-seed2").string());
    RunOverrides only_seed2;
    only_seed2.seed = 2;
    const RunOutcome one = run_experiment(cfg, store_c, only_seed2, nullptr);
    CHECK(one.trained == 1);
    REQUIRE(store_c.runs().size() == 2);
    CHECK(store_c.runs().count({"syn", "toy", "las", 2}) == 1);
    CHECK(store_c.runs().at({"syn", "toy", "las", 2}) ==
          store.runs().at({"syn", "toy", "las", 2}));

    // byte-for-byte determinism across independent executions
    const fs::path dir2 = dir / "results-repeat";
    ResultsStore store_d = ResultsStore::open(dir2.string());
    run_experiment(cfg, store_d, {}, nullptr);
    store_d.save();
    for (const char* name : {"runs.csv", "aggregates.csv", "language_meta.csv"}) {
        CHECK(read_file((dir2 / name).string()) == read_file((store_dir / name).string()));
    }
    CHECK(read_file((dir2 / "manifests" / "syn-toy-1.json").string()) ==
          read_file(manifest.string()));
    CHECK(read_file((dir2 / "checkpoints" / "syn-toy-1.bin").string()) ==
          read_file(ckpt.string()));

    CHECK_THROWS_WITH_AS(run_experiment(ExperimentConfig{}, store, {}, nullptr),
                         doctest::Contains("no [language] sections"), Error);
}

TEST_CASE("grid_search_experiment summarizes the sweep") {
    using testsupport::synthetic_corpus;
    const fs::path dir = fresh_dir("grid-experiment");
    const std::string treebank = (dir / "syn.conllu").string();
    write_file(treebank, serialize_conllu(synthetic_corpus(25, 8)));

    ExperimentConfig cfg;
    cfg.model = "toy";
    cfg.exclude_punct = false;
    cfg.min_word_frequency = 1;
    cfg.hyperparams = tiny_hyperparams();
    cfg.grid.learning_rates = {0.1, 0.05};
    LanguageConfig lang;
    lang.code = "syn";
    lang.treebank = treebank;
    cfg.languages = {lang};

    const std::string summary = grid_search_experiment(cfg, nullptr);
    CHECK(summary.find("syn.best_learning_rate = ") != std::string::npos);
    // axes left empty fall back to the base hyperparameters
    CHECK(summary.find("syn.best_decay_rate = 0.9\n") != std::string::npos);
    CHECK(summary.find("syn.best_decay_steps = 100\n") != std::string::npos);
    CHECK(summary.find("syn.best_dev_las = ") != std::string::npos);
    CHECK(summary.find("syn.runs = 2\n") != std::string::npos);

    ExperimentConfig no_axes = cfg;
    no_axes.grid = GridSpec{};
    CHECK_THROWS_WITH_AS(grid_search_experiment(no_axes, nullptr),
                         doctest::Contains("no [grid] axes"), Error);
}

TEST_CASE("evaluate_files and mattr_file operate on paths") {
    using testsupport::synthetic_corpus;
    const fs::path dir = fresh_dir("file-eval");
    const std::vector<DepSentence> corpus = synthetic_corpus(12, 4);
    const std::string gold = (dir / "gold.conllu").string();
    write_file(gold, serialize_conllu(corpus));

    const AttachmentScores perfect = evaluate_files(gold, gold, false);
    CHECK(perfect.uas == 100.0);
    CHECK(perfect.las == 100.0);
    CHECK(evaluate_files(gold, gold, true).uas == 100.0);

    const std::string shorter = (dir / "short.conllu").string();
    write_file(shorter,
               serialize_conllu({corpus.begin(), corpus.end() - 1}));
    CHECK_THROWS_WITH_AS(evaluate_files(gold, shorter, false), doctest::Contains("sentence"),
                         Error);

    const std::string words = (dir / "words.txt").string();
    write_file(words, "a a b b\n");
    const auto [text_mattr, text_tokens] = mattr_file(words, 2);
    CHECK(text_mattr == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(text_tokens == 4);

    const auto [tb_mattr, tb_tokens] = mattr_file(gold, 100);
    long total = 0;
    for (const DepSentence& s : corpus) total += static_cast<long>(s.tokens.size());
    CHECK(tb_tokens == total);
    CHECK(tb_mattr > 0.0);
    CHECK(tb_mattr <= 1.0);
}
