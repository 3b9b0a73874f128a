// Command-line front end.  Everything substantive happens behind the C API;
// this file only parses arguments, shuttles strings, and prints results.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "deplab/deplab.h"

namespace {

const char* kind_name(int code) {
    switch (code) {
        case DEPLAB_ERR_IO: return "io";
        case DEPLAB_ERR_PARSE: return "parse";
        case DEPLAB_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case DEPLAB_ERR_NUMERIC: return "numeric";
        case DEPLAB_ERR_STATE: return "state";
        case 64: return "usage";
        default: return "internal";
    }
}

// One-line JSON diagnostic on stderr; the exit code equals `code`.
int emit_error(int code, const std::string& message) {
    nlohmann::json j;
    j["error"]["code"] = code;
    j["error"]["kind"] = kind_name(code);
    j["error"]["message"] = message;
    std::cerr << j.dump() << '\n';
    return code;
}

int emit_status(deplab_status st) { return emit_error(st, deplab_last_error()); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

struct ConfigHandle {
    deplab_config* p = nullptr;
    ~ConfigHandle() { deplab_config_free(p); }
};

struct StoreHandle {
    deplab_store* p = nullptr;
    ~StoreHandle() { deplab_store_free(p); }
};

struct StringHandle {
    char* p = nullptr;
    ~StringHandle() { deplab_string_free(p); }
};

int punct_flag(const std::string& v) {
    if (v.empty()) return -1;
    return v == "exclude" ? 1 : 0;
}

int root_flag(const std::string& v) {
    if (v.empty()) return -1;
    return v == "on" ? 1 : 0;
}

int run_train(const std::string& config, const std::string& out, long long seed,
              const std::string& punct, const std::string& single_root) {
    ConfigHandle cfg;
    deplab_status st = deplab_config_load(config.c_str(), &cfg.p);
    if (st != DEPLAB_OK) return emit_status(st);
    StoreHandle store;
    st = deplab_store_open(out.c_str(), &store.p);
    if (st != DEPLAB_OK) return emit_status(st);

    int trained = 0;
    int failed = 0;
    st = deplab_run_experiment(cfg.p, store.p, seed, punct_flag(punct),
                               root_flag(single_root), 1, &trained, &failed);
    if (st != DEPLAB_OK) return emit_status(st);
    st = deplab_store_save(store.p);
    if (st != DEPLAB_OK) return emit_status(st);
    std::cout << "trained = " << trained << "\nfailed = " << failed << '\n';
    if (trained == 0 && failed > 0) {
        return emit_error(DEPLAB_ERR_STATE, "all runs failed; see failed_runs.csv");
    }
    return 0;
}

int run_grid(const std::string& config, const std::string& out) {
    ConfigHandle cfg;
    deplab_status st = deplab_config_load(config.c_str(), &cfg.p);
    if (st != DEPLAB_OK) return emit_status(st);
    StringHandle summary;
    st = deplab_grid_search(cfg.p, 1, &summary.p);
    if (st != DEPLAB_OK) return emit_status(st);
    if (!out.empty()) {
        std::ofstream f(out + "/grid_search.txt");
        if (!f) return emit_error(DEPLAB_ERR_IO, "cannot write " + out + "/grid_search.txt");
        f << summary.p;
    }
    std::cout << summary.p;
    return 0;
}

int run_evaluate(const std::string& gold, const std::string& pred,
                 const std::string& checkpoint, const std::string& test,
                 const std::string& embeddings, const std::string& punct,
                 const std::string& single_root) {
    const bool file_mode = !gold.empty() || !pred.empty();
    const bool ckpt_mode = !checkpoint.empty() || !test.empty();
    if (file_mode == ckpt_mode) {
        return emit_error(64, "pass either --gold with --pred or --checkpoint with --test");
    }
    const int exclude_punct = punct.empty() ? 1 : punct_flag(punct);
    double uas = 0.0;
    double las = 0.0;
    long long tokens = 0;
    deplab_status st;
    if (file_mode) {
        if (gold.empty() || pred.empty()) {
            return emit_error(64, "--gold and --pred go together");
        }
        st = deplab_evaluate_files(gold.c_str(), pred.c_str(), exclude_punct, &uas, &las,
                                   &tokens);
    } else {
        if (checkpoint.empty() || test.empty()) {
            return emit_error(64, "--checkpoint and --test go together");
        }
        const int sroot = single_root.empty() ? 1 : root_flag(single_root);
        st = deplab_evaluate_checkpoint(checkpoint.c_str(), test.c_str(), embeddings.c_str(),
                                        sroot, exclude_punct, &uas, &las, &tokens);
    }
    if (st != DEPLAB_OK) return emit_status(st);
    std::cout << "uas = " << fmt(uas) << "\nlas = " << fmt(las)
              << "\nscored_tokens = " << tokens << '\n';
    return 0;
}

int run_ingest(const std::string& out, const std::vector<std::string>& files) {
    StoreHandle store;
    deplab_status st = deplab_store_open(out.c_str(), &store.p);
    if (st != DEPLAB_OK) return emit_status(st);
    for (const std::string& path : files) {
        std::ifstream in(path);
        std::string header;
        if (!in || !std::getline(in, header)) {
            return emit_error(DEPLAB_ERR_IO, "cannot read " + path);
        }
        if (!header.empty() && header.back() == '\r') header.pop_back();
        in.close();
        if (header == "language,train_sentences,tokens,mattr") {
            st = deplab_ingest_meta(store.p, path.c_str());
        } else {
            st = deplab_ingest_scores(store.p, path.c_str());
        }
        if (st != DEPLAB_OK) return emit_status(st);
    }
    st = deplab_store_save(store.p);
    if (st != DEPLAB_OK) return emit_status(st);
    std::cout << "ingested = " << files.size() << '\n';
    return 0;
}

int run_mattr(const std::string& path, int window) {
    double value = 0.0;
    long long tokens = 0;
    const deplab_status st = deplab_mattr_file(path.c_str(), window, &value, &tokens);
    if (st != DEPLAB_OK) return emit_status(st);
    std::cout << "mattr = " << fmt(value) << "\ntokens = " << tokens << '\n';
    return 0;
}

using ReportFn = deplab_status (*)(const deplab_config*, deplab_store*, char**);

int run_report(const std::string& config, const std::string& out, ReportFn fn) {
    ConfigHandle cfg;
    deplab_status st = deplab_config_load(config.c_str(), &cfg.p);
    if (st != DEPLAB_OK) return emit_status(st);
    StoreHandle store;
    st = deplab_store_open(out.c_str(), &store.p);
    if (st != DEPLAB_OK) return emit_status(st);
    StringHandle summary;
    st = fn(cfg.p, store.p, &summary.p);
    if (st != DEPLAB_OK) return emit_status(st);
    std::cout << summary.p;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dependency-parsing experiment laboratory"};
    app.set_version_flag("--version", deplab_version());
    app.require_subcommand(1);
    int rc = 0;

    std::string config, out, punct, single_root;
    long long seed = -1;

    auto add_punct = [&](CLI::App* cmd) {
        cmd->add_option("--punct", punct, "Count punctuation tokens: include or exclude")
            ->check(CLI::IsMember({"include", "exclude"}));
    };
    auto add_root = [&](CLI::App* cmd) {
        cmd->add_option("--single-root", single_root, "Force exactly one root: on or off")
            ->check(CLI::IsMember({"on", "off"}));
    };

    CLI::App* train = app.add_subcommand("train", "Train per the config and record results");
    train->add_option("--config", config, "Experiment config file")->required();
    train->add_option("--out", out, "Results directory")->required();
    train->add_option("--seed", seed, "Train only this seed")->check(CLI::NonNegativeNumber);
    add_punct(train);
    add_root(train);
    train->callback([&] { rc = run_train(config, out, seed, punct, single_root); });

    CLI::App* grid = app.add_subcommand("grid-search",
                                        "Tune the optimizer grid on a reduced budget");
    grid->add_option("--config", config, "Experiment config file")->required();
    grid->add_option("--out", out, "Directory for grid_search.txt (optional)");
    grid->callback([&] { rc = run_grid(config, out); });

    std::string gold, pred, checkpoint, test, embeddings;
    CLI::App* eval = app.add_subcommand("evaluate", "Score predictions or a checkpoint");
    eval->add_option("--gold", gold, "Gold .conllu file");
    eval->add_option("--pred", pred, "Predicted .conllu file");
    eval->add_option("--checkpoint", checkpoint, "Saved model");
    eval->add_option("--test", test, "Test .conllu file for --checkpoint");
    eval->add_option("--embeddings", embeddings, "Static embeddings for --checkpoint");
    add_punct(eval);
    add_root(eval);
    eval->callback([&] {
        rc = run_evaluate(gold, pred, checkpoint, test, embeddings, punct, single_root);
    });

    std::vector<std::string> files;
    CLI::App* ingest = app.add_subcommand("ingest-scores",
                                          "Load score or metadata CSVs into a results store");
    ingest->add_option("--out", out, "Results directory")->required();
    ingest->add_option("files", files, "CSV files; the header decides the shape")
        ->required()
        ->expected(-1);
    ingest->callback([&] { rc = run_ingest(out, files); });

    std::string mattr_path;
    int window = 500;
    CLI::App* mattr = app.add_subcommand("mattr", "Moving-average type-token ratio of a file");
    mattr->add_option("file", mattr_path, ".conllu or plain text file")->required();
    mattr->add_option("--window", window, "Window size (default 500)")
        ->check(CLI::PositiveNumber);
    mattr->callback([&] { rc = run_mattr(mattr_path, window); });

    CLI::App* rer = app.add_subcommand("rer", "Relative error reduction tables");
    rer->add_option("--config", config, "Experiment config file")->required();
    rer->add_option("--out", out, "Results directory")->required();
    rer->callback([&] { rc = run_report(config, out, deplab_emit_rer); });

    CLI::App* scaling = app.add_subcommand("scaling-fit",
                                           "Mixed-model scaling fits, tests, and crossovers");
    scaling->add_option("--config", config, "Experiment config file")->required();
    scaling->add_option("--out", out, "Results directory")->required();
    scaling->callback([&] { rc = run_report(config, out, deplab_scaling_fit); });

    CLI::App* report = app.add_subcommand("report", "All derived report files");
    report->add_option("--config", config, "Experiment config file")->required();
    report->add_option("--out", out, "Results directory")->required();
    report->callback([&] { rc = run_report(config, out, deplab_emit_report); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return emit_error(64, e.what());
    }
    return rc;
}
