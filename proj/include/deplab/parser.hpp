#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "deplab/common.hpp"
#include "deplab/conllu.hpp"
#include "deplab/embeddings.hpp"

namespace deplab {

struct Hyperparams {
    int word_dim = 32;
    int char_dim = 16;
    int pos_dim = 8;
    int static_dim = 0;  // 0 disables the pre-trained channel
    int hidden_dim = 64;
    int layers = 1;
    int arc_dim = 32;
    int label_dim = 16;
    int char_window = 3;  // odd
    double learning_rate = 0.05;
    double decay_rate = 0.75;
    int decay_steps = 400;
    int max_epochs = 60;
    int patience = 8;
    double dropout = 0.0;
    int batch_size = 16;
    uint64_t seed = 1;
};

void validate_hyperparams(const Hyperparams& hp);

// One gated recurrent cell; gate order inside the stacked matrices is
// input, forget, cell, output.
struct LstmCell {
    Eigen::MatrixXd wx;  // 4H x in
    Eigen::MatrixXd wh;  // 4H x H
    Eigen::MatrixXd b;   // 4H x 1
};

// Hidden states of a single left-to-right pass; xs rows are time steps.
Eigen::MatrixXd lstm_states(const LstmCell& cell, const Eigen::MatrixXd& xs);

// scores(i, j) = H.row(i) * U * D.row(j)' + H.row(i) * v + bias
Eigen::MatrixXd biaffine_arc_scores(const Eigen::MatrixXd& H, const Eigen::MatrixXd& D,
                                    const Eigen::MatrixXd& U, const Eigen::VectorXd& v,
                                    double bias);

// All trainable tensors.  Everything is a matrix (vectors have one column,
// scalars are 1x1) so updates, serialization, and finite differences can
// walk one registry.
struct ParserParams {
    Eigen::MatrixXd word_emb;    // words x word_dim
    Eigen::MatrixXd char_emb;    // chars x char_dim
    Eigen::MatrixXd pos_emb;     // (pos tags + 1) x pos_dim, last row for unseen tags
    Eigen::MatrixXd static_unk;  // static_dim x 1, stands in for out-of-table tokens
    Eigen::MatrixXd conv_w;      // char_dim x (window * char_dim)
    Eigen::MatrixXd conv_b;      // char_dim x 1
    std::vector<LstmCell> fwd;   // per layer
    std::vector<LstmCell> bwd;
    Eigen::MatrixXd root_repr;   // 2H x 1, contextual vector of the artificial root
    Eigen::MatrixXd arc_head_w;  // arc_dim x 2H
    Eigen::MatrixXd arc_head_b;  // arc_dim x 1
    Eigen::MatrixXd arc_dep_w;
    Eigen::MatrixXd arc_dep_b;
    Eigen::MatrixXd arc_u;       // arc_dim x arc_dim
    Eigen::MatrixXd arc_v;       // arc_dim x 1
    Eigen::MatrixXd arc_bias;    // 1 x 1
    Eigen::MatrixXd lab_head_w;  // label_dim x 2H
    Eigen::MatrixXd lab_head_b;
    Eigen::MatrixXd lab_dep_w;
    Eigen::MatrixXd lab_dep_b;
    std::vector<Eigen::MatrixXd> lab_u;  // per relation, label_dim x label_dim
    Eigen::MatrixXd lab_uh;      // relations x label_dim
    Eigen::MatrixXd lab_ud;      // relations x label_dim
    Eigen::MatrixXd lab_b;       // relations x 1

    std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensors();
    std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors() const;
    void set_zero();
    long count() const;  // total number of scalars
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_uas = 0.0;
    double dev_las = 0.0;
    double learning_rate = 0.0;
};

struct TrainOptions {
    bool single_root = true;
    bool exclude_punct = false;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    int best_epoch = 0;
    double best_dev_las = 0.0;
    double best_dev_uas = 0.0;
    long steps = 0;
};

struct GridSpec {
    std::vector<double> learning_rates;
    std::vector<double> decay_rates;
    std::vector<int> decay_steps;
    double budget_fraction = 0.25;
};

struct GridRun {
    double learning_rate = 0.0;
    double decay_rate = 0.0;
    int decay_steps = 0;
    double dev_las = 0.0;
};

struct GridResult {
    Hyperparams best;
    double best_dev_las = 0.0;
    int runs = 0;
    std::vector<GridRun> log;
};

class Parser {
public:
    struct Trace;  // per-sentence forward state, defined in the implementation

    // Fresh model with randomly initialized weights drawn from hp.seed.
    Parser(Vocabulary vocab, EmbeddingTable table, const Hyperparams& hp);

    const Vocabulary& vocab() const { return vocab_; }
    const Hyperparams& hyperparams() const { return hp_; }
    ParserParams& params() { return params_; }
    const ParserParams& params() const { return params_; }

    // (n+1) x n arc score matrix; row 0 is the artificial root.
    Eigen::MatrixXd score_arcs(const DepSentence& s) const;

    // n x relations label scores with each token attached to heads[d-1].
    Eigen::MatrixXd score_labels(const DepSentence& s, const std::vector<int>& heads) const;

    // Mean per-token loss over the batch; accumulates gradients into
    // `grads` (zeroed first).  Fails on non-finite loss.
    double loss_and_gradients(const std::vector<const DepSentence*>& batch, ParserParams& grads);

    DepSentence predict(const DepSentence& s, bool single_root) const;

    TrainResult train(const std::vector<DepSentence>& train_set,
                      const std::vector<DepSentence>& dev_set, const TrainOptions& options);

    void save(const std::string& path) const;
    static Parser load(const std::string& path, EmbeddingTable table);

private:
    Parser(Vocabulary vocab, EmbeddingTable table, const Hyperparams& hp, bool init);
    Trace encode(const DepSentence& s, bool training) const;
    double backward(const DepSentence& s, const Trace& t, double inv_tokens,
                    ParserParams& g) const;
    Eigen::VectorXd label_vector(const Trace& t, int dep, int head) const;

    Vocabulary vocab_;
    EmbeddingTable table_;
    Hyperparams hp_;
    ParserParams params_;
    mutable Rng rng_;
};

GridResult grid_search(const Vocabulary& vocab, const EmbeddingTable& table,
                       const Hyperparams& base, const GridSpec& spec,
                       const std::vector<DepSentence>& train_set,
                       const std::vector<DepSentence>& dev_set, const TrainOptions& options);

}  // namespace deplab
