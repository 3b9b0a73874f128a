#include "deplab/parser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "deplab/decoder.hpp"
#include "deplab/metrics.hpp"

namespace deplab {

namespace {

const auto kSigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
    Eigen::VectorXd e = (v.array() - v.maxCoeff()).exp();
    return e / e.sum();
}

void lstm_step(const LstmCell& cell, const Eigen::VectorXd& x, const Eigen::VectorXd& hprev,
               const Eigen::VectorXd& cprev, Eigen::VectorXd& gi, Eigen::VectorXd& gf,
               Eigen::VectorXd& gg, Eigen::VectorXd& go, Eigen::VectorXd& c,
               Eigen::VectorXd& h) {
    const int H = static_cast<int>(cell.wh.cols());
    Eigen::VectorXd a = cell.wx * x + cell.wh * hprev + cell.b.col(0);
    gi = a.segment(0, H).unaryExpr(kSigmoid);
    gf = a.segment(H, H).unaryExpr(kSigmoid);
    gg = a.segment(2 * H, H).array().tanh().matrix();
    go = a.segment(3 * H, H).unaryExpr(kSigmoid);
    c = gf.cwiseProduct(cprev) + gi.cwiseProduct(gg);
    h = go.cwiseProduct(c.array().tanh().matrix());
}

}  // namespace

void validate_hyperparams(const Hyperparams& hp) {
    if (hp.word_dim < 1 || hp.char_dim < 1 || hp.pos_dim < 1 || hp.static_dim < 0 ||
        hp.hidden_dim < 1 || hp.layers < 1 || hp.arc_dim < 1 || hp.label_dim < 1) {
        fail(ErrorKind::invalid_argument, "model dimensions must be positive");
    }
    if (hp.char_window < 1 || hp.char_window % 2 == 0) {
        fail(ErrorKind::invalid_argument, "character window must be odd");
    }
    if (!(hp.learning_rate > 0.0)) {
        fail(ErrorKind::invalid_argument, "learning rate must be positive");
    }
    if (!(hp.decay_rate > 0.0 && hp.decay_rate <= 1.0)) {
        fail(ErrorKind::invalid_argument, "decay rate must lie in (0, 1]");
    }
    if (hp.decay_steps < 1) fail(ErrorKind::invalid_argument, "decay steps must be positive");
    if (hp.max_epochs < 1) fail(ErrorKind::invalid_argument, "need at least one epoch");
    if (hp.patience < 0) fail(ErrorKind::invalid_argument, "patience cannot be negative");
    if (!(hp.dropout >= 0.0 && hp.dropout < 1.0)) {
        fail(ErrorKind::invalid_argument, "dropout must lie in [0, 1)");
    }
    if (hp.batch_size < 1) fail(ErrorKind::invalid_argument, "batch size must be positive");
}

Eigen::MatrixXd lstm_states(const LstmCell& cell, const Eigen::MatrixXd& xs) {
    const int H = static_cast<int>(cell.wh.cols());
    if (cell.wx.rows() != 4 * H || cell.wh.rows() != 4 * H || cell.b.rows() != 4 * H ||
        cell.b.cols() != 1 || cell.wx.cols() != xs.cols()) {
        fail(ErrorKind::invalid_argument, "recurrent cell shapes are inconsistent");
    }
    Eigen::MatrixXd out(xs.rows(), H);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd gi, gf, gg, go, cn, hn;
    for (int t = 0; t < xs.rows(); ++t) {
        lstm_step(cell, xs.row(t).transpose(), h, c, gi, gf, gg, go, cn, hn);
        c = cn;
        h = hn;
        out.row(t) = h.transpose();
    }
    return out;
}

Eigen::MatrixXd biaffine_arc_scores(const Eigen::MatrixXd& H, const Eigen::MatrixXd& D,
                                    const Eigen::MatrixXd& U, const Eigen::VectorXd& v,
                                    double bias) {
    if (H.cols() != U.rows() || U.cols() != D.cols() || v.size() != H.cols()) {
        fail(ErrorKind::invalid_argument, "biaffine shapes are inconsistent");
    }
    Eigen::MatrixXd s = H * U * D.transpose();
    s.colwise() += H * v;
    s.array() += bias;
    return s;
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> ParserParams::tensors() {
    std::vector<std::pair<std::string, Eigen::MatrixXd*>> out;
    out.emplace_back("word_emb", &word_emb);
    out.emplace_back("char_emb", &char_emb);
    out.emplace_back("pos_emb", &pos_emb);
    out.emplace_back("static_unk", &static_unk);
    out.emplace_back("conv_w", &conv_w);
    out.emplace_back("conv_b", &conv_b);
    for (size_t l = 0; l < fwd.size(); ++l) {
        const std::string fl = "fwd" + std::to_string(l);
        const std::string bl = "bwd" + std::to_string(l);
        out.emplace_back(fl + ".wx", &fwd[l].wx);
        out.emplace_back(fl + ".wh", &fwd[l].wh);
        out.emplace_back(fl + ".b", &fwd[l].b);
        out.emplace_back(bl + ".wx", &bwd[l].wx);
        out.emplace_back(bl + ".wh", &bwd[l].wh);
        out.emplace_back(bl + ".b", &bwd[l].b);
    }
    out.emplace_back("root_repr", &root_repr);
    out.emplace_back("arc_head_w", &arc_head_w);
    out.emplace_back("arc_head_b", &arc_head_b);
    out.emplace_back("arc_dep_w", &arc_dep_w);
    out.emplace_back("arc_dep_b", &arc_dep_b);
    out.emplace_back("arc_u", &arc_u);
    out.emplace_back("arc_v", &arc_v);
    out.emplace_back("arc_bias", &arc_bias);
    out.emplace_back("lab_head_w", &lab_head_w);
    out.emplace_back("lab_head_b", &lab_head_b);
    out.emplace_back("lab_dep_w", &lab_dep_w);
    out.emplace_back("lab_dep_b", &lab_dep_b);
    for (size_t r = 0; r < lab_u.size(); ++r) {
        out.emplace_back("lab_u" + std::to_string(r), &lab_u[r]);
    }
    out.emplace_back("lab_uh", &lab_uh);
    out.emplace_back("lab_ud", &lab_ud);
    out.emplace_back("lab_b", &lab_b);
    return out;
}

std::vector<std::pair<std::string, const Eigen::MatrixXd*>> ParserParams::tensors() const {
    auto mut = const_cast<ParserParams*>(this)->tensors();
    std::vector<std::pair<std::string, const Eigen::MatrixXd*>> out;
    out.reserve(mut.size());
    for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
    return out;
}

void ParserParams::set_zero() {
    for (auto& [name, ptr] : tensors()) ptr->setZero();
}

long ParserParams::count() const {
    long total = 0;
    for (auto& [name, ptr] : tensors()) total += static_cast<long>(ptr->size());
    return total;
}

struct Parser::Trace {
    struct Token {
        int word_id = 1;
        std::vector<int> char_ids;
        int pos_id = 0;
        Eigen::VectorXd static_vec;
        bool in_table = false;
        Eigen::MatrixXd char_mat;  // chars x char_dim
        Eigen::MatrixXd conv_z;    // chars x char_dim, before pooling
        std::vector<int> pool_arg;
        Eigen::VectorXd pooled;    // before the rectifier
    };
    struct Dir {
        std::vector<Eigen::VectorXd> i, f, g, o, c, h;
    };
    std::vector<Token> tokens;
    std::vector<Eigen::MatrixXd> layer_in;   // input of each layer, after dropout
    std::vector<Eigen::MatrixXd> drop_mask;  // empty when dropout is off
    std::vector<Dir> fwd, bwd;
    Eigen::MatrixXd repr;   // (n+1) x 2H
    Eigen::MatrixXd arc_h;  // (n+1) x arc_dim
    Eigen::MatrixXd arc_d;  // n x arc_dim
    Eigen::MatrixXd scores; // (n+1) x n
    Eigen::MatrixXd lab_h;  // (n+1) x label_dim
    Eigen::MatrixXd lab_d;  // n x label_dim
};

Parser::Parser(Vocabulary vocab, EmbeddingTable table, const Hyperparams& hp)
    : Parser(std::move(vocab), std::move(table), hp, true) {}

Parser::Parser(Vocabulary vocab, EmbeddingTable table, const Hyperparams& hp, bool init)
    : vocab_(std::move(vocab)), table_(std::move(table)), hp_(hp), rng_(hp.seed) {
    validate_hyperparams(hp_);
    if (vocab_.word_count() < 2 || vocab_.word_forms[0] != "<pad>") {
        fail(ErrorKind::invalid_argument, "vocabulary is missing its reserved entries");
    }
    if (vocab_.pos_count() < 1) fail(ErrorKind::invalid_argument, "vocabulary has no POS tags");
    if (vocab_.label_count() < 1) fail(ErrorKind::invalid_argument, "vocabulary has no relations");
    if (hp_.static_dim > 0 && table_.dim() != hp_.static_dim) {
        fail(ErrorKind::invalid_argument,
             "embedding table dimension " + std::to_string(table_.dim()) +
                 " does not match static_dim " + std::to_string(hp_.static_dim));
    }

    const int H = hp_.hidden_dim;
    const int two_h = 2 * H;
    const int input_dim = hp_.word_dim + hp_.char_dim + hp_.pos_dim + hp_.static_dim;
    const int R = vocab_.label_count();

    params_.word_emb.resize(vocab_.word_count(), hp_.word_dim);
    params_.char_emb.resize(vocab_.char_count(), hp_.char_dim);
    params_.pos_emb.resize(vocab_.pos_count() + 1, hp_.pos_dim);
    params_.static_unk.resize(hp_.static_dim, 1);
    params_.conv_w.resize(hp_.char_dim, hp_.char_window * hp_.char_dim);
    params_.conv_b.resize(hp_.char_dim, 1);
    params_.fwd.resize(hp_.layers);
    params_.bwd.resize(hp_.layers);
    for (int l = 0; l < hp_.layers; ++l) {
        const int in = l == 0 ? input_dim : two_h;
        for (LstmCell* cell : {&params_.fwd[l], &params_.bwd[l]}) {
            cell->wx.resize(4 * H, in);
            cell->wh.resize(4 * H, H);
            cell->b.resize(4 * H, 1);
        }
    }
    params_.root_repr.resize(two_h, 1);
    params_.arc_head_w.resize(hp_.arc_dim, two_h);
    params_.arc_head_b.resize(hp_.arc_dim, 1);
    params_.arc_dep_w.resize(hp_.arc_dim, two_h);
    params_.arc_dep_b.resize(hp_.arc_dim, 1);
    params_.arc_u.resize(hp_.arc_dim, hp_.arc_dim);
    params_.arc_v.resize(hp_.arc_dim, 1);
    params_.arc_bias.resize(1, 1);
    params_.lab_head_w.resize(hp_.label_dim, two_h);
    params_.lab_head_b.resize(hp_.label_dim, 1);
    params_.lab_dep_w.resize(hp_.label_dim, two_h);
    params_.lab_dep_b.resize(hp_.label_dim, 1);
    params_.lab_u.assign(R, Eigen::MatrixXd(hp_.label_dim, hp_.label_dim));
    params_.lab_uh.resize(R, hp_.label_dim);
    params_.lab_ud.resize(R, hp_.label_dim);
    params_.lab_b.resize(R, 1);

    if (!init) {
        params_.set_zero();
        return;
    }

    auto fill = [&](Eigen::MatrixXd& m, double s) {
        for (long k = 0; k < m.size(); ++k) m.data()[k] = rng_.next_uniform(-s, s);
    };
    auto xavier = [&](Eigen::MatrixXd& m, long fan_in, long fan_out) {
        fill(m, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    };
    fill(params_.word_emb, std::sqrt(3.0 / hp_.word_dim));
    fill(params_.char_emb, std::sqrt(3.0 / hp_.char_dim));
    fill(params_.pos_emb, std::sqrt(3.0 / hp_.pos_dim));
    params_.static_unk.setZero();
    xavier(params_.conv_w, hp_.char_window * hp_.char_dim, hp_.char_dim);
    params_.conv_b.setZero();
    for (int l = 0; l < hp_.layers; ++l) {
        const int in = l == 0 ? input_dim : two_h;
        for (LstmCell* cell : {&params_.fwd[l], &params_.bwd[l]}) {
            xavier(cell->wx, in, H);
            xavier(cell->wh, H, H);
            cell->b.setZero();
            cell->b.col(0).segment(H, H).setOnes();  // open the forget gates at the start
        }
    }
    fill(params_.root_repr, std::sqrt(3.0 / two_h));
    xavier(params_.arc_head_w, two_h, hp_.arc_dim);
    params_.arc_head_b.setZero();
    xavier(params_.arc_dep_w, two_h, hp_.arc_dim);
    params_.arc_dep_b.setZero();
    xavier(params_.arc_u, hp_.arc_dim, hp_.arc_dim);
    params_.arc_v.setZero();
    params_.arc_bias.setZero();
    xavier(params_.lab_head_w, two_h, hp_.label_dim);
    params_.lab_head_b.setZero();
    xavier(params_.lab_dep_w, two_h, hp_.label_dim);
    params_.lab_dep_b.setZero();
    for (Eigen::MatrixXd& u : params_.lab_u) xavier(u, hp_.label_dim, hp_.label_dim);
    params_.lab_uh.setZero();
    params_.lab_ud.setZero();
    params_.lab_b.setZero();
}

Parser::Trace Parser::encode(const DepSentence& s, bool training) const {
    const int n = static_cast<int>(s.size());
    if (n == 0) fail(ErrorKind::invalid_argument, "cannot encode an empty sentence");
    const int H = hp_.hidden_dim;
    const int two_h = 2 * H;
    const int cd = hp_.char_dim;
    const int win = hp_.char_window;
    const int pad = win / 2;
    const int input_dim = hp_.word_dim + cd + hp_.pos_dim + hp_.static_dim;

    Trace t;
    t.tokens.resize(n);
    Eigen::MatrixXd x0(n, input_dim);
    for (int d = 0; d < n; ++d) {
        const DepToken& tok = s.tokens[static_cast<size_t>(d)];
        Trace::Token& tr = t.tokens[static_cast<size_t>(d)];
        tr.word_id = vocab_.word_id(tok.form);
        tr.char_ids = vocab_.char_ids(tok.form);
        if (tr.char_ids.empty()) tr.char_ids.push_back(vocab_.unk_id);
        tr.pos_id = vocab_.pos_id(tok.upos);

        const int len = static_cast<int>(tr.char_ids.size());
        tr.char_mat.resize(len, cd);
        for (int j = 0; j < len; ++j) {
            tr.char_mat.row(j) = params_.char_emb.row(tr.char_ids[static_cast<size_t>(j)]);
        }
        tr.conv_z.resize(len, cd);
        Eigen::VectorXd window(win * cd);
        for (int j = 0; j < len; ++j) {
            for (int k = 0; k < win; ++k) {
                const int idx = j + k - pad;
                if (idx >= 0 && idx < len) {
                    window.segment(k * cd, cd) = tr.char_mat.row(idx).transpose();
                } else {
                    window.segment(k * cd, cd).setZero();
                }
            }
            tr.conv_z.row(j) =
                (params_.conv_w * window + params_.conv_b.col(0)).transpose();
        }
        tr.pool_arg.resize(cd);
        tr.pooled.resize(cd);
        for (int k = 0; k < cd; ++k) {
            int arg = 0;
            for (int j = 1; j < len; ++j) {
                if (tr.conv_z(j, k) > tr.conv_z(arg, k)) arg = j;
            }
            tr.pool_arg[static_cast<size_t>(k)] = arg;
            tr.pooled(k) = tr.conv_z(arg, k);
        }

        int off = 0;
        x0.row(d).segment(off, hp_.word_dim) = params_.word_emb.row(tr.word_id);
        off += hp_.word_dim;
        x0.row(d).segment(off, cd) = tr.pooled.cwiseMax(0.0).transpose();
        off += cd;
        x0.row(d).segment(off, hp_.pos_dim) = params_.pos_emb.row(tr.pos_id);
        off += hp_.pos_dim;
        if (hp_.static_dim > 0) {
            const std::vector<double>* vec = table_.find(tok.form);
            tr.in_table = vec != nullptr;
            if (tr.in_table) {
                tr.static_vec = Eigen::Map<const Eigen::VectorXd>(vec->data(), hp_.static_dim);
            } else {
                tr.static_vec = params_.static_unk.col(0);
            }
            x0.row(d).segment(off, hp_.static_dim) = tr.static_vec.transpose();
        }
    }

    t.layer_in.resize(hp_.layers);
    t.drop_mask.resize(hp_.layers);
    t.fwd.resize(hp_.layers);
    t.bwd.resize(hp_.layers);
    Eigen::MatrixXd cur = std::move(x0);
    for (int l = 0; l < hp_.layers; ++l) {
        if (training && hp_.dropout > 0.0) {
            Eigen::MatrixXd mask(cur.rows(), cur.cols());
            const double keep = 1.0 / (1.0 - hp_.dropout);
            for (long k = 0; k < mask.size(); ++k) {
                mask.data()[k] = rng_.next_double() < hp_.dropout ? 0.0 : keep;
            }
            t.drop_mask[static_cast<size_t>(l)] = mask;
            cur = cur.cwiseProduct(mask);
        }
        t.layer_in[static_cast<size_t>(l)] = cur;

        Eigen::MatrixXd out(n, two_h);
        for (int dir = 0; dir < 2; ++dir) {
            const bool rev = dir == 1;
            const LstmCell& cell =
                rev ? params_.bwd[static_cast<size_t>(l)] : params_.fwd[static_cast<size_t>(l)];
            Trace::Dir& st = rev ? t.bwd[static_cast<size_t>(l)] : t.fwd[static_cast<size_t>(l)];
            st.i.resize(n);
            st.f.resize(n);
            st.g.resize(n);
            st.o.resize(n);
            st.c.resize(n);
            st.h.resize(n);
            Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
            Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
            for (int k = 0; k < n; ++k) {
                const int pos = rev ? n - 1 - k : k;
                const size_t p = static_cast<size_t>(pos);
                lstm_step(cell, cur.row(pos).transpose(), h, c, st.i[p], st.f[p], st.g[p],
                          st.o[p], st.c[p], st.h[p]);
                c = st.c[p];
                h = st.h[p];
            }
            for (int pos = 0; pos < n; ++pos) {
                out.row(pos).segment(rev ? H : 0, H) =
                    st.h[static_cast<size_t>(pos)].transpose();
            }
        }
        cur = std::move(out);
    }

    t.repr.resize(n + 1, two_h);
    t.repr.row(0) = params_.root_repr.col(0).transpose();
    t.repr.bottomRows(n) = cur;

    t.arc_h = t.repr * params_.arc_head_w.transpose();
    t.arc_h.rowwise() += params_.arc_head_b.col(0).transpose();
    t.arc_d = t.repr.bottomRows(n) * params_.arc_dep_w.transpose();
    t.arc_d.rowwise() += params_.arc_dep_b.col(0).transpose();
    t.scores = biaffine_arc_scores(t.arc_h, t.arc_d, params_.arc_u, params_.arc_v.col(0),
                                   params_.arc_bias(0, 0));

    t.lab_h = t.repr * params_.lab_head_w.transpose();
    t.lab_h.rowwise() += params_.lab_head_b.col(0).transpose();
    t.lab_d = t.repr.bottomRows(n) * params_.lab_dep_w.transpose();
    t.lab_d.rowwise() += params_.lab_dep_b.col(0).transpose();
    return t;
}

Eigen::VectorXd Parser::label_vector(const Trace& t, int dep, int head) const {
    const int R = vocab_.label_count();
    const Eigen::VectorXd h = t.lab_h.row(head).transpose();
    const Eigen::VectorXd d = t.lab_d.row(dep - 1).transpose();
    Eigen::VectorXd out(R);
    for (int r = 0; r < R; ++r) {
        out(r) = h.dot(params_.lab_u[static_cast<size_t>(r)] * d) +
                 params_.lab_uh.row(r).dot(h) + params_.lab_ud.row(r).dot(d) +
                 params_.lab_b(r, 0);
    }
    return out;
}

Eigen::MatrixXd Parser::score_arcs(const DepSentence& s) const {
    return encode(s, false).scores;
}

Eigen::MatrixXd Parser::score_labels(const DepSentence& s, const std::vector<int>& heads) const {
    const int n = static_cast<int>(s.size());
    if (static_cast<int>(heads.size()) != n) {
        fail(ErrorKind::invalid_argument, "one head per token is required");
    }
    for (int d = 1; d <= n; ++d) {
        const int h = heads[static_cast<size_t>(d - 1)];
        if (h < 0 || h > n || h == d) {
            fail(ErrorKind::invalid_argument,
                 "head " + std::to_string(h) + " of token " + std::to_string(d) +
                     " is out of range");
        }
    }
    Trace t = encode(s, false);
    Eigen::MatrixXd out(n, vocab_.label_count());
    for (int d = 1; d <= n; ++d) {
        out.row(d - 1) = label_vector(t, d, heads[static_cast<size_t>(d - 1)]).transpose();
    }
    return out;
}

namespace {

// One direction of one layer.  dh_out rows carry the loss gradient of each
// position's hidden state; dx accumulates gradients of the layer input.
void lstm_backward(const LstmCell& cell, const Parser::Trace::Dir& st,
                   const Eigen::MatrixXd& xin, const Eigen::MatrixXd& dh_out, bool reverse,
                   LstmCell& grad, Eigen::MatrixXd& dx) {
    const int n = static_cast<int>(xin.rows());
    const int H = static_cast<int>(cell.wh.cols());
    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(H);
    for (int k = n - 1; k >= 0; --k) {
        const int t = reverse ? n - 1 - k : k;
        const size_t tp = static_cast<size_t>(reverse ? t + 1 : t - 1);
        const bool has_prev = k > 0;
        const Eigen::VectorXd& cprev = has_prev ? st.c[tp] : zero;
        const Eigen::VectorXd& hprev = has_prev ? st.h[tp] : zero;
        const size_t ti = static_cast<size_t>(t);

        const Eigen::VectorXd dh = dh_out.row(t).transpose() + dh_next;
        const Eigen::VectorXd tc = st.c[ti].array().tanh().matrix();
        const Eigen::VectorXd dgo = dh.cwiseProduct(tc);
        const Eigen::VectorXd dct =
            dh.cwiseProduct(st.o[ti])
                .cwiseProduct((1.0 - tc.array().square()).matrix()) +
            dc_next;
        const Eigen::VectorXd dgi = dct.cwiseProduct(st.g[ti]);
        const Eigen::VectorXd dgg = dct.cwiseProduct(st.i[ti]);
        const Eigen::VectorXd dgf = dct.cwiseProduct(cprev);
        dc_next = dct.cwiseProduct(st.f[ti]);

        Eigen::VectorXd da(4 * H);
        da.segment(0, H) =
            dgi.cwiseProduct(st.i[ti]).cwiseProduct((1.0 - st.i[ti].array()).matrix());
        da.segment(H, H) =
            dgf.cwiseProduct(st.f[ti]).cwiseProduct((1.0 - st.f[ti].array()).matrix());
        da.segment(2 * H, H) = dgg.cwiseProduct((1.0 - st.g[ti].array().square()).matrix());
        da.segment(3 * H, H) =
            dgo.cwiseProduct(st.o[ti]).cwiseProduct((1.0 - st.o[ti].array()).matrix());

        grad.wx += da * xin.row(t);
        grad.wh += da * hprev.transpose();
        grad.b.col(0) += da;
        dx.row(t) += (cell.wx.transpose() * da).transpose();
        dh_next = cell.wh.transpose() * da;
    }
}

}  // namespace

double Parser::backward(const DepSentence& s, const Trace& t, double inv_tokens,
                        ParserParams& g) const {
    const int n = static_cast<int>(s.size());
    const int R = vocab_.label_count();
    const int two_h = 2 * hp_.hidden_dim;
    const int cd = hp_.char_dim;
    const int win = hp_.char_window;
    const int pad = win / 2;

    double ce_sum = 0.0;
    Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(n + 1, n);
    Eigen::MatrixXd dlab_h = Eigen::MatrixXd::Zero(n + 1, hp_.label_dim);
    Eigen::MatrixXd dlab_d = Eigen::MatrixXd::Zero(n, hp_.label_dim);
    for (int d = 1; d <= n; ++d) {
        const DepToken& tok = s.tokens[static_cast<size_t>(d - 1)];
        const int gold_head = tok.head;
        const int gold_rel = vocab_.label_id(tok.deprel);

        Eigen::VectorXd p = softmax(t.scores.col(d - 1));
        ce_sum += -std::log(p(gold_head));
        p(gold_head) -= 1.0;
        ds.col(d - 1) = p * inv_tokens;

        Eigen::VectorXd q = softmax(label_vector(t, d, gold_head));
        ce_sum += -std::log(q(gold_rel));
        q(gold_rel) -= 1.0;
        q *= inv_tokens;

        const Eigen::VectorXd hv = t.lab_h.row(gold_head).transpose();
        const Eigen::VectorXd dv = t.lab_d.row(d - 1).transpose();
        for (int r = 0; r < R; ++r) {
            const double gr = q(r);
            const Eigen::MatrixXd& ur = params_.lab_u[static_cast<size_t>(r)];
            g.lab_u[static_cast<size_t>(r)] += gr * (hv * dv.transpose());
            g.lab_uh.row(r) += gr * hv.transpose();
            g.lab_ud.row(r) += gr * dv.transpose();
            g.lab_b(r, 0) += gr;
            dlab_h.row(gold_head) +=
                gr * (ur * dv + params_.lab_uh.row(r).transpose()).transpose();
            dlab_d.row(d - 1) +=
                gr * (ur.transpose() * hv + params_.lab_ud.row(r).transpose()).transpose();
        }
    }

    // arc scorer
    Eigen::MatrixXd dh = ds * t.arc_d * params_.arc_u.transpose();
    const Eigen::VectorXd row_sum = ds.rowwise().sum();
    dh += row_sum * params_.arc_v.col(0).transpose();
    Eigen::MatrixXd dd = ds.transpose() * t.arc_h * params_.arc_u;
    g.arc_u += t.arc_h.transpose() * ds * t.arc_d;
    g.arc_v.col(0) += t.arc_h.transpose() * row_sum;
    g.arc_bias(0, 0) += ds.sum();

    // projections back to the contextual representations
    Eigen::MatrixXd dr = Eigen::MatrixXd::Zero(n + 1, two_h);
    g.arc_head_w += dh.transpose() * t.repr;
    g.arc_head_b.col(0) += dh.colwise().sum().transpose();
    dr += dh * params_.arc_head_w;
    g.arc_dep_w += dd.transpose() * t.repr.bottomRows(n);
    g.arc_dep_b.col(0) += dd.colwise().sum().transpose();
    dr.bottomRows(n) += dd * params_.arc_dep_w;
    g.lab_head_w += dlab_h.transpose() * t.repr;
    g.lab_head_b.col(0) += dlab_h.colwise().sum().transpose();
    dr += dlab_h * params_.lab_head_w;
    g.lab_dep_w += dlab_d.transpose() * t.repr.bottomRows(n);
    g.lab_dep_b.col(0) += dlab_d.colwise().sum().transpose();
    dr.bottomRows(n) += dlab_d * params_.lab_dep_w;

    g.root_repr.col(0) += dr.row(0).transpose();

    Eigen::MatrixXd dout = dr.bottomRows(n);
    for (int l = hp_.layers - 1; l >= 0; --l) {
        const size_t li = static_cast<size_t>(l);
        const Eigen::MatrixXd& xin = t.layer_in[li];
        Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, xin.cols());
        lstm_backward(params_.fwd[li], t.fwd[li], xin, dout.leftCols(hp_.hidden_dim), false,
                      g.fwd[li], dx);
        lstm_backward(params_.bwd[li], t.bwd[li], xin, dout.rightCols(hp_.hidden_dim), true,
                      g.bwd[li], dx);
        if (t.drop_mask[li].size() > 0) dx = dx.cwiseProduct(t.drop_mask[li]);
        dout = std::move(dx);
    }

    // embedding channels
    for (int d = 0; d < n; ++d) {
        const Trace::Token& tr = t.tokens[static_cast<size_t>(d)];
        int off = 0;
        g.word_emb.row(tr.word_id) += dout.row(d).segment(off, hp_.word_dim);
        off += hp_.word_dim;

        const Eigen::VectorXd dfeat = dout.row(d).segment(off, cd).transpose();
        off += cd;
        const int len = static_cast<int>(tr.char_ids.size());
        Eigen::MatrixXd dchar = Eigen::MatrixXd::Zero(len, cd);
        Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(len, cd);
        for (int k = 0; k < cd; ++k) {
            if (tr.pooled(k) > 0.0 && dfeat(k) != 0.0) {
                dz(tr.pool_arg[static_cast<size_t>(k)], k) += dfeat(k);
            }
        }
        Eigen::VectorXd window(win * cd);
        for (int j = 0; j < len; ++j) {
            if (dz.row(j).isZero(0.0)) continue;
            const Eigen::VectorXd dzj = dz.row(j).transpose();
            for (int k = 0; k < win; ++k) {
                const int idx = j + k - pad;
                if (idx >= 0 && idx < len) {
                    window.segment(k * cd, cd) = tr.char_mat.row(idx).transpose();
                } else {
                    window.segment(k * cd, cd).setZero();
                }
            }
            g.conv_w += dzj * window.transpose();
            g.conv_b.col(0) += dzj;
            const Eigen::VectorXd dwin = params_.conv_w.transpose() * dzj;
            for (int k = 0; k < win; ++k) {
                const int idx = j + k - pad;
                if (idx >= 0 && idx < len) {
                    dchar.row(idx) += dwin.segment(k * cd, cd).transpose();
                }
            }
        }
        for (int j = 0; j < len; ++j) {
            g.char_emb.row(tr.char_ids[static_cast<size_t>(j)]) += dchar.row(j);
        }

        g.pos_emb.row(tr.pos_id) += dout.row(d).segment(off, hp_.pos_dim);
        off += hp_.pos_dim;
        if (hp_.static_dim > 0 && !tr.in_table) {
            g.static_unk.col(0) += dout.row(d).segment(off, hp_.static_dim).transpose();
        }
    }
    return ce_sum;
}

double Parser::loss_and_gradients(const std::vector<const DepSentence*>& batch,
                                  ParserParams& grads) {
    if (batch.empty()) fail(ErrorKind::invalid_argument, "empty batch");
    long total_tokens = 0;
    for (const DepSentence* s : batch) {
        const int n = static_cast<int>(s->size());
        if (n == 0) fail(ErrorKind::invalid_argument, "cannot train on an empty sentence");
        total_tokens += n;
        for (const DepToken& tok : s->tokens) {
            if (tok.head < 0 || tok.head > n || tok.head == tok.id) {
                fail(ErrorKind::invalid_argument,
                     "token " + std::to_string(tok.id) + " has head " +
                         std::to_string(tok.head) + " outside the sentence");
            }
            if (vocab_.label_id(tok.deprel) >= vocab_.label_count()) {
                fail(ErrorKind::invalid_argument,
                     "relation '" + tok.deprel + "' is not in the vocabulary");
            }
        }
    }
    grads = params_;
    grads.set_zero();
    const double inv = 1.0 / static_cast<double>(total_tokens);
    double ce = 0.0;
    for (const DepSentence* s : batch) {
        Trace t = encode(*s, true);
        ce += backward(*s, t, inv, grads);
    }
    const double mean = ce * inv;
    if (!std::isfinite(mean)) {
        fail(ErrorKind::numeric, "loss is not finite; training diverged");
    }
    return mean;
}

DepSentence Parser::predict(const DepSentence& s, bool single_root) const {
    if (s.size() == 0) return s;
    const int n = static_cast<int>(s.size());
    Trace t = encode(s, false);
    const std::vector<int> heads = chu_liu_edmonds(t.scores, single_root);
    Eigen::MatrixXd lab(n, vocab_.label_count());
    for (int d = 1; d <= n; ++d) {
        lab.row(d - 1) = label_vector(t, d, heads[static_cast<size_t>(d - 1)]).transpose();
    }
    const std::vector<int> rels = assign_labels(lab);
    DepSentence out = s;
    for (int d = 0; d < n; ++d) {
        out.tokens[static_cast<size_t>(d)].head = heads[static_cast<size_t>(d)];
        out.tokens[static_cast<size_t>(d)].deprel =
            vocab_.label_name(rels[static_cast<size_t>(d)]);
    }
    return out;
}

TrainResult Parser::train(const std::vector<DepSentence>& train_set,
                          const std::vector<DepSentence>& dev_set,
                          const TrainOptions& options) {
    if (train_set.empty()) fail(ErrorKind::invalid_argument, "training split is empty");
    if (dev_set.empty()) fail(ErrorKind::invalid_argument, "development split is empty");

    // Length buckets keep batch contents fixed; only the batch order is
    // reshuffled each epoch.
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (train_set[a].size() != train_set[b].size()) {
            return train_set[a].size() < train_set[b].size();
        }
        return a < b;
    });
    std::vector<std::vector<const DepSentence*>> batches;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(hp_.batch_size)) {
        std::vector<const DepSentence*> batch;
        for (size_t j = i; j < order.size() && j < i + static_cast<size_t>(hp_.batch_size);
             ++j) {
            batch.push_back(&train_set[order[j]]);
        }
        batches.push_back(std::move(batch));
    }
    std::vector<size_t> batch_order(batches.size());
    std::iota(batch_order.begin(), batch_order.end(), size_t{0});

    TrainResult res;
    ParserParams best = params_;
    ParserParams grads;
    double best_las = -1.0;
    double best_uas = 0.0;
    int stale = 0;
    long step = 0;
    for (int epoch = 1; epoch <= hp_.max_epochs; ++epoch) {
        rng_.shuffle(batch_order);
        double loss_sum = 0.0;
        long token_sum = 0;
        double lr = hp_.learning_rate;
        for (size_t bi : batch_order) {
            lr = hp_.learning_rate *
                 std::pow(hp_.decay_rate,
                          static_cast<double>(step) / static_cast<double>(hp_.decay_steps));
            const double loss = loss_and_gradients(batches[bi], grads);
            auto ps = params_.tensors();
            auto gs = grads.tensors();
            for (size_t i = 0; i < ps.size(); ++i) {
                *ps[i].second -= lr * *gs[i].second;
            }
            ++step;
            long btok = 0;
            for (const DepSentence* s : batches[bi]) btok += static_cast<long>(s->size());
            loss_sum += loss * static_cast<double>(btok);
            token_sum += btok;
        }

        std::vector<DepSentence> pred;
        pred.reserve(dev_set.size());
        for (const DepSentence& d : dev_set) pred.push_back(predict(d, options.single_root));
        const AttachmentScores sc = evaluate(dev_set, pred, options.exclude_punct);

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(token_sum);
        log.dev_uas = sc.uas;
        log.dev_las = sc.las;
        log.learning_rate = lr;
        res.epochs.push_back(log);

        if (sc.las > best_las) {
            best_las = sc.las;
            best_uas = sc.uas;
            best = params_;
            res.best_epoch = epoch;
            stale = 0;
        } else if (++stale > hp_.patience) {
            break;
        }
    }
    params_ = best;
    res.best_dev_las = best_las;
    res.best_dev_uas = best_uas;
    res.steps = step;
    return res;
}

GridResult grid_search(const Vocabulary& vocab, const EmbeddingTable& table,
                       const Hyperparams& base, const GridSpec& spec,
                       const std::vector<DepSentence>& train_set,
                       const std::vector<DepSentence>& dev_set, const TrainOptions& options) {
    if (spec.learning_rates.empty() || spec.decay_rates.empty() || spec.decay_steps.empty()) {
        fail(ErrorKind::invalid_argument, "every grid axis needs at least one value");
    }
    if (!(spec.budget_fraction > 0.0 && spec.budget_fraction <= 1.0)) {
        fail(ErrorKind::invalid_argument, "budget fraction must lie in (0, 1]");
    }
    Hyperparams budget = base;
    budget.max_epochs = std::max(
        1, static_cast<int>(static_cast<double>(base.max_epochs) * spec.budget_fraction));
    budget.patience = base.patience / 2;

    GridResult res;
    res.best = base;
    double best = -1.0;
    for (double lr : spec.learning_rates) {
        for (double dr : spec.decay_rates) {
            for (int ds : spec.decay_steps) {
                Hyperparams hp = budget;
                hp.learning_rate = lr;
                hp.decay_rate = dr;
                hp.decay_steps = ds;
                Parser parser(vocab, table, hp);
                const TrainResult tr = parser.train(train_set, dev_set, options);
                res.log.push_back({lr, dr, ds, tr.best_dev_las});
                ++res.runs;
                if (tr.best_dev_las > best) {
                    best = tr.best_dev_las;
                    res.best = base;
                    res.best.learning_rate = lr;
                    res.best.decay_rate = dr;
                    res.best.decay_steps = ds;
                }
            }
        }
    }
    res.best_dev_las = best;
    return res;
}

namespace {

constexpr char kMagic[4] = {'D', 'P', 'L', 'B'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void put_u32(std::ostream& os, uint32_t v) { put_bytes(os, &v, sizeof(v)); }
void put_u64(std::ostream& os, uint64_t v) { put_bytes(os, &v, sizeof(v)); }
void put_i64(std::ostream& os, int64_t v) { put_bytes(os, &v, sizeof(v)); }
void put_f64(std::ostream& os, double v) { put_bytes(os, &v, sizeof(v)); }
void put_str(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    put_bytes(os, s.data(), s.size());
}

void get_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) fail(ErrorKind::parse, "checkpoint is truncated");
}
uint32_t get_u32(std::istream& is) { uint32_t v; get_bytes(is, &v, sizeof(v)); return v; }
uint64_t get_u64(std::istream& is) { uint64_t v; get_bytes(is, &v, sizeof(v)); return v; }
int64_t get_i64(std::istream& is) { int64_t v; get_bytes(is, &v, sizeof(v)); return v; }
double get_f64(std::istream& is) { double v; get_bytes(is, &v, sizeof(v)); return v; }
std::string get_str(std::istream& is) {
    const uint64_t n = get_u64(is);
    if (n > (1ull << 32)) fail(ErrorKind::parse, "checkpoint string length is implausible");
    std::string s(n, '\0');
    if (n > 0) get_bytes(is, s.data(), n);
    return s;
}

}  // namespace

void Parser::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::io, "cannot write checkpoint: " + path);
    put_bytes(os, kMagic, 4);
    put_u32(os, kVersion);

    put_i64(os, hp_.word_dim);
    put_i64(os, hp_.char_dim);
    put_i64(os, hp_.pos_dim);
    put_i64(os, hp_.static_dim);
    put_i64(os, hp_.hidden_dim);
    put_i64(os, hp_.layers);
    put_i64(os, hp_.arc_dim);
    put_i64(os, hp_.label_dim);
    put_i64(os, hp_.char_window);
    put_i64(os, hp_.decay_steps);
    put_i64(os, hp_.max_epochs);
    put_i64(os, hp_.patience);
    put_i64(os, hp_.batch_size);
    put_f64(os, hp_.learning_rate);
    put_f64(os, hp_.decay_rate);
    put_f64(os, hp_.dropout);
    put_u64(os, hp_.seed);

    put_i64(os, vocab_.min_frequency);
    put_u64(os, vocab_.word_forms.size());
    for (const std::string& w : vocab_.word_forms) put_str(os, w);
    put_u64(os, vocab_.chars.size());
    for (uint32_t c : vocab_.chars) put_u32(os, c);
    put_u64(os, vocab_.pos_names.size());
    for (const std::string& p : vocab_.pos_names) put_str(os, p);
    put_u64(os, vocab_.label_names.size());
    for (const std::string& l : vocab_.label_names) put_str(os, l);
    put_u64(os, vocab_.fingerprint());

    put_i64(os, hp_.static_dim > 0 ? table_.dim() : 0);
    put_u64(os, hp_.static_dim > 0 ? table_.fingerprint() : 0);

    const auto ts = params_.tensors();
    put_u64(os, ts.size());
    for (const auto& [name, m] : ts) {
        put_str(os, name);
        put_u64(os, static_cast<uint64_t>(m->rows()));
        put_u64(os, static_cast<uint64_t>(m->cols()));
        put_bytes(os, m->data(), sizeof(double) * static_cast<size_t>(m->size()));
    }
    os.flush();
    if (!os) fail(ErrorKind::io, "failed writing checkpoint: " + path);
}

Parser Parser::load(const std::string& path, EmbeddingTable table) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::io, "cannot open checkpoint: " + path);
    char magic[4];
    get_bytes(is, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        fail(ErrorKind::parse, "not a parser checkpoint: " + path);
    }
    if (get_u32(is) != kVersion) fail(ErrorKind::parse, "unsupported checkpoint version");

    Hyperparams hp;
    hp.word_dim = static_cast<int>(get_i64(is));
    hp.char_dim = static_cast<int>(get_i64(is));
    hp.pos_dim = static_cast<int>(get_i64(is));
    hp.static_dim = static_cast<int>(get_i64(is));
    hp.hidden_dim = static_cast<int>(get_i64(is));
    hp.layers = static_cast<int>(get_i64(is));
    hp.arc_dim = static_cast<int>(get_i64(is));
    hp.label_dim = static_cast<int>(get_i64(is));
    hp.char_window = static_cast<int>(get_i64(is));
    hp.decay_steps = static_cast<int>(get_i64(is));
    hp.max_epochs = static_cast<int>(get_i64(is));
    hp.patience = static_cast<int>(get_i64(is));
    hp.batch_size = static_cast<int>(get_i64(is));
    hp.learning_rate = get_f64(is);
    hp.decay_rate = get_f64(is);
    hp.dropout = get_f64(is);
    hp.seed = get_u64(is);
    validate_hyperparams(hp);

    Vocabulary vocab;
    vocab.min_frequency = static_cast<int>(get_i64(is));
    const uint64_t n_words = get_u64(is);
    for (uint64_t i = 0; i < n_words; ++i) {
        vocab.word_forms.push_back(get_str(is));
        vocab.word_index.emplace(vocab.word_forms.back(), static_cast<int>(i));
    }
    const uint64_t n_chars = get_u64(is);
    for (uint64_t i = 0; i < n_chars; ++i) {
        vocab.chars.push_back(get_u32(is));
        vocab.char_index.emplace(vocab.chars.back(), static_cast<int>(i));
    }
    const uint64_t n_pos = get_u64(is);
    for (uint64_t i = 0; i < n_pos; ++i) {
        vocab.pos_names.push_back(get_str(is));
        vocab.pos_index.emplace(vocab.pos_names.back(), static_cast<int>(i));
    }
    const uint64_t n_lab = get_u64(is);
    for (uint64_t i = 0; i < n_lab; ++i) {
        vocab.label_names.push_back(get_str(is));
        vocab.label_index.emplace(vocab.label_names.back(), static_cast<int>(i));
    }
    if (get_u64(is) != vocab.fingerprint()) {
        fail(ErrorKind::parse, "checkpoint vocabulary is corrupt");
    }

    const int64_t table_dim = get_i64(is);
    const uint64_t table_fp = get_u64(is);
    if (hp.static_dim > 0) {
        if (table.dim() != table_dim || table.fingerprint() != table_fp) {
            fail(ErrorKind::state,
                 "checkpoint was trained with a different embedding table");
        }
    }

    Parser parser(std::move(vocab), std::move(table), hp, false);
    const auto ts = parser.params_.tensors();
    if (get_u64(is) != ts.size()) fail(ErrorKind::parse, "checkpoint tensor count mismatch");
    for (const auto& [name, m] : ts) {
        const std::string got = get_str(is);
        if (got != name) {
            fail(ErrorKind::parse, "checkpoint tensor '" + got + "' where '" + name +
                                       "' was expected");
        }
        const uint64_t rows = get_u64(is);
        const uint64_t cols = get_u64(is);
        if (rows != static_cast<uint64_t>(m->rows()) ||
            cols != static_cast<uint64_t>(m->cols())) {
            fail(ErrorKind::parse, "checkpoint tensor '" + name + "' has the wrong shape");
        }
        get_bytes(is, m->data(), sizeof(double) * static_cast<size_t>(m->size()));
    }
    return parser;
}

}  // namespace deplab
