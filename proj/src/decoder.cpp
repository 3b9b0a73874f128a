#include "deplab/decoder.hpp"

#include <cmath>
#include <limits>

#include "deplab/common.hpp"

namespace deplab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Maximum arborescence rooted at node 0 of the complete digraph given by
// w (m x m, w(h, d) scores arc h -> d, -inf marks a forbidden arc).
// Returns per-node heads with head[0] = -1.
std::vector<int> solve(const Eigen::MatrixXd& w) {
    const int m = static_cast<int>(w.rows());
    std::vector<int> best(m, -1);
    for (int d = 1; d < m; ++d) {
        double best_score = kNegInf;
        for (int h = 0; h < m; ++h) {
            if (h == d) continue;
            if (w(h, d) > best_score) {
                best_score = w(h, d);
                best[d] = h;
            }
        }
        if (best[d] < 0) fail(ErrorKind::numeric, "node has no permitted head");
    }

    // Walk head chains; every chain ends at the root or loops.
    std::vector<int> state(m, 0);  // 0 unvisited, 1 on current path, 2 done
    state[0] = 2;
    std::vector<int> cycle;
    for (int start = 1; start < m && cycle.empty(); ++start) {
        int v = start;
        while (state[v] == 0) {
            state[v] = 1;
            v = best[v];
        }
        if (state[v] == 1) {  // found a loop through v
            int u = v;
            do {
                cycle.push_back(u);
                u = best[u];
            } while (u != v);
        }
        for (int u = start; state[u] == 1; u = best[u]) state[u] = 2;
    }
    if (cycle.empty()) return best;

    std::vector<bool> in_cycle(m, false);
    for (int v : cycle) in_cycle[v] = true;

    // Contract the cycle into one node placed at the end of the new index
    // space; the root keeps index 0.
    std::vector<int> new2old;
    std::vector<int> old2new(m, -1);
    for (int v = 0; v < m; ++v) {
        if (!in_cycle[v]) {
            old2new[v] = static_cast<int>(new2old.size());
            new2old.push_back(v);
        }
    }
    const int c = static_cast<int>(new2old.size());
    const int mm = c + 1;

    Eigen::MatrixXd cw = Eigen::MatrixXd::Constant(mm, mm, kNegInf);
    std::vector<int> enter_choice(mm, -1);  // cycle node replaced when h' -> c is used
    std::vector<int> leave_choice(mm, -1);  // cycle node used when c -> d' is used
    for (int hn = 0; hn < c; ++hn) {
        const int h = new2old[hn];
        for (int dn = 0; dn < c; ++dn) {
            if (hn != dn) cw(hn, dn) = w(h, new2old[dn]);
        }
        // arcs into the cycle, scored relative to the arc they replace
        for (int d : cycle) {
            if (!std::isfinite(w(h, d))) continue;
            double adj = w(h, d) - w(best[d], d);
            if (adj > cw(hn, c)) {
                cw(hn, c) = adj;
                enter_choice[hn] = d;
            }
        }
    }
    for (int dn = 0; dn < c; ++dn) {
        const int d = new2old[dn];
        for (int h : cycle) {
            if (w(h, d) > cw(c, dn)) {
                cw(c, dn) = w(h, d);
                leave_choice[dn] = h;
            }
        }
    }

    std::vector<int> sub = solve(cw);

    std::vector<int> heads(m, -1);
    for (int dn = 1; dn < c; ++dn) {
        const int d = new2old[dn];
        heads[d] = sub[dn] == c ? leave_choice[dn] : new2old[sub[dn]];
    }
    for (int d : cycle) heads[d] = best[d];
    const int hc = sub[c];
    heads[enter_choice[hc]] = new2old[hc];
    return heads;
}

void check_scores(const Eigen::MatrixXd& scores) {
    if (scores.cols() < 1 || scores.rows() != scores.cols() + 1) {
        fail(ErrorKind::invalid_argument, "score matrix must be (n+1) x n with n >= 1");
    }
    if (!scores.allFinite()) {
        fail(ErrorKind::invalid_argument, "arc scores must be finite");
    }
}

Eigen::MatrixXd full_matrix(const Eigen::MatrixXd& scores) {
    const int n = static_cast<int>(scores.cols());
    Eigen::MatrixXd w = Eigen::MatrixXd::Constant(n + 1, n + 1, kNegInf);
    for (int h = 0; h <= n; ++h) {
        for (int d = 1; d <= n; ++d) {
            if (h != d) w(h, d) = scores(h, d - 1);
        }
    }
    return w;
}

std::vector<int> strip_root(const std::vector<int>& heads) {
    return std::vector<int>(heads.begin() + 1, heads.end());
}

}  // namespace

double tree_score(const Eigen::MatrixXd& scores, const std::vector<int>& heads) {
    if (static_cast<int>(heads.size()) != scores.cols()) {
        fail(ErrorKind::invalid_argument, "head count does not match score matrix");
    }
    double total = 0.0;
    for (int d = 1; d <= static_cast<int>(heads.size()); ++d) {
        total += scores(heads[d - 1], d - 1);
    }
    return total;
}

std::vector<int> chu_liu_edmonds(const Eigen::MatrixXd& scores, bool single_root) {
    check_scores(scores);
    const int n = static_cast<int>(scores.cols());
    Eigen::MatrixXd w = full_matrix(scores);
    if (!single_root || n == 1) return strip_root(solve(w));

    std::vector<int> best_heads;
    double best_total = kNegInf;
    for (int r = 1; r <= n; ++r) {
        Eigen::MatrixXd wr = w;
        for (int d = 1; d <= n; ++d) {
            if (d != r) wr(0, d) = kNegInf;
        }
        std::vector<int> heads = strip_root(solve(wr));
        double total = tree_score(scores, heads);
        if (total > best_total || (total == best_total && heads < best_heads)) {
            best_total = total;
            best_heads = std::move(heads);
        }
    }
    return best_heads;
}

std::vector<int> brute_force_mst(const Eigen::MatrixXd& scores, bool single_root) {
    check_scores(scores);
    const int n = static_cast<int>(scores.cols());
    if (n > 8) fail(ErrorKind::invalid_argument, "exhaustive decoding is limited to n <= 8");

    std::vector<int> heads(n, 0);
    std::vector<int> best_heads;
    double best_total = kNegInf;
    while (true) {
        bool valid = true;
        int root_children = 0;
        for (int d = 1; d <= n && valid; ++d) {
            if (heads[d - 1] == d) valid = false;
            if (heads[d - 1] == 0) ++root_children;
        }
        if (valid && single_root && root_children != 1) valid = false;
        if (valid) {
            for (int d = 1; d <= n && valid; ++d) {  // every token must reach the root
                int v = d, steps = 0;
                while (v != 0 && steps <= n) {
                    v = heads[v - 1];
                    ++steps;
                }
                if (v != 0) valid = false;
            }
        }
        if (valid) {
            double total = tree_score(scores, heads);
            if (total > best_total) {
                best_total = total;
                best_heads = heads;
            }
        }
        int i = n - 1;
        while (i >= 0 && heads[i] == n) heads[i--] = 0;
        if (i < 0) break;
        ++heads[i];
    }
    if (best_heads.empty()) fail(ErrorKind::numeric, "no valid tree exists");
    return best_heads;
}

std::vector<int> assign_labels(const Eigen::MatrixXd& label_scores) {
    if (label_scores.cols() < 1) {
        fail(ErrorKind::invalid_argument, "label score matrix needs at least one label");
    }
    std::vector<int> out(label_scores.rows());
    for (int i = 0; i < label_scores.rows(); ++i) {
        int best = 0;
        for (int r = 1; r < label_scores.cols(); ++r) {
            if (label_scores(i, r) > label_scores(i, best)) best = r;
        }
        out[i] = best;
    }
    return out;
}

}  // namespace deplab
