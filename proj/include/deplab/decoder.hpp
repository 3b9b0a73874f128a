#pragma once

#include <Eigen/Dense>
#include <vector>

namespace deplab {

// scores is (n+1) x n: scores(h, d-1) is the score of attaching token d
// (1-based) to head h, where h = 0 is the artificial root.  Returns the
// head of each token, so result[d-1] is in [0, n].  With single_root the
// root has exactly one dependent.  Tie-breaking is deterministic: the
// lowest head index wins at each choice, and among equal-score candidate
// roots the lexicographically smallest head sequence wins.
std::vector<int> chu_liu_edmonds(const Eigen::MatrixXd& scores, bool single_root);

// Exhaustive reference decoder, n <= 8.
std::vector<int> brute_force_mst(const Eigen::MatrixXd& scores, bool single_root);

// label_scores is n x R; picks the best label per token, ties to the
// lowest label id.
std::vector<int> assign_labels(const Eigen::MatrixXd& label_scores);

// Sum of scores(head[d-1], d-1) over tokens.
double tree_score(const Eigen::MatrixXd& scores, const std::vector<int>& heads);

}  // namespace deplab
