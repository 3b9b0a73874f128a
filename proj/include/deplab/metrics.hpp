#pragma once

#include <string>
#include <vector>

#include "deplab/conllu.hpp"

namespace deplab {

struct AttachmentScores {
    double uas = 0.0;  // percent
    double las = 0.0;  // percent
    long scored_tokens = 0;
    long correct_heads = 0;
    long correct_labeled = 0;
};

// Micro-averaged attachment accuracy pooled over all scored tokens.
// Sentences must align one-to-one with identical token forms; otherwise
// this is an error, not a zero.  With exclude_punct, tokens whose UPOS is
// PUNCT are skipped.
AttachmentScores evaluate(const std::vector<DepSentence>& gold,
                          const std::vector<DepSentence>& predicted,
                          bool exclude_punct);

// (baseline - comparison) / (100 - baseline), both accuracies in [0, 100].
// Positive means the comparison model makes more errors than the baseline.
double relative_error_rate(double baseline, double comparison);

// Moving-average type-token ratio over windows of `window` tokens.  Texts
// shorter than the window are scored as a single whole-text window.
double mattr(const std::vector<std::string>& tokens, int window);

// Standardizes with the sample (n-1) standard deviation.
std::vector<double> zscores(const std::vector<double>& values);

}  // namespace deplab
