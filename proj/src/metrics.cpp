#include "deplab/metrics.hpp"

#include <cmath>
#include <unordered_map>

#include "deplab/common.hpp"

namespace deplab {

AttachmentScores evaluate(const std::vector<DepSentence>& gold,
                          const std::vector<DepSentence>& predicted,
                          bool exclude_punct) {
    if (gold.size() != predicted.size()) {
        fail(ErrorKind::invalid_argument,
             "gold has " + std::to_string(gold.size()) + " sentences, predictions have " +
                 std::to_string(predicted.size()));
    }
    AttachmentScores s;
    for (size_t i = 0; i < gold.size(); ++i) {
        const DepSentence& g = gold[i];
        const DepSentence& p = predicted[i];
        if (g.size() != p.size()) {
            fail(ErrorKind::invalid_argument,
                 "sentence " + std::to_string(i + 1) + ": token counts differ (" +
                     std::to_string(g.size()) + " vs " + std::to_string(p.size()) + ")");
        }
        for (size_t j = 0; j < g.tokens.size(); ++j) {
            const DepToken& gt = g.tokens[j];
            const DepToken& pt = p.tokens[j];
            if (gt.form != pt.form) {
                fail(ErrorKind::invalid_argument,
                     "sentence " + std::to_string(i + 1) + ", token " + std::to_string(j + 1) +
                         ": forms differ ('" + gt.form + "' vs '" + pt.form + "')");
            }
            if (exclude_punct && gt.upos == "PUNCT") continue;
            ++s.scored_tokens;
            if (gt.head == pt.head) {
                ++s.correct_heads;
                if (gt.deprel == pt.deprel) ++s.correct_labeled;
            }
        }
    }
    if (s.scored_tokens == 0) {
        fail(ErrorKind::numeric, "no tokens left to score");
    }
    s.uas = 100.0 * static_cast<double>(s.correct_heads) / static_cast<double>(s.scored_tokens);
    s.las = 100.0 * static_cast<double>(s.correct_labeled) / static_cast<double>(s.scored_tokens);
    return s;
}

double relative_error_rate(double baseline, double comparison) {
    if (!(baseline >= 0.0 && baseline <= 100.0) || !(comparison >= 0.0 && comparison <= 100.0)) {
        fail(ErrorKind::invalid_argument, "accuracies must lie in [0, 100]");
    }
    if (baseline == 100.0) {
        fail(ErrorKind::numeric, "baseline has no errors to reduce");
    }
    return (baseline - comparison) / (100.0 - baseline);
}

double mattr(const std::vector<std::string>& tokens, int window) {
    if (window < 1) fail(ErrorKind::invalid_argument, "window must be positive");
    if (tokens.empty()) fail(ErrorKind::invalid_argument, "cannot score an empty text");

    const size_t n = tokens.size();
    const size_t w = static_cast<size_t>(window);
    std::unordered_map<std::string, int> counts;

    if (n <= w) {
        for (const std::string& t : tokens) ++counts[t];
        return static_cast<double>(counts.size()) / static_cast<double>(n);
    }

    for (size_t i = 0; i < w; ++i) ++counts[tokens[i]];
    double sum = static_cast<double>(counts.size());
    for (size_t i = w; i < n; ++i) {
        auto it = counts.find(tokens[i - w]);
        if (--it->second == 0) counts.erase(it);
        ++counts[tokens[i]];
        sum += static_cast<double>(counts.size());
    }
    const double windows = static_cast<double>(n - w + 1);
    return sum / (windows * static_cast<double>(w));
}

std::vector<double> zscores(const std::vector<double>& values) {
    const size_t n = values.size();
    if (n < 2) fail(ErrorKind::invalid_argument, "need at least two values to standardize");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0 || !std::isfinite(sd)) {
        fail(ErrorKind::numeric, "values have no spread");
    }
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = (values[i] - mean) / sd;
    return out;
}

}  // namespace deplab
