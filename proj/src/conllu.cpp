#include "deplab/conllu.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "deplab/common.hpp"

namespace deplab {

namespace {

bool is_integer(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
    }
    return true;
}

[[noreturn]] void parse_fail(size_t line_no, const std::string& msg) {
    fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + msg);
}

void finish_sentence(DepSentence& sent, size_t line_no, std::vector<DepSentence>& out) {
    if (sent.tokens.empty()) return;
    int n = sent.size();
    for (const DepToken& t : sent.tokens) {
        if (t.head > n) {
            parse_fail(line_no, "HEAD " + std::to_string(t.head) + " exceeds sentence length " +
                                    std::to_string(n) + " (token " + std::to_string(t.id) + ")");
        }
    }
    out.push_back(std::move(sent));
    sent = DepSentence{};
}

}  // namespace

std::vector<DepSentence> parse_conllu(std::istream& in, const std::string& language) {
    std::vector<DepSentence> out;
    DepSentence current;
    current.language = language;
    std::string line;
    size_t line_no = 0;
    int expected_id = 1;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();

        if (line.empty()) {
            finish_sentence(current, line_no, out);
            current.language = language;
            expected_id = 1;
            continue;
        }
        if (line[0] == '#') {
            std::string body = strip(line.substr(1));
            if (body.rfind("sent_id", 0) == 0) {
                size_t eq = body.find('=');
                if (eq != std::string::npos) current.sent_id = strip(body.substr(eq + 1));
            }
            continue;
        }

        std::vector<std::string> cols = split(line, '\t');
        if (cols.size() != 10) {
            parse_fail(line_no, "expected 10 tab-separated columns, found " +
                                    std::to_string(cols.size()));
        }

        const std::string& id_field = cols[0];
        // multiword-token ranges ("3-4") and empty nodes ("5.1") are not
        // syntactic words; skip them
        if (id_field.find('-') != std::string::npos ||
            id_field.find('.') != std::string::npos) {
            continue;
        }
        if (!is_integer(id_field)) parse_fail(line_no, "non-integer ID '" + id_field + "'");

        DepToken tok;
        tok.id = std::stoi(id_field);
        if (tok.id != expected_id) {
            parse_fail(line_no, "token ID " + id_field + " out of sequence (expected " +
                                    std::to_string(expected_id) + ")");
        }
        ++expected_id;

        tok.form = cols[1];
        tok.upos = cols[3];
        if (!is_integer(cols[6])) parse_fail(line_no, "non-integer HEAD '" + cols[6] + "'");
        tok.head = std::stoi(cols[6]);
        if (tok.head == tok.id) parse_fail(line_no, "token attaches to itself");
        tok.deprel = cols[7];
        current.tokens.push_back(std::move(tok));
    }
    finish_sentence(current, line_no + 1, out);
    return out;
}

std::vector<DepSentence> parse_conllu(const std::string& text, const std::string& language) {
    std::istringstream in(text);
    return parse_conllu(in, language);
}

std::vector<DepSentence> parse_conllu_file(const std::string& path, const std::string& language) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open treebank: " + path);
    return parse_conllu(in, language);
}

std::string serialize_conllu(const std::vector<DepSentence>& sentences) {
    std::ostringstream out;
    for (const DepSentence& s : sentences) {
        if (!s.sent_id.empty()) out << "# sent_id = " << s.sent_id << "\n";
        for (const DepToken& t : s.tokens) {
            out << t.id << '\t' << t.form << "\t_\t"
                << (t.upos.empty() ? "_" : t.upos) << "\t_\t_\t" << t.head << '\t'
                << (t.deprel.empty() ? "_" : t.deprel) << "\t_\t_\n";
        }
        out << "\n";
    }
    return out.str();
}

TreeReport validate_tree(const DepSentence& sentence) {
    TreeReport report;
    int n = sentence.size();

    for (const DepToken& t : sentence.tokens) {
        if (t.head == 0) ++report.root_count;
    }

    // acyclic iff every token's head chain reaches the root
    // 0 = unvisited, 1 = on current chain, 2 = known to reach root
    std::vector<int> state(n + 1, 0);
    state[0] = 2;
    report.acyclic = true;
    for (int d = 1; d <= n; ++d) {
        if (state[d] != 0) continue;
        std::vector<int> chain;
        int v = d;
        while (state[v] == 0) {
            state[v] = 1;
            chain.push_back(v);
            v = sentence.tokens[v - 1].head;
        }
        bool reaches_root = (state[v] == 2);
        if (state[v] == 1) report.acyclic = false;
        for (int u : chain) state[u] = reaches_root ? 2 : 3;
        if (!reaches_root) report.acyclic = false;
    }

    // projective iff every token strictly between h and d descends from h
    std::function<bool(int, int)> descends = [&](int node, int ancestor) {
        int steps = 0;
        while (node != 0 && steps <= n) {
            if (node == ancestor) return true;
            node = sentence.tokens[node - 1].head;
            ++steps;
        }
        return node == ancestor;
    };
    report.projective = true;
    if (report.acyclic) {
        for (const DepToken& t : sentence.tokens) {
            int lo = std::min(t.head, t.id);
            int hi = std::max(t.head, t.id);
            for (int between = lo + 1; between < hi && report.projective; ++between) {
                if (!descends(between, t.head)) report.projective = false;
            }
            if (!report.projective) break;
        }
    } else {
        report.projective = false;
    }
    return report;
}

TreebankSplit split_treebank(const std::vector<DepSentence>& sentences,
                             double train_ratio, double dev_ratio, double test_ratio,
                             uint64_t seed) {
    if (sentences.empty()) fail(ErrorKind::invalid_argument, "split_treebank: empty input");
    if (sentences.size() < 3) fail(ErrorKind::invalid_argument, "split_treebank: need at least 3 sentences");
    if (train_ratio <= 0 || dev_ratio <= 0 || test_ratio <= 0) {
        fail(ErrorKind::invalid_argument, "split_treebank: ratios must be positive");
    }
    double total = train_ratio + dev_ratio + test_ratio;
    if (std::abs(total - 1.0) > 1e-9) {
        fail(ErrorKind::invalid_argument, "split_treebank: ratios must sum to 1");
    }

    size_t n = sentences.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    size_t n_dev = static_cast<size_t>(dev_ratio * static_cast<double>(n));
    size_t n_test = static_cast<size_t>(test_ratio * static_cast<double>(n));
    size_t n_train = n - n_dev - n_test;  // remainder goes to train

    TreebankSplit split;
    for (size_t i = 0; i < n; ++i) {
        const DepSentence& s = sentences[order[i]];
        if (i < n_train) {
            split.train.push_back(s);
        } else if (i < n_train + n_dev) {
            split.dev.push_back(s);
        } else {
            split.test.push_back(s);
        }
    }
    return split;
}

std::vector<DepSentence> subsample(const std::vector<DepSentence>& sentences,
                                   size_t n, uint64_t seed) {
    if (n > sentences.size()) {
        fail(ErrorKind::invalid_argument,
             "subsample: requested " + std::to_string(n) + " of " +
                 std::to_string(sentences.size()) + " sentences");
    }
    std::vector<size_t> order(sentences.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<size_t> chosen(order.begin(), order.begin() + static_cast<long>(n));
    std::sort(chosen.begin(), chosen.end());  // restore corpus order
    std::vector<DepSentence> out;
    out.reserve(n);
    for (size_t idx : chosen) out.push_back(sentences[idx]);
    return out;
}

bool operator==(const DepToken& a, const DepToken& b) {
    return a.id == b.id && a.form == b.form && a.upos == b.upos && a.head == b.head &&
           a.deprel == b.deprel;
}

bool operator==(const DepSentence& a, const DepSentence& b) {
    return a.tokens == b.tokens && a.sent_id == b.sent_id && a.language == b.language;
}

}  // namespace deplab
