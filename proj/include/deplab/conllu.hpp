#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deplab {

struct DepToken {
    int id = 0;           // 1-based position within the sentence
    std::string form;
    std::string upos;
    int head = 0;         // 0 = artificial root, else 1-based token id
    std::string deprel;
};

struct DepSentence {
    std::vector<DepToken> tokens;
    std::string sent_id;
    std::string language;

    int size() const { return static_cast<int>(tokens.size()); }
};

struct TreebankSplit {
    std::vector<DepSentence> train;
    std::vector<DepSentence> dev;
    std::vector<DepSentence> test;
};

struct TreeReport {
    int root_count = 0;
    bool acyclic = false;
    bool projective = false;
};

// Reads CoNLL-U text. Multiword-token range lines (id "3-4") and empty
// nodes (id "5.1") are skipped; `# sent_id = ...` comments are captured.
// Malformed token lines raise Error(parse) naming the line number.
std::vector<DepSentence> parse_conllu(std::istream& in, const std::string& language);
std::vector<DepSentence> parse_conllu(const std::string& text, const std::string& language);
std::vector<DepSentence> parse_conllu_file(const std::string& path, const std::string& language);

// 10-column CoNLL-U with `_` for the fields DepToken does not carry.
std::string serialize_conllu(const std::vector<DepSentence>& sentences);

// Report-only structural check: number of root attachments, acyclicity of
// the head graph, and projectivity (every token between a head and its
// dependent is a descendant of that head).
TreeReport validate_tree(const DepSentence& sentence);

// Shuffles with the seed, then carves contiguous train/dev/test chunks.
// dev and test sizes are floor(ratio * n); the remainder goes to train.
TreebankSplit split_treebank(const std::vector<DepSentence>& sentences,
                             double train_ratio, double dev_ratio, double test_ratio,
                             uint64_t seed);

// Uniform sample of n sentences without replacement, deterministic in the
// seed; output keeps the original corpus order.
std::vector<DepSentence> subsample(const std::vector<DepSentence>& sentences,
                                   size_t n, uint64_t seed);

bool operator==(const DepToken& a, const DepToken& b);
bool operator==(const DepSentence& a, const DepSentence& b);

}  // namespace deplab
