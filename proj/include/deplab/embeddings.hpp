#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "deplab/conllu.hpp"

namespace deplab {

// Static word vectors in the usual text format. Entries keep file order;
// lookups fall back case-insensitively and then to unk_vector.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(int dim) : dim_(dim), unk_vector_(dim, 0.0) {}

    int dim() const { return dim_; }
    size_t size() const { return tokens_.size(); }
    const std::vector<double>& unk_vector() const { return unk_vector_; }
    void set_unk_vector(std::vector<double> v);

    bool insert(const std::string& token, std::vector<double> vec);  // first one wins

    // Case-sensitive first, ASCII-lowercased second, nullptr third.
    const std::vector<double>* find(const std::string& token) const;

    const std::string& token_at(size_t i) const { return tokens_[i]; }
    const std::vector<double>& vector_at(size_t i) const { return vectors_[i]; }

    // Order- and content-sensitive fingerprint for checkpoint validation.
    uint64_t fingerprint() const;

private:
    int dim_ = 0;
    std::vector<std::string> tokens_;
    std::vector<std::vector<double>> vectors_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<double> unk_vector_;
};

// Word-vector text format: optional "count dim" header, then one token and
// dim reals per line. Duplicate tokens keep the first occurrence.
// expected_dim -1 infers the width from the header or the first entry.
EmbeddingTable load_embeddings(std::istream& in, int expected_dim);
EmbeddingTable load_embeddings_file(const std::string& path, int expected_dim);
std::string serialize_embeddings(const EmbeddingTable& table);

// Token/character/tag inventories built over a training split. Ids are
// contiguous from 0 and assigned in first-occurrence order; words and
// characters reserve PAD and UNK.
struct Vocabulary {
    static constexpr int pad_id = 0;
    static constexpr int unk_id = 1;

    std::vector<std::string> word_forms;   // id -> form, [0]="<pad>", [1]="<unk>"
    std::vector<uint32_t> chars;           // id -> code point, [0]/[1] reserved
    std::vector<std::string> pos_names;    // observed UPOS only
    std::vector<std::string> label_names;  // observed deprels only
    int min_frequency = 2;

    std::unordered_map<std::string, int> word_index;
    std::unordered_map<uint32_t, int> char_index;
    std::unordered_map<std::string, int> pos_index;
    std::unordered_map<std::string, int> label_index;

    int word_count() const { return static_cast<int>(word_forms.size()); }
    int char_count() const { return static_cast<int>(chars.size()); }
    int pos_count() const { return static_cast<int>(pos_names.size()); }
    int label_count() const { return static_cast<int>(label_names.size()); }

    // Case-sensitive, then ASCII-lowercased, then UNK.
    int word_id(const std::string& form) const;
    int char_id(uint32_t cp) const;
    // Unseen tags/labels map to the extra trailing row (== pos_count()).
    int pos_id(const std::string& upos) const;
    int label_id(const std::string& deprel) const;
    std::vector<int> char_ids(const std::string& form) const;

    // Label id back to deprel string; the out-of-inventory row gets "_".
    std::string label_name(int id) const;

    uint64_t fingerprint() const;
};

// Indexes words (frequency >= min_frequency), characters, UPOS tags and
// deprels over the training split.
Vocabulary build_vocab(const std::vector<DepSentence>& train, int min_frequency);

struct LookupResult {
    int word_id = Vocabulary::unk_id;
    std::vector<int> char_ids;
    const std::vector<double>* static_vector = nullptr;  // table's unk_vector when OOV
    bool in_table = false;
};

LookupResult lookup(const Vocabulary& vocab, const EmbeddingTable& table,
                    const std::string& token);

}  // namespace deplab
