#include "deplab/embeddings.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "deplab/common.hpp"

namespace deplab {

void EmbeddingTable::set_unk_vector(std::vector<double> v) {
    if (static_cast<int>(v.size()) != dim_) {
        fail(ErrorKind::invalid_argument, "unk vector has wrong dimension");
    }
    unk_vector_ = std::move(v);
}

bool EmbeddingTable::insert(const std::string& token, std::vector<double> vec) {
    if (static_cast<int>(vec.size()) != dim_) {
        fail(ErrorKind::invalid_argument,
             "vector for '" + token + "' has dimension " + std::to_string(vec.size()) +
                 ", table dimension is " + std::to_string(dim_));
    }
    auto [it, inserted] = index_.emplace(token, tokens_.size());
    if (!inserted) return false;
    tokens_.push_back(token);
    vectors_.push_back(std::move(vec));
    return true;
}

const std::vector<double>* EmbeddingTable::find(const std::string& token) const {
    auto it = index_.find(token);
    if (it != index_.end()) return &vectors_[it->second];
    std::string lower = ascii_lower(token);
    if (lower != token) {
        it = index_.find(lower);
        if (it != index_.end()) return &vectors_[it->second];
    }
    return nullptr;
}

uint64_t EmbeddingTable::fingerprint() const {
    uint64_t h = fnv1a(&dim_, sizeof(dim_));
    for (size_t i = 0; i < tokens_.size(); ++i) {
        h = fnv1a(tokens_[i], h);
        h = fnv1a(vectors_[i].data(), vectors_[i].size() * sizeof(double), h);
    }
    h = fnv1a(unk_vector_.data(), unk_vector_.size() * sizeof(double), h);
    return h;
}

namespace {

bool parse_real(const std::string& s, double* out) {
    const char* begin = s.c_str();
    char* end = nullptr;
    *out = std::strtod(begin, &end);
    return end == begin + s.size() && !s.empty();
}

}  // namespace

EmbeddingTable load_embeddings(std::istream& in, int expected_dim) {
    if (expected_dim <= 0 && expected_dim != -1) {
        fail(ErrorKind::invalid_argument, "expected_dim must be positive, or -1 to infer");
    }
    EmbeddingTable table(1);
    std::string line;
    size_t line_no = 0;
    bool first = true;
    bool sized = expected_dim > 0;
    if (sized) table = EmbeddingTable(expected_dim);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (strip(line).empty()) continue;
        std::vector<std::string> fields = split_ws(line);

        if (first) {
            first = false;
            // header is "count dim", both integers
            if (fields.size() == 2) {
                double cnt, dim;
                if (parse_real(fields[0], &cnt) && parse_real(fields[1], &dim)) {
                    if (sized && static_cast<int>(dim) != expected_dim) {
                        fail(ErrorKind::parse,
                             "header declares dimension " + fields[1] + ", expected " +
                                 std::to_string(expected_dim));
                    }
                    if (!sized) {
                        if (dim < 1) fail(ErrorKind::parse, "header declares no dimensions");
                        expected_dim = static_cast<int>(dim);
                        table = EmbeddingTable(expected_dim);
                        sized = true;
                    }
                    continue;
                }
            }
            if (!sized) {
                if (fields.size() < 2) {
                    fail(ErrorKind::parse, "first entry has no values (line " +
                                               std::to_string(line_no) + ")");
                }
                expected_dim = static_cast<int>(fields.size()) - 1;
                table = EmbeddingTable(expected_dim);
                sized = true;
            }
        }

        if (static_cast<int>(fields.size()) != expected_dim + 1) {
            fail(ErrorKind::parse, "token '" + (fields.empty() ? "" : fields[0]) + "' has " +
                                       std::to_string(fields.size() - 1) + " values, expected " +
                                       std::to_string(expected_dim) +
                                       " (line " + std::to_string(line_no) + ")");
        }
        std::vector<double> vec(expected_dim);
        for (int i = 0; i < expected_dim; ++i) {
            if (!parse_real(fields[i + 1], &vec[i])) {
                fail(ErrorKind::parse, "token '" + fields[0] + "': bad value '" + fields[i + 1] +
                                           "' (line " + std::to_string(line_no) + ")");
            }
        }
        table.insert(fields[0], std::move(vec));
    }
    if (table.size() == 0) fail(ErrorKind::parse, "embedding stream contains no entries");
    return table;
}

EmbeddingTable load_embeddings_file(const std::string& path, int expected_dim) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open embeddings: " + path);
    return load_embeddings(in, expected_dim);
}

std::string serialize_embeddings(const EmbeddingTable& table) {
    std::ostringstream out;
    out << table.size() << ' ' << table.dim() << '\n';
    for (size_t i = 0; i < table.size(); ++i) {
        out << table.token_at(i);
        for (double v : table.vector_at(i)) out << ' ' << format_double(v);
        out << '\n';
    }
    return out.str();
}

int Vocabulary::word_id(const std::string& form) const {
    auto it = word_index.find(form);
    if (it != word_index.end()) return it->second;
    std::string lower = ascii_lower(form);
    if (lower != form) {
        it = word_index.find(lower);
        if (it != word_index.end()) return it->second;
    }
    return unk_id;
}

int Vocabulary::char_id(uint32_t cp) const {
    auto it = char_index.find(cp);
    return it == char_index.end() ? unk_id : it->second;
}

int Vocabulary::pos_id(const std::string& upos) const {
    auto it = pos_index.find(upos);
    return it == pos_index.end() ? pos_count() : it->second;
}

int Vocabulary::label_id(const std::string& deprel) const {
    auto it = label_index.find(deprel);
    return it == label_index.end() ? label_count() : it->second;
}

std::vector<int> Vocabulary::char_ids(const std::string& form) const {
    std::vector<int> out;
    for (uint32_t cp : utf8_codepoints(form)) out.push_back(char_id(cp));
    return out;
}

std::string Vocabulary::label_name(int id) const {
    if (id < 0 || id >= label_count()) return "_";
    return label_names[static_cast<size_t>(id)];
}

uint64_t Vocabulary::fingerprint() const {
    uint64_t h = fnv1a(&min_frequency, sizeof(min_frequency));
    for (const std::string& w : word_forms) h = fnv1a(w + "\x1f", h);
    h = fnv1a(chars.data(), chars.size() * sizeof(uint32_t), h);
    for (const std::string& p : pos_names) h = fnv1a(p + "\x1f", h);
    for (const std::string& l : label_names) h = fnv1a(l + "\x1f", h);
    return h;
}

Vocabulary build_vocab(const std::vector<DepSentence>& train, int min_frequency) {
    if (train.empty()) fail(ErrorKind::invalid_argument, "build_vocab: empty training split");
    Vocabulary vocab;
    vocab.min_frequency = min_frequency;
    vocab.word_forms = {"<pad>", "<unk>"};
    vocab.word_index = {{"<pad>", 0}, {"<unk>", 1}};
    vocab.chars = {0, 0xFFFD};  // PAD, UNK
    vocab.char_index = {{0, 0}, {0xFFFD, 1}};

    std::unordered_map<std::string, int> freq;
    std::vector<std::string> word_order;  // first occurrence
    for (const DepSentence& s : train) {
        for (const DepToken& t : s.tokens) {
            if (++freq[t.form] == 1) word_order.push_back(t.form);
            for (uint32_t cp : utf8_codepoints(t.form)) {
                if (vocab.char_index.emplace(cp, vocab.char_count()).second) {
                    vocab.chars.push_back(cp);
                }
            }
            if (vocab.pos_index.emplace(t.upos, vocab.pos_count()).second) {
                vocab.pos_names.push_back(t.upos);
            }
            if (vocab.label_index.emplace(t.deprel, vocab.label_count()).second) {
                vocab.label_names.push_back(t.deprel);
            }
        }
    }
    for (const std::string& w : word_order) {
        if (freq[w] >= min_frequency &&
            vocab.word_index.emplace(w, vocab.word_count()).second) {
            vocab.word_forms.push_back(w);
        }
    }
    return vocab;
}

LookupResult lookup(const Vocabulary& vocab, const EmbeddingTable& table,
                    const std::string& token) {
    LookupResult r;
    r.word_id = vocab.word_id(token);
    r.char_ids = vocab.char_ids(token);
    const std::vector<double>* vec = table.find(token);
    if (vec != nullptr) {
        r.static_vector = vec;
        r.in_table = true;
    } else {
        r.static_vector = &table.unk_vector();
        r.in_table = false;
    }
    return r;
}

}  // namespace deplab
