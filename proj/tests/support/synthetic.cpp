#include "support/synthetic.hpp"

#include "deplab/common.hpp"

namespace deplab::testsupport {

namespace {

const std::vector<std::string> kVerbs = {"runs", "sees", "holds", "finds", "makes", "takes"};
const std::vector<std::string> kNouns = {"cat",  "dog",  "bird", "fish",
                                         "tree", "rock", "car",  "house"};
const std::vector<std::string> kDets = {"the", "a", "this", "that"};

}  // namespace

std::vector<DepSentence> synthetic_corpus(size_t sentences, uint64_t seed) {
    Rng rng(seed);
    std::vector<DepSentence> out;
    out.reserve(sentences);
    for (size_t i = 0; i < sentences; ++i) {
        struct Draft {
            std::string form, upos, rel;
            int head = 0;  // 0 root, -1 the verb, -2 the next noun
        };
        std::vector<Draft> draft;
        auto noun_phrase = [&](const std::string& rel) {
            if (rng.next_below(10) < 8) {
                draft.push_back({kDets[rng.next_below(kDets.size())], "DET", "det", -2});
            }
            draft.push_back({kNouns[rng.next_below(kNouns.size())], "NOUN", rel, -1});
        };
        noun_phrase("nsubj");
        draft.push_back({kVerbs[rng.next_below(kVerbs.size())], "VERB", "root", 0});
        if (rng.next_below(10) < 7) noun_phrase("obj");
        if (rng.next_below(10) < 4) noun_phrase("obl");
        if (rng.next_below(10) < 5) draft.push_back({".", "PUNCT", "punct", -1});

        int verb_id = 0;
        for (size_t k = 0; k < draft.size(); ++k) {
            if (draft[k].upos == "VERB") verb_id = static_cast<int>(k) + 1;
        }
        DepSentence s;
        s.sent_id = "s" + std::to_string(i + 1);
        s.language = "syn";
        for (size_t k = 0; k < draft.size(); ++k) {
            DepToken t;
            t.id = static_cast<int>(k) + 1;
            t.form = draft[k].form;
            t.upos = draft[k].upos;
            t.deprel = draft[k].rel;
            if (draft[k].head == 0) t.head = 0;
            else if (draft[k].head == -1) t.head = verb_id;
            else t.head = static_cast<int>(k) + 2;  // the noun right after the det
            s.tokens.push_back(t);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace deplab::testsupport
