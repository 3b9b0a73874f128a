#pragma once

#include <cstdint>
#include <vector>

#include "deplab/conllu.hpp"

namespace deplab::testsupport {

// Deterministic toy corpus with a learnable head pattern: a VERB root, a
// subject NOUN before it, optional object and oblique NOUNs after it, each
// NOUN optionally preceded by a DET, and an optional final period.  Heads
// follow part of speech alone, so a small model can master it quickly.
std::vector<DepSentence> synthetic_corpus(size_t sentences, uint64_t seed);

}  // namespace deplab::testsupport
