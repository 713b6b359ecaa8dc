#pragma once

#include <array>
#include <string>
#include <vector>

#include "gslt/errors.hpp"

namespace gslt {

using TokenSequence = std::vector<std::string>;

// Unit-cost Levenshtein distance.
int edit_distance(const TokenSequence& a, const TokenSequence& b);

// edit_distance / |reference|. May exceed 1 when the hypothesis is long.
double wer(const TokenSequence& reference, const TokenSequence& hypothesis);

// Corpus-level BLEU-1..4: modified n-gram precision with brevity penalty,
// uniform weights over orders 1..k. `smooth` applies add-one smoothing to the
// order >= 2 precisions for tiny corpora.
std::array<double, 4> bleu(const std::vector<TokenSequence>& references,
                           const std::vector<TokenSequence>& hypotheses, bool smooth = false);

// F1 over the longest common subsequence.
double rouge_l_f1(const TokenSequence& reference, const TokenSequence& hypothesis);

}  // namespace gslt
