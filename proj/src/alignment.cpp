#include "gslt/alignment.hpp"

#include <algorithm>

namespace gslt {

PseudoPrimitiveSequence best_path_decode(const Tensor& frame_logits) {
    if (frame_logits.rows() < 1) throw ContractError("best_path_decode: empty sequence");
    if (frame_logits.cols() < 2)
        throw ContractError("best_path_decode: vocabulary must include PAD and one gloss");
    return argmax_rows(frame_logits);
}

std::vector<int> collapse(const PseudoPrimitiveSequence& p) {
    std::vector<int> out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == kPadId) continue;
        if (i > 0 && p[i] == p[i - 1]) continue;
        out.push_back(p[i]);
    }
    return out;
}

AlignmentTable group_pseudo_labels(const PseudoPrimitiveSequence& p) {
    AlignmentTable table;
    int count = -1;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == kPadId) continue;
        const bool opens_group = (i == 0) || (p[i] != p[i - 1]);
        if (opens_group) {
            ++count;
            table.groups.push_back({count, p[i], {static_cast<int>(i)}});
        } else {
            table.groups.back().frames.push_back(static_cast<int>(i));
        }
    }
    for (const auto& g : table.groups)
        for (int f : g.frames) table.pairs.emplace_back(g.gp, f);
    return table;
}

bool align_consistency_check(const AlignmentTable& table, const PseudoPrimitiveSequence& p) {
    // Dense group indices, non-PAD glosses, consecutive frame runs.
    for (std::size_t g = 0; g < table.groups.size(); ++g) {
        const auto& node = table.groups[g];
        if (node.gp != static_cast<int>(g)) return false;
        if (node.gloss == kPadId) return false;
        if (node.frames.empty()) return false;
        for (std::size_t k = 1; k < node.frames.size(); ++k)
            if (node.frames[k] != node.frames[k - 1] + 1) return false;
    }

    // Pairs must enumerate exactly the group memberships, each frame once.
    std::vector<std::pair<int, int>> expected;
    for (const auto& g : table.groups)
        for (int f : g.frames) expected.emplace_back(g.gp, f);
    if (table.pairs != expected) return false;
    std::vector<int> frames;
    for (const auto& [t, f] : table.pairs) frames.push_back(f);
    std::vector<int> sorted = frames;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return false;

    if (table.pairs.size() > p.size()) return false;

    // Frame coverage: paired frames are exactly the non-PAD positions.
    std::vector<int> non_pad;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] != kPadId) non_pad.push_back(static_cast<int>(i));
    if (sorted != non_pad) return false;

    // Group gloss sequence must equal the collapsed sequence.
    std::vector<int> glosses;
    for (const auto& g : table.groups) glosses.push_back(g.gloss);
    return glosses == collapse(p);
}

PseudoPrimitiveSequence expand_alignment(const AlignmentTable& table, int n_frames) {
    PseudoPrimitiveSequence p(static_cast<std::size_t>(n_frames), kPadId);
    for (const auto& g : table.groups)
        for (int f : g.frames) {
            if (f < 0 || f >= n_frames) throw BoundsError("expand_alignment: frame out of range");
            p[static_cast<std::size_t>(f)] = g.gloss;
        }
    return p;
}

}  // namespace gslt
