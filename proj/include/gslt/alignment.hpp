#pragma once

#include <vector>

#include "gslt/tensor.hpp"

namespace gslt {

// Reserved gloss id for frames carrying no sign; also the CTC blank symbol.
inline constexpr int kPadId = 0;

// Per-frame gloss-or-PAD labels, one entry per video frame.
using PseudoPrimitiveSequence = std::vector<int>;

// A maximal run of frames sharing one gloss. Group indices are dense 0..G-1
// in frame order; the frame list is consecutive.
struct GroupedNode {
    int gp = 0;
    int gloss = 0;
    std::vector<int> frames;

    bool operator==(const GroupedNode&) const = default;
};

// The textual-node <-> frame mapping: every (group, frame) membership as an
// explicit pair, plus the groups themselves.
struct AlignmentTable {
    std::vector<GroupedNode> groups;
    std::vector<std::pair<int, int>> pairs;  // (textual node index, frame index)

    bool operator==(const AlignmentTable&) const = default;
};

// Row-wise argmax over frame scores; ties resolved toward the lowest id.
PseudoPrimitiveSequence best_path_decode(const Tensor& frame_logits);

// Merges runs of equal non-PAD labels and drops PAD. A repeated gloss that is
// separated by PAD stays two tokens.
std::vector<int> collapse(const PseudoPrimitiveSequence& p);

// Groups the valid (non-PAD) frames into textual nodes and derives the
// alignment pairs. Frame 0 follows the same rule as every other frame: it
// opens group 0 iff it is non-PAD.
AlignmentTable group_pseudo_labels(const PseudoPrimitiveSequence& p);

// True iff the table satisfies every structural invariant and its gloss
// sequence equals collapse(p).
bool align_consistency_check(const AlignmentTable& table, const PseudoPrimitiveSequence& p);

// Reconstructs the pseudo-primitive sequence a table describes (PAD where no
// group claims the frame).
PseudoPrimitiveSequence expand_alignment(const AlignmentTable& table, int n_frames);

}  // namespace gslt
