#pragma once

#include <string>
#include <vector>

#include "gslt/alignment.hpp"

namespace gslt {

enum class Modality { Textual, Visual };

// Undirected bipartite-plus-implicit-cliques structure: textual nodes (one
// per gloss group), visual nodes (one per frame), and the sparse inter-modal
// edges. Intra-modal connectivity is complete within each modality and is
// therefore not stored.
struct MultiModalGraph {
    int num_visual = 0;
    std::vector<int> textual_glosses;            // gloss id per textual node
    std::vector<std::pair<int, int>> inter_edges;  // (textual index, visual index)

    bool operator==(const MultiModalGraph&) const = default;
    int num_textual() const { return static_cast<int>(textual_glosses.size()); }
};

MultiModalGraph build_graph(int n_frames, const AlignmentTable& table);

// Neighbor lists derive from the inter-modal edges only, sorted ascending.
std::vector<int> textual_neighbors(const MultiModalGraph& g, int visual_index);
std::vector<int> visual_neighbors(const MultiModalGraph& g, int textual_index);

bool graph_invariants_hold(const MultiModalGraph& g);

std::string serialize(const MultiModalGraph& g);
MultiModalGraph deserialize(const std::string& text);

// Graphviz rendering for inspection: visual nodes as boxes, textual as
// ellipses, inter-modal edges only.
std::string to_dot(const MultiModalGraph& g);

}  // namespace gslt
