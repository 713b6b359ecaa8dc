#include "gslt/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gslt {

namespace {
constexpr int kGraphSchemaVersion = 1;
}

MultiModalGraph build_graph(int n_frames, const AlignmentTable& table) {
    MultiModalGraph g;
    g.num_visual = n_frames;
    for (const auto& group : table.groups) g.textual_glosses.push_back(group.gloss);
    for (const auto& [t, f] : table.pairs) {
        if (f < 0 || f >= n_frames)
            throw BoundsError("build_graph: frame index " + std::to_string(f) +
                              " outside 0.." + std::to_string(n_frames - 1));
        if (t < 0 || t >= g.num_textual())
            throw BoundsError("build_graph: textual index " + std::to_string(t));
        g.inter_edges.emplace_back(t, f);
    }
    return g;
}

std::vector<int> textual_neighbors(const MultiModalGraph& g, int visual_index) {
    if (visual_index < 0 || visual_index >= g.num_visual)
        throw BoundsError("textual_neighbors: visual index " + std::to_string(visual_index));
    std::vector<int> out;
    for (const auto& [t, v] : g.inter_edges)
        if (v == visual_index) out.push_back(t);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> visual_neighbors(const MultiModalGraph& g, int textual_index) {
    if (textual_index < 0 || textual_index >= g.num_textual())
        throw BoundsError("visual_neighbors: textual index " + std::to_string(textual_index));
    std::vector<int> out;
    for (const auto& [t, v] : g.inter_edges)
        if (t == textual_index) out.push_back(v);
    std::sort(out.begin(), out.end());
    return out;
}

bool graph_invariants_hold(const MultiModalGraph& g) {
    std::set<int> seen_visual;
    std::set<int> textual_with_edge;
    for (const auto& [t, v] : g.inter_edges) {
        if (t < 0 || t >= g.num_textual()) return false;
        if (v < 0 || v >= g.num_visual) return false;
        if (!seen_visual.insert(v).second) return false;  // one textual node per frame
        textual_with_edge.insert(t);
    }
    // Every textual node came from at least one frame.
    return static_cast<int>(textual_with_edge.size()) == g.num_textual();
}

std::string serialize(const MultiModalGraph& g) {
    nlohmann::json j;
    j["schema_version"] = kGraphSchemaVersion;
    j["num_visual"] = g.num_visual;
    j["textual_glosses"] = g.textual_glosses;
    auto edges = nlohmann::json::array();
    for (const auto& [t, v] : g.inter_edges) edges.push_back({t, v});
    j["inter_edges"] = edges;
    return j.dump();
}

MultiModalGraph deserialize(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("graph record: ") + e.what());
    }
    if (!j.contains("schema_version"))
        throw ParseError("graph record: missing schema_version");
    if (j["schema_version"].get<int>() != kGraphSchemaVersion)
        throw VersionError("graph record: unsupported schema_version " +
                           j["schema_version"].dump());
    MultiModalGraph g;
    try {
        g.num_visual = j.at("num_visual").get<int>();
        g.textual_glosses = j.at("textual_glosses").get<std::vector<int>>();
        for (const auto& e : j.at("inter_edges")) {
            if (!e.is_array() || e.size() != 2)
                throw ParseError("graph record: inter_edges entries must be [t, v]");
            g.inter_edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("graph record: ") + e.what());
    }
    return g;
}

std::string to_dot(const MultiModalGraph& g) {
    std::ostringstream out;
    out << "graph multimodal {\n";
    for (int t = 0; t < g.num_textual(); ++t)
        out << "  t" << t << " [shape=ellipse, label=\"g" << g.textual_glosses[t] << "\"];\n";
    for (int v = 0; v < g.num_visual; ++v)
        out << "  v" << v << " [shape=box, label=\"f" << v << "\"];\n";
    for (const auto& [t, v] : g.inter_edges) out << "  t" << t << " -- v" << v << ";\n";
    out << "}\n";
    return out.str();
}

}  // namespace gslt
