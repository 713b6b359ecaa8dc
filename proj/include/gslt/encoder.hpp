#pragma once

#include <optional>
#include <vector>

#include "gslt/graph.hpp"
#include "gslt/tensor.hpp"

namespace gslt {

// Which node states the encoder emits to the translation stack.
enum class OutputMode { VisualOnly, TextualOnly, Concat };

struct EncoderConfig {
    int d_in = 16;
    int d_model = 64;
    int n_heads = 8;
    int n_fusion_layers = 2;
    int d_ff = 256;
    double dropout_rate = 0.1;
    OutputMode output_mode = OutputMode::VisualOnly;
    bool use_positional_encoding = true;
};

struct AttentionParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FfnParams {
    Tensor w1, b1, w2, b2;
};

struct LnParams {
    Tensor gain, bias;
};

struct SpatialEmbedParams {
    Tensor w, b;
    LnParams norm;
};

// alpha = sigmoid(C_receiver * w_self + C_sender * w_other), elementwise.
struct GateParams {
    Tensor w_self, w_other;
};

struct FusionLayerParams {
    AttentionParams attn_x, attn_o;
    GateParams gate_x, gate_o;  // gate_x feeds M_x (textual receives visual)
    FfnParams ffn_x, ffn_o;
    LnParams ln1_x, ln2_x, ln1_o, ln2_o;
};

struct EncoderParams {
    SpatialEmbedParams spatial;
    Tensor gloss_table;  // [gloss vocab x d_model]
    std::vector<FusionLayerParams> layers;
};

// Test hooks: forward-value snapshots of the attention softmax rows and the
// fusion gate activations.
struct AttentionTrace {
    std::vector<Tensor> head_weights;
};
struct GateTrace {
    std::vector<Tensor> alphas;
};

// Sinusoidal position table, sin on even columns, cos on odd.
Tensor positional_encoding(int length, int d);
Tensor add_positional_encoding(const Tensor& x);

// Affine projection + per-feature sequence normalization + ReLU.
Tensor spatial_embed(const Tensor& frame_features, const SpatialEmbedParams& p);

Tensor word_embed(const Tensor& table, const std::vector<int>& gloss_ids);

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                            const AttentionParams& p, int n_heads,
                            const Tensor* additive_mask = nullptr,
                            AttentionTrace* trace = nullptr);

Tensor intra_modality_attention(const Tensor& h, const AttentionParams& p, int n_heads,
                                AttentionTrace* trace = nullptr);

Tensor feed_forward(const Tensor& x, const FfnParams& p);

// Gated aggregation across the inter-modal edges, both directions. Nodes with
// no cross-modal neighbor receive a zero vector.
std::pair<Tensor, Tensor> cross_modal_gated_fusion(const Tensor& c_x, const Tensor& c_o,
                                                   const MultiModalGraph& graph,
                                                   const GateParams& gate_x,
                                                   const GateParams& gate_o,
                                                   GateTrace* trace = nullptr);

// Node states through one fusion layer; h_x is absent when the graph has no
// textual nodes.
struct FusionState {
    std::optional<Tensor> h_x;
    Tensor h_o;
};

FusionState fusion_layer(const FusionState& in, const MultiModalGraph& graph,
                         const FusionLayerParams& p, const EncoderConfig& cfg, bool train,
                         Rng* rng, AttentionTrace* trace = nullptr, GateTrace* gate_trace = nullptr);

// Full multi-modal encode: embeddings, positional encoding, fusion stack,
// output-mode row selection.
Tensor encode(const MultiModalGraph& graph, const Tensor& frame_features,
              const EncoderParams& params, const EncoderConfig& cfg, bool train, Rng* rng);

}  // namespace gslt
