#include "gslt/encoder.hpp"

#include <cmath>

namespace gslt {

namespace {

Tensor maybe_dropout(const Tensor& x, const EncoderConfig& cfg, bool train, Rng* rng) {
    if (!train || cfg.dropout_rate == 0.0) return x;
    if (rng == nullptr) throw ContractError("dropout in train mode needs an rng");
    return dropout(x, cfg.dropout_rate, true, *rng);
}

}  // namespace

Tensor positional_encoding(int length, int d) {
    std::vector<double> values(static_cast<std::size_t>(length) * d);
    for (int pos = 0; pos < length; ++pos) {
        for (int j = 0; j < d; ++j) {
            const int pair = j / 2;
            const double wavelength = std::pow(10000.0, 2.0 * pair / d);
            const double angle = pos / wavelength;
            values[static_cast<std::size_t>(pos) * d + j] =
                (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor::from_values(length, d, std::move(values));
}

Tensor add_positional_encoding(const Tensor& x) {
    return add(x, positional_encoding(x.rows(), x.cols()));
}

Tensor spatial_embed(const Tensor& frame_features, const SpatialEmbedParams& p) {
    Tensor projected = add_row(matmul(frame_features, p.w), p.b);
    return relu(feature_norm_cols(projected, p.norm.gain, p.norm.bias));
}

Tensor word_embed(const Tensor& table, const std::vector<int>& gloss_ids) {
    return embedding_lookup(table, gloss_ids);
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                            const AttentionParams& p, int n_heads, const Tensor* additive_mask,
                            AttentionTrace* trace) {
    const int d = p.wq.cols();
    if (n_heads < 1 || d % n_heads != 0)
        throw ContractError("attention: width " + std::to_string(d) + " not divisible by " +
                            std::to_string(n_heads) + " heads");
    const int dk = d / n_heads;
    Tensor q = add_row(matmul(queries, p.wq), p.bq);
    Tensor k = add_row(matmul(keys_values, p.wk), p.bk);
    Tensor v = add_row(matmul(keys_values, p.wv), p.bv);

    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int h = 0; h < n_heads; ++h) {
        Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
        Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
        Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
        if (additive_mask != nullptr) scores = add(scores, *additive_mask);
        Tensor probs = softmax(scores, 1);
        if (trace != nullptr) trace->head_weights.push_back(probs);
        heads.push_back(matmul(probs, vh));
    }
    return add_row(matmul(concat_cols(heads), p.wo), p.bo);
}

Tensor intra_modality_attention(const Tensor& h, const AttentionParams& p, int n_heads,
                                AttentionTrace* trace) {
    return multi_head_attention(h, h, p, n_heads, nullptr, trace);
}

Tensor feed_forward(const Tensor& x, const FfnParams& p) {
    return add_row(matmul(relu(add_row(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

std::pair<Tensor, Tensor> cross_modal_gated_fusion(const Tensor& c_x, const Tensor& c_o,
                                                   const MultiModalGraph& graph,
                                                   const GateParams& gate_x,
                                                   const GateParams& gate_o, GateTrace* trace) {
    if (c_x.rows() != graph.num_textual() || c_o.rows() != graph.num_visual)
        throw DimensionError("cross_modal_gated_fusion: row counts must match graph node counts");
    const int d = c_x.cols();
    if (c_o.cols() != d) throw DimensionError("cross_modal_gated_fusion: width mismatch");

    Tensor gx_self = matmul(c_x, gate_x.w_self);
    Tensor gx_other = matmul(c_o, gate_x.w_other);
    Tensor go_self = matmul(c_o, gate_o.w_self);
    Tensor go_other = matmul(c_x, gate_o.w_other);

    auto gated_rows = [&](int receiver, const std::vector<int>& senders, const Tensor& g_self,
                          const Tensor& g_other, const Tensor& context) -> Tensor {
        if (senders.empty()) return Tensor::zeros(1, d);
        Tensor self_row = slice_rows(g_self, receiver, receiver + 1);
        Tensor acc;
        for (int j : senders) {
            Tensor alpha = sigmoid(add(self_row, slice_rows(g_other, j, j + 1)));
            if (trace != nullptr) trace->alphas.push_back(alpha);
            Tensor term = mul(alpha, slice_rows(context, j, j + 1));
            acc = acc.defined() ? add(acc, term) : term;
        }
        return acc;
    };

    std::vector<Tensor> m_x_rows;
    for (int i = 0; i < graph.num_textual(); ++i)
        m_x_rows.push_back(gated_rows(i, visual_neighbors(graph, i), gx_self, gx_other, c_o));
    std::vector<Tensor> m_o_rows;
    for (int j = 0; j < graph.num_visual; ++j)
        m_o_rows.push_back(gated_rows(j, textual_neighbors(graph, j), go_self, go_other, c_x));

    return {concat_rows(m_x_rows), concat_rows(m_o_rows)};
}

FusionState fusion_layer(const FusionState& in, const MultiModalGraph& graph,
                         const FusionLayerParams& p, const EncoderConfig& cfg, bool train,
                         Rng* rng, AttentionTrace* trace, GateTrace* gate_trace) {
    Tensor c_o = maybe_dropout(intra_modality_attention(in.h_o, p.attn_o, cfg.n_heads, trace),
                               cfg, train, rng);

    auto sublayer = [&](const Tensor& h, const Tensor& c, const Tensor* m, const FfnParams& ffn,
                        const LnParams& ln1, const LnParams& ln2) {
        Tensor pre = add(h, c);
        if (m != nullptr) pre = add(pre, *m);
        Tensor u = layer_norm_rows(pre, ln1.gain, ln1.bias);
        return layer_norm_rows(add(h, feed_forward(u, ffn)), ln2.gain, ln2.bias);
    };

    FusionState out;
    if (in.h_x.has_value()) {
        Tensor c_x = maybe_dropout(
            intra_modality_attention(*in.h_x, p.attn_x, cfg.n_heads, trace), cfg, train, rng);
        auto [m_x, m_o] =
            cross_modal_gated_fusion(c_x, c_o, graph, p.gate_x, p.gate_o, gate_trace);
        out.h_x = sublayer(*in.h_x, c_x, &m_x, p.ffn_x, p.ln1_x, p.ln2_x);
        out.h_o = sublayer(in.h_o, c_o, &m_o, p.ffn_o, p.ln1_o, p.ln2_o);
    } else {
        out.h_o = sublayer(in.h_o, c_o, nullptr, p.ffn_o, p.ln1_o, p.ln2_o);
    }
    return out;
}

Tensor encode(const MultiModalGraph& graph, const Tensor& frame_features,
              const EncoderParams& params, const EncoderConfig& cfg, bool train, Rng* rng) {
    if (cfg.n_fusion_layers < 1) throw ContractError("encode: need at least one fusion layer");
    if (static_cast<int>(params.layers.size()) != cfg.n_fusion_layers)
        throw ContractError("encode: layer parameter count mismatch");
    if (frame_features.rows() != graph.num_visual)
        throw DimensionError("encode: frame row count " + std::to_string(frame_features.rows()) +
                             " vs graph visual nodes " + std::to_string(graph.num_visual));
    const bool has_textual = graph.num_textual() > 0;
    if (cfg.output_mode == OutputMode::TextualOnly && !has_textual)
        throw ContractError("encode: no textual nodes");

    FusionState state;
    Tensor o = spatial_embed(frame_features, params.spatial);
    if (cfg.use_positional_encoding) o = add_positional_encoding(o);
    state.h_o = maybe_dropout(o, cfg, train, rng);

    if (has_textual) {
        Tensor x = word_embed(params.gloss_table, graph.textual_glosses);
        if (cfg.use_positional_encoding) x = add_positional_encoding(x);
        state.h_x = maybe_dropout(x, cfg, train, rng);
    }

    for (const auto& layer : params.layers)
        state = fusion_layer(state, graph, layer, cfg, train, rng);

    switch (cfg.output_mode) {
        case OutputMode::VisualOnly:
            return state.h_o;
        case OutputMode::TextualOnly:
            return *state.h_x;
        case OutputMode::Concat:
            // Degenerate graphs contribute no textual rows.
            if (!has_textual) return state.h_o;
            return concat_rows({state.h_o, *state.h_x});
    }
    throw ContractError("encode: unknown output mode");
}

}  // namespace gslt
