#include "gslt/model.hpp"

#include <cmath>
#include <cstring>

namespace gslt {

Tensor ParameterStore::create(const std::string& name, int rows, int cols, ParamInit init,
                              Rng& rng) {
    for (const auto& [existing, _] : entries_)
        if (existing == name) throw ContractError("duplicate parameter name " + name);
    std::vector<double> values(static_cast<std::size_t>(rows) * cols, 0.0);
    switch (init) {
        case ParamInit::Xavier: {
            const double bound = std::sqrt(6.0 / (rows + cols));
            for (auto& v : values) v = rng.uniform(-bound, bound);
            break;
        }
        case ParamInit::Zeros:
            break;
        case ParamInit::Ones:
            std::fill(values.begin(), values.end(), 1.0);
            break;
    }
    Tensor t = Tensor::from_values(rows, cols, std::move(values), /*requires_grad=*/true);
    entries_.emplace_back(name, t);
    return t;
}

Tensor ParameterStore::find(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return t;
    throw ContractError("unknown parameter " + name);
}

void ParameterStore::zero_grads() {
    for (auto& [name, t] : entries_) t.zero_grad();
}

AttentionParams Model::make_attention(const std::string& prefix, Rng& rng) {
    const int d = cfg_.d_model;
    AttentionParams p;
    p.wq = store_.create(prefix + ".wq", d, d, ParamInit::Xavier, rng);
    p.bq = store_.create(prefix + ".bq", 1, d, ParamInit::Zeros, rng);
    p.wk = store_.create(prefix + ".wk", d, d, ParamInit::Xavier, rng);
    p.bk = store_.create(prefix + ".bk", 1, d, ParamInit::Zeros, rng);
    p.wv = store_.create(prefix + ".wv", d, d, ParamInit::Xavier, rng);
    p.bv = store_.create(prefix + ".bv", 1, d, ParamInit::Zeros, rng);
    p.wo = store_.create(prefix + ".wo", d, d, ParamInit::Xavier, rng);
    p.bo = store_.create(prefix + ".bo", 1, d, ParamInit::Zeros, rng);
    return p;
}

FfnParams Model::make_ffn(const std::string& prefix, Rng& rng) {
    FfnParams p;
    p.w1 = store_.create(prefix + ".w1", cfg_.d_model, cfg_.d_ff, ParamInit::Xavier, rng);
    p.b1 = store_.create(prefix + ".b1", 1, cfg_.d_ff, ParamInit::Zeros, rng);
    p.w2 = store_.create(prefix + ".w2", cfg_.d_ff, cfg_.d_model, ParamInit::Xavier, rng);
    p.b2 = store_.create(prefix + ".b2", 1, cfg_.d_model, ParamInit::Zeros, rng);
    return p;
}

LnParams Model::make_ln(const std::string& prefix, Rng& rng) {
    LnParams p;
    p.gain = store_.create(prefix + ".gain", 1, cfg_.d_model, ParamInit::Ones, rng);
    p.bias = store_.create(prefix + ".bias", 1, cfg_.d_model, ParamInit::Zeros, rng);
    return p;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.gloss_vocab_size < 2) throw ConfigError("model: gloss vocabulary too small");
    if (cfg_.word_vocab_size < 5) throw ConfigError("model: word vocabulary too small");
    if (cfg_.d_model % cfg_.n_heads != 0)
        throw ConfigError("model: d_model must be divisible by n_heads");
    Rng rng(seed);

    enc_.spatial.w = store_.create("spatial.w", cfg_.d_in, cfg_.d_model, ParamInit::Xavier, rng);
    enc_.spatial.b = store_.create("spatial.b", 1, cfg_.d_model, ParamInit::Zeros, rng);
    enc_.spatial.norm = make_ln("spatial.norm", rng);
    enc_.gloss_table =
        store_.create("encoder.gloss_table", cfg_.gloss_vocab_size, cfg_.d_model,
                      ParamInit::Xavier, rng);
    for (int l = 0; l < cfg_.n_fusion_layers; ++l) {
        const std::string base = "fusion." + std::to_string(l);
        FusionLayerParams layer;
        layer.attn_x = make_attention(base + ".x.attn", rng);
        layer.attn_o = make_attention(base + ".o.attn", rng);
        layer.gate_x.w_self =
            store_.create(base + ".x.gate.w_self", cfg_.d_model, cfg_.d_model, ParamInit::Xavier, rng);
        layer.gate_x.w_other =
            store_.create(base + ".x.gate.w_other", cfg_.d_model, cfg_.d_model, ParamInit::Xavier, rng);
        layer.gate_o.w_self =
            store_.create(base + ".o.gate.w_self", cfg_.d_model, cfg_.d_model, ParamInit::Xavier, rng);
        layer.gate_o.w_other =
            store_.create(base + ".o.gate.w_other", cfg_.d_model, cfg_.d_model, ParamInit::Xavier, rng);
        layer.ffn_x = make_ffn(base + ".x.ffn", rng);
        layer.ffn_o = make_ffn(base + ".o.ffn", rng);
        layer.ln1_x = make_ln(base + ".x.ln1", rng);
        layer.ln2_x = make_ln(base + ".x.ln2", rng);
        layer.ln1_o = make_ln(base + ".o.ln1", rng);
        layer.ln2_o = make_ln(base + ".o.ln2", rng);
        enc_.layers.push_back(std::move(layer));
    }

    slrt_.n_heads = cfg_.n_heads;
    slrt_.dropout_rate = cfg_.dropout_rate;
    for (int l = 0; l < cfg_.n_slrt_layers; ++l) {
        const std::string base = "slrt." + std::to_string(l);
        EncoderLayerParams layer;
        layer.attn = make_attention(base + ".attn", rng);
        layer.ffn = make_ffn(base + ".ffn", rng);
        layer.ln1 = make_ln(base + ".ln1", rng);
        layer.ln2 = make_ln(base + ".ln2", rng);
        slrt_.layers.push_back(std::move(layer));
    }

    gloss_head_w_ =
        store_.create("gloss_head.w", cfg_.d_model, cfg_.gloss_vocab_size, ParamInit::Xavier, rng);
    gloss_head_b_ = store_.create("gloss_head.b", 1, cfg_.gloss_vocab_size, ParamInit::Zeros, rng);

    sltt_.n_heads = cfg_.n_heads;
    sltt_.dropout_rate = cfg_.dropout_rate;
    sltt_.use_positional_encoding = cfg_.use_positional_encoding;
    sltt_.embed =
        store_.create("sltt.embed", cfg_.word_vocab_size, cfg_.d_model, ParamInit::Xavier, rng);
    for (int l = 0; l < cfg_.n_sltt_layers; ++l) {
        const std::string base = "sltt." + std::to_string(l);
        DecoderLayerParams layer;
        layer.self_attn = make_attention(base + ".self_attn", rng);
        layer.cross_attn = make_attention(base + ".cross_attn", rng);
        layer.ffn = make_ffn(base + ".ffn", rng);
        layer.ln1 = make_ln(base + ".ln1", rng);
        layer.ln2 = make_ln(base + ".ln2", rng);
        layer.ln3 = make_ln(base + ".ln3", rng);
        sltt_.layers.push_back(std::move(layer));
    }
    sltt_.out_w =
        store_.create("sltt.out.w", cfg_.d_model, cfg_.word_vocab_size, ParamInit::Xavier, rng);
    sltt_.out_b = store_.create("sltt.out.b", 1, cfg_.word_vocab_size, ParamInit::Zeros, rng);
}

EncoderConfig Model::encoder_config() const {
    EncoderConfig ec;
    ec.d_in = cfg_.d_in;
    ec.d_model = cfg_.d_model;
    ec.n_heads = cfg_.n_heads;
    ec.n_fusion_layers = cfg_.n_fusion_layers;
    ec.d_ff = cfg_.d_ff;
    ec.dropout_rate = cfg_.dropout_rate;
    ec.output_mode = cfg_.output_mode;
    ec.use_positional_encoding = cfg_.use_positional_encoding;
    return ec;
}

Tensor Model::encode_record(const MultiModalGraph& graph, const Tensor& frames, bool train,
                            Rng* rng) const {
    return encode(graph, frames, enc_, encoder_config(), train, rng);
}

Tensor Model::slrt(const Tensor& multi_emb, bool train, Rng* rng) const {
    return slrt_encode(multi_emb, slrt_, train, rng);
}

Tensor Model::frame_gloss_log_probs(const Tensor& z) const {
    return gloss_log_probs(z, gloss_head_w_, gloss_head_b_);
}

Tensor Model::bootstrap_gloss_log_probs(const Tensor& frames) const {
    EncoderConfig ec = encoder_config();
    ec.output_mode = OutputMode::VisualOnly;
    Tensor h = encode(empty_graph(frames.rows()), frames, enc_, ec, /*train=*/false, nullptr);
    Tensor z = slrt_encode(h, slrt_, /*train=*/false, nullptr);
    return frame_gloss_log_probs(z);
}

bool Model::is_sltt_only_param(const std::string& name) {
    return name.rfind("sltt.", 0) == 0;
}

bool Model::is_gloss_head_param(const std::string& name) {
    return name.rfind("gloss_head.", 0) == 0;
}

bool Model::is_bootstrap_recognition_param(const std::string& name) {
    if (name.rfind("spatial.", 0) == 0 || name.rfind("slrt.", 0) == 0 ||
        name.rfind("gloss_head.", 0) == 0)
        return true;
    // Visual-side fusion parameters: fusion.<l>.o.*
    if (name.rfind("fusion.", 0) == 0) {
        const auto second_dot = name.find('.', 7);
        return second_dot != std::string::npos && name.compare(second_dot, 3, ".o.") == 0;
    }
    return false;
}

std::uint64_t Model::recognition_fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [name, t] : store_.entries()) {
        if (!is_bootstrap_recognition_param(name)) continue;
        mix(name.data(), name.size());
        mix(t.values().data(), t.values().size() * sizeof(double));
    }
    return h;
}

MultiModalGraph empty_graph(int n_frames) {
    MultiModalGraph g;
    g.num_visual = n_frames;
    return g;
}

void Adam::step(ParameterStore& store) {
    auto& entries = store.entries();
    if (m_.empty()) {
        m_.resize(entries.size());
        v_.resize(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            m_[i].assign(entries[i].second.size(), 0.0);
            v_[i].assign(entries[i].second.size(), 0.0);
        }
    }
    if (m_.size() != entries.size()) throw ContractError("adam: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Tensor p = entries[i].second;
        const auto& grad = p.grad();
        bool any = false;
        for (double g : grad)
            if (g != 0.0) {
                any = true;
                break;
            }
        if (!any) continue;  // untouched parameter: no update, no decay
        std::vector<double> delta(grad.size());
        for (std::size_t k = 0; k < grad.size(); ++k) {
            const double g = grad[k] + cfg_.weight_decay * p.values()[k];
            m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
            v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = m_[i][k] / bc1;
            const double v_hat = v_[i][k] / bc2;
            delta[k] = -cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
        p.add_to_values(delta);
    }
}

}  // namespace gslt
