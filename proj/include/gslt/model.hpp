#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gslt/encoder.hpp"
#include "gslt/seq2seq.hpp"

namespace gslt {

struct ModelConfig {
    int d_in = 16;
    int d_model = 64;
    int n_heads = 8;
    int n_fusion_layers = 2;
    int n_slrt_layers = 3;
    int n_sltt_layers = 3;
    int d_ff = 256;
    double dropout_rate = 0.1;
    OutputMode output_mode = OutputMode::VisualOnly;
    bool use_positional_encoding = true;
    int gloss_vocab_size = 0;
    int word_vocab_size = 0;

    bool operator==(const ModelConfig&) const = default;
};

enum class ParamInit { Xavier, Zeros, Ones };

// Ordered registry of named trainable tensors; creation order is the
// canonical iteration order for optimizers and checkpoints.
class ParameterStore {
public:
    Tensor create(const std::string& name, int rows, int cols, ParamInit init, Rng& rng);
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    Tensor find(const std::string& name) const;
    void zero_grads();

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

// The complete trainable model: multi-modal graph encoder, recognition
// encoder with gloss head, and translation decoder. All forward passes build
// fresh graphs over the shared parameter tensors.
class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }

    // Ablation selector; affects only which rows encode() returns.
    void set_output_mode(OutputMode mode) { cfg_.output_mode = mode; }

    EncoderConfig encoder_config() const;

    // Multi-modal encode with the configured output mode.
    Tensor encode_record(const MultiModalGraph& graph, const Tensor& frames, bool train,
                         Rng* rng) const;
    Tensor slrt(const Tensor& multi_emb, bool train, Rng* rng) const;
    Tensor frame_gloss_log_probs(const Tensor& z) const;

    // The graph-free recognition path (zero textual nodes, visual output):
    // generates pseudo-labels and the WER signal that drives re-alignment.
    Tensor bootstrap_gloss_log_probs(const Tensor& frames) const;

    const SlttParams& sltt() const { return sltt_; }
    const EncoderParams& encoder() const { return enc_; }
    const SlrtParams& slrt_params() const { return slrt_; }
    const Tensor& gloss_head_w() const { return gloss_head_w_; }
    const Tensor& gloss_head_b() const { return gloss_head_b_; }

    // True for parameters on the translation-only path (decoder embedding,
    // decoder layers, word output head).
    static bool is_sltt_only_param(const std::string& name);
    static bool is_gloss_head_param(const std::string& name);
    // Parameters the bootstrap recognition path reads.
    static bool is_bootstrap_recognition_param(const std::string& name);

    // FNV-1a over the bootstrap recognition parameters, in creation order.
    std::uint64_t recognition_fingerprint() const;

private:
    ModelConfig cfg_;
    ParameterStore store_;
    EncoderParams enc_;
    SlrtParams slrt_;
    Tensor gloss_head_w_, gloss_head_b_;
    SlttParams sltt_;

    AttentionParams make_attention(const std::string& prefix, Rng& rng);
    FfnParams make_ffn(const std::string& prefix, Rng& rng);
    LnParams make_ln(const std::string& prefix, Rng& rng);
};

MultiModalGraph empty_graph(int n_frames);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.998;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

// Adam with L2 weight decay folded into the gradient. Parameters whose
// gradient is identically zero are skipped entirely, so unused heads are
// never updated or decayed.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(ParameterStore& store);

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace gslt
