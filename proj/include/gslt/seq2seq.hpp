#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "gslt/encoder.hpp"
#include "gslt/tensor.hpp"
#include "gslt/vocab.hpp"

namespace gslt {

// Loss clamp for -log p, keeping reports finite when a sequence is assigned
// vanishing probability.
inline constexpr double kNllClamp = 1e4;

struct JointLossWeights {
    double lambda_r = 5.0;
    double lambda_t = 1.0;
};

enum class RecognitionLossMode { Paper, Nll };

struct EncoderLayerParams {
    AttentionParams attn;
    FfnParams ffn;
    LnParams ln1, ln2;
};

struct DecoderLayerParams {
    AttentionParams self_attn, cross_attn;
    FfnParams ffn;
    LnParams ln1, ln2, ln3;
};

struct SlrtParams {
    std::vector<EncoderLayerParams> layers;
    int n_heads = 8;
    double dropout_rate = 0.1;
};

struct SlttParams {
    Tensor embed;  // [word vocab x d_model]
    std::vector<DecoderLayerParams> layers;
    Tensor out_w, out_b;  // head to word vocabulary
    int n_heads = 8;
    double dropout_rate = 0.1;
    bool use_positional_encoding = true;
};

// Recognition encoder over the multi-modal embeddings.
Tensor slrt_encode(const Tensor& multi_emb, const SlrtParams& p, bool train, Rng* rng);

// Frame-level log distributions over the gloss vocabulary (rows log-sum-exp
// to zero).
Tensor gloss_log_probs(const Tensor& z, const Tensor& head_w, const Tensor& head_b);

// Alignment-marginalized sequence log probability. `feasible` is false when
// the target cannot fit into the frame count, in which case no graph node is
// built and the probability is exactly zero.
struct CtcResult {
    bool feasible = false;
    Tensor log_prob;  // defined iff feasible
    double log_prob_value() const { return feasible ? log_prob.value() : -HUGE_VAL; }
};
CtcResult ctc_log_prob(const Tensor& log_probs, const std::vector<int>& target);

// Loss node over a CTC result; infeasible targets yield a constant.
Tensor recognition_loss(const CtcResult& ctc, RecognitionLossMode mode);
double recognition_loss_value(double log_p, RecognitionLossMode mode);

// Additive causal mask (strictly upper triangle pushed to -1e9).
Tensor causal_mask(int n);

// Decoder states / per-position log distributions under teacher forcing.
// `input_ids` must begin with BOS.
Tensor sltt_states(const std::vector<int>& input_ids, const Tensor& memory, const SlttParams& p,
                   bool train, Rng* rng);
Tensor sltt_log_probs(const std::vector<int>& input_ids, const Tensor& memory,
                      const SlttParams& p, bool train, Rng* rng);
// Next-token log distribution after the given prefix.
Tensor sltt_step(const std::vector<int>& prefix_ids, const Tensor& memory, const SlttParams& p);

// Total teacher-forced log probability of `sentence` (must end with EOS).
Tensor translation_log_prob(const std::vector<int>& sentence, const Tensor& memory,
                            const SlttParams& p, bool train, Rng* rng);

Tensor joint_loss(const Tensor& l_r, const Tensor& l_t, const JointLossWeights& w);
double joint_loss_value(double l_r, double l_t, const JointLossWeights& w);

struct BeamHypothesis {
    std::vector<int> tokens;  // BOS excluded; EOS present iff finished
    double log_prob = 0.0;
    bool finished = false;
};

double length_penalty(int length, double alpha);
double hypothesis_score(const BeamHypothesis& h, double alpha);

// Decoded word ids, BOS/EOS stripped.
std::vector<int> greedy_decode(const Tensor& memory, const SlttParams& p, int max_len);
std::vector<int> beam_decode(const Tensor& memory, const SlttParams& p, int beam_size,
                             double alpha, int max_len);

}  // namespace gslt
