#include "gslt/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gslt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

Tensor maybe_dropout(const Tensor& x, double rate, bool train, Rng* rng) {
    if (!train || rate == 0.0) return x;
    if (rng == nullptr) throw ContractError("dropout in train mode needs an rng");
    return dropout(x, rate, true, *rng);
}

}  // namespace

Tensor slrt_encode(const Tensor& multi_emb, const SlrtParams& p, bool train, Rng* rng) {
    if (multi_emb.rows() < 1) throw ContractError("slrt_encode: empty input");
    Tensor x = multi_emb;
    for (const auto& layer : p.layers) {
        Tensor attended = maybe_dropout(
            multi_head_attention(x, x, layer.attn, p.n_heads), p.dropout_rate, train, rng);
        Tensor h = layer_norm_rows(add(x, attended), layer.ln1.gain, layer.ln1.bias);
        x = layer_norm_rows(add(h, feed_forward(h, layer.ffn)), layer.ln2.gain, layer.ln2.bias);
    }
    return x;
}

Tensor gloss_log_probs(const Tensor& z, const Tensor& head_w, const Tensor& head_b) {
    return log_softmax_rows(add_row(matmul(z, head_w), head_b));
}

CtcResult ctc_log_prob(const Tensor& log_probs, const std::vector<int>& target) {
    const int n = log_probs.rows();
    const int vocab = log_probs.cols();
    const int m = static_cast<int>(target.size());
    for (int g : target) {
        if (g == kPadId) throw ContractError("ctc_log_prob: target contains blank");
        if (g < 0 || g >= vocab)
            throw VocabularyError("ctc_log_prob: gloss id " + std::to_string(g));
    }
    int min_frames = m;
    for (int i = 1; i < m; ++i)
        if (target[i] == target[i - 1]) ++min_frames;
    CtcResult result;
    if (n < min_frames) return result;  // infeasible, no node

    // Blank-interleaved target.
    const int s_len = 2 * m + 1;
    std::vector<int> ext(static_cast<std::size_t>(s_len), kPadId);
    for (int i = 0; i < m; ++i) ext[static_cast<std::size_t>(2 * i + 1)] = target[i];

    const auto& y = log_probs.values();
    auto emit = [&](int t, int s) { return y[static_cast<std::size_t>(t) * vocab + ext[s]]; };
    auto skip_allowed = [&](int s) {
        return s >= 2 && ext[s] != kPadId && ext[s] != ext[s - 2];
    };

    // Forward variables, emission at t included.
    std::vector<double> alpha(static_cast<std::size_t>(n) * s_len, kNegInf);
    alpha[0] = emit(0, 0);
    if (s_len > 1) alpha[1] = emit(0, 1);
    for (int t = 1; t < n; ++t) {
        for (int s = 0; s < s_len; ++s) {
            double best = alpha[static_cast<std::size_t>(t - 1) * s_len + s];
            if (s >= 1) best = lse2(best, alpha[static_cast<std::size_t>(t - 1) * s_len + s - 1]);
            if (skip_allowed(s))
                best = lse2(best, alpha[static_cast<std::size_t>(t - 1) * s_len + s - 2]);
            if (best != kNegInf)
                alpha[static_cast<std::size_t>(t) * s_len + s] = best + emit(t, s);
        }
    }
    double log_p = alpha[static_cast<std::size_t>(n - 1) * s_len + s_len - 1];
    if (s_len > 1)
        log_p = lse2(log_p, alpha[static_cast<std::size_t>(n - 1) * s_len + s_len - 2]);
    if (log_p == kNegInf) return result;

    // Backward variables, emission at t excluded.
    std::vector<double> beta(static_cast<std::size_t>(n) * s_len, kNegInf);
    beta[static_cast<std::size_t>(n - 1) * s_len + s_len - 1] = 0.0;
    if (s_len > 1) beta[static_cast<std::size_t>(n - 1) * s_len + s_len - 2] = 0.0;
    for (int t = n - 2; t >= 0; --t) {
        for (int s = 0; s < s_len; ++s) {
            double acc = beta[static_cast<std::size_t>(t + 1) * s_len + s] + emit(t + 1, s);
            if (s + 1 < s_len)
                acc = lse2(acc,
                           beta[static_cast<std::size_t>(t + 1) * s_len + s + 1] + emit(t + 1, s + 1));
            if (s + 2 < s_len && skip_allowed(s + 2))
                acc = lse2(acc,
                           beta[static_cast<std::size_t>(t + 1) * s_len + s + 2] + emit(t + 1, s + 2));
            beta[static_cast<std::size_t>(t) * s_len + s] = acc;
        }
    }

    result.feasible = true;
    result.log_prob = make_op(
        1, 1, {log_p}, {log_probs},
        [n, vocab, s_len, ext = std::move(ext), alpha = std::move(alpha),
         beta = std::move(beta), log_p](const TensorNode& self, std::vector<TensorNode*>& parents) {
            const double upstream = self.grad[0];
            if (upstream == 0.0) return;
            auto& grad = parents[0]->grad;
            // d log p / d y[t,k] = sum over states s labeled k of
            // exp(alpha[t,s] + beta[t,s] - log p).
            std::vector<double> occupancy(static_cast<std::size_t>(vocab));
            for (int t = 0; t < n; ++t) {
                std::fill(occupancy.begin(), occupancy.end(), kNegInf);
                for (int s = 0; s < s_len; ++s) {
                    const double g = alpha[static_cast<std::size_t>(t) * s_len + s] +
                                     beta[static_cast<std::size_t>(t) * s_len + s];
                    occupancy[ext[s]] = lse2(occupancy[ext[s]], g);
                }
                for (int k = 0; k < vocab; ++k) {
                    if (occupancy[k] == kNegInf) continue;
                    grad[static_cast<std::size_t>(t) * vocab + k] +=
                        upstream * std::exp(occupancy[k] - log_p);
                }
            }
        });
    return result;
}

Tensor recognition_loss(const CtcResult& ctc, RecognitionLossMode mode) {
    if (!ctc.feasible)
        return Tensor::scalar(mode == RecognitionLossMode::Nll ? kNllClamp : 1.0);
    if (mode == RecognitionLossMode::Nll) return clamp_max(scale(ctc.log_prob, -1.0), kNllClamp);
    return add_scalar(scale(exp_op(ctc.log_prob), -1.0), 1.0);
}

double recognition_loss_value(double log_p, RecognitionLossMode mode) {
    if (log_p > 0.0) throw ContractError("recognition_loss: log probability above zero");
    if (mode == RecognitionLossMode::Nll) return std::min(-log_p, kNllClamp);
    return 1.0 - std::exp(log_p);
}

Tensor causal_mask(int n) {
    std::vector<double> values(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) values[static_cast<std::size_t>(i) * n + j] = -1e9;
    return Tensor::from_values(n, n, std::move(values));
}

Tensor sltt_states(const std::vector<int>& input_ids, const Tensor& memory, const SlttParams& p,
                   bool train, Rng* rng) {
    if (input_ids.empty() || input_ids.front() != Vocabulary::kBos)
        throw ContractError("sltt: decoder input must begin with BOS");
    Tensor x = embedding_lookup(p.embed, input_ids);
    if (p.use_positional_encoding) x = add_positional_encoding(x);
    x = maybe_dropout(x, p.dropout_rate, train, rng);

    Tensor mask = causal_mask(static_cast<int>(input_ids.size()));
    for (const auto& layer : p.layers) {
        Tensor self_att = maybe_dropout(
            multi_head_attention(x, x, layer.self_attn, p.n_heads, &mask),
            p.dropout_rate, train, rng);
        Tensor h = layer_norm_rows(add(x, self_att), layer.ln1.gain, layer.ln1.bias);
        Tensor cross = maybe_dropout(
            multi_head_attention(h, memory, layer.cross_attn, p.n_heads),
            p.dropout_rate, train, rng);
        Tensor h2 = layer_norm_rows(add(h, cross), layer.ln2.gain, layer.ln2.bias);
        x = layer_norm_rows(add(h2, feed_forward(h2, layer.ffn)), layer.ln3.gain, layer.ln3.bias);
    }
    return x;
}

Tensor sltt_log_probs(const std::vector<int>& input_ids, const Tensor& memory,
                      const SlttParams& p, bool train, Rng* rng) {
    Tensor states = sltt_states(input_ids, memory, p, train, rng);
    return log_softmax_rows(add_row(matmul(states, p.out_w), p.out_b));
}

Tensor sltt_step(const std::vector<int>& prefix_ids, const Tensor& memory, const SlttParams& p) {
    Tensor all = sltt_log_probs(prefix_ids, memory, p, false, nullptr);
    return slice_rows(all, all.rows() - 1, all.rows());
}

Tensor translation_log_prob(const std::vector<int>& sentence, const Tensor& memory,
                            const SlttParams& p, bool train, Rng* rng) {
    if (sentence.empty()) throw ContractError("translation_log_prob: empty sentence");
    if (sentence.back() != Vocabulary::kEos)
        throw ContractError("translation_log_prob: sentence must end with EOS");
    std::vector<int> input;
    input.reserve(sentence.size());
    input.push_back(Vocabulary::kBos);
    input.insert(input.end(), sentence.begin(), sentence.end() - 1);
    Tensor log_probs = sltt_log_probs(input, memory, p, train, rng);
    return sum_all(pick_per_row(log_probs, sentence));
}

Tensor joint_loss(const Tensor& l_r, const Tensor& l_t, const JointLossWeights& w) {
    return add(scale(l_r, w.lambda_r), scale(l_t, w.lambda_t));
}

double joint_loss_value(double l_r, double l_t, const JointLossWeights& w) {
    return w.lambda_r * l_r + w.lambda_t * l_t;
}

double length_penalty(int length, double alpha) {
    return std::pow((5.0 + length) / 6.0, alpha);
}

double hypothesis_score(const BeamHypothesis& h, double alpha) {
    return h.log_prob / length_penalty(static_cast<int>(h.tokens.size()), alpha);
}

std::vector<int> greedy_decode(const Tensor& memory, const SlttParams& p, int max_len) {
    if (max_len < 1) throw ContractError("greedy_decode: max_len must be positive");
    std::vector<int> prefix{Vocabulary::kBos};
    std::vector<int> out;
    for (int step = 0; step < max_len; ++step) {
        Tensor dist = sltt_step(prefix, memory, p);
        const int next = argmax_rows(dist)[0];
        if (next == Vocabulary::kEos) break;
        out.push_back(next);
        prefix.push_back(next);
    }
    return out;
}

std::vector<int> beam_decode(const Tensor& memory, const SlttParams& p, int beam_size,
                             double alpha, int max_len) {
    if (beam_size < 1) throw ContractError("beam_decode: beam_size must be positive");
    if (alpha < 0.0 || alpha > 2.0) throw ContractError("beam_decode: alpha must be in [0, 2]");
    if (max_len < 1) throw ContractError("beam_decode: max_len must be positive");

    std::vector<BeamHypothesis> beam{BeamHypothesis{}};
    for (int step = 0; step < max_len; ++step) {
        std::vector<BeamHypothesis> candidates;
        bool any_live = false;
        for (const auto& hyp : beam) {
            if (hyp.finished) {
                candidates.push_back(hyp);
                continue;
            }
            any_live = true;
            std::vector<int> prefix{Vocabulary::kBos};
            prefix.insert(prefix.end(), hyp.tokens.begin(), hyp.tokens.end());
            Tensor dist = sltt_step(prefix, memory, p);
            for (int v = 0; v < dist.cols(); ++v) {
                BeamHypothesis next = hyp;
                next.tokens.push_back(v);
                next.log_prob += dist.at(0, v);
                next.finished = (v == Vocabulary::kEos);
                candidates.push_back(std::move(next));
            }
        }
        if (!any_live) break;
        // Candidates are generated in (hypothesis, token id) order, so a
        // stable sort resolves score ties toward the lowest token id.
        std::stable_sort(candidates.begin(), candidates.end(),
                         [alpha](const BeamHypothesis& a, const BeamHypothesis& b) {
                             return hypothesis_score(a, alpha) > hypothesis_score(b, alpha);
                         });
        if (static_cast<int>(candidates.size()) > beam_size) candidates.resize(beam_size);
        beam = std::move(candidates);
    }

    const BeamHypothesis* best = &beam.front();
    for (const auto& hyp : beam)
        if (hypothesis_score(hyp, alpha) > hypothesis_score(*best, alpha)) best = &hyp;
    std::vector<int> out = best->tokens;
    if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
    return out;
}

}  // namespace gslt
