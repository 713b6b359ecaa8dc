#include <doctest.h>

#include <cmath>
#include <map>

#include "gslt/seq2seq.hpp"
#include "test_support.hpp"

using namespace gslt;
using test::rand_attention;
using test::rand_ffn;
using test::random_tensor;
using test::unit_ln;

namespace {

// Exhaustive CTC oracle: walk every frame-label path, collapse it (merge
// repeats, then drop blanks), and accumulate path probabilities per
// collapsed sequence.
std::map<std::vector<int>, double> enumerate_paths(const std::vector<std::vector<double>>& probs) {
    const int n = static_cast<int>(probs.size());
    const int v = static_cast<int>(probs[0].size());
    std::map<std::vector<int>, double> mass;
    std::vector<int> path(static_cast<std::size_t>(n), 0);
    while (true) {
        double prob = 1.0;
        for (int t = 0; t < n; ++t) prob *= probs[t][path[t]];
        std::vector<int> collapsed;
        for (int t = 0; t < n; ++t) {
            if (t > 0 && path[t] == path[t - 1]) continue;
            if (path[t] != 0) collapsed.push_back(path[t]);
        }
        // Merging repeats before dropping blanks keeps blank-separated
        // repeats distinct; re-merge only adjacent equal symbols that were
        // adjacent in the path.
        std::vector<int> canonical;
        int prev = -1;
        for (int t = 0; t < n; ++t) {
            if (path[t] == prev) continue;
            prev = path[t];
            if (path[t] != 0) canonical.push_back(path[t]);
        }
        mass[canonical] += prob;
        int pos = n - 1;
        while (pos >= 0 && ++path[pos] == v) path[pos--] = 0;
        if (pos < 0) break;
    }
    return mass;
}

std::vector<std::vector<double>> random_distributions(int n, int v, Rng& rng) {
    std::vector<std::vector<double>> probs(n, std::vector<double>(v));
    for (auto& row : probs) {
        double sum = 0;
        for (auto& p : row) {
            p = rng.uniform(0.05, 1.0);
            sum += p;
        }
        for (auto& p : row) p /= sum;
    }
    return probs;
}

Tensor log_probs_tensor(const std::vector<std::vector<double>>& probs) {
    std::vector<double> values;
    for (const auto& row : probs)
        for (double p : row) values.push_back(std::log(p));
    return Tensor::from_values(static_cast<int>(probs.size()),
                               static_cast<int>(probs[0].size()), std::move(values));
}

SlttParams small_decoder(int d, int vocab, Rng& rng, int layers = 1, int heads = 2) {
    SlttParams p;
    p.embed = random_tensor(vocab, d, rng, true);
    for (int l = 0; l < layers; ++l) {
        DecoderLayerParams layer;
        layer.self_attn = rand_attention(d, rng);
        layer.cross_attn = rand_attention(d, rng);
        layer.ffn = rand_ffn(d, d * 2, rng);
        layer.ln1 = unit_ln(d);
        layer.ln2 = unit_ln(d);
        layer.ln3 = unit_ln(d);
        p.layers.push_back(std::move(layer));
    }
    p.out_w = random_tensor(d, vocab, rng, true);
    p.out_b = random_tensor(1, vocab, rng, true);
    p.n_heads = heads;
    p.dropout_rate = 0.0;
    return p;
}

SlrtParams small_encoder(int d, Rng& rng, int layers = 1, int heads = 2) {
    SlrtParams p;
    for (int l = 0; l < layers; ++l) {
        EncoderLayerParams layer;
        layer.attn = rand_attention(d, rng);
        layer.ffn = rand_ffn(d, d * 2, rng);
        layer.ln1 = unit_ln(d);
        layer.ln2 = unit_ln(d);
        p.layers.push_back(std::move(layer));
    }
    p.n_heads = heads;
    p.dropout_rate = 0.0;
    return p;
}

}  // namespace

TEST_CASE("slrt_encode zero-init degenerates to a normalized passthrough") {
    Rng rng(70);
    const int d = 4;
    SlrtParams p = small_encoder(d, rng);
    for (Tensor t : {p.layers[0].attn.wv, p.layers[0].attn.bv, p.layers[0].attn.wo,
                     p.layers[0].attn.bo, p.layers[0].ffn.w1, p.layers[0].ffn.b1,
                     p.layers[0].ffn.w2, p.layers[0].ffn.b2})
        t.set_values(std::vector<double>(t.size(), 0.0));

    Tensor x = random_tensor(5, d, rng);
    Tensor out = slrt_encode(x, p, false, nullptr);
    CHECK(out.rows() == 5);
    CHECK(out.cols() == d);
    Tensor expected = layer_norm_rows(layer_norm_rows(x, p.layers[0].ln1.gain,
                                                      p.layers[0].ln1.bias),
                                      p.layers[0].ln2.gain, p.layers[0].ln2.bias);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.values()[i] == doctest::Approx(expected.values()[i]).epsilon(1e-12));
}

TEST_CASE("slrt_encode gradients match central differences") {
    Rng rng(71);
    const int d = 4;
    SlrtParams p = small_encoder(d, rng);
    Tensor x = random_tensor(3, d, rng, true);
    Tensor probe = random_tensor(3, d, rng);
    auto loss = [&]() { return sum_all(mul(slrt_encode(x, p, false, nullptr), probe)); };
    std::vector<std::pair<std::string, Tensor>> params = {
        {"x", x},
        {"wq", p.layers[0].attn.wq},
        {"wv", p.layers[0].attn.wv},
        {"ffn.w1", p.layers[0].ffn.w1},
        {"ln1.gain", p.layers[0].ln1.gain}};
    const auto report = finite_difference_check(
        params, [&]() { return loss().value(); }, [&]() { backward(loss()); });
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gloss_log_probs normalizes rows") {
    Rng rng(72);
    Tensor z = random_tensor(4, 3, rng);
    Tensor w = random_tensor(3, 5, rng);
    Tensor b = random_tensor(1, 5, rng);
    Tensor lp = gloss_log_probs(z, w, b);
    for (int i = 0; i < lp.rows(); ++i) {
        double sum = 0;
        for (int j = 0; j < lp.cols(); ++j) sum += std::exp(lp.at(i, j));
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // Zero logits: uniform log 1/V rows.
    Tensor uniform = gloss_log_probs(Tensor::zeros(2, 3), Tensor::zeros(3, 4),
                                     Tensor::zeros(1, 4));
    for (double v : uniform.values()) CHECK(v == doctest::Approx(std::log(0.25)).epsilon(1e-12));

    // softmax-then-log oracle.
    Tensor logits = add_row(matmul(z, w), b);
    Tensor sm = softmax(logits);
    for (std::size_t i = 0; i < lp.size(); ++i)
        CHECK(lp.values()[i] == doctest::Approx(std::log(sm.values()[i])).epsilon(1e-9));
}

TEST_CASE("ctc worked example: uniform N=2 single-gloss target") {
    // Two frames, vocabulary {blank, a}, all probabilities one half. The
    // three paths aa, a-, -a collapse to [a]: p = 3/4.
    Tensor lp = log_probs_tensor({{0.5, 0.5}, {0.5, 0.5}});
    CtcResult r = ctc_log_prob(lp, {1});
    REQUIRE(r.feasible);
    CHECK(std::exp(r.log_prob.value()) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.log_prob.value() == doctest::Approx(std::log(0.75)).epsilon(1e-12));

    // Eq-10-style loss from the same case.
    CHECK(recognition_loss_value(r.log_prob.value(), RecognitionLossMode::Paper) ==
          doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("ctc infeasible targets carry the sentinel flag") {
    Tensor lp = log_probs_tensor({{0.5, 0.5}, {0.5, 0.5}});
    CtcResult too_long = ctc_log_prob(lp, {1, 1, 1});
    CHECK_FALSE(too_long.feasible);
    CHECK(too_long.log_prob_value() == -HUGE_VAL);

    // Adjacent repeats need a separating blank frame.
    CtcResult repeat = ctc_log_prob(lp, {1, 1});
    CHECK_FALSE(repeat.feasible);

    CHECK_THROWS_AS(ctc_log_prob(lp, {0}), ContractError);
    CHECK_THROWS_AS(ctc_log_prob(lp, {5}), VocabularyError);
}

TEST_CASE("ctc forward matches exhaustive enumeration on random instances") {
    Rng rng(73);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = rng.uniform_int(1, 6);
        const int v = rng.uniform_int(2, 3);
        const auto probs = random_distributions(n, v, rng);
        const auto mass = enumerate_paths(probs);
        Tensor lp = log_probs_tensor(probs);

        double total = 0.0;
        // All targets up to length n over the non-blank symbols.
        std::vector<std::vector<int>> targets{{}};
        for (int len = 1; len <= n; ++len) {
            std::vector<std::vector<int>> next;
            for (const auto& t : targets)
                if (static_cast<int>(t.size()) == len - 1)
                    for (int g = 1; g < v; ++g) {
                        auto extended = t;
                        extended.push_back(g);
                        next.push_back(extended);
                    }
            targets.insert(targets.end(), next.begin(), next.end());
        }
        for (const auto& target : targets) {
            CtcResult r = ctc_log_prob(lp, target);
            auto it = mass.find(target);
            const double expected = it == mass.end() ? 0.0 : it->second;
            if (!r.feasible) {
                CHECK(expected == 0.0);
            } else {
                CHECK(std::fabs(std::exp(r.log_prob.value()) - expected) < 1e-10);
                total += std::exp(r.log_prob.value());
            }
        }
        CHECK(total <= 1.0 + 1e-9);
    }
}

TEST_CASE("ctc gradient matches central differences and sums to one per frame") {
    Rng rng(74);
    const auto probs = random_distributions(4, 3, rng);
    Tensor base = log_probs_tensor(probs);
    Tensor lp = Tensor::from_values(4, 3, base.values(), /*requires_grad=*/true);
    const std::vector<int> target{1, 2, 1};

    auto loss = [&]() { return ctc_log_prob(lp, target).log_prob; };
    const auto report = finite_difference_check(
        {{"log_probs", lp}}, [&]() { return loss().value(); }, [&]() { backward(loss()); });
    CHECK(report.max_rel_err < 1e-4);

    lp.zero_grad();
    backward(loss());
    for (int t = 0; t < 4; ++t) {
        double row = 0;
        for (int k = 0; k < 3; ++k) row += lp.grad()[t * 3 + k];
        CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("recognition loss modes") {
    CHECK(recognition_loss_value(0.0, RecognitionLossMode::Paper) == 0.0);
    CHECK(recognition_loss_value(0.0, RecognitionLossMode::Nll) == 0.0);
    CHECK(recognition_loss_value(-1e9, RecognitionLossMode::Paper) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(recognition_loss_value(-1e9, RecognitionLossMode::Nll) == kNllClamp);
    CHECK_THROWS_AS(recognition_loss_value(0.5, RecognitionLossMode::Nll), ContractError);

    Rng rng(75);
    for (int i = 0; i < 50; ++i) {
        const double log_p = -rng.uniform(0.0, 20.0);
        const double paper = recognition_loss_value(log_p, RecognitionLossMode::Paper);
        CHECK(paper >= 0.0);
        CHECK(paper <= 1.0);
    }
}

TEST_CASE("sltt distributions normalize and respect causality") {
    Rng rng(76);
    const int d = 4, vocab = 7;
    SlttParams p = small_decoder(d, vocab, rng);
    Tensor memory = random_tensor(5, d, rng);

    const std::vector<int> input{Vocabulary::kBos, 4, 5, 6};
    Tensor lp = sltt_log_probs(input, memory, p, false, nullptr);
    REQUIRE(lp.rows() == 4);
    for (int i = 0; i < lp.rows(); ++i) {
        double sum = 0;
        for (int j = 0; j < lp.cols(); ++j) sum += std::exp(lp.at(i, j));
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // Perturb position 2: rows 0..1 must not move.
    std::vector<int> perturbed = input;
    perturbed[2] = 3;
    Tensor lp2 = sltt_log_probs(perturbed, memory, p, false, nullptr);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < vocab; ++j)
            CHECK(lp.at(i, j) == doctest::Approx(lp2.at(i, j)).epsilon(1e-12));

    CHECK_THROWS_AS(sltt_states({4, 5}, memory, p, false, nullptr), ContractError);
}

TEST_CASE("sltt gradients match central differences") {
    Rng rng(77);
    const int d = 4, vocab = 6;
    SlttParams p = small_decoder(d, vocab, rng);
    Tensor memory = random_tensor(3, d, rng, true);
    const std::vector<int> sentence{4, 5, Vocabulary::kEos};

    auto loss = [&]() {
        return scale(translation_log_prob(sentence, memory, p, false, nullptr), -1.0 / 3);
    };
    std::vector<std::pair<std::string, Tensor>> params = {
        {"memory", memory},
        {"embed", p.embed},
        {"self.wq", p.layers[0].self_attn.wq},
        {"cross.wk", p.layers[0].cross_attn.wk},
        {"cross.wv", p.layers[0].cross_attn.wv},
        {"ffn.w2", p.layers[0].ffn.w2},
        {"out_w", p.out_w}};
    const auto report = finite_difference_check(
        params, [&]() { return loss().value(); }, [&]() { backward(loss()); });
    INFO("worst " << report.worst_param << " err " << report.max_rel_err);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("translation_log_prob decomposes into stepwise conditionals") {
    Rng rng(78);
    const int d = 4, vocab = 7;
    SlttParams p = small_decoder(d, vocab, rng);
    Tensor memory = random_tensor(4, d, rng);

    const std::vector<int> sentence{4, 6, 5, Vocabulary::kEos};
    const double total = translation_log_prob(sentence, memory, p, false, nullptr).value();
    CHECK(total <= 0.0);

    double stepwise = 0.0;
    std::vector<int> prefix{Vocabulary::kBos};
    for (int token : sentence) {
        stepwise += sltt_step(prefix, memory, p).at(0, token);
        prefix.push_back(token);
    }
    CHECK(total == doctest::Approx(stepwise).epsilon(1e-9));

    // Single-token sentence: exactly the one-step log probability.
    const std::vector<int> eos_only{Vocabulary::kEos};
    CHECK(translation_log_prob(eos_only, memory, p, false, nullptr).value() ==
          doctest::Approx(sltt_step({Vocabulary::kBos}, memory, p).at(0, Vocabulary::kEos))
              .epsilon(1e-12));

    CHECK_THROWS_AS(translation_log_prob({}, memory, p, false, nullptr), ContractError);
    CHECK_THROWS_AS(translation_log_prob({4, 5}, memory, p, false, nullptr), ContractError);
}

TEST_CASE("joint loss weighting") {
    CHECK(joint_loss_value(0.2, 1.0, {5.0, 1.0}) == doctest::Approx(2.0));
    CHECK(joint_loss_value(0.7, 3.0, {5.0, 0.0}) == doctest::Approx(3.5));
    CHECK(joint_loss_value(0.7, 3.0, {0.0, 1.0}) == doctest::Approx(3.0));

    Rng rng(79);
    for (int i = 0; i < 50; ++i) {
        const double lr = rng.uniform(0, 3), lt = rng.uniform(0, 3);
        const double a = rng.uniform(0, 5), b = rng.uniform(0, 5);
        const double k = rng.uniform(0, 2);
        // Bilinear in the weights and in the losses.
        CHECK(joint_loss_value(lr, lt, {k * a, b}) ==
              doctest::Approx(k * a * lr + b * lt).epsilon(1e-12));
        CHECK(joint_loss_value(k * lr, lt, {a, b}) ==
              doctest::Approx(a * k * lr + b * lt).epsilon(1e-12));
    }

    Tensor lr = Tensor::scalar(0.2), lt = Tensor::scalar(1.0);
    CHECK(joint_loss(lr, lt, {5.0, 1.0}).value() == doctest::Approx(2.0));
}

TEST_CASE("length penalty and score ranking at alpha zero") {
    CHECK(length_penalty(4, 0.0) == 1.0);
    CHECK(length_penalty(7, 1.0) == doctest::Approx(2.0));
    CHECK(length_penalty(7, 2.0) == doctest::Approx(4.0));

    Rng rng(80);
    for (int i = 0; i < 100; ++i) {
        BeamHypothesis h;
        const int len = rng.uniform_int(1, 12);
        for (int t = 0; t < len; ++t) h.tokens.push_back(rng.uniform_int(0, 9));
        h.log_prob = -rng.uniform(0, 30);
        CHECK(hypothesis_score(h, 0.0) == h.log_prob);
    }
}

TEST_CASE("beam size one with alpha zero equals greedy, token-exact") {
    for (int instance = 0; instance < 100; ++instance) {
        Rng rng(1000 + instance);
        const int d = 4, vocab = 6;
        SlttParams p = small_decoder(d, vocab, rng);
        Tensor memory = random_tensor(rng.uniform_int(2, 5), d, rng);
        const auto greedy = greedy_decode(memory, p, 6);
        const auto beam = beam_decode(memory, p, 1, 0.0, 6);
        CHECK(greedy == beam);
    }
}

TEST_CASE("deterministic one-hot decoder forces the same sequence on both decoders") {
    // Zeroed output weights plus a huge bias for one token pin every step's
    // distribution, so both decoders must emit that token until max_len.
    Rng rng(81);
    const int d = 4, vocab = 6;
    SlttParams p = small_decoder(d, vocab, rng);
    p.out_w.set_values(std::vector<double>(p.out_w.size(), 0.0));
    std::vector<double> bias(static_cast<std::size_t>(vocab), 0.0);
    bias[4] = 50.0;
    p.out_b.set_values(bias);
    Tensor memory = Tensor::full(2, d, 1.0);
    const auto greedy = greedy_decode(memory, p, 3);
    CHECK(greedy == std::vector<int>{4, 4, 4});
    CHECK(beam_decode(memory, p, 1, 0.0, 3) == greedy);
    CHECK(beam_decode(memory, p, 3, 0.0, 3) == greedy);
}

TEST_CASE("beam input validation") {
    Rng rng(82);
    SlttParams p = small_decoder(4, 6, rng);
    Tensor memory = random_tensor(2, 4, rng);
    CHECK_THROWS_AS(beam_decode(memory, p, 0, 0.0, 4), ContractError);
    CHECK_THROWS_AS(beam_decode(memory, p, 2, 2.5, 4), ContractError);
    CHECK_THROWS_AS(beam_decode(memory, p, 2, 0.0, 0), ContractError);
}
