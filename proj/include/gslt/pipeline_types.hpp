#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gslt/seq2seq.hpp"

namespace gslt {

// One parallel sample: per-frame feature vectors plus both references.
struct CorpusRecord {
    std::string id;
    std::vector<std::vector<double>> frames;
    std::vector<std::string> gloss_ref;
    std::vector<std::string> text_ref;
};

struct SyntheticSpec {
    int n_records = 50;
    int gloss_vocab_size = 20;  // ids including PAD
    int word_vocab_size = 25;   // ids including PAD/BOS/EOS/UNK
    int d_in = 16;
    int min_glosses = 3;
    int max_glosses = 5;
    int min_run = 2;
    int max_run = 4;
    int max_pad_gap = 1;
    double noise = 0.1;
    std::uint64_t seed = 1;
};

struct TrainingConfig {
    double lambda_r = 5.0;
    double lambda_t = 1.0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.998;
    double weight_decay = 1e-3;
    int batch_size = 32;
    double dropout = 0.1;
    long max_steps = 2000;
    long eval_every = 200;
    double realign_epsilon = 0.5;  // absolute WER points (percent scale)
    int realign_max = 0;           // 0 = unlimited rebuilds
    bool static_graphs = false;
    RecognitionLossMode loss_mode = RecognitionLossMode::Nll;
    std::uint64_t seed = 1;
    int beam_size = 5;
    double alpha = 1.0;
    int max_decode_len = 16;
};

}  // namespace gslt
