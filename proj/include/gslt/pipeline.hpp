#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gslt/gradcheck.hpp"
#include "gslt/metrics.hpp"
#include "gslt/model.hpp"
#include "gslt/pipeline_types.hpp"

namespace gslt {

// ---- corpus ----

std::vector<CorpusRecord> load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::vector<CorpusRecord>& records);

// Content tokens sorted lexicographically, reserved ids first.
Vocabulary build_gloss_vocab(const std::vector<CorpusRecord>& records);
Vocabulary build_word_vocab(const std::vector<CorpusRecord>& records);

// Deterministic per seed. Frames are noisy prototype embeddings of a latent
// gloss run-length expansion; the text is a fixed word-per-gloss mapping, so
// both references are learnable from the frames.
std::vector<CorpusRecord> generate_synthetic_corpus(const SyntheticSpec& spec);

Tensor frames_tensor(const CorpusRecord& record, int expected_d_in);

// ---- configuration ----

TrainingConfig parse_training_config(const std::string& json_text);
std::string training_config_to_json(const TrainingConfig& cfg);

// ---- graphs ----

struct GraphCache {
    std::uint64_t fingerprint = 0;
    long version = 0;
    std::vector<MultiModalGraph> graphs;
    bool all_valid = true;
};

// Bootstrap recognition -> pseudo-labels -> grouping -> graph, per record.
GraphCache initialize_graphs(const Model& model, const std::vector<CorpusRecord>& records);

// ---- training ----

struct TrainEval {
    long step = 0;
    double dev_wer = 0.0;
    double dev_bleu4 = 0.0;
    bool realigned = false;
    long graph_version = 0;
    bool graphs_valid = true;
};

struct TrainPhaseReport {
    long steps_run = 0;
    std::vector<double> step_losses;
    std::vector<TrainEval> evals;
    int realign_count = 0;
    bool all_rebuilt_graphs_valid = true;
    double best_dev_bleu4 = -1.0;
    long best_step = -1;
    double final_dev_wer = 0.0;
};

// Recognition path alone (lambda_T forced to zero), graph-free bootstrap
// encode. Returns the report with dev WER at each evaluation.
TrainPhaseReport pretrain_recognition(Model& model, const std::vector<CorpusRecord>& train,
                                      const std::vector<CorpusRecord>& dev,
                                      const Vocabulary& gloss_vocab,
                                      const Vocabulary& word_vocab, const TrainingConfig& cfg,
                                      std::ostream* log);

// Joint phase over pseudo-label graphs with dynamic re-alignment: graphs are
// rebuilt whenever dev WER improves by at least realign_epsilon points.
// Checkpoints (best-by-dev-BLEU4 and final) land under checkpoint_dir when
// it is non-empty.
TrainPhaseReport train_joint(Model& model, const std::vector<CorpusRecord>& train,
                             const std::vector<CorpusRecord>& dev,
                             const Vocabulary& gloss_vocab, const Vocabulary& word_vocab,
                             const TrainingConfig& cfg, const std::string& checkpoint_dir,
                             std::ostream* log);

// ---- evaluation ----

enum class Protocol { GSign2GlossText, Sign2Gloss, Sign2Text };
Protocol protocol_from_string(const std::string& name);
void check_protocol_compatibility(const TrainingConfig& trained_with, Protocol protocol);

struct EvalOptions {
    Protocol protocol = Protocol::GSign2GlossText;
    int beam_size = 5;
    double alpha = 1.0;
    int max_decode_len = 16;
    bool greedy = false;  // validation-time decoding
};

struct MetricReport {
    double wer = 0.0;
    double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
    double rougeL = 0.0;
};

MetricReport evaluate(const Model& model, const std::vector<CorpusRecord>& records,
                      const Vocabulary& gloss_vocab, const Vocabulary& word_vocab,
                      const EvalOptions& opts);

std::string metric_report_to_json(const MetricReport& report);

// Recognition-only corpus WER through the graph-free bootstrap path.
double bootstrap_dev_wer(const Model& model, const std::vector<CorpusRecord>& records,
                         const Vocabulary& gloss_vocab);

// Per-record translation through the full pseudo-label -> graph pipeline.
std::vector<std::string> translate_record(const Model& model, const CorpusRecord& record,
                                          const Vocabulary& word_vocab, const EvalOptions& opts);

// ---- checkpoints ----

struct Checkpoint {
    Model model;
    Vocabulary gloss_vocab;
    Vocabulary word_vocab;
    TrainingConfig train_config;
    long step = 0;
    std::map<std::string, double> dev_metrics;
};

void save_checkpoint(const std::string& dir, const Model& model, const Vocabulary& gloss_vocab,
                     const Vocabulary& word_vocab, const TrainingConfig& train_config, long step,
                     const std::map<std::string, double>& dev_metrics, bool store_f32 = false);
Checkpoint load_checkpoint(const std::string& dir);

// ---- verification ----

// Full-model central-difference check on a small fixed scenario.
GradCheckReport full_model_gradcheck(std::uint64_t seed);

}  // namespace gslt
