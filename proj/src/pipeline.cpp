#include "gslt/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gslt {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written as little-endian host doubles");

// ---- corpus ----

namespace {

CorpusRecord record_from_json(const json& j, std::size_t line_no) {
    const std::string where = "corpus line " + std::to_string(line_no);
    CorpusRecord rec;
    try {
        rec.id = j.at("id").get<std::string>();
        rec.frames = j.at("frames").get<std::vector<std::vector<double>>>();
        rec.gloss_ref = j.at("gloss").get<std::vector<std::string>>();
        rec.text_ref = j.at("text").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
    if (rec.frames.empty()) throw ParseError(where + " (record " + rec.id + "): empty frames");
    const std::size_t width = rec.frames.front().size();
    if (width == 0) throw ParseError(where + " (record " + rec.id + "): zero-width frame");
    for (const auto& f : rec.frames)
        if (f.size() != width)
            throw ParseError(where + " (record " + rec.id + "): ragged frame widths");
    if (rec.gloss_ref.size() > rec.frames.size())
        throw ParseError(where + " (record " + rec.id + "): more glosses than frames");
    return rec;
}

}  // namespace

std::vector<CorpusRecord> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file " + path);
    std::vector<CorpusRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        records.push_back(record_from_json(j, line_no));
    }
    return records;
}

void save_corpus(const std::string& path, const std::vector<CorpusRecord>& records) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write corpus file " + path);
    for (const auto& rec : records) {
        json j;
        j["id"] = rec.id;
        j["frames"] = rec.frames;
        j["gloss"] = rec.gloss_ref;
        j["text"] = rec.text_ref;
        out << j.dump() << "\n";
    }
}

namespace {

std::vector<std::string> sorted_unique_tokens(const std::vector<CorpusRecord>& records,
                                              bool glosses) {
    std::set<std::string> seen;
    for (const auto& rec : records)
        for (const auto& t : glosses ? rec.gloss_ref : rec.text_ref) seen.insert(t);
    return {seen.begin(), seen.end()};
}

}  // namespace

Vocabulary build_gloss_vocab(const std::vector<CorpusRecord>& records) {
    return Vocabulary::glosses(sorted_unique_tokens(records, true));
}

Vocabulary build_word_vocab(const std::vector<CorpusRecord>& records) {
    return Vocabulary::words(sorted_unique_tokens(records, false));
}

std::vector<CorpusRecord> generate_synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.gloss_vocab_size < 3) throw ConfigError("synthetic corpus: gloss vocabulary too small");
    if (spec.word_vocab_size < 6) throw ConfigError("synthetic corpus: word vocabulary too small");
    Rng rng(spec.seed);

    const int n_glosses = spec.gloss_vocab_size - 1;   // PAD excluded
    const int n_words = spec.word_vocab_size - 4;      // reserved ids excluded
    auto gloss_token = [](int i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "g%02d", i);
        return std::string(buf);
    };
    auto word_token = [](int i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "w%02d", i);
        return std::string(buf);
    };

    // One fixed prototype per latent label (PAD included).
    std::vector<std::vector<double>> prototypes(static_cast<std::size_t>(n_glosses) + 1);
    for (auto& proto : prototypes) {
        proto.resize(static_cast<std::size_t>(spec.d_in));
        for (auto& v : proto) v = rng.normal();
    }

    std::vector<CorpusRecord> records;
    for (int r = 0; r < spec.n_records; ++r) {
        CorpusRecord rec;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "syn-%04d", r);
        rec.id = idbuf;

        const int len = rng.uniform_int(spec.min_glosses, spec.max_glosses);
        std::vector<int> gloss_indices;  // 1-based latent labels
        for (int k = 0; k < len; ++k) {
            int g = rng.uniform_int(1, n_glosses);
            while (!gloss_indices.empty() && g == gloss_indices.back())
                g = rng.uniform_int(1, n_glosses);
            gloss_indices.push_back(g);
        }

        PseudoPrimitiveSequence latent;
        for (int pad = rng.uniform_int(0, spec.max_pad_gap); pad > 0; --pad)
            latent.push_back(kPadId);
        for (std::size_t k = 0; k < gloss_indices.size(); ++k) {
            const int run = rng.uniform_int(spec.min_run, spec.max_run);
            for (int f = 0; f < run; ++f) latent.push_back(gloss_indices[k]);
            for (int pad = rng.uniform_int(0, spec.max_pad_gap); pad > 0; --pad)
                latent.push_back(kPadId);
        }

        for (int label : latent) {
            std::vector<double> frame(prototypes[static_cast<std::size_t>(label)]);
            for (auto& v : frame) v += spec.noise * rng.normal();
            rec.frames.push_back(std::move(frame));
        }
        for (int g : gloss_indices) {
            rec.gloss_ref.push_back(gloss_token(g));
            rec.text_ref.push_back(word_token((g - 1) % n_words + 1));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

Tensor frames_tensor(const CorpusRecord& record, int expected_d_in) {
    const int n = static_cast<int>(record.frames.size());
    if (n == 0) throw ContractError("frames_tensor: record " + record.id + " has no frames");
    const int d = static_cast<int>(record.frames.front().size());
    if (d != expected_d_in)
        throw DimensionError("frames_tensor: record " + record.id + " has width " +
                             std::to_string(d) + ", model expects " +
                             std::to_string(expected_d_in));
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n) * d);
    for (const auto& f : record.frames) values.insert(values.end(), f.begin(), f.end());
    return Tensor::from_values(n, d, std::move(values));
}

// ---- configuration ----

namespace {

const char* loss_mode_name(RecognitionLossMode m) {
    return m == RecognitionLossMode::Nll ? "nll" : "paper";
}

RecognitionLossMode loss_mode_from_name(const std::string& s) {
    if (s == "nll") return RecognitionLossMode::Nll;
    if (s == "paper") return RecognitionLossMode::Paper;
    throw ConfigError("unknown loss mode '" + s + "' (expected nll|paper)");
}

const char* output_mode_name(OutputMode m) {
    switch (m) {
        case OutputMode::VisualOnly: return "visual";
        case OutputMode::TextualOnly: return "textual";
        case OutputMode::Concat: return "concat";
    }
    return "visual";
}

OutputMode output_mode_from_name(const std::string& s) {
    if (s == "visual") return OutputMode::VisualOnly;
    if (s == "textual") return OutputMode::TextualOnly;
    if (s == "concat") return OutputMode::Concat;
    throw ConfigError("unknown output mode '" + s + "' (expected visual|textual|concat)");
}

json training_config_json(const TrainingConfig& cfg) {
    json j;
    j["lambda_r"] = cfg.lambda_r;
    j["lambda_t"] = cfg.lambda_t;
    j["learning_rate"] = cfg.learning_rate;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["weight_decay"] = cfg.weight_decay;
    j["batch_size"] = cfg.batch_size;
    j["dropout"] = cfg.dropout;
    j["max_steps"] = cfg.max_steps;
    j["eval_every"] = cfg.eval_every;
    j["realign_epsilon"] = cfg.realign_epsilon;
    j["realign_max"] = cfg.realign_max;
    j["static_graphs"] = cfg.static_graphs;
    j["loss_mode"] = loss_mode_name(cfg.loss_mode);
    j["seed"] = cfg.seed;
    j["beam_size"] = cfg.beam_size;
    j["alpha"] = cfg.alpha;
    j["max_decode_len"] = cfg.max_decode_len;
    return j;
}

TrainingConfig training_config_from_json(const json& j) {
    TrainingConfig cfg;
    auto grab = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    grab("lambda_r", cfg.lambda_r);
    grab("lambda_t", cfg.lambda_t);
    grab("learning_rate", cfg.learning_rate);
    grab("beta1", cfg.beta1);
    grab("beta2", cfg.beta2);
    grab("weight_decay", cfg.weight_decay);
    grab("batch_size", cfg.batch_size);
    grab("dropout", cfg.dropout);
    grab("max_steps", cfg.max_steps);
    grab("eval_every", cfg.eval_every);
    grab("realign_epsilon", cfg.realign_epsilon);
    grab("realign_max", cfg.realign_max);
    grab("static_graphs", cfg.static_graphs);
    grab("seed", cfg.seed);
    grab("beam_size", cfg.beam_size);
    grab("alpha", cfg.alpha);
    grab("max_decode_len", cfg.max_decode_len);
    if (j.contains("loss_mode")) cfg.loss_mode = loss_mode_from_name(j.at("loss_mode"));
    if (cfg.lambda_r < 0 || cfg.lambda_t < 0)
        throw ConfigError("loss weights must be non-negative");
    if (cfg.lambda_r == 0 && cfg.lambda_t == 0)
        throw ConfigError("loss weights must not both be zero");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    return cfg;
}

json model_config_json(const ModelConfig& cfg) {
    json j;
    j["d_in"] = cfg.d_in;
    j["d_model"] = cfg.d_model;
    j["n_heads"] = cfg.n_heads;
    j["n_fusion_layers"] = cfg.n_fusion_layers;
    j["n_slrt_layers"] = cfg.n_slrt_layers;
    j["n_sltt_layers"] = cfg.n_sltt_layers;
    j["d_ff"] = cfg.d_ff;
    j["dropout_rate"] = cfg.dropout_rate;
    j["output_mode"] = output_mode_name(cfg.output_mode);
    j["use_positional_encoding"] = cfg.use_positional_encoding;
    j["gloss_vocab_size"] = cfg.gloss_vocab_size;
    j["word_vocab_size"] = cfg.word_vocab_size;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.d_in = j.at("d_in").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.n_fusion_layers = j.at("n_fusion_layers").get<int>();
    cfg.n_slrt_layers = j.at("n_slrt_layers").get<int>();
    cfg.n_sltt_layers = j.at("n_sltt_layers").get<int>();
    cfg.d_ff = j.at("d_ff").get<int>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.output_mode = output_mode_from_name(j.at("output_mode"));
    cfg.use_positional_encoding = j.at("use_positional_encoding").get<bool>();
    cfg.gloss_vocab_size = j.at("gloss_vocab_size").get<int>();
    cfg.word_vocab_size = j.at("word_vocab_size").get<int>();
    return cfg;
}

}  // namespace

TrainingConfig parse_training_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("training config: ") + e.what());
    }
    return training_config_from_json(j);
}

std::string training_config_to_json(const TrainingConfig& cfg) {
    return training_config_json(cfg).dump(2);
}

// ---- graphs ----

GraphCache initialize_graphs(const Model& model, const std::vector<CorpusRecord>& records) {
    GraphCache cache;
    cache.fingerprint = model.recognition_fingerprint();
    for (const auto& rec : records) {
        Tensor frames = frames_tensor(rec, model.config().d_in);
        PseudoPrimitiveSequence p = best_path_decode(model.bootstrap_gloss_log_probs(frames));
        AlignmentTable table = group_pseudo_labels(p);
        MultiModalGraph graph = build_graph(frames.rows(), table);
        cache.all_valid = cache.all_valid && align_consistency_check(table, p) &&
                          graph_invariants_hold(graph);
        cache.graphs.push_back(std::move(graph));
    }
    return cache;
}

// ---- training ----

namespace {

// Joint loss graph for one sample. Heads with zero weight are skipped, so
// their parameters never enter the autodiff graph.
Tensor sample_joint_loss(const Model& model, const CorpusRecord& rec,
                         const MultiModalGraph& graph, const Vocabulary& gloss_vocab,
                         const Vocabulary& word_vocab, const TrainingConfig& cfg, bool train,
                         Rng* rng) {
    Tensor frames = frames_tensor(rec, model.config().d_in);
    Tensor multi = model.encode_record(graph, frames, train, rng);
    Tensor z = model.slrt(multi, train, rng);

    Tensor loss_r, loss_t;
    if (cfg.lambda_r > 0.0) {
        Tensor glp = model.frame_gloss_log_probs(z);
        const std::vector<int> target = gloss_vocab.encode(rec.gloss_ref, false);
        loss_r = recognition_loss(ctc_log_prob(glp, target), cfg.loss_mode);
    }
    if (cfg.lambda_t > 0.0) {
        std::vector<int> sentence = word_vocab.encode(rec.text_ref, true);
        sentence.push_back(Vocabulary::kEos);
        Tensor log_p = translation_log_prob(sentence, z, model.sltt(), train, rng);
        loss_t = scale(log_p, -1.0 / static_cast<double>(sentence.size()));
    }
    if (loss_r.defined() && loss_t.defined())
        return joint_loss(loss_r, loss_t, {cfg.lambda_r, cfg.lambda_t});
    if (loss_r.defined()) return scale(loss_r, cfg.lambda_r);
    return scale(loss_t, cfg.lambda_t);
}

double dev_bleu4_greedy(const Model& model, const std::vector<CorpusRecord>& dev,
                        const Vocabulary& gloss_vocab, const Vocabulary& word_vocab,
                        const TrainingConfig& cfg) {
    EvalOptions opts;
    opts.protocol = Protocol::Sign2Text;
    opts.greedy = true;
    opts.max_decode_len = cfg.max_decode_len;
    return evaluate(model, dev, gloss_vocab, word_vocab, opts).bleu4;
}

TrainPhaseReport run_training(Model& model, const std::vector<CorpusRecord>& train,
                              const std::vector<CorpusRecord>& dev_in,
                              const Vocabulary& gloss_vocab, const Vocabulary& word_vocab,
                              const TrainingConfig& cfg, bool with_graphs,
                              const std::string& checkpoint_dir, std::ostream* log) {
    if (train.empty()) throw ContractError("training: empty corpus");
    const std::vector<CorpusRecord>& dev = dev_in.empty() ? train : dev_in;

    TrainPhaseReport report;
    Rng rng(cfg.seed);
    Adam adam({cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay});

    GraphCache cache;
    if (with_graphs) {
        cache = initialize_graphs(model, train);
        report.all_rebuilt_graphs_valid = cache.all_valid;
    }

    double wer_at_last_realign = bootstrap_dev_wer(model, dev, gloss_vocab);
    report.evals.push_back({0, wer_at_last_realign,
                            cfg.lambda_t > 0.0
                                ? dev_bleu4_greedy(model, dev, gloss_vocab, word_vocab, cfg)
                                : 0.0,
                            false, cache.version, cache.all_valid});
    if (log)
        *log << "step 0 dev_wer " << wer_at_last_realign << " graph_version " << cache.version
             << "\n";

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t cursor = 0;

    for (long step = 1; step <= cfg.max_steps; ++step) {
        std::vector<std::size_t> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }

        model.params().zero_grads();
        Tensor total;
        for (std::size_t idx : batch) {
            MultiModalGraph scratch;
            const MultiModalGraph* graph = &scratch;
            if (with_graphs) {
                graph = &cache.graphs[idx];
            } else {
                scratch = empty_graph(static_cast<int>(train[idx].frames.size()));
            }
            Tensor sample =
                sample_joint_loss(model, train[idx], *graph, gloss_vocab, word_vocab, cfg,
                                  /*train=*/true, &rng);
            total = total.defined() ? add(total, sample) : sample;
        }
        Tensor loss = scale(total, 1.0 / cfg.batch_size);
        const double loss_value = loss.value();
        if (!std::isfinite(loss_value)) {
            std::string ids;
            for (std::size_t idx : batch) ids += (ids.empty() ? "" : ",") + train[idx].id;
            throw TrainingError("non-finite loss at step " + std::to_string(step) +
                                " (batch: " + ids + ")");
        }
        backward(loss);
        adam.step(model.params());
        report.step_losses.push_back(loss_value);
        report.steps_run = step;
        if (log && step % 50 == 0) *log << "step " << step << " loss " << loss_value << "\n";

        if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
            TrainEval ev;
            ev.step = step;
            ev.dev_wer = bootstrap_dev_wer(model, dev, gloss_vocab);
            ev.dev_bleu4 = cfg.lambda_t > 0.0
                               ? dev_bleu4_greedy(model, dev, gloss_vocab, word_vocab, cfg)
                               : 0.0;
            ev.graph_version = cache.version;
            ev.graphs_valid = cache.all_valid;

            const bool realign_allowed =
                with_graphs && !cfg.static_graphs &&
                (cfg.realign_max == 0 || report.realign_count < cfg.realign_max);
            const double improvement_points = (wer_at_last_realign - ev.dev_wer) * 100.0;
            if (realign_allowed && improvement_points >= cfg.realign_epsilon) {
                cache = initialize_graphs(model, train);
                cache.version = ev.graph_version + 1;
                ++report.realign_count;
                report.all_rebuilt_graphs_valid =
                    report.all_rebuilt_graphs_valid && cache.all_valid;
                wer_at_last_realign = ev.dev_wer;
                ev.realigned = true;
                ev.graph_version = cache.version;
                ev.graphs_valid = cache.all_valid;
            }

            if (ev.dev_bleu4 > report.best_dev_bleu4) {
                report.best_dev_bleu4 = ev.dev_bleu4;
                report.best_step = step;
                if (!checkpoint_dir.empty())
                    save_checkpoint(checkpoint_dir + "/best", model, gloss_vocab, word_vocab,
                                    cfg, step, {{"wer", ev.dev_wer}, {"bleu4", ev.dev_bleu4}});
            }
            report.final_dev_wer = ev.dev_wer;
            report.evals.push_back(ev);
            if (log)
                *log << "step " << step << " dev_wer " << ev.dev_wer << " dev_bleu4 "
                     << ev.dev_bleu4 << " realign " << (ev.realigned ? 1 : 0)
                     << " graph_version " << ev.graph_version << "\n";
        }
    }

    if (!checkpoint_dir.empty()) {
        const auto& last = report.evals.back();
        save_checkpoint(checkpoint_dir + "/final", model, gloss_vocab, word_vocab, cfg,
                        report.steps_run, {{"wer", last.dev_wer}, {"bleu4", last.dev_bleu4}});
    }
    return report;
}

}  // namespace

TrainPhaseReport pretrain_recognition(Model& model, const std::vector<CorpusRecord>& train,
                                      const std::vector<CorpusRecord>& dev,
                                      const Vocabulary& gloss_vocab,
                                      const Vocabulary& word_vocab, const TrainingConfig& cfg,
                                      std::ostream* log) {
    TrainingConfig recognition_only = cfg;
    recognition_only.lambda_t = 0.0;
    if (recognition_only.lambda_r <= 0.0)
        throw ConfigError("pretrain_recognition: lambda_r must be positive");
    return run_training(model, train, dev, gloss_vocab, word_vocab, recognition_only,
                        /*with_graphs=*/false, "", log);
}

TrainPhaseReport train_joint(Model& model, const std::vector<CorpusRecord>& train,
                             const std::vector<CorpusRecord>& dev,
                             const Vocabulary& gloss_vocab, const Vocabulary& word_vocab,
                             const TrainingConfig& cfg, const std::string& checkpoint_dir,
                             std::ostream* log) {
    return run_training(model, train, dev, gloss_vocab, word_vocab, cfg, /*with_graphs=*/true,
                        checkpoint_dir, log);
}

// ---- evaluation ----

Protocol protocol_from_string(const std::string& name) {
    if (name == "gsign2" || name == "joint") return Protocol::GSign2GlossText;
    if (name == "sign2gloss") return Protocol::Sign2Gloss;
    if (name == "sign2text") return Protocol::Sign2Text;
    throw ConfigError("unknown protocol '" + name + "' (expected gsign2|sign2gloss|sign2text)");
}

void check_protocol_compatibility(const TrainingConfig& trained_with, Protocol protocol) {
    const bool has_recognition = trained_with.lambda_r > 0.0;
    const bool has_translation = trained_with.lambda_t > 0.0;
    switch (protocol) {
        case Protocol::GSign2GlossText:
            if (!has_recognition || !has_translation)
                throw ConfigError("checkpoint was not trained jointly; gsign2 unavailable");
            return;
        case Protocol::Sign2Gloss:
            if (!has_recognition)
                throw ConfigError("checkpoint has no trained recognition head");
            return;
        case Protocol::Sign2Text:
            if (!has_translation)
                throw ConfigError("checkpoint has no trained translation head");
            return;
    }
}

namespace {

struct RecordForward {
    MultiModalGraph graph;
    Tensor z;
};

RecordForward record_forward(const Model& model, const CorpusRecord& rec) {
    Tensor frames = frames_tensor(rec, model.config().d_in);
    PseudoPrimitiveSequence p = best_path_decode(model.bootstrap_gloss_log_probs(frames));
    MultiModalGraph graph = build_graph(frames.rows(), group_pseudo_labels(p));
    Tensor multi = model.encode_record(graph, frames, /*train=*/false, nullptr);
    return {std::move(graph), model.slrt(multi, /*train=*/false, nullptr)};
}

}  // namespace

MetricReport evaluate(const Model& model, const std::vector<CorpusRecord>& records,
                      const Vocabulary& gloss_vocab, const Vocabulary& word_vocab,
                      const EvalOptions& opts) {
    if (records.empty()) throw ContractError("evaluate: empty corpus");
    const bool need_recognition = opts.protocol != Protocol::Sign2Text;
    const bool need_translation = opts.protocol != Protocol::Sign2Gloss;

    long total_distance = 0, total_ref_tokens = 0;
    std::vector<TokenSequence> refs, hyps;
    double rouge_sum = 0.0;

    for (const auto& rec : records) {
        RecordForward fw = record_forward(model, rec);
        if (need_recognition) {
            if (rec.gloss_ref.empty()) throw ContractError("evaluate: empty gloss reference");
            const std::vector<int> hyp_ids =
                collapse(best_path_decode(model.frame_gloss_log_probs(fw.z)));
            const TokenSequence hyp = gloss_vocab.decode(hyp_ids);
            total_distance += edit_distance(rec.gloss_ref, hyp);
            total_ref_tokens += static_cast<long>(rec.gloss_ref.size());
        }
        if (need_translation) {
            if (rec.text_ref.empty()) throw ContractError("evaluate: empty text reference");
            const std::vector<int> ids =
                opts.greedy ? greedy_decode(fw.z, model.sltt(), opts.max_decode_len)
                            : beam_decode(fw.z, model.sltt(), opts.beam_size, opts.alpha,
                                          opts.max_decode_len);
            TokenSequence words = word_vocab.decode(ids);
            rouge_sum += rouge_l_f1(rec.text_ref, words);
            refs.push_back(rec.text_ref);
            hyps.push_back(std::move(words));
        }
    }

    MetricReport report;
    if (need_recognition)
        report.wer = static_cast<double>(total_distance) / static_cast<double>(total_ref_tokens);
    if (need_translation) {
        const auto scores = bleu(refs, hyps);
        report.bleu1 = scores[0];
        report.bleu2 = scores[1];
        report.bleu3 = scores[2];
        report.bleu4 = scores[3];
        report.rougeL = rouge_sum / static_cast<double>(hyps.size());
    }
    return report;
}

std::string metric_report_to_json(const MetricReport& report) {
    json j;
    j["wer"] = report.wer;
    j["bleu1"] = report.bleu1;
    j["bleu2"] = report.bleu2;
    j["bleu3"] = report.bleu3;
    j["bleu4"] = report.bleu4;
    j["rougeL"] = report.rougeL;
    return j.dump();
}

double bootstrap_dev_wer(const Model& model, const std::vector<CorpusRecord>& records,
                         const Vocabulary& gloss_vocab) {
    if (records.empty()) throw ContractError("bootstrap_dev_wer: empty corpus");
    long total_distance = 0, total_ref_tokens = 0;
    for (const auto& rec : records) {
        if (rec.gloss_ref.empty()) throw ContractError("bootstrap_dev_wer: empty gloss reference");
        Tensor frames = frames_tensor(rec, model.config().d_in);
        const std::vector<int> hyp_ids =
            collapse(best_path_decode(model.bootstrap_gloss_log_probs(frames)));
        total_distance += edit_distance(rec.gloss_ref, gloss_vocab.decode(hyp_ids));
        total_ref_tokens += static_cast<long>(rec.gloss_ref.size());
    }
    return static_cast<double>(total_distance) / static_cast<double>(total_ref_tokens);
}

std::vector<std::string> translate_record(const Model& model, const CorpusRecord& record,
                                          const Vocabulary& word_vocab, const EvalOptions& opts) {
    RecordForward fw = record_forward(model, record);
    const std::vector<int> ids =
        opts.greedy ? greedy_decode(fw.z, model.sltt(), opts.max_decode_len)
                    : beam_decode(fw.z, model.sltt(), opts.beam_size, opts.alpha,
                                  opts.max_decode_len);
    return word_vocab.decode(ids);
}

// ---- checkpoints ----

namespace {
constexpr int kCheckpointSchemaVersion = 1;
}

void save_checkpoint(const std::string& dir, const Model& model, const Vocabulary& gloss_vocab,
                     const Vocabulary& word_vocab, const TrainingConfig& train_config, long step,
                     const std::map<std::string, double>& dev_metrics, bool store_f32) {
    fs::create_directories(dir);
    json manifest;
    manifest["schema_version"] = kCheckpointSchemaVersion;
    manifest["step"] = step;
    manifest["dtype"] = store_f32 ? "f32" : "f64";
    manifest["training_config"] = training_config_json(train_config);
    manifest["model_config"] = model_config_json(model.config());
    manifest["gloss_vocab"] = gloss_vocab.tokens();
    manifest["word_vocab"] = word_vocab.tokens();
    manifest["dev_metrics"] = dev_metrics;

    auto params = json::array();
    int index = 0;
    for (const auto& [name, tensor] : model.params().entries()) {
        char filename[32];
        std::snprintf(filename, sizeof(filename), "p%04d.bin", index++);
        json entry;
        entry["name"] = name;
        entry["rows"] = tensor.rows();
        entry["cols"] = tensor.cols();
        entry["count"] = tensor.size();
        entry["file"] = filename;
        params.push_back(entry);

        std::ofstream blob(fs::path(dir) / filename, std::ios::binary);
        if (!blob) throw ParseError("cannot write checkpoint blob " + std::string(filename));
        if (store_f32) {
            std::vector<float> narrow(tensor.values().begin(), tensor.values().end());
            blob.write(reinterpret_cast<const char*>(narrow.data()),
                       static_cast<std::streamsize>(narrow.size() * sizeof(float)));
        } else {
            blob.write(reinterpret_cast<const char*>(tensor.values().data()),
                       static_cast<std::streamsize>(tensor.size() * sizeof(double)));
        }
    }
    manifest["params"] = params;

    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw ParseError("cannot write checkpoint manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw ParseError("cannot open checkpoint manifest in " + dir);
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("checkpoint manifest: ") + e.what());
    }
    if (!manifest.contains("schema_version") ||
        manifest["schema_version"].get<int>() != kCheckpointSchemaVersion)
        throw VersionError("checkpoint manifest: unsupported schema_version");

    const ModelConfig model_cfg = model_config_from_json(manifest.at("model_config"));
    const bool f32 = manifest.at("dtype").get<std::string>() == "f32";

    Checkpoint ckpt{
        Model(model_cfg, /*seed=*/0),
        Vocabulary::from_tokens(manifest.at("gloss_vocab").get<std::vector<std::string>>(),
                                false),
        Vocabulary::from_tokens(manifest.at("word_vocab").get<std::vector<std::string>>(), true),
        training_config_from_json(manifest.at("training_config")),
        manifest.at("step").get<long>(),
        manifest.at("dev_metrics").get<std::map<std::string, double>>()};

    std::set<std::string> loaded;
    for (const auto& entry : manifest.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        if (!loaded.insert(name).second)
            throw ParseError("checkpoint: parameter " + name + " listed twice");
        Tensor t = ckpt.model.params().find(name);
        const std::size_t count = entry.at("count").get<std::size_t>();
        if (t.rows() != entry.at("rows").get<int>() || t.cols() != entry.at("cols").get<int>() ||
            t.size() != count)
            throw ParseError("checkpoint: shape mismatch for " + name);
        std::ifstream blob(fs::path(dir) / entry.at("file").get<std::string>(),
                           std::ios::binary);
        if (!blob) throw ParseError("checkpoint: missing blob for " + name);
        std::vector<double> values(count);
        if (f32) {
            std::vector<float> narrow(count);
            blob.read(reinterpret_cast<char*>(narrow.data()),
                      static_cast<std::streamsize>(count * sizeof(float)));
            if (static_cast<std::size_t>(blob.gcount()) != count * sizeof(float))
                throw ParseError("checkpoint: truncated blob for " + name);
            std::copy(narrow.begin(), narrow.end(), values.begin());
        } else {
            blob.read(reinterpret_cast<char*>(values.data()),
                      static_cast<std::streamsize>(count * sizeof(double)));
            if (static_cast<std::size_t>(blob.gcount()) != count * sizeof(double))
                throw ParseError("checkpoint: truncated blob for " + name);
        }
        t.set_values(values);
    }
    if (loaded.size() != ckpt.model.params().entries().size())
        throw ParseError("checkpoint: parameter set does not match the model");
    return ckpt;
}

// ---- verification ----

GradCheckReport full_model_gradcheck(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.d_in = 6;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_fusion_layers = 2;
    cfg.n_slrt_layers = 1;
    cfg.n_sltt_layers = 1;
    cfg.d_ff = 16;
    cfg.dropout_rate = 0.0;
    cfg.gloss_vocab_size = 5;
    cfg.word_vocab_size = 9;
    Model model(cfg, seed);

    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<double> frame_values(5 * 6);
    for (auto& v : frame_values) v = rng.uniform(-1.0, 1.0);
    const Tensor frames = Tensor::from_values(5, 6, frame_values);

    const PseudoPrimitiveSequence p{1, 1, 0, 2, 3};
    const MultiModalGraph graph = build_graph(5, group_pseudo_labels(p));
    const std::vector<int> gloss_target{1, 2, 3};
    const std::vector<int> sentence{4, 5, 6, 7, Vocabulary::kEos};

    auto build_loss = [&]() {
        Tensor multi = model.encode_record(graph, frames, /*train=*/false, nullptr);
        Tensor z = model.slrt(multi, /*train=*/false, nullptr);
        Tensor l_r = recognition_loss(ctc_log_prob(model.frame_gloss_log_probs(z), gloss_target),
                                      RecognitionLossMode::Nll);
        Tensor log_p = translation_log_prob(sentence, z, model.sltt(), /*train=*/false, nullptr);
        Tensor l_t = scale(log_p, -1.0 / static_cast<double>(sentence.size()));
        return joint_loss(l_r, l_t, {5.0, 1.0});
    };

    return finite_difference_check(
        model.params().entries(), [&]() { return build_loss().value(); },
        [&]() { backward(build_loss()); });
}

}  // namespace gslt
