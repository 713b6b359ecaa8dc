// gslt: graph-fused sign language translation trainer and evaluator.
//
// Subcommands cover the full experiment loop: synthetic corpus generation,
// recognition pretraining, alignment/graph inspection, joint training with
// dynamic graph re-alignment, translation, evaluation, and a full-model
// gradient check.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gslt/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gslt;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_output(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw ParseError("cannot write " + out_path);
    out << text;
}

std::vector<CorpusRecord> load_corpus_checked(const std::string& path) {
    auto records = load_corpus(path);
    if (records.empty()) std::cerr << "warning: corpus " << path << " is empty\n";
    return records;
}

struct ModelFlags {
    int d_model = 64;
    int n_heads = 8;
    int n_fusion_layers = 2;
    int n_slrt_layers = 3;
    int n_sltt_layers = 3;
    int d_ff = 256;
};

void add_model_flags(CLI::App* cmd, ModelFlags& mf) {
    cmd->add_option("--d-model", mf.d_model, "embedding width");
    cmd->add_option("--heads", mf.n_heads, "attention heads");
    cmd->add_option("--fusion-layers", mf.n_fusion_layers, "multi-modal fusion layers");
    cmd->add_option("--slrt-layers", mf.n_slrt_layers, "recognition encoder layers");
    cmd->add_option("--sltt-layers", mf.n_sltt_layers, "translation decoder layers");
    cmd->add_option("--d-ff", mf.d_ff, "feed-forward width");
}

struct TrainFlags {
    std::string corpus, dev, config, ckpt, out;
    std::string output_mode = "visual";
    std::string loss_mode;
    long steps = -1;
    int batch = -1;
    double lr = -1.0;
    double lambda_r = -1.0, lambda_t = -1.0;
    double dropout = -1.0;
    long eval_every = -1;
    double realign_epsilon = -1.0;
    int realign_max = -1;
    bool static_graphs = false;
    std::uint64_t seed = 1;
    bool seed_given = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& tf, bool joint) {
    cmd->add_option("--corpus", tf.corpus, "training corpus (jsonl)")->required();
    cmd->add_option("--dev", tf.dev, "dev corpus (jsonl); defaults to the training corpus");
    cmd->add_option("--config", tf.config, "training config json; flags override");
    cmd->add_option("--out", tf.out, "checkpoint output directory")->required();
    cmd->add_option("--steps", tf.steps, "training steps");
    cmd->add_option("--batch", tf.batch, "batch size");
    cmd->add_option("--lr", tf.lr, "learning rate");
    cmd->add_option("--dropout", tf.dropout, "dropout rate");
    cmd->add_option("--eval-every", tf.eval_every, "steps between dev evaluations");
    cmd->add_option("--loss-mode", tf.loss_mode, "recognition loss form: nll|paper");
    cmd->add_option("--seed", tf.seed, "rng seed");
    if (joint) {
        cmd->add_option("--ckpt", tf.ckpt, "initial checkpoint (pretrained recognition)");
        cmd->add_option("--lambda-r", tf.lambda_r, "recognition loss weight");
        cmd->add_option("--lambda-t", tf.lambda_t, "translation loss weight");
        cmd->add_option("--output-mode", tf.output_mode,
                        "encoder output rows: visual|textual|concat");
        cmd->add_option("--realign-epsilon", tf.realign_epsilon,
                        "dev WER improvement (points) that triggers a graph rebuild");
        cmd->add_option("--realign-max", tf.realign_max, "cap on graph rebuilds (0 = unlimited)");
        cmd->add_flag("--static-graphs", tf.static_graphs, "disable graph re-alignment");
    }
}

TrainingConfig resolve_training_config(const CLI::App* cmd, const TrainFlags& tf, bool joint) {
    TrainingConfig cfg;
    if (!tf.config.empty()) cfg = parse_training_config(read_file(tf.config));
    if (cmd->count("--steps")) cfg.max_steps = tf.steps;
    if (cmd->count("--batch")) cfg.batch_size = tf.batch;
    if (cmd->count("--lr")) cfg.learning_rate = tf.lr;
    if (cmd->count("--dropout")) cfg.dropout = tf.dropout;
    if (cmd->count("--eval-every")) cfg.eval_every = tf.eval_every;
    if (cmd->count("--loss-mode")) {
        if (tf.loss_mode != "paper" && tf.loss_mode != "nll")
            throw ConfigError("unknown loss mode '" + tf.loss_mode + "'");
        cfg.loss_mode = tf.loss_mode == "paper" ? RecognitionLossMode::Paper
                                                : RecognitionLossMode::Nll;
    }
    if (cmd->count("--seed")) cfg.seed = tf.seed;
    if (joint) {
        if (cmd->count("--lambda-r")) cfg.lambda_r = tf.lambda_r;
        if (cmd->count("--lambda-t")) cfg.lambda_t = tf.lambda_t;
        if (cmd->count("--realign-epsilon")) cfg.realign_epsilon = tf.realign_epsilon;
        if (cmd->count("--realign-max")) cfg.realign_max = tf.realign_max;
        if (cmd->count("--static-graphs")) cfg.static_graphs = tf.static_graphs;
    }
    return cfg;
}

int run_gradcheck(std::uint64_t seed) {
    const GradCheckReport report = full_model_gradcheck(seed);
    std::cout << "gradcheck entries " << report.entries_checked << " max_rel_err "
              << report.max_rel_err << " worst " << report.worst_param << "["
              << report.worst_index << "]\n";
    if (report.max_rel_err >= 1e-4) {
        std::cerr << "gradcheck failed: max relative error " << report.max_rel_err
                  << " >= 1e-4\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-fused sign language translation pipeline"};
    app.require_subcommand(1);

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
    SyntheticSpec spec;
    std::string gen_out;
    gen->add_option("--out", gen_out, "output jsonl path")->required();
    gen->add_option("--records", spec.n_records, "number of records");
    gen->add_option("--gloss-vocab", spec.gloss_vocab_size, "gloss vocabulary size (incl PAD)");
    gen->add_option("--word-vocab", spec.word_vocab_size, "word vocabulary size (incl reserved)");
    gen->add_option("--d-in", spec.d_in, "frame feature width");
    gen->add_option("--min-glosses", spec.min_glosses, "min glosses per record");
    gen->add_option("--max-glosses", spec.max_glosses, "max glosses per record");
    gen->add_option("--min-run", spec.min_run, "min frames per gloss");
    gen->add_option("--max-run", spec.max_run, "max frames per gloss");
    gen->add_option("--max-pad-gap", spec.max_pad_gap, "max PAD frames between glosses");
    gen->add_option("--noise", spec.noise, "feature noise stddev");
    gen->add_option("--seed", spec.seed, "rng seed");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "train the recognition path alone");
    TrainFlags pre_flags;
    ModelFlags pre_model;
    add_train_flags(pre, pre_flags, /*joint=*/false);
    add_model_flags(pre, pre_model);

    // align
    auto* align = app.add_subcommand("align", "write one multi-modal graph file per record");
    std::string align_corpus, align_ckpt, align_out;
    align->add_option("--corpus", align_corpus, "corpus jsonl")->required();
    align->add_option("--ckpt", align_ckpt, "checkpoint directory")->required();
    align->add_option("--out", align_out, "output directory")->required();

    // build-graph
    auto* bg = app.add_subcommand("build-graph",
                                  "group a pseudo-label sequence into a multi-modal graph");
    std::string bg_labels, bg_out;
    bool bg_dot = false;
    bg->add_option("--labels", bg_labels, "comma-separated per-frame gloss ids (0 = PAD)")
        ->required();
    bg->add_option("--out", bg_out, "output path (stdout when omitted)");
    bg->add_flag("--dot", bg_dot, "emit graphviz instead of json");

    // train
    auto* train = app.add_subcommand("train", "joint recognition+translation training");
    TrainFlags train_flags;
    ModelFlags train_model;
    add_train_flags(train, train_flags, /*joint=*/true);
    add_model_flags(train, train_model);

    // translate
    auto* tr = app.add_subcommand("translate", "beam-decode translations for a corpus");
    std::string tr_ckpt, tr_corpus, tr_out;
    int tr_beam = 5, tr_max_len = 16;
    double tr_alpha = 1.0;
    tr->add_option("--ckpt", tr_ckpt, "checkpoint directory")->required();
    tr->add_option("--corpus", tr_corpus, "corpus jsonl")->required();
    tr->add_option("--beam", tr_beam, "beam size");
    tr->add_option("--alpha", tr_alpha, "length penalty exponent in [0, 2]");
    tr->add_option("--max-len", tr_max_len, "decode length cap");
    tr->add_option("--out", tr_out, "output jsonl (stdout when omitted)");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compute WER / BLEU / ROUGE-L for a corpus");
    std::string ev_ckpt, ev_corpus, ev_out, ev_protocol = "gsign2";
    int ev_beam = 5, ev_max_len = 16;
    double ev_alpha = 1.0;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
    ev->add_option("--corpus", ev_corpus, "corpus jsonl")->required();
    ev->add_option("--protocol", ev_protocol, "gsign2|sign2gloss|sign2text");
    ev->add_option("--beam", ev_beam, "beam size");
    ev->add_option("--alpha", ev_alpha, "length penalty exponent in [0, 2]");
    ev->add_option("--max-len", ev_max_len, "decode length cap");
    ev->add_option("--out", ev_out, "report path (stdout when omitted)");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "full-model finite-difference gradient check");
    std::uint64_t gc_seed = 7;
    gc->add_option("--seed", gc_seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.get_name() << ": " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            save_corpus(gen_out, generate_synthetic_corpus(spec));
            std::cout << "wrote " << spec.n_records << " records to " << gen_out << "\n";
        } else if (pre->parsed()) {
            auto records = load_corpus_checked(pre_flags.corpus);
            auto dev = pre_flags.dev.empty() ? records : load_corpus_checked(pre_flags.dev);
            TrainingConfig cfg = resolve_training_config(pre, pre_flags, false);
            Vocabulary gv = build_gloss_vocab(records);
            Vocabulary wv = build_word_vocab(records);
            ModelConfig mc;
            mc.d_in = static_cast<int>(records.at(0).frames.at(0).size());
            mc.d_model = pre_model.d_model;
            mc.n_heads = pre_model.n_heads;
            mc.n_fusion_layers = pre_model.n_fusion_layers;
            mc.n_slrt_layers = pre_model.n_slrt_layers;
            mc.n_sltt_layers = pre_model.n_sltt_layers;
            mc.d_ff = pre_model.d_ff;
            mc.dropout_rate = cfg.dropout;
            mc.gloss_vocab_size = gv.size();
            mc.word_vocab_size = wv.size();
            Model model(mc, cfg.seed);
            auto report = pretrain_recognition(model, records, dev, gv, wv, cfg, &std::cout);
            TrainingConfig saved = cfg;
            saved.lambda_t = 0.0;
            save_checkpoint(pre_flags.out, model, gv, wv, saved, report.steps_run,
                            {{"wer", report.final_dev_wer}});
            std::cout << "pretrain done: dev_wer " << report.final_dev_wer << " checkpoint "
                      << pre_flags.out << "\n";
        } else if (align->parsed()) {
            Checkpoint ckpt = load_checkpoint(align_ckpt);
            auto records = load_corpus_checked(align_corpus);
            fs::create_directories(align_out);
            GraphCache cache = initialize_graphs(ckpt.model, records);
            for (std::size_t i = 0; i < records.size(); ++i) {
                std::ofstream out(fs::path(align_out) / (records[i].id + ".json"));
                if (!out) throw ParseError("cannot write graph for " + records[i].id);
                out << serialize(cache.graphs[i]) << "\n";
            }
            std::cout << "wrote " << records.size() << " graph files to " << align_out << "\n";
        } else if (bg->parsed()) {
            PseudoPrimitiveSequence labels;
            std::stringstream ss(bg_labels);
            std::string item;
            while (std::getline(ss, item, ',')) labels.push_back(std::stoi(item));
            if (labels.empty()) throw ContractError("build-graph: no labels given");
            MultiModalGraph graph =
                build_graph(static_cast<int>(labels.size()), group_pseudo_labels(labels));
            write_output(bg_out, (bg_dot ? to_dot(graph) : serialize(graph) + "\n"));
        } else if (train->parsed()) {
            auto records = load_corpus_checked(train_flags.corpus);
            auto dev = train_flags.dev.empty() ? records : load_corpus_checked(train_flags.dev);
            TrainingConfig cfg = resolve_training_config(train, train_flags, true);
            const OutputMode mode = train_flags.output_mode == "visual"
                                        ? OutputMode::VisualOnly
                                        : train_flags.output_mode == "textual"
                                              ? OutputMode::TextualOnly
                                              : train_flags.output_mode == "concat"
                                                    ? OutputMode::Concat
                                                    : throw ConfigError("unknown output mode '" +
                                                                        train_flags.output_mode +
                                                                        "'");
            std::optional<Checkpoint> init;
            if (!train_flags.ckpt.empty()) init.emplace(load_checkpoint(train_flags.ckpt));
            Vocabulary gv = init ? init->gloss_vocab : build_gloss_vocab(records);
            Vocabulary wv = init ? init->word_vocab : build_word_vocab(records);
            Model model = [&]() {
                if (init) {
                    init->model.set_output_mode(mode);
                    return std::move(init->model);
                }
                ModelConfig mc;
                mc.d_in = static_cast<int>(records.at(0).frames.at(0).size());
                mc.d_model = train_model.d_model;
                mc.n_heads = train_model.n_heads;
                mc.n_fusion_layers = train_model.n_fusion_layers;
                mc.n_slrt_layers = train_model.n_slrt_layers;
                mc.n_sltt_layers = train_model.n_sltt_layers;
                mc.d_ff = train_model.d_ff;
                mc.dropout_rate = cfg.dropout;
                mc.output_mode = mode;
                mc.gloss_vocab_size = gv.size();
                mc.word_vocab_size = wv.size();
                return Model(mc, cfg.seed);
            }();
            auto report = train_joint(model, records, dev, gv, wv, cfg, train_flags.out,
                                      &std::cout);
            std::cout << "train done: steps " << report.steps_run << " realigns "
                      << report.realign_count << " best_dev_bleu4 " << report.best_dev_bleu4
                      << " (step " << report.best_step << ")\n";
        } else if (tr->parsed()) {
            Checkpoint ckpt = load_checkpoint(tr_ckpt);
            check_protocol_compatibility(ckpt.train_config, Protocol::Sign2Text);
            auto records = load_corpus_checked(tr_corpus);
            EvalOptions opts;
            opts.protocol = Protocol::Sign2Text;
            opts.beam_size = tr_beam;
            opts.alpha = tr_alpha;
            opts.max_decode_len = tr_max_len;
            std::ostringstream out;
            for (const auto& rec : records) {
                const auto words = translate_record(ckpt.model, rec, ckpt.word_vocab, opts);
                std::string joined;
                for (const auto& w : words) joined += (joined.empty() ? "" : " ") + w;
                nlohmann::json j;
                j["id"] = rec.id;
                j["hypothesis"] = joined;
                out << j.dump() << "\n";
            }
            write_output(tr_out, out.str());
        } else if (ev->parsed()) {
            Checkpoint ckpt = load_checkpoint(ev_ckpt);
            const Protocol protocol = protocol_from_string(ev_protocol);
            check_protocol_compatibility(ckpt.train_config, protocol);
            auto records = load_corpus_checked(ev_corpus);
            EvalOptions opts;
            opts.protocol = protocol;
            opts.beam_size = ev_beam;
            opts.alpha = ev_alpha;
            opts.max_decode_len = ev_max_len;
            const MetricReport report =
                evaluate(ckpt.model, records, ckpt.gloss_vocab, ckpt.word_vocab, opts);
            write_output(ev_out, metric_report_to_json(report) + "\n");
        } else if (gc->parsed()) {
            return run_gradcheck(gc_seed);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
