#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gslt/pipeline.hpp"

using namespace gslt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("gslt_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& leaf = "") const {
        return (leaf.empty() ? path : path / leaf).string();
    }
};

SyntheticSpec tiny_spec(std::uint64_t seed = 7) {
    SyntheticSpec spec;
    spec.n_records = 6;
    spec.gloss_vocab_size = 6;
    spec.word_vocab_size = 10;
    spec.d_in = 5;
    spec.min_glosses = 2;
    spec.max_glosses = 3;
    spec.min_run = 1;
    spec.max_run = 2;
    spec.noise = 0.05;
    spec.seed = seed;
    return spec;
}

ModelConfig tiny_model_config(const Vocabulary& gv, const Vocabulary& wv,
                              double dropout = 0.0) {
    ModelConfig mc;
    mc.d_in = 5;
    mc.d_model = 8;
    mc.n_heads = 2;
    mc.n_fusion_layers = 1;
    mc.n_slrt_layers = 1;
    mc.n_sltt_layers = 1;
    mc.d_ff = 16;
    mc.dropout_rate = dropout;
    mc.gloss_vocab_size = gv.size();
    mc.word_vocab_size = wv.size();
    return mc;
}

bool records_equal(const std::vector<CorpusRecord>& a, const std::vector<CorpusRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].id != b[i].id || a[i].frames != b[i].frames ||
            a[i].gloss_ref != b[i].gloss_ref || a[i].text_ref != b[i].text_ref)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic and well-formed") {
    const auto a = generate_synthetic_corpus(tiny_spec());
    const auto b = generate_synthetic_corpus(tiny_spec());
    CHECK(records_equal(a, b));
    const auto c = generate_synthetic_corpus(tiny_spec(8));
    CHECK_FALSE(records_equal(a, c));

    for (const auto& rec : a) {
        CHECK_FALSE(rec.frames.empty());
        CHECK(rec.gloss_ref.size() <= rec.frames.size());
        CHECK(rec.gloss_ref.size() == rec.text_ref.size());
        CHECK(rec.gloss_ref.size() >= 2);
        for (std::size_t i = 1; i < rec.gloss_ref.size(); ++i)
            CHECK(rec.gloss_ref[i] != rec.gloss_ref[i - 1]);
        for (const auto& f : rec.frames) CHECK(f.size() == 5);
    }
}

TEST_CASE("corpus save/load round-trips") {
    TempDir dir;
    const auto records = generate_synthetic_corpus(tiny_spec());
    save_corpus(dir.str("c.jsonl"), records);
    CHECK(records_equal(load_corpus(dir.str("c.jsonl")), records));
}

TEST_CASE("corpus loader rejects malformed records with position info") {
    TempDir dir;
    {
        std::ofstream out(dir.str("bad.jsonl"));
        out << R"({"id":"r0","frames":[],"gloss":["a"],"text":["b"]})" << "\n";
    }
    CHECK_THROWS_AS(load_corpus(dir.str("bad.jsonl")), ParseError);
    try {
        load_corpus(dir.str("bad.jsonl"));
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        CHECK(std::string(e.what()).find("r0") != std::string::npos);
    }

    {
        std::ofstream out(dir.str("ragged.jsonl"));
        out << R"({"id":"r1","frames":[[1,2],[1]],"gloss":["a"],"text":["b"]})" << "\n";
    }
    CHECK_THROWS_AS(load_corpus(dir.str("ragged.jsonl")), ParseError);

    {
        std::ofstream out(dir.str("notjson.jsonl"));
        out << "{oops\n";
    }
    CHECK_THROWS_AS(load_corpus(dir.str("notjson.jsonl")), ParseError);

    {
        std::ofstream out(dir.str("empty.jsonl"));
    }
    CHECK(load_corpus(dir.str("empty.jsonl")).empty());
    CHECK_THROWS_AS(load_corpus(dir.str("missing.jsonl")), ParseError);
}

TEST_CASE("vocabularies reserve ids first") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    CHECK(gv.token(kPadId) == "<pad>");
    CHECK(gv.first_content_id() == 1);
    CHECK(wv.token(Vocabulary::kPad) == "<pad>");
    CHECK(wv.token(Vocabulary::kBos) == "<bos>");
    CHECK(wv.token(Vocabulary::kEos) == "<eos>");
    CHECK(wv.token(Vocabulary::kUnk) == "<unk>");
    CHECK(wv.id_or_unk("never-seen") == Vocabulary::kUnk);
    CHECK_THROWS_AS(gv.id_of("never-seen"), VocabularyError);
}

TEST_CASE("frames_tensor checks widths") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    CHECK(frames_tensor(records[0], 5).cols() == 5);
    CHECK_THROWS_AS(frames_tensor(records[0], 7), DimensionError);
}

TEST_CASE("training config json round-trip and validation") {
    TrainingConfig cfg;
    cfg.lambda_r = 2.5;
    cfg.max_steps = 123;
    cfg.loss_mode = RecognitionLossMode::Paper;
    cfg.static_graphs = true;
    const TrainingConfig back = parse_training_config(training_config_to_json(cfg));
    CHECK(back.lambda_r == 2.5);
    CHECK(back.max_steps == 123);
    CHECK(back.loss_mode == RecognitionLossMode::Paper);
    CHECK(back.static_graphs);

    CHECK_THROWS_AS(parse_training_config("{"), ParseError);
    CHECK_THROWS_AS(parse_training_config(R"({"lambda_r":0,"lambda_t":0})"), ConfigError);
    CHECK_THROWS_AS(parse_training_config(R"({"batch_size":0})"), ConfigError);
    CHECK_THROWS_AS(parse_training_config(R"({"loss_mode":"bogus"})"), ConfigError);
}

TEST_CASE("model initialization is deterministic per seed") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    Model a(tiny_model_config(gv, wv), 33);
    Model b(tiny_model_config(gv, wv), 33);
    Model c(tiny_model_config(gv, wv), 34);
    REQUIRE(a.params().entries().size() == b.params().entries().size());
    bool all_equal = true, any_diff_c = false;
    for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
        all_equal = all_equal &&
                    a.params().entries()[i].second.values() ==
                        b.params().entries()[i].second.values();
        any_diff_c = any_diff_c ||
                     a.params().entries()[i].second.values() !=
                         c.params().entries()[i].second.values();
    }
    CHECK(all_equal);
    CHECK(any_diff_c);
}

TEST_CASE("checkpoint round-trip restores parameters bit-exactly") {
    TempDir dir;
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    Model model(tiny_model_config(gv, wv), 5);
    TrainingConfig cfg;
    save_checkpoint(dir.str("ck"), model, gv, wv, cfg, 42, {{"wer", 0.25}});

    Checkpoint loaded = load_checkpoint(dir.str("ck"));
    CHECK(loaded.step == 42);
    CHECK(loaded.dev_metrics.at("wer") == 0.25);
    CHECK(loaded.gloss_vocab.tokens() == gv.tokens());
    CHECK(loaded.word_vocab.tokens() == wv.tokens());
    CHECK(loaded.model.config() == model.config());
    for (std::size_t i = 0; i < model.params().entries().size(); ++i) {
        CHECK(loaded.model.params().entries()[i].first == model.params().entries()[i].first);
        CHECK(loaded.model.params().entries()[i].second.values() ==
              model.params().entries()[i].second.values());
    }

    // 32-bit storage is allowed but flagged; values round through float.
    save_checkpoint(dir.str("ck32"), model, gv, wv, cfg, 1, {}, /*store_f32=*/true);
    Checkpoint narrow = load_checkpoint(dir.str("ck32"));
    for (std::size_t i = 0; i < model.params().entries().size(); ++i) {
        const auto& wide = model.params().entries()[i].second.values();
        const auto& got = narrow.model.params().entries()[i].second.values();
        for (std::size_t k = 0; k < wide.size(); ++k)
            CHECK(got[k] == static_cast<double>(static_cast<float>(wide[k])));
    }

    // Corruption cases.
    fs::remove(fs::path(dir.str("ck")) / "p0000.bin");
    CHECK_THROWS_AS(load_checkpoint(dir.str("ck")), ParseError);
    CHECK_THROWS_AS(load_checkpoint(dir.str("nowhere")), ParseError);
    {
        fs::create_directories(dir.str("badver"));
        std::ofstream out(fs::path(dir.str("badver")) / "manifest.json");
        out << R"({"schema_version": 99})";
    }
    CHECK_THROWS_AS(load_checkpoint(dir.str("badver")), VersionError);
}

TEST_CASE("lambda zeroing keeps the unused head's gradients at exactly zero") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    Model model(tiny_model_config(gv, wv), 11);
    const CorpusRecord& rec = records[0];
    Tensor frames = frames_tensor(rec, 5);
    const MultiModalGraph graph = empty_graph(frames.rows());

    // Recognition-only loss: every sltt.* gradient stays exactly zero.
    model.params().zero_grads();
    {
        Tensor z = model.slrt(model.encode_record(graph, frames, false, nullptr), false, nullptr);
        Tensor l_r = recognition_loss(
            ctc_log_prob(model.frame_gloss_log_probs(z), gv.encode(rec.gloss_ref, false)),
            RecognitionLossMode::Nll);
        backward(scale(l_r, 5.0));
    }
    bool sltt_all_zero = true, any_other_nonzero = false;
    for (const auto& [name, t] : model.params().entries()) {
        bool zero = true;
        for (double g : t.grad()) zero = zero && g == 0.0;
        if (Model::is_sltt_only_param(name)) sltt_all_zero = sltt_all_zero && zero;
        else any_other_nonzero = any_other_nonzero || !zero;
    }
    CHECK(sltt_all_zero);
    CHECK(any_other_nonzero);

    // Translation-only loss: gloss head gradients stay exactly zero.
    model.params().zero_grads();
    {
        Tensor z = model.slrt(model.encode_record(graph, frames, false, nullptr), false, nullptr);
        std::vector<int> sentence = wv.encode(rec.text_ref, true);
        sentence.push_back(Vocabulary::kEos);
        Tensor l_t = scale(translation_log_prob(sentence, z, model.sltt(), false, nullptr),
                           -1.0 / sentence.size());
        backward(l_t);
    }
    for (const auto& [name, t] : model.params().entries()) {
        if (!Model::is_gloss_head_param(name)) continue;
        for (double g : t.grad()) CHECK(g == 0.0);
    }
}

TEST_CASE("pretraining never touches translation-only parameters") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    Model model(tiny_model_config(gv, wv), 11);

    std::vector<std::vector<double>> sltt_before;
    for (const auto& [name, t] : model.params().entries())
        if (Model::is_sltt_only_param(name)) sltt_before.push_back(t.values());

    TrainingConfig cfg;
    cfg.max_steps = 6;
    cfg.batch_size = 2;
    cfg.eval_every = 6;
    pretrain_recognition(model, records, records, gv, wv, cfg, nullptr);

    std::size_t i = 0;
    for (const auto& [name, t] : model.params().entries())
        if (Model::is_sltt_only_param(name)) CHECK(t.values() == sltt_before[i++]);
}

TEST_CASE("recognition fingerprint tracks exactly the bootstrap path") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    Model model(tiny_model_config(gv, wv), 11);
    const std::uint64_t fp = model.recognition_fingerprint();

    // Translation-side change: stamp unchanged.
    Tensor embed = model.params().find("sltt.embed");
    auto v = embed.values();
    v[0] += 1.0;
    embed.set_values(v);
    CHECK(model.recognition_fingerprint() == fp);

    // Textual-side fusion change: stamp unchanged (bootstrap has no textual nodes).
    Tensor gate = model.params().find("fusion.0.x.gate.w_self");
    v = gate.values();
    v[0] += 1.0;
    gate.set_values(v);
    CHECK(model.recognition_fingerprint() == fp);

    // Recognition-side change: stamp moves.
    Tensor spatial = model.params().find("spatial.w");
    v = spatial.values();
    v[0] += 1.0;
    spatial.set_values(v);
    CHECK(model.recognition_fingerprint() != fp);
}

TEST_CASE("initialize_graphs produces valid graphs with a version stamp") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    Model model(tiny_model_config(gv, wv), 3);
    GraphCache cache = initialize_graphs(model, records);
    CHECK(cache.graphs.size() == records.size());
    CHECK(cache.all_valid);
    CHECK(cache.fingerprint == model.recognition_fingerprint());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(cache.graphs[i].num_visual == static_cast<int>(records[i].frames.size()));
        CHECK(graph_invariants_hold(cache.graphs[i]));
    }
}

TEST_CASE("short joint training decreases the loss and stays deterministic") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);

    TrainingConfig cfg;
    cfg.max_steps = 80;
    cfg.batch_size = 2;
    cfg.eval_every = 40;
    cfg.learning_rate = 2e-3;
    cfg.seed = 9;

    auto run = [&]() {
        Model model(tiny_model_config(gv, wv, /*dropout=*/0.1), cfg.seed);
        TrainPhaseReport report =
            train_joint(model, records, records, gv, wv, cfg, "", nullptr);
        EvalOptions opts;
        opts.beam_size = 2;
        opts.max_decode_len = 6;
        return std::pair{report, metric_report_to_json(
                                     evaluate(model, records, gv, wv, opts))};
    };

    auto [report, json_a] = run();
    REQUIRE(report.step_losses.size() == 80);
    double early = 0, late = 0;
    for (int i = 0; i < 20; ++i) {
        early += report.step_losses[i];
        late += report.step_losses[80 - 20 + i];
    }
    CHECK(late < early);

    auto [report2, json_b] = run();
    CHECK(json_a == json_b);
    CHECK(report.step_losses == report2.step_losses);
}

TEST_CASE("evaluate: report fields, alpha sweep leaves WER alone, determinism") {
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    Model model(tiny_model_config(gv, wv), 21);

    EvalOptions opts;
    opts.beam_size = 2;
    opts.max_decode_len = 5;
    const MetricReport base = evaluate(model, records, gv, wv, opts);
    const std::string json = metric_report_to_json(base);
    for (const char* field : {"\"wer\"", "\"bleu1\"", "\"bleu2\"", "\"bleu3\"", "\"bleu4\"",
                              "\"rougeL\""})
        CHECK(json.find(field) != std::string::npos);

    for (double alpha : {0.0, 1.0, 2.0}) {
        EvalOptions sweep = opts;
        sweep.alpha = alpha;
        CHECK(evaluate(model, records, gv, wv, sweep).wer == base.wer);
    }

    CHECK(metric_report_to_json(evaluate(model, records, gv, wv, opts)) == json);
    CHECK_THROWS_AS(evaluate(model, {}, gv, wv, opts), ContractError);
}

TEST_CASE("protocol compatibility is enforced") {
    TrainingConfig joint;
    CHECK_NOTHROW(check_protocol_compatibility(joint, Protocol::GSign2GlossText));

    TrainingConfig recog_only;
    recog_only.lambda_t = 0.0;
    CHECK_THROWS_AS(check_protocol_compatibility(recog_only, Protocol::GSign2GlossText),
                    ConfigError);
    CHECK_THROWS_AS(check_protocol_compatibility(recog_only, Protocol::Sign2Text), ConfigError);
    CHECK_NOTHROW(check_protocol_compatibility(recog_only, Protocol::Sign2Gloss));

    CHECK(protocol_from_string("gsign2") == Protocol::GSign2GlossText);
    CHECK(protocol_from_string("sign2gloss") == Protocol::Sign2Gloss);
    CHECK(protocol_from_string("sign2text") == Protocol::Sign2Text);
    CHECK_THROWS_AS(protocol_from_string("nope"), ConfigError);
}

TEST_CASE("checkpoint save/load/evaluate reproduces metrics bit-identically") {
    TempDir dir;
    const auto records = generate_synthetic_corpus(tiny_spec());
    const Vocabulary gv = build_gloss_vocab(records);
    const Vocabulary wv = build_word_vocab(records);
    Model model(tiny_model_config(gv, wv), 77);

    EvalOptions opts;
    opts.beam_size = 2;
    opts.max_decode_len = 5;
    const std::string before = metric_report_to_json(evaluate(model, records, gv, wv, opts));

    TrainingConfig cfg;
    save_checkpoint(dir.str("ck"), model, gv, wv, cfg, 0, {});
    Checkpoint loaded = load_checkpoint(dir.str("ck"));
    const std::string after = metric_report_to_json(
        evaluate(loaded.model, records, loaded.gloss_vocab, loaded.word_vocab, opts));
    CHECK(before == after);
}
