// Command-line front end: data generation, transform round-trip checks,
// training, retrieval evaluation, shuffling demos and gradient audits.
//
// Exit codes: 0 success, 1 I/O failure, 2 validation/precondition failure,
// 3 numerical abort, 4 gradient-audit failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wamo/checkpoint.hpp"
#include "wamo/error.hpp"
#include "wamo/traineval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wamo;

namespace {

// All knobs in one document; every field optional, unknown keys rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    // corpus
    std::size_t n_pairs = 128;
    std::size_t n_classes = 8;
    std::size_t frames = 64;
    std::size_t joints = 8;
    // model
    std::size_t latent = 256;
    std::size_t levels = 3;
    std::size_t lambda_g = 16;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t kernel_low = 9;
    std::size_t kernel_high = 3;
    std::size_t hash_buckets = 4096;
    std::string family = "haar";
    bool learnable_bank = true;
    // training
    double lr = 1e-4;
    std::size_t batch = 32;
    std::size_t epochs = 30;
    double lambda_s = 0.25;
    double temperature = 0.07;
    double smooth_l1_beta = 1.0;
    double w_nce = 1.0, w_rec = 1.0, w_dmsp = 1.0;

    ModelConfig model_config() const {
        ModelConfig mc;
        mc.frames = frames;
        mc.joints = joints;
        mc.latent = latent;
        mc.levels = levels;
        mc.lambda_g = lambda_g;
        mc.heads = heads;
        mc.blocks = blocks;
        mc.kernel_low = kernel_low;
        mc.kernel_high = kernel_high;
        mc.hash_buckets = hash_buckets;
        mc.family = family;
        mc.learnable_bank = learnable_bank;
        return mc;
    }
    TrainConfig train_config() const {
        TrainConfig tc;
        tc.lr = lr;
        tc.batch = batch;
        tc.epochs = epochs;
        tc.seed = seed;
        tc.lambda_s = lambda_s;
        tc.loss.temperature = temperature;
        tc.loss.smooth_l1_beta = smooth_l1_beta;
        tc.loss.w_nce = w_nce;
        tc.loss.w_rec = w_rec;
        tc.loss.w_dmsp = w_dmsp;
        return tc;
    }
};

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig parse_config(const json& j) {
    static const std::vector<std::string> known = {
        "seed", "n_pairs", "n_classes", "frames", "joints", "latent", "levels",
        "lambda_g", "heads", "blocks", "kernel_low", "kernel_high", "hash_buckets",
        "family", "learnable_bank", "lr", "batch", "epochs", "lambda_s",
        "temperature", "smooth_l1_beta", "w_nce", "w_rec", "w_dmsp"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known) ok = ok || (it.key() == k);
        if (!ok) throw ValidationError("config: unknown key '" + it.key() + "'");
    }
    RunConfig cfg;
    read_field(j, "seed", cfg.seed);
    read_field(j, "n_pairs", cfg.n_pairs);
    read_field(j, "n_classes", cfg.n_classes);
    read_field(j, "frames", cfg.frames);
    read_field(j, "joints", cfg.joints);
    read_field(j, "latent", cfg.latent);
    read_field(j, "levels", cfg.levels);
    read_field(j, "lambda_g", cfg.lambda_g);
    read_field(j, "heads", cfg.heads);
    read_field(j, "blocks", cfg.blocks);
    read_field(j, "kernel_low", cfg.kernel_low);
    read_field(j, "kernel_high", cfg.kernel_high);
    read_field(j, "hash_buckets", cfg.hash_buckets);
    read_field(j, "family", cfg.family);
    read_field(j, "learnable_bank", cfg.learnable_bank);
    read_field(j, "lr", cfg.lr);
    read_field(j, "batch", cfg.batch);
    read_field(j, "epochs", cfg.epochs);
    read_field(j, "lambda_s", cfg.lambda_s);
    read_field(j, "temperature", cfg.temperature);
    read_field(j, "smooth_l1_beta", cfg.smooth_l1_beta);
    read_field(j, "w_nce", cfg.w_nce);
    read_field(j, "w_rec", cfg.w_rec);
    read_field(j, "w_dmsp", cfg.w_dmsp);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: parse error: ") + e.what());
    }
    return parse_config(j);
}

json report_to_json(const RetrievalReport& rep) {
    json j;
    json t2m, m2t;
    for (std::size_t i = 0; i < kRecallKs.size(); ++i) {
        t2m["r" + std::to_string(kRecallKs[i])] = rep.r_t2m[i];
        m2t["r" + std::to_string(kRecallKs[i])] = rep.r_m2t[i];
    }
    j["t2m"] = t2m;
    j["m2t"] = m2t;
    j["medr_t2m"] = rep.medr_t2m;
    j["medr_m2t"] = rep.medr_m2t;
    j["rsum"] = rep.rsum;
    return j;
}

json epoch_to_json(const EpochRecord& rec) {
    json j;
    j["epoch"] = rec.epoch;
    j["lr"] = rec.lr;
    j["loss_total"] = rec.losses.total;
    j["loss_nce"] = rec.losses.nce;
    j["loss_rec"] = rec.losses.rec;
    j["loss_dmsp"] = rec.losses.dmsp;
    j["val"] = report_to_json(rec.val);
    return j;
}

void apply_weight_flag(RunConfig& cfg, const std::string& weights) {
    if (weights.empty()) return;
    double w[3];
    if (std::sscanf(weights.c_str(), "%lf,%lf,%lf", &w[0], &w[1], &w[2]) != 3)
        throw ValidationError("--weights expects W_NCE,W_REC,W_DMSP");
    cfg.w_nce = w[0];
    cfg.w_rec = w[1];
    cfg.w_dmsp = w[2];
}

// ------------------------------------------------------------------ commands

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    Corpus corpus =
        generate_synthetic_corpus(cfg.seed, cfg.n_pairs, cfg.n_classes, cfg.frames, cfg.joints);
    SplitCorpora splits = split_corpus(corpus);
    save_corpus(splits.train, out_dir + "/train");
    save_corpus(splits.val, out_dir + "/val");
    save_corpus(splits.test, out_dir + "/test");
    json summary;
    summary["seed"] = cfg.seed;
    summary["n_classes"] = cfg.n_classes;
    summary["frames"] = cfg.frames;
    summary["joints"] = cfg.joints;
    summary["train_pairs"] = splits.train.pairs.size();
    summary["val_pairs"] = splits.val.pairs.size();
    summary["test_pairs"] = splits.test.pairs.size();
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_roundtrip(const std::string& corpus_path, const std::string& family, std::size_t levels) {
    Corpus corpus = load_corpus(corpus_path);
    FilterBank bank = make_filter_bank(family, BankMode::Fixed);
    std::printf("pair_index,T,J,max_abs_error\n");
    bool ok = true;
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
        const MotionSequence& m = corpus.pairs[i].motion;
        const double err = pr_error(bank, m.flat(), levels);
        std::printf("%zu,%zu,%zu,%.3e\n", i, m.frames, m.joints, err);
        ok = ok && err <= 1e-6;
    }
    return ok ? 0 : 3;
}

int cmd_train(const RunConfig& cfg, const std::string& corpus_dir, const std::string& out_dir) {
    const std::size_t block = std::size_t(1) << cfg.levels;
    Corpus train_corpus = pad_corpus(load_corpus(corpus_dir + "/train"), block);
    Corpus val_corpus = pad_corpus(load_corpus(corpus_dir + "/val"), block);
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    ModelConfig mc = cfg.model_config();
    if (!train_corpus.pairs.empty()) {
        mc.frames = train_corpus.pairs[0].motion.frames;
        mc.joints = train_corpus.pairs[0].motion.joints;
    }
    Model model(mc, cfg.seed + 42);
    TrainResult result = train(model, train_corpus, val_corpus, cfg.train_config());

    std::ofstream log(out_dir + "/metrics.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot write " + out_dir + "/metrics.jsonl");
    for (const auto& rec : result.log) log << epoch_to_json(rec).dump() << "\n";
    log.close();
    if (!log) throw IoError("write failed for " + out_dir + "/metrics.jsonl");

    restore_params(model, result.best_params);
    save_checkpoint(model, out_dir + "/best");

    // Report what the checkpoint will reproduce: evaluate the reloaded weights.
    Model reloaded = load_checkpoint(out_dir + "/best");
    RetrievalReport final_rep = evaluate_retrieval(reloaded, val_corpus);
    json out;
    out["best_epoch"] = result.best_epoch;
    out["checkpoint"] = out_dir + "/best";
    out["val"] = report_to_json(final_rep);
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path) {
    Model model = load_checkpoint(ckpt_path);
    const std::size_t block = std::size_t(1) << model.config().levels;
    Corpus corpus = pad_corpus(load_corpus(corpus_path), block);
    RetrievalReport rep = evaluate_retrieval(model, corpus);
    std::cout << report_to_json(rep).dump() << "\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, double tolerance) {
    // Tiny configuration; full-band random signals and a moderate temperature
    // keep finite differences inside their resolution (see README).
    ModelConfig mc = cfg.model_config();
    Model model(mc, cfg.seed + 42);
    Rng rng(cfg.seed + 7);
    std::vector<BatchItem> items;
    const std::vector<std::vector<std::string>> toks = {
        {"a", "person", "walks", "quickly"}, {"someone", "waves", "the", "left", "arm"}};
    for (std::size_t i = 0; i < 2; ++i) {
        MotionSequence m;
        m.frames = mc.frames;
        m.joints = mc.joints;
        m.coords = Tensor({mc.frames, mc.joints, 3});
        for (std::size_t k = 0; k < m.coords.numel(); ++k) m.coords[k] = rng.normal();
        auto [shuffled, rec] = shuffle_sequence(m, mc.lambda_g, cfg.lambda_s, rng);
        BatchItem item;
        item.motion = m.flat();
        item.shuffled = shuffled.flat();
        item.tokens = toks[i % toks.size()];
        item.g_o = rec.original_labels;
        item.g_s = rec.shuffled_labels;
        items.push_back(std::move(item));
    }
    LossConfig lc = cfg.train_config().loss;
    AuditOptions opts;
    opts.tolerance = tolerance;
    AuditReport rep = gradient_audit(model, items, lc, opts);

    json out;
    out["tolerance"] = rep.tolerance;
    out["pass"] = rep.pass;
    json groups = json::array();
    for (const auto& g : rep.groups) {
        json jg;
        jg["group"] = g.name;
        jg["max_rel_err"] = g.max_rel_err;
        jg["checked"] = g.checked;
        jg["pass"] = g.max_rel_err <= rep.tolerance;
        groups.push_back(std::move(jg));
    }
    out["groups"] = std::move(groups);
    std::cout << out.dump(2) << "\n";
    return rep.pass ? 0 : 4;
}

int cmd_shuffle_demo(const std::string& corpus_path, std::size_t lambda_g, double lambda_s,
                     std::uint64_t seed) {
    Corpus corpus = load_corpus(corpus_path);
    if (corpus.pairs.empty()) throw ValidationError("shuffle-demo: corpus is empty");
    Rng rng(seed);
    auto [shuffled, rec] = shuffle_sequence(corpus.pairs[0].motion, lambda_g, lambda_s, rng);
    (void)shuffled;
    json out;
    out["pair_index"] = 0;
    out["lambda_g"] = lambda_g;
    out["lambda_s"] = lambda_s;
    out["seed"] = seed;
    out["permutation"] = rec.permutation;
    out["g_o"] = rec.original_labels;
    out["g_s"] = rec.shuffled_labels;
    std::cout << out.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wamo: multi-frequency text-motion retrieval pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", corpus_path, corpus_dir, ckpt_path;
    std::string family = "haar", weights;
    std::size_t levels = 3, lambda_g = 16;
    double lambda_s = 0.25, tolerance = 1e-6;
    std::uint64_t seed_flag = 0;
    bool seed_set = false;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus (train/val/test)");
    gen->add_option("--config", config_path, "JSON config file");
    gen->add_option("--out", out_dir, "output directory");
    gen->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_set = true; });

    auto* rt = app.add_subcommand("roundtrip", "analysis/synthesis round-trip check (CSV)");
    rt->add_option("--corpus", corpus_path, "corpus base path (no extension)")->required();
    rt->add_option("--family", family)->check(CLI::IsMember({"haar", "db2"}));
    rt->add_option("--levels", levels);

    auto* tr = app.add_subcommand("train", "train the retrieval model");
    tr->add_option("--config", config_path, "JSON config file");
    tr->add_option("--corpus", corpus_dir, "corpus directory from gen-data")->required();
    tr->add_option("--out", out_dir, "output directory");
    tr->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_set = true; });
    tr->add_option("--weights", weights, "W_NCE,W_REC,W_DMSP");

    auto* ev = app.add_subcommand("eval", "retrieval report for a checkpoint");
    ev->add_option("--checkpoint", ckpt_path, "checkpoint base path")->required();
    ev->add_option("--corpus", corpus_path, "corpus base path")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gc->add_option("--config", config_path, "JSON config file");
    gc->add_option("--tolerance", tolerance);
    gc->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_set = true; });

    auto* sd = app.add_subcommand("shuffle-demo", "print one DMSP shuffle record");
    sd->add_option("--corpus", corpus_path, "corpus base path")->required();
    sd->add_option("--lambda-g", lambda_g);
    sd->add_option("--lambda-s", lambda_s);
    sd->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_set = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (seed_set) cfg.seed = seed_flag;
        apply_weight_flag(cfg, weights);

        if (gen->parsed()) return cmd_gen_data(cfg, out_dir);
        if (rt->parsed()) return cmd_roundtrip(corpus_path, family, levels);
        if (tr->parsed()) return cmd_train(cfg, corpus_dir, out_dir);
        if (ev->parsed()) return cmd_eval(ckpt_path, corpus_path);
        if (gc->parsed()) {
            // default audit shape: the tiny configuration
            if (config_path.empty()) {
                cfg.frames = 8;
                cfg.joints = 2;
                cfg.latent = 8;
                cfg.levels = 2;
                cfg.lambda_g = 4;
                cfg.temperature = 1.0;
            }
            return cmd_gradcheck(cfg, tolerance);
        }
        if (sd->parsed()) return cmd_shuffle_demo(corpus_path, lambda_g, lambda_s, cfg.seed);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
