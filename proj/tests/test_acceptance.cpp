// Acceptance suite: one line per criterion, non-zero exit on any failure.
// Training-based checks run single-threaded on one core; seeds are fixed so
// every number below is reproducible.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wamo/checkpoint.hpp"
#include "wamo/traineval.hpp"

using namespace wamo;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_signal(Rng& rng, std::size_t T, std::size_t C) {
    Tensor x({T, C});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
    return x;
}

Tensor shift_rows(const Tensor& x, std::size_t k) {
    const std::size_t T = x.dim(0), C = x.dim(1);
    Tensor y({T, C});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) y.at((t + k) % T, c) = x.at(t, c);
    return y;
}

// --------------------------------------------------------------- criteria

void criterion_perfect_reconstruction() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    std::size_t cases = 0;
    for (const char* fam : {"haar", "db2"}) {
        FilterBank bank = make_filter_bank(fam, BankMode::Fixed);
        for (std::size_t T : {8u, 16u, 64u})
            for (std::size_t S : {1u, 2u, 3u}) {
                if (T % (std::size_t(1) << S)) continue;
                for (std::size_t C : {1u, 3u}) {
                    for (int trial = 0; trial < 100; ++trial)
                        worst = std::max(worst, pr_error(bank, random_signal(rng, T, C), S));
                    ++cases;
                }
            }
    }
    const double secs = elapsed_s(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "max error %.3e over %zu grid cells x 100 signals in %.1fs",
                  worst, cases, secs);
    report("perfect-reconstruction", worst <= 1e-10 && secs < 10.0, buf);
}

void criterion_shift_equivariance() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(102);
    const std::size_t T = 16, S = 2, C = 3;
    double worst = 0.0;
    for (const char* fam : {"haar", "db2"}) {
        FilterBank bank = make_filter_bank(fam, BankMode::Fixed);
        Tensor x = random_signal(rng, T, C);
        WaveletPyramid base = swt_forward(x, bank, S);
        for (std::size_t k = 0; k < T; ++k) {
            WaveletPyramid shifted = swt_forward(shift_rows(x, k), bank, S);
            worst = std::max(worst, max_abs_diff(shifted.approx, shift_rows(base.approx, k)) /
                                        std::max(1.0, base.approx.max_abs()));
            for (std::size_t s = 0; s < S; ++s)
                worst = std::max(worst,
                                 max_abs_diff(shifted.details[s], shift_rows(base.details[s], k)) /
                                     std::max(1.0, base.details[s].max_abs()));
        }
    }
    const double secs = elapsed_s(t0);
    char buf[120];
    std::snprintf(buf, sizeof buf, "max relative deviation %.3e over all %zu shifts in %.1fs",
                  worst, std::size_t(16), secs);
    report("shift-equivariance", worst <= 1e-12 && secs < 5.0, buf);
}

void criterion_oracle_equivalence() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(103);
    double worst = 0.0;
    for (const char* fam : {"haar", "db2"}) {
        FilterBank bank = make_filter_bank(fam, BankMode::Fixed);
        const std::size_t L = bank.length();
        for (std::size_t T : {8u, 16u, 32u})
            for (std::size_t S : {1u, 2u, 3u}) {
                if (T % (std::size_t(1) << S)) continue;
                Tensor x = random_signal(rng, T, 1);
                WaveletPyramid impl = swt_forward(x, bank, S);
                // direct double-loop evaluation of the band recursions
                std::vector<double> a(T);
                for (std::size_t i = 0; i < T; ++i) a[i] = x[i];
                for (std::size_t s = 1; s <= S; ++s) {
                    const std::size_t dil = std::size_t(1) << (s - 1);
                    std::vector<double> next(T, 0.0), det(T, 0.0);
                    for (std::size_t n = 0; n < T; ++n)
                        for (std::size_t k = 0; k < L; ++k) {
                            next[n] += bank.analysis_low[k] * a[(n + dil * k) % T];
                            det[n] += bank.analysis_high[k] * a[(n + dil * k) % T];
                        }
                    for (std::size_t n = 0; n < T; ++n)
                        worst = std::max(worst, std::fabs(det[n] - impl.details[s - 1][n]));
                    a = next;
                }
                for (std::size_t n = 0; n < T; ++n)
                    worst = std::max(worst, std::fabs(a[n] - impl.approx[n]));
            }
    }
    const double secs = elapsed_s(t0);
    char buf[120];
    std::snprintf(buf, sizeof buf, "max |impl - oracle| = %.3e in %.1fs", worst, secs);
    report("oracle-equivalence", worst <= 1e-12 && secs < 5.0, buf);
}

void criterion_gradient_audit() {
    auto t0 = std::chrono::steady_clock::now();
    ModelConfig mc;
    mc.frames = 8;
    mc.joints = 2;
    mc.latent = 8;
    mc.levels = 2;
    mc.lambda_g = 4;
    mc.heads = 4;
    mc.blocks = 2;
    mc.learnable_bank = true;
    Model model(mc, 42);

    Rng rng(104);
    std::vector<BatchItem> items;
    const std::vector<std::vector<std::string>> toks = {
        {"a", "person", "walks", "quickly"}, {"someone", "waves", "the", "left", "arm"}};
    for (std::size_t i = 0; i < 2; ++i) {
        MotionSequence m;
        m.frames = mc.frames;
        m.joints = mc.joints;
        m.coords = Tensor({mc.frames, mc.joints, 3});
        for (std::size_t k = 0; k < m.coords.numel(); ++k) m.coords[k] = rng.normal();
        auto [shuffled, rec] = shuffle_sequence(m, mc.lambda_g, 0.25, rng);
        items.push_back({m.flat(), shuffled.flat(), toks[i], rec.original_labels,
                         rec.shuffled_labels});
    }
    LossConfig lc;
    lc.temperature = 1.0;  // well-conditioned audit point; see README
    AuditOptions opts;
    AuditReport rep = gradient_audit(model, items, lc, opts);
    double worst = 0.0;
    std::string worst_name;
    for (const auto& g : rep.groups)
        if (g.max_rel_err > worst) {
            worst = g.max_rel_err;
            worst_name = g.name;
        }
    const double secs = elapsed_s(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu groups, worst %.3e (%s), step 1e-5, in %.1fs",
                  rep.groups.size(), worst, worst_name.c_str(), secs);
    report("gradient-audit", rep.pass && secs < 120.0, buf);
}

void criterion_loss_unit_values() {
    bool ok = true;
    std::string detail;

    {  // uniform similarities: 2 log B
        const std::size_t B = 5;
        Tensor t({B, 3}), m({B, 3});
        for (std::size_t i = 0; i < B; ++i) {
            t.at(i, 0) = 1.0;
            m.at(i, 0) = 1.0;
        }
        const double err = std::fabs(info_nce(t, m, 0.07) - 2.0 * std::log(double(B)));
        ok = ok && err <= 1e-9;
        detail += "nce-uniform " + std::to_string(err);
    }
    {  // B=2 hand oracle
        Tensor t({2, 2}), m({2, 2});
        t.at(0, 0) = m.at(0, 0) = 1.0;
        t.at(1, 1) = m.at(1, 1) = 1.0;
        const double err =
            std::fabs(info_nce(t, m, 1.0) - 2.0 * std::log(1.0 + std::exp(-1.0)));
        ok = ok && err <= 1e-9;
        detail += ", nce-oracle " + std::to_string(err);
    }
    {  // dmsp uniform: 2 ln lambda_g with lambda_g = 16
        Tensor p = Tensor::full({8, 16}, 1.0 / 16.0);
        std::vector<std::size_t> g(8, 2);
        const double err = std::fabs(dmsp_loss(p, g, p, g) - 2.0 * std::log(16.0));
        ok = ok && err <= 1e-9;
        detail += ", dmsp-uniform " + std::to_string(err);
    }
    {  // smooth-l1 branch values
        Tensor a({1}), b({1});
        a[0] = 0.5;
        const bool q = std::fabs(smooth_l1(a, b, 1.0) - 0.125) <= 1e-12;
        a[0] = 2.0;
        const bool l = std::fabs(smooth_l1(a, b, 1.0) - 1.5) <= 1e-12;
        ok = ok && q && l;
        detail += std::string(", smooth-l1 ") + (q && l ? "0.125/1.5 exact" : "wrong");
    }
    report("loss-unit-values", ok, detail);
}

void criterion_metrics() {
    const std::array<double, 5> t2m = {14.02, 17.58, 25.51, 32.06, 42.10};
    const std::array<double, 5> m2t = {16.57, 15.51, 22.74, 29.40, 41.73};
    const double err = std::fabs(rsum_of(t2m, m2t) - 257.22);
    const RetrievalReport midpoint = report_from_ranks({28, 29}, {1, 1});
    const bool ok = err <= 1e-9 && midpoint.medr_t2m == 28.50;
    char buf[120];
    std::snprintf(buf, sizeof buf, "reference rsum error %.2e, midpoint MedR %.2f", err,
                  midpoint.medr_t2m);
    report("metrics-correctness", ok, buf);
}

struct DeskRun {
    RetrievalReport trained;
    DmspAccuracy acc;
    double seconds = 0.0;
};

DeskRun desk_scale_run(const Corpus& corpus, const SplitCorpora& splits, const Corpus& gallery,
                       std::uint64_t seed) {
    ModelConfig mc;
    mc.frames = 64;
    mc.joints = 8;
    mc.latent = 64;
    mc.levels = 3;
    mc.lambda_g = 16;
    mc.heads = 4;
    mc.blocks = 2;
    mc.learnable_bank = true;
    Model model(mc, seed * 1000 + 42);
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.epochs = 20;
    tc.batch = 32;
    tc.seed = seed;
    tc.lambda_s = 0.25;
    tc.loss.w_dmsp = 5.0;  // rebalances the CE term against the tau-scaled contrastive term

    auto t0 = std::chrono::steady_clock::now();
    train(model, splits.train, splits.val, tc);
    DeskRun run;
    run.seconds = elapsed_s(t0);
    run.trained = evaluate_retrieval(model, gallery);
    run.acc = dmsp_accuracy(model, gallery, mc.lambda_g, tc.lambda_s, 99);
    return run;
}

void criteria_desk_scale() {
    // Chance level: the same gallery scored by randomly initialized models.
    Corpus corpus = generate_synthetic_corpus(7, 128, 8, 64, 8);
    SplitCorpora splits = split_corpus(corpus);
    Corpus gallery = corpus;  // the full 128-pair corpus; see decisions ledger
    gallery.normalization = splits.train.normalization;

    ModelConfig mc;
    mc.frames = 64;
    mc.joints = 8;
    mc.latent = 64;
    mc.levels = 3;
    mc.lambda_g = 16;
    mc.heads = 4;
    mc.blocks = 2;
    mc.learnable_bank = true;
    double chance_r1 = 0.0, chance_rsum = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        Model rnd(mc, 7770 + s);
        RetrievalReport rep = evaluate_retrieval(rnd, gallery);
        chance_r1 += rep.r_t2m[0] / 5.0;
        chance_rsum += rep.rsum / 5.0;
    }

    bool learn_ok = true, dmsp_ok = true;
    std::string learn_detail, dmsp_detail;
    char buf[200];
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        DeskRun run = desk_scale_run(corpus, splits, gallery, seed);
        const double r1_ratio = run.trained.r_t2m[0] / chance_r1;
        const double rsum_ratio = run.trained.rsum / chance_rsum;
        learn_ok = learn_ok && r1_ratio >= 10.0 && rsum_ratio >= 5.0 && run.seconds < 900.0;
        std::snprintf(buf, sizeof buf, "seed %llu: R@1 %.2f (%.1fx chance %.2f), rsum %.1f "
                      "(%.1fx chance %.1f), %.0fs; ",
                      (unsigned long long)seed, run.trained.r_t2m[0], r1_ratio, chance_r1,
                      run.trained.rsum, rsum_ratio, chance_rsum, run.seconds);
        learn_detail += buf;

        dmsp_ok = dmsp_ok && run.acc.ordered >= 0.9 && run.acc.shuffled >= 3.0 / 16.0;
        std::snprintf(buf, sizeof buf, "seed %llu: ordered %.3f, shuffled %.3f (%.1fx chance); ",
                      (unsigned long long)seed, run.acc.ordered, run.acc.shuffled,
                      run.acc.shuffled * 16.0);
        dmsp_detail += buf;
    }
    report("desk-scale-learning", learn_ok, learn_detail);
    report("dmsp-learnability", dmsp_ok, dmsp_detail);
}

void criterion_ablation_direction() {
    // Composite-class corpus: the first four templates are the order-sensitive
    // action pairs, so class identity hinges on temporal structure.
    Corpus corpus = generate_synthetic_corpus(21, 64, 4, 64, 8);
    double mean_full = 0.0, mean_nce = 0.0;
    std::string detail;
    char buf[120];
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        double r1[2] = {0, 0};
        for (int full = 0; full < 2; ++full) {
            ModelConfig mc;
            mc.frames = 64;
            mc.joints = 8;
            mc.latent = 64;
            mc.levels = 3;
            mc.lambda_g = 16;
            mc.heads = 4;
            mc.blocks = 2;
            mc.learnable_bank = true;
            Model model(mc, seed * 1000 + 42);
            TrainConfig tc;
            tc.lr = 1e-3;
            tc.epochs = 10;
            tc.batch = 16;
            tc.seed = seed;
            tc.lambda_s = 0.25;
            if (!full) {
                tc.loss.w_rec = 0.0;
                tc.loss.w_dmsp = 0.0;
            }
            train(model, corpus, corpus, tc);
            r1[full] = evaluate_retrieval(model, corpus).r_t2m[0];
        }
        mean_nce += r1[0] / 3.0;
        mean_full += r1[1] / 3.0;
        std::snprintf(buf, sizeof buf, "seed %llu: full %.2f vs nce-only %.2f; ",
                      (unsigned long long)seed, r1[1], r1[0]);
        detail += buf;
    }
    std::snprintf(buf, sizeof buf, "means: full %.2f vs nce-only %.2f", mean_full, mean_nce);
    detail += buf;
    report("ablation-direction", mean_full >= mean_nce, detail);
}

void criterion_determinism() {
    const std::string dir = (fs::temp_directory_path() / "wamo_acceptance_det").string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cfg_path = dir + "/config.json";
    {
        std::ofstream cfg(cfg_path);
        cfg << R"({"n_pairs":16,"n_classes":4,"frames":16,"joints":2,"latent":8,"levels":2,)"
            << R"("lambda_g":4,"batch":4,"epochs":2,"lr":0.001})";
    }
    auto sys = [](const std::string& cmd) { return std::system(cmd.c_str()); };
    const std::string cli = WAMO_CLI;
    bool ok = true;
    ok = ok && sys(cli + " gen-data --out " + dir + "/corpus --config " + cfg_path +
                   " --seed 11 > /dev/null") == 0;
    ok = ok && sys(cli + " train --config " + cfg_path + " --corpus " + dir + "/corpus --out " +
                   dir + "/a --seed 11 > /dev/null") == 0;
    ok = ok && sys(cli + " train --config " + cfg_path + " --corpus " + dir + "/corpus --out " +
                   dir + "/b --seed 11 > /dev/null") == 0;
    std::string a, b;
    if (ok) {
        auto slurp = [](const std::string& p) {
            std::ifstream f(p, std::ios::binary);
            return std::string((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
        };
        a = slurp(dir + "/a/metrics.jsonl");
        b = slurp(dir + "/b/metrics.jsonl");
        ok = !a.empty() && a == b;
    }
    char buf[120];
    std::snprintf(buf, sizeof buf, "two cmd_train runs, %zu log bytes, byte-identical: %s",
                  a.size(), ok ? "yes" : "no");
    report("determinism", ok, buf);
}

}  // namespace

int main() {
    criterion_perfect_reconstruction();
    criterion_shift_equivariance();
    criterion_oracle_equivalence();
    criterion_gradient_audit();
    criterion_loss_unit_values();
    criterion_metrics();
    criterion_determinism();
    criterion_ablation_direction();
    criteria_desk_scale();
    std::printf("%d criterion failure(s)\n", g_failures);
    return g_failures;
}
