#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wamo/objectives.hpp"
#include "wamo/rng.hpp"
#include "wamo/traineval.hpp"

using namespace wamo;
using ad::Var;

namespace {

Tensor rows(std::vector<std::vector<double>> data) {
    const std::size_t R = data.size(), C = data[0].size();
    Tensor t({R, C});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) t.at(r, c) = data[r][c];
    return t;
}

}  // namespace

TEST_CASE("info_nce unit values") {
    SUBCASE("duplicate embeddings: loss = 2 log B") {
        for (std::size_t B : {2u, 4u, 7u}) {
            Tensor t({B, 3}), m({B, 3});
            for (std::size_t i = 0; i < B; ++i) {
                t.at(i, 0) = 1.0;
                m.at(i, 0) = 1.0;
            }
            CHECK(std::fabs(info_nce(t, m, 0.07) - 2.0 * std::log(double(B))) <= 1e-9);
        }
    }
    SUBCASE("B=2 orthonormal hand-oracle: 2 ln(1+exp(-1))") {
        Tensor t = rows({{1, 0}, {0, 1}});
        Tensor m = rows({{1, 0}, {0, 1}});
        const double expected = 2.0 * std::log(1.0 + std::exp(-1.0));  // 0.62652...
        CHECK(std::fabs(info_nce(t, m, 1.0) - expected) <= 1e-9);
        CHECK(expected == doctest::Approx(0.62652).epsilon(1e-4));
    }
    SUBCASE("lower temperature sharpens a dominant diagonal") {
        Tensor t = rows({{1, 0}, {0, 1}});
        Tensor m = rows({{1, 0}, {0, 1}});
        CHECK(info_nce(t, m, 0.5) < info_nce(t, m, 1.0));
    }
    SUBCASE("scale invariance of embeddings") {
        Rng rng(3);
        Tensor t({4, 8}), m({4, 8});
        for (std::size_t i = 0; i < t.numel(); ++i) {
            t[i] = rng.normal();
            m[i] = rng.normal();
        }
        Tensor t2 = t, m2 = m;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            t2[i] *= 37.5;
            m2[i] *= 0.004;
        }
        CHECK(std::fabs(info_nce(t, m, 0.07) - info_nce(t2, m2, 0.07)) <= 1e-6);
    }
    SUBCASE("stabilized equals naive formula on a small batch") {
        Rng rng(5);
        const std::size_t B = 3, D = 4;
        Tensor t({B, D}), m({B, D});
        for (std::size_t i = 0; i < t.numel(); ++i) {
            t[i] = rng.normal();
            m[i] = rng.normal();
        }
        const double tau = 0.3;
        // naive: direct exponentials
        auto norm_row = [&](const Tensor& x, std::size_t r) {
            double s = 0;
            for (std::size_t d = 0; d < D; ++d) s += x.at(r, d) * x.at(r, d);
            return std::sqrt(s);
        };
        double naive = 0.0;
        std::vector<std::vector<double>> sim(B, std::vector<double>(B));
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < B; ++j) {
                double dot = 0;
                for (std::size_t d = 0; d < D; ++d) dot += t.at(i, d) * m.at(j, d);
                sim[i][j] = dot / (norm_row(t, i) * norm_row(m, j));
            }
        for (std::size_t i = 0; i < B; ++i) {
            double row = 0, col = 0;
            for (std::size_t j = 0; j < B; ++j) {
                row += std::exp(sim[i][j] / tau);
                col += std::exp(sim[j][i] / tau);
            }
            naive -= std::log(std::exp(sim[i][i] / tau) / row);
            naive -= std::log(std::exp(sim[i][i] / tau) / col);
        }
        naive /= double(B);
        CHECK(std::fabs(info_nce(t, m, tau) - naive) <= 1e-8);
    }
    SUBCASE("errors") {
        Tensor one({1, 2});
        one.at(0, 0) = 1;
        CHECK_THROWS_AS(info_nce(one, one, 0.07), ValidationError);
        Tensor t = rows({{1, 0}, {0, 0}});  // zero-norm row
        Tensor m = rows({{1, 0}, {0, 1}});
        CHECK_THROWS_AS(info_nce(t, m, 0.07), NumericalError);
    }
}

TEST_CASE("smooth_l1 values and smoothness at the branch point") {
    Tensor a({1}), b({1});
    SUBCASE("zero residual") {
        a[0] = 2.0;
        b[0] = 2.0;
        CHECK(smooth_l1(a, b, 1.0) == 0.0);
    }
    SUBCASE("quadratic branch: e=0.5 -> 0.125") {
        a[0] = 0.5;
        b[0] = 0.0;
        CHECK(smooth_l1(a, b, 1.0) == doctest::Approx(0.125).epsilon(1e-12));
    }
    SUBCASE("linear branch: e=2 -> 1.5") {
        a[0] = 2.0;
        b[0] = 0.0;
        CHECK(smooth_l1(a, b, 1.0) == doctest::Approx(1.5).epsilon(1e-12));
    }
    SUBCASE("gradient is continuous across |e| = beta") {
        const double beta = 1.0;
        for (double e0 : {beta - 1e-7, beta, beta + 1e-7}) {
            Tensor pred({1});
            pred[0] = e0;
            Var pv = Var::leaf(pred, true);
            Var loss = ad::smooth_l1_mean(pv, Tensor({1}), beta);
            ad::backward(loss);
            CHECK(pv.grad()[0] == doctest::Approx(std::min(e0 / beta, 1.0)).epsilon(1e-6));
        }
        // finite differences straddling the junction
        Tensor pred({1});
        pred[0] = beta;
        const double h = 1e-5;
        Tensor target({1});
        pred[0] = beta + h;
        const double fp = smooth_l1(pred, target, beta);
        pred[0] = beta - h;
        const double fm = smooth_l1(pred, target, beta);
        CHECK(std::fabs((fp - fm) / (2 * h) - 1.0) <= 1e-5);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(smooth_l1(Tensor({2}), Tensor({3}), 1.0), ValidationError);
    }
}

TEST_CASE("dmsp loss values") {
    SUBCASE("one-hot correct predictions give ~0") {
        Tensor p({4, 3});
        std::vector<std::size_t> g = {0, 1, 2, 1};
        for (std::size_t t = 0; t < 4; ++t) p.at(t, g[t]) = 1.0;
        CHECK(dmsp_loss(p, g, p, g) <= 1e-9);
    }
    SUBCASE("uniform predictions give 2 ln(lambda_g)") {
        const std::size_t G = 16, T = 8;
        Tensor p = Tensor::full({T, G}, 1.0 / G);
        std::vector<std::size_t> g(T, 3);
        const double expected = 2.0 * std::log(double(G));
        CHECK(std::fabs(dmsp_loss(p, g, p, g) - expected) <= 1e-9);
        CHECK(expected == doctest::Approx(5.5452).epsilon(1e-4));
    }
    SUBCASE("one-hot wrong prediction clamps to a finite value") {
        Tensor p({2, 2});
        p.at(0, 0) = 1.0;
        p.at(1, 0) = 1.0;
        std::vector<std::size_t> g = {1, 1};  // always wrong
        const double v = dmsp_loss(p, g, p, g);
        CHECK(std::isfinite(v));
        CHECK(v == doctest::Approx(2.0 * -std::log(1e-12)).epsilon(1e-9));
    }
    SUBCASE("validation") {
        Tensor p = Tensor::full({2, 2}, 0.5);
        std::vector<std::size_t> g = {0, 1};
        Tensor bad = p;
        bad.at(0, 0) = 0.7;  // row sums to 1.2
        CHECK_THROWS_AS(dmsp_loss(bad, g, p, g), ValidationError);
        std::vector<std::size_t> out = {0, 5};
        CHECK_THROWS_AS(dmsp_loss(p, out, p, g), ValidationError);
    }
    SUBCASE("logit-path composite agrees with the probability form") {
        Rng rng(7);
        Tensor logits({6, 4});
        for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = rng.normal();
        std::vector<std::size_t> g = {0, 1, 2, 3, 1, 2};
        Tensor probs = ad::softmax_rows(Var::constant(logits)).val();
        const double via_probs = dmsp_loss(probs, g, probs, g);
        const double via_logits =
            dmsp_loss_var(Var::constant(logits), g, Var::constant(logits), g).scalar();
        CHECK(std::fabs(via_probs - via_logits) <= 1e-10);
    }
}

TEST_CASE("total_loss weighting") {
    LossConfig cfg;
    cfg.w_nce = 1;
    cfg.w_rec = 0;
    cfg.w_dmsp = 0;
    CHECK(total_loss(0.5, 9.0, 9.0, cfg) == 0.5);
    cfg.w_nce = cfg.w_rec = cfg.w_dmsp = 0;
    CHECK(total_loss(1, 2, 3, cfg) == 0.0);
    cfg.w_nce = cfg.w_rec = cfg.w_dmsp = 1;
    CHECK(total_loss(0.5, 0.2, 0.3, cfg) == doctest::Approx(1.0).epsilon(1e-15));
    cfg.w_rec = -1;
    CHECK_THROWS_AS(total_loss(1, 1, 1, cfg), ValidationError);
}

namespace {

ModelConfig tiny_config() {
    ModelConfig mc;
    mc.frames = 8;
    mc.joints = 2;
    mc.latent = 8;
    mc.levels = 2;
    mc.lambda_g = 4;
    mc.heads = 4;
    mc.blocks = 2;
    mc.learnable_bank = true;
    return mc;
}

}  // namespace

TEST_CASE("reconstruction loss") {
    ModelConfig mc = tiny_config();
    Model model(mc, 30);
    Rng rng(31);
    Tensor motion({mc.frames, mc.channels()});
    for (std::size_t i = 0; i < motion.numel(); ++i) motion[i] = rng.normal();

    SUBCASE("exact band features invert to the signal (oracle decoders)") {
        // Bypass the decoder MLPs: feed the true bands through the synthesis
        // side directly, the identity the decoders are trained toward.
        Pass pass(model, false);
        FrequencyFeatures feats;
        model.twd_decompose(pass, Var::constant(motion), feats);
        VarPyramid pyr;
        pyr.level = mc.levels;
        pyr.approx = feats.band_low;
        pyr.details = feats.band_high;
        Var rec = iswt_inverse_var(pyr, model.bank_synthesis_low(pass),
                                   model.bank_synthesis_high(pass));
        CHECK(ad::smooth_l1_mean(rec, motion, 1.0).scalar() <= 1e-10);
    }

    SUBCASE("zero decoders reduce to 2 * smooth_l1(0, M)") {
        for (auto& p : model.params())
            if (p.name.rfind("dec_", 0) == 0)
                for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] = 0.0;
        Pass pass(model, false);
        FrequencyFeatures feats = model.encode_motion(pass, motion);
        ReconstructionResult rec = reconstruction_loss(model, pass, feats, motion, 1.0);
        const double direct = smooth_l1(Tensor(motion.shape()), motion, 1.0);
        CHECK(rec.loss.scalar() == doctest::Approx(2.0 * direct).epsilon(1e-10));
    }

    SUBCASE("loss is non-negative and shapes are right") {
        Pass pass(model, false);
        FrequencyFeatures feats = model.encode_motion(pass, motion);
        ReconstructionResult rec = reconstruction_loss(model, pass, feats, motion, 1.0);
        CHECK(rec.loss.scalar() >= 0.0);
        CHECK(rec.intra.shape() == motion.shape());
        CHECK(rec.inter.shape() == motion.shape());
    }
}

TEST_CASE("reconstruction loss decreases under gradient descent on decoders") {
    ModelConfig mc = tiny_config();
    Model model(mc, 33);
    Rng rng(34);
    Tensor motion({mc.frames, mc.channels()});
    for (std::size_t i = 0; i < motion.numel(); ++i) motion[i] = rng.normal();

    std::vector<std::size_t> dec_idx;
    for (std::size_t i = 0; i < model.param_count(); ++i)
        if (model.params()[i].name.rfind("dec_", 0) == 0) dec_idx.push_back(i);

    auto eval_loss = [&](bool with_grad, std::vector<Tensor>* grads) {
        Pass pass(model, with_grad);
        FrequencyFeatures feats = model.encode_motion(pass, motion);
        ReconstructionResult rec = reconstruction_loss(model, pass, feats, motion, 1.0);
        const double value = rec.loss.scalar();
        if (with_grad) {
            ad::backward(rec.loss);
            grads->clear();
            for (std::size_t i : dec_idx) grads->push_back(pass.grad(i));
        }
        return value;
    };

    double lr = 0.05;
    std::vector<Tensor> grads;
    double prev = eval_loss(true, &grads);
    const double initial = prev;
    for (int step = 0; step < 50; ++step) {
        // backtracking step on the decoder parameters only
        std::vector<Tensor> saved;
        for (std::size_t i : dec_idx) saved.push_back(model.params()[i].value);
        for (int tries = 0;; ++tries) {
            for (std::size_t k = 0; k < dec_idx.size(); ++k) {
                Tensor& p = model.params()[dec_idx[k]].value;
                if (grads[k].numel() == 0) continue;
                for (std::size_t j = 0; j < p.numel(); ++j) p[j] -= lr * grads[k][j];
            }
            std::vector<Tensor> next_grads;
            const double next = eval_loss(true, &next_grads);
            if (next <= prev + 1e-8 || tries > 20) {
                CHECK(next <= prev + 1e-8);
                prev = next;
                grads = std::move(next_grads);
                break;
            }
            for (std::size_t k = 0; k < dec_idx.size(); ++k)
                model.params()[dec_idx[k]].value = saved[k];
            lr *= 0.5;
        }
    }
    CHECK(prev < initial);
}

TEST_CASE("loss gradients match finite differences on tiny shapes") {
    Rng rng(40);

    SUBCASE("info_nce") {
        const std::size_t B = 3, D = 4;
        Tensor t({B, D}), m({B, D});
        for (std::size_t i = 0; i < t.numel(); ++i) {
            t[i] = rng.normal();
            m[i] = rng.normal();
        }
        Var tv = Var::leaf(t, true), mv = Var::leaf(m, true);
        Var loss = info_nce_var(tv, mv, 0.5);
        ad::backward(loss);
        const double h = 1e-5;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double saved = t[i];
            t[i] = saved + h;
            const double fp = info_nce(t, m, 0.5);
            t[i] = saved - h;
            const double fm = info_nce(t, m, 0.5);
            t[i] = saved;
            const double fd = (fp - fm) / (2 * h);
            CHECK(std::fabs(tv.grad()[i] - fd) /
                      std::max({1.0, std::fabs(tv.grad()[i]), std::fabs(fd)}) <=
                  1e-6);
        }
    }

    SUBCASE("dmsp from logits") {
        Tensor logits({4, 3});
        for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = rng.normal();
        std::vector<std::size_t> g = {0, 2, 1, 1};
        Var lv = Var::leaf(logits, true);
        Var loss = dmsp_loss_var(lv, g, lv, g);
        ad::backward(loss);
        const double h = 1e-5;
        for (std::size_t i = 0; i < logits.numel(); ++i) {
            const double saved = logits[i];
            logits[i] = saved + h;
            const double fp =
                dmsp_loss_var(Var::constant(logits), g, Var::constant(logits), g).scalar();
            logits[i] = saved - h;
            const double fm =
                dmsp_loss_var(Var::constant(logits), g, Var::constant(logits), g).scalar();
            logits[i] = saved;
            const double fd = (fp - fm) / (2 * h);
            CHECK(std::fabs(lv.grad()[i] - fd) /
                      std::max({1.0, std::fabs(lv.grad()[i]), std::fabs(fd)}) <=
                  1e-6);
        }
    }
}
