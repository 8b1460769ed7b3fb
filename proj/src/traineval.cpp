#include "wamo/traineval.hpp"

#include <algorithm>
#include <cmath>

#include "wamo/threads.hpp"

namespace wamo {

using ad::Var;

// ------------------------------------------------------------------ optimizer

void adam_step(std::vector<ParamTensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (grads.size() != params.size())
        throw ValidationError("adam_step: gradient count mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = Tensor::zeros(params[i].value.shape());
            state.v[i] = Tensor::zeros(params[i].value.shape());
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].numel() == 0) continue;  // untouched parameter
        if (!grads[i].same_shape(params[i].value))
            throw ValidationError("adam_step: gradient shape mismatch for " + params[i].name);
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        Tensor& p = params[i].value;
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double g = grads[i][j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max) {
    if (total_steps == 0) throw ValidationError("cosine_lr: total_steps must be positive");
    if (step > total_steps) throw ValidationError("cosine_lr: step out of range");
    return lr_max * 0.5 *
           (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
}

// ------------------------------------------------------------------- metrics

double rsum_of(const std::array<double, 5>& t2m, const std::array<double, 5>& m2t) {
    double s = 0.0;
    for (double v : t2m) s += v;
    for (double v : m2t) s += v;
    return s;
}

namespace {

double median_rank(std::vector<std::size_t> ranks) {
    std::sort(ranks.begin(), ranks.end());
    const std::size_t n = ranks.size();
    if (n % 2 == 1) return static_cast<double>(ranks[n / 2]);
    return 0.5 * (static_cast<double>(ranks[n / 2 - 1]) + static_cast<double>(ranks[n / 2]));
}

std::array<double, 5> recalls(const std::vector<std::size_t>& ranks) {
    std::array<double, 5> out{};
    for (std::size_t ki = 0; ki < kRecallKs.size(); ++ki) {
        std::size_t hits = 0;
        for (std::size_t r : ranks)
            if (r <= kRecallKs[ki]) ++hits;
        out[ki] = 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
    }
    return out;
}

// Rank of the diagonal entry in row `q` of the similarity matrix.
std::size_t rank_of_target(const std::vector<double>& row, std::size_t target) {
    std::size_t rank = 1;
    const double s = row[target];
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (j == target) continue;
        if (row[j] > s || (row[j] == s && j < target)) ++rank;
    }
    return rank;
}

}  // namespace

RetrievalReport report_from_ranks(const std::vector<std::size_t>& ranks_t2m,
                                  const std::vector<std::size_t>& ranks_m2t) {
    if (ranks_t2m.empty() || ranks_m2t.empty())
        throw ValidationError("report_from_ranks: empty rank list");
    RetrievalReport rep;
    rep.r_t2m = recalls(ranks_t2m);
    rep.r_m2t = recalls(ranks_m2t);
    rep.medr_t2m = median_rank(ranks_t2m);
    rep.medr_m2t = median_rank(ranks_m2t);
    rep.rsum = rsum_of(rep.r_t2m, rep.r_m2t);
    return rep;
}

RetrievalReport evaluate_retrieval(const Model& model, const Corpus& gallery) {
    const std::size_t n = gallery.pairs.size();
    if (n == 0) throw ValidationError("evaluate_retrieval: empty gallery");

    std::vector<Tensor> text_emb(n), motion_emb(n);
    parallel_for(n, [&](std::size_t i) {
        const auto& pair = gallery.pairs[i];
        Pass pass(model, false);
        MotionSequence norm = normalize(pair.motion, gallery.normalization);
        FrequencyFeatures feats = model.encode_motion(pass, norm.flat());
        motion_emb[i] = feats.pooled.val();
        Pass tpass(model, false);
        text_emb[i] = model.encode_text(tpass, pair.text.tokens).val();
    });

    // Cosine similarity; zero-norm embeddings are an error upstream as well.
    auto normalize_rows = [&](std::vector<Tensor>& embs) {
        for (auto& e : embs) {
            double s = 0.0;
            for (std::size_t j = 0; j < e.numel(); ++j) s += e[j] * e[j];
            const double nrm = std::sqrt(s);
            if (nrm == 0.0) throw NumericalError("evaluate_retrieval: zero-norm embedding");
            for (std::size_t j = 0; j < e.numel(); ++j) e[j] /= nrm;
        }
    };
    normalize_rows(text_emb);
    normalize_rows(motion_emb);

    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < text_emb[i].numel(); ++d)
                s += text_emb[i][d] * motion_emb[j][d];
            sim[i][j] = s;
        }

    std::vector<std::size_t> ranks_t2m(n), ranks_m2t(n);
    for (std::size_t i = 0; i < n; ++i) ranks_t2m[i] = rank_of_target(sim[i], i);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = sim[i][j];
        ranks_m2t[j] = rank_of_target(col, j);
    }
    return report_from_ranks(ranks_t2m, ranks_m2t);
}

DmspAccuracy dmsp_accuracy(const Model& model, const Corpus& corpus, std::size_t lambda_g,
                           double lambda_s, std::uint64_t seed) {
    if (corpus.pairs.empty()) throw ValidationError("dmsp_accuracy: empty corpus");
    Rng rng(seed);
    std::size_t hit_o = 0, hit_s = 0, total = 0;
    for (const auto& pair : corpus.pairs) {
        MotionSequence norm = normalize(pair.motion, corpus.normalization);
        auto [shuffled, rec] = shuffle_sequence(norm, lambda_g, lambda_s, rng);

        Pass pass(model, false);
        FrequencyFeatures fo = model.encode_motion(pass, norm.flat());
        Tensor po = model.classify_frames(fo.inter.val());
        Pass spass(model, false);
        FrequencyFeatures fs = model.encode_motion(spass, shuffled.flat());
        Tensor ps = model.classify_frames(fs.inter.val());

        const std::size_t T = norm.frames, G = po.dim(1);
        for (std::size_t t = 0; t < T; ++t) {
            std::size_t amax_o = 0, amax_s = 0;
            for (std::size_t g = 1; g < G; ++g) {
                if (po.at(t, g) > po.at(t, amax_o)) amax_o = g;
                if (ps.at(t, g) > ps.at(t, amax_s)) amax_s = g;
            }
            hit_o += (amax_o == rec.original_labels[t]);
            hit_s += (amax_s == rec.shuffled_labels[t]);
            ++total;
        }
    }
    DmspAccuracy acc;
    acc.ordered = static_cast<double>(hit_o) / static_cast<double>(total);
    acc.shuffled = static_cast<double>(hit_s) / static_cast<double>(total);
    return acc;
}

// ------------------------------------------------------------------ training

void TrainConfig::validate() const {
    if (lr < 0.0) throw ValidationError("train config: lr must be >= 0");
    if (batch < 2) throw ValidationError("train config: batch size must be >= 2");
    if (epochs == 0) throw ValidationError("train config: epochs must be >= 1");
    if (lambda_s < 0.0 || lambda_s > 1.0)
        throw ValidationError("train config: lambda_s must be in [0, 1]");
    loss.validate();
}

std::vector<BatchItem> make_batch(const Model& model, const Corpus& corpus,
                                  const std::vector<std::size_t>& indices, std::size_t lambda_g,
                                  double lambda_s, Rng& rng) {
    std::vector<BatchItem> items;
    items.reserve(indices.size());
    for (std::size_t idx : indices) {
        const auto& pair = corpus.pairs.at(idx);
        if (pair.motion.frames != model.config().frames ||
            pair.motion.joints != model.config().joints)
            throw ValidationError("make_batch: pair " + std::to_string(idx) + " has shape " +
                                  std::to_string(pair.motion.frames) + "x" +
                                  std::to_string(pair.motion.joints) + ", model expects " +
                                  std::to_string(model.config().frames) + "x" +
                                  std::to_string(model.config().joints));
        MotionSequence norm = normalize(pair.motion, corpus.normalization);
        auto [shuffled, rec] = shuffle_sequence(norm, lambda_g, lambda_s, rng);
        BatchItem item;
        item.motion = norm.flat();
        item.shuffled = shuffled.flat();
        item.tokens = pair.text.tokens;
        item.g_o = std::move(rec.original_labels);
        item.g_s = std::move(rec.shuffled_labels);
        items.push_back(std::move(item));
    }
    return items;
}

BatchEval run_batch(const Model& model, Pass& pass, const std::vector<BatchItem>& items,
                    const LossConfig& loss_cfg) {
    loss_cfg.validate();
    const std::size_t B = items.size();
    if (B < 2) throw ValidationError("run_batch: batch size must be >= 2");
    const std::size_t D = model.config().latent;

    struct MemberVars {
        Var text, pooled, partial;
    };
    std::vector<MemberVars> members;
    members.reserve(B);

    BatchEval eval;
    Tensor text_mat({B, D}), motion_mat({B, D});
    for (std::size_t i = 0; i < B; ++i) {
        const BatchItem& item = items[i];
        FrequencyFeatures feats = model.encode_motion(pass, item.motion);
        Var text = model.encode_text(pass, item.tokens);

        ReconstructionResult rec =
            reconstruction_loss(model, pass, feats, item.motion, loss_cfg.smooth_l1_beta);

        Var logits_o = model.classify_logits(pass, feats.inter);
        FrequencyFeatures sfeats;
        model.twd_decompose(pass, Var::constant(item.shuffled), sfeats);
        model.encode_intra(pass, sfeats);
        sfeats.inter = model.encode_inter(pass, sfeats.intra_low, sfeats.intra_high);
        Var logits_s = model.classify_logits(pass, sfeats.inter);
        Var dmsp = dmsp_loss_var(logits_o, item.g_o, logits_s, item.g_s);

        eval.rec += rec.loss.scalar();
        eval.dmsp += dmsp.scalar();

        Var partial = ad::scale(
            ad::add(ad::scale(rec.loss, loss_cfg.w_rec), ad::scale(dmsp, loss_cfg.w_dmsp)),
            1.0 / static_cast<double>(B));
        for (std::size_t d = 0; d < D; ++d) {
            text_mat.at(i, d) = text.val()[d];
            motion_mat.at(i, d) = feats.pooled.val()[d];
        }
        members.push_back({text, feats.pooled, partial});
    }
    eval.rec /= static_cast<double>(B);
    eval.dmsp /= static_cast<double>(B);

    if (!pass.with_grad()) {
        eval.nce = info_nce(text_mat, motion_mat, loss_cfg.temperature);
        eval.total = total_loss(eval.nce, eval.rec, eval.dmsp, loss_cfg);
        return eval;
    }

    // Batch-coupled term on its own small tape; its input gradients seed the
    // per-member backward passes below.
    Var text_leaf = Var::leaf(text_mat, true);
    Var motion_leaf = Var::leaf(motion_mat, true);
    Var nce = info_nce_var(text_leaf, motion_leaf, loss_cfg.temperature);
    eval.nce = nce.scalar();
    eval.total = total_loss(eval.nce, eval.rec, eval.dmsp, loss_cfg);
    ad::backward(nce);
    const Tensor& d_text = text_leaf.grad();
    const Tensor& d_motion = motion_leaf.grad();

    for (std::size_t i = 0; i < B; ++i) {
        Tensor seed_t({D}), seed_m({D});
        for (std::size_t d = 0; d < D; ++d) {
            seed_t[d] = loss_cfg.w_nce * d_text.at(i, d);
            seed_m[d] = loss_cfg.w_nce * d_motion.at(i, d);
        }
        ad::backward({{members[i].partial, Tensor::scalar(1.0)},
                      {members[i].pooled, seed_m},
                      {members[i].text, seed_t}});
    }
    return eval;
}

void restore_params(Model& model, const std::vector<Tensor>& snapshot) {
    if (snapshot.size() != model.param_count())
        throw ValidationError("restore_params: snapshot size mismatch");
    for (std::size_t i = 0; i < snapshot.size(); ++i) model.params()[i].value = snapshot[i];
}

namespace {

std::vector<Tensor> snapshot_params(const Model& model) {
    std::vector<Tensor> out;
    out.reserve(model.param_count());
    for (const auto& p : model.params()) out.push_back(p.value);
    return out;
}

// First parameter group with a non-finite gradient entry, if any.
std::string first_bad_group(const Model& model, const std::vector<Tensor>& grads) {
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (grads[i].numel() != 0 && !grads[i].all_finite()) return model.params()[i].name;
    return "";
}

}  // namespace

TrainResult train(Model& model, const Corpus& train_corpus, const Corpus& val_corpus,
                  const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = train_corpus.pairs.size();
    if (n < cfg.batch)
        throw ValidationError("train: corpus smaller than one batch (" + std::to_string(n) +
                              " < " + std::to_string(cfg.batch) + ")");
    const std::size_t lambda_g = model.config().lambda_g;
    const std::size_t steps_per_epoch = n / cfg.batch;
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;

    Rng rng(cfg.seed);
    AdamState adam;
    TrainResult result;
    result.best_rsum = -1.0;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        BatchEval epoch_losses;
        double epoch_lr = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            std::vector<std::size_t> idx(order.begin() + step * cfg.batch,
                                         order.begin() + (step + 1) * cfg.batch);
            std::vector<BatchItem> items =
                make_batch(model, train_corpus, idx, lambda_g, cfg.lambda_s, rng);

            Pass pass(model, true);
            BatchEval eval = run_batch(model, pass, items, cfg.loss);
            std::vector<Tensor> grads;
            grads.reserve(model.param_count());
            for (std::size_t i = 0; i < model.param_count(); ++i) grads.push_back(pass.grad(i));

            if (!std::isfinite(eval.total)) {
                std::string bad = first_bad_group(model, grads);
                if (bad.empty())
                    for (const auto& p : model.params())
                        if (!p.value.all_finite()) {
                            bad = p.name;
                            break;
                        }
                throw NumericalError("train: non-finite loss at step " +
                                     std::to_string(global_step) +
                                     (bad.empty() ? "" : " (first affected group: " + bad + ")"));
            }
            const std::string bad = first_bad_group(model, grads);
            if (!bad.empty())
                throw NumericalError("train: non-finite gradient in group '" + bad +
                                     "' at step " + std::to_string(global_step));

            const double lr_t = cosine_lr(global_step, total_steps, cfg.lr);
            adam_step(model.params(), grads, adam, lr_t);
            epoch_lr = lr_t;

            epoch_losses.nce += eval.nce;
            epoch_losses.rec += eval.rec;
            epoch_losses.dmsp += eval.dmsp;
            epoch_losses.total += eval.total;
            ++global_step;
        }
        const double inv = 1.0 / static_cast<double>(steps_per_epoch);
        epoch_losses.nce *= inv;
        epoch_losses.rec *= inv;
        epoch_losses.dmsp *= inv;
        epoch_losses.total *= inv;

        EpochRecord recd;
        recd.epoch = epoch;
        recd.lr = epoch_lr;
        recd.losses = epoch_losses;
        recd.val = evaluate_retrieval(model, val_corpus);
        if (recd.val.rsum > result.best_rsum) {
            result.best_rsum = recd.val.rsum;
            result.best_epoch = epoch;
            result.best_params = snapshot_params(model);
        }
        result.log.push_back(recd);
    }
    result.final_val = result.log.back().val;
    return result;
}

// ------------------------------------------------------------ gradient audit

AuditReport gradient_audit(Model& model, const std::vector<BatchItem>& items,
                           const LossConfig& loss_cfg, const AuditOptions& options) {
    Pass pass(model, true);
    run_batch(model, pass, items, loss_cfg);
    std::vector<Tensor> analytic;
    analytic.reserve(model.param_count());
    for (std::size_t i = 0; i < model.param_count(); ++i) {
        Tensor g = pass.grad(i);
        if (g.numel() == 0) g = Tensor::zeros(model.params()[i].value.shape());
        analytic.push_back(std::move(g));
    }
    if (options.corrupt_grads) options.corrupt_grads(analytic);

    AuditReport report;
    report.tolerance = options.tolerance;

    Rng rng(options.sample_seed);
    const double h = options.fd_step;
    std::vector<AuditGroup> groups;
    auto group_of = [&](const std::string& name) -> AuditGroup& {
        const std::string g = name.substr(0, name.find('/'));
        for (auto& grp : groups)
            if (grp.name == g) return grp;
        groups.push_back({g, 0.0, 0});
        return groups.back();
    };

    for (std::size_t pi = 0; pi < model.param_count(); ++pi) {
        ParamTensor& param = model.params()[pi];
        AuditGroup& grp = group_of(param.name);
        const std::size_t n = param.value.numel();
        const std::size_t take = std::min<std::size_t>(options.samples_per_tensor, n);
        std::vector<std::size_t> coords = rng.sample_indices(n, take);
        for (std::size_t c : coords) {
            const double saved = param.value[c];
            param.value[c] = saved + h;
            Pass pp(model, false);
            const double f_plus = run_batch(model, pp, items, loss_cfg).total;
            param.value[c] = saved - h;
            Pass pm(model, false);
            const double f_minus = run_batch(model, pm, items, loss_cfg).total;
            param.value[c] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[pi][c];
            const double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
            grp.max_rel_err = std::max(grp.max_rel_err, rel);
            grp.checked += 1;
        }
    }

    report.groups = std::move(groups);
    report.pass = true;
    for (const auto& g : report.groups)
        if (g.max_rel_err > options.tolerance) report.pass = false;
    return report;
}

}  // namespace wamo
