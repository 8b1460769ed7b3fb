#include "wamo/objectives.hpp"

#include <cmath>
#include <string>

namespace wamo {

using ad::Var;

Var info_nce_var(const Var& text_batch, const Var& motion_batch, double tau) {
    if (text_batch.val().rank() != 2 || !text_batch.val().same_shape(motion_batch.val()))
        throw ValidationError("info_nce: batches must be [B x D] with equal shapes");
    const std::size_t B = text_batch.val().dim(0);
    if (B < 2) throw ValidationError("info_nce: batch size must be >= 2");
    if (tau <= 0.0) throw ValidationError("info_nce: temperature must be > 0");

    Var tn = ad::l2_normalize_rows(text_batch);
    Var mn = ad::l2_normalize_rows(motion_batch);
    Var z = ad::scale(ad::matmul(tn, ad::transpose2d(mn)), 1.0 / tau);  // [B x B]
    Var row_terms = ad::diag2d(ad::log_softmax_rows(z));
    Var col_terms = ad::diag2d(ad::log_softmax_rows(ad::transpose2d(z)));
    return ad::scale(ad::add(ad::mean_all(row_terms), ad::mean_all(col_terms)), -1.0);
}

double info_nce(const Tensor& text_batch, const Tensor& motion_batch, double tau) {
    return info_nce_var(Var::constant(text_batch), Var::constant(motion_batch), tau).scalar();
}

double smooth_l1(const Tensor& pred, const Tensor& target, double beta) {
    return ad::smooth_l1_mean(Var::constant(pred), target, beta).scalar();
}

namespace {

double cross_entropy_rows(const Tensor& p, const std::vector<std::size_t>& labels) {
    const std::size_t R = p.dim(0), G = p.dim(1);
    if (labels.size() != R) throw ValidationError("dmsp_loss: label count mismatch");
    double acc = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < G; ++j) sum += p.at(r, j);
        if (std::fabs(sum - 1.0) > 1e-4)
            throw ValidationError("dmsp_loss: probability row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum));
        if (labels[r] >= G)
            throw ValidationError("dmsp_loss: label " + std::to_string(labels[r]) +
                                  " out of range at row " + std::to_string(r));
        acc -= std::log(std::max(p.at(r, labels[r]), 1e-12));
    }
    return acc / static_cast<double>(R);
}

}  // namespace

double dmsp_loss(const Tensor& p_o, const std::vector<std::size_t>& g_o, const Tensor& p_s,
                 const std::vector<std::size_t>& g_s) {
    return cross_entropy_rows(p_o, g_o) + cross_entropy_rows(p_s, g_s);
}

Var dmsp_loss_var(const Var& logits_o, const std::vector<std::size_t>& g_o, const Var& logits_s,
                  const std::vector<std::size_t>& g_s) {
    Var ce_o = ad::mean_all(ad::pick_per_row(ad::log_softmax_rows(logits_o), g_o));
    Var ce_s = ad::mean_all(ad::pick_per_row(ad::log_softmax_rows(logits_s), g_s));
    return ad::scale(ad::add(ce_o, ce_s), -1.0);
}

double total_loss(double nce, double rec, double dmsp, const LossConfig& cfg) {
    cfg.validate();
    return cfg.w_nce * nce + cfg.w_rec * rec + cfg.w_dmsp * dmsp;
}

ReconstructionResult reconstruction_loss(const Model& model, Pass& pass,
                                         const FrequencyFeatures& feats, const Tensor& target_tc,
                                         double beta) {
    ReconstructionResult out;
    out.intra = model.decode_intra(pass, feats);
    out.inter = model.decode_inter(pass, feats.inter);
    Var l_intra = ad::smooth_l1_mean(out.intra, target_tc, beta);
    Var l_inter = ad::smooth_l1_mean(out.inter, target_tc, beta);
    out.loss = ad::add(l_intra, l_inter);
    return out;
}

}  // namespace wamo
