#pragma once

#include <vector>

#include "wamo/autodiff.hpp"
#include "wamo/encoder.hpp"
#include "wamo/tensor.hpp"

namespace wamo {

struct LossConfig {
    double temperature = 0.07;
    double smooth_l1_beta = 1.0;
    double w_nce = 1.0;
    double w_rec = 1.0;
    double w_dmsp = 1.0;

    void validate() const {
        if (temperature <= 0.0) throw ValidationError("loss config: temperature must be > 0");
        if (smooth_l1_beta <= 0.0) throw ValidationError("loss config: beta must be > 0");
        if (w_nce < 0.0 || w_rec < 0.0 || w_dmsp < 0.0)
            throw ValidationError("loss config: weights must be non-negative");
    }
};

// Symmetric contrastive loss over the batch cosine-similarity matrix,
// stabilized through log-softmax. Throws on B < 2 or a zero-norm embedding.
ad::Var info_nce_var(const ad::Var& text_batch, const ad::Var& motion_batch, double tau);
double info_nce(const Tensor& text_batch, const Tensor& motion_batch, double tau);

double smooth_l1(const Tensor& pred, const Tensor& target, double beta);

// Per-frame cross entropy on probability rows (clamped log), ordered plus
// shuffled term. Rows must sum to 1 within 1e-4.
double dmsp_loss(const Tensor& p_o, const std::vector<std::size_t>& g_o, const Tensor& p_s,
                 const std::vector<std::size_t>& g_s);
// Same objective from logits, used on the training tape.
ad::Var dmsp_loss_var(const ad::Var& logits_o, const std::vector<std::size_t>& g_o,
                      const ad::Var& logits_s, const std::vector<std::size_t>& g_s);

double total_loss(double nce, double rec, double dmsp, const LossConfig& cfg);

struct ReconstructionResult {
    ad::Var loss;       // scalar
    ad::Var intra;      // [T x C]
    ad::Var inter;      // [T x C]
};

// Decodes band features back to trajectories (per-band MLPs + inverse
// transform for the intra route, direct MLP for the inter route) and compares
// both against the target with smooth L1.
ReconstructionResult reconstruction_loss(const Model& model, Pass& pass,
                                         const FrequencyFeatures& feats, const Tensor& target_tc,
                                         double beta);

}  // namespace wamo
