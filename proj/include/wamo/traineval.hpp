#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wamo/encoder.hpp"
#include "wamo/motion.hpp"
#include "wamo/objectives.hpp"

namespace wamo {

// ------------------------------------------------------------------ optimizer

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
};

// Standard Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
// An empty gradient tensor means "no gradient reached this parameter".
void adam_step(std::vector<ParamTensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr);

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max);

// ------------------------------------------------------------------- metrics

constexpr std::array<std::size_t, 5> kRecallKs = {1, 2, 3, 5, 10};

struct RetrievalReport {
    std::array<double, 5> r_t2m{};  // percentages, K in kRecallKs order
    std::array<double, 5> r_m2t{};
    double medr_t2m = 0.0;
    double medr_m2t = 0.0;
    double rsum = 0.0;
};

// rank = 1 + (#strictly more similar) + (#tied with smaller gallery index);
// MedR uses the midpoint of the two central ranks for even counts.
RetrievalReport report_from_ranks(const std::vector<std::size_t>& ranks_t2m,
                                  const std::vector<std::size_t>& ranks_m2t);
double rsum_of(const std::array<double, 5>& t2m, const std::array<double, 5>& m2t);

RetrievalReport evaluate_retrieval(const Model& model, const Corpus& gallery);

// Per-frame group-label accuracy of the classifier head over a corpus, on
// ordered frames and on freshly shuffled ones.
struct DmspAccuracy {
    double ordered = 0.0;
    double shuffled = 0.0;
};
DmspAccuracy dmsp_accuracy(const Model& model, const Corpus& corpus, std::size_t lambda_g,
                           double lambda_s, std::uint64_t seed);

// ------------------------------------------------------------------ training

struct TrainConfig {
    double lr = 1e-4;
    std::size_t batch = 32;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    double lambda_s = 0.25;
    LossConfig loss;

    void validate() const;
};

struct BatchItem {
    Tensor motion;    // normalized, [T x C]
    Tensor shuffled;  // DMSP-permuted variant
    std::vector<std::string> tokens;
    std::vector<std::size_t> g_o;
    std::vector<std::size_t> g_s;
};

struct BatchEval {
    double nce = 0.0;
    double rec = 0.0;
    double dmsp = 0.0;
    double total = 0.0;
};

// Forward (and, when the pass tracks gradients, backward) over one batch.
// Gradients accumulate into the pass leaves; nothing is applied.
BatchEval run_batch(const Model& model, Pass& pass, const std::vector<BatchItem>& items,
                    const LossConfig& loss_cfg);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    BatchEval losses;  // means over the epoch's steps
    RetrievalReport val;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    std::size_t best_epoch = 0;
    double best_rsum = 0.0;
    std::vector<Tensor> best_params;  // snapshot, same order as model.params()
    RetrievalReport final_val;
};

void restore_params(Model& model, const std::vector<Tensor>& snapshot);

// Deterministic given (model init, corpus, config). Throws NumericalError with
// the offending parameter group on the first non-finite loss or gradient.
TrainResult train(Model& model, const Corpus& train_corpus, const Corpus& val_corpus,
                  const TrainConfig& cfg);

// ------------------------------------------------------------ gradient audit

struct AuditGroup {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

struct AuditReport {
    std::vector<AuditGroup> groups;
    double tolerance = 0.0;
    bool pass = false;
};

struct AuditOptions {
    double fd_step = 1e-5;
    double tolerance = 1e-6;
    std::size_t samples_per_tensor = 32;
    std::uint64_t sample_seed = 1234;
    // Test hook: tamper with the analytic gradients before comparison.
    std::function<void(std::vector<Tensor>&)> corrupt_grads;
};

// Central finite differences against the analytic gradients of the total
// batch loss. "Relative" error uses a unit floor: |a-f| / max(1, |a|, |f|).
AuditReport gradient_audit(Model& model, const std::vector<BatchItem>& items,
                           const LossConfig& loss_cfg, const AuditOptions& options);

// Builds batch items (normalization + DMSP shuffling) from corpus pairs.
std::vector<BatchItem> make_batch(const Model& model, const Corpus& corpus,
                                  const std::vector<std::size_t>& indices, std::size_t lambda_g,
                                  double lambda_s, Rng& rng);

}  // namespace wamo
