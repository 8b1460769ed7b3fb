#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wamo/autodiff.hpp"
#include "wamo/filterbank.hpp"
#include "wamo/motion.hpp"
#include "wamo/swt.hpp"

namespace wamo {

struct ModelConfig {
    std::size_t frames = 64;   // T
    std::size_t joints = 8;    // J
    std::size_t latent = 256;  // D
    std::size_t levels = 3;    // S
    std::size_t lambda_g = 16;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t kernel_low = 9;
    std::size_t kernel_high = 3;
    std::size_t hash_buckets = 4096;  // V_h
    std::string family = "haar";
    bool learnable_bank = true;

    std::size_t channels() const { return joints * 3; }
    void validate() const;
};

struct ParamTensor {
    std::string name;   // "<group>/<tensor>"
    Tensor value;
};

// Per-band frequency features produced by one encoder pass.
struct FrequencyFeatures {
    ad::Var band_low;                 // a_S, [T x C]
    std::vector<ad::Var> band_high;   // d_1..d_S, each [T x C]
    ad::Var intra_low;                // [T x D]
    std::vector<ad::Var> intra_high;  // S x [T x D]
    ad::Var inter;                    // M-hat, [T x D]
    ad::Var pooled;                   // [D]
};

class Model;

// One forward pass worth of parameter leaves. Training creates a gradient-
// tracking pass per step; evaluation passes skip all tape bookkeeping.
class Pass {
public:
    Pass(const Model& model, bool with_grad);
    ad::Var leaf(std::size_t param_index);
    bool with_grad() const { return with_grad_; }
    const Model& model() const { return model_; }
    // Gradient of parameter i accumulated by backward(), empty if untouched.
    const Tensor& grad(std::size_t param_index) const;

private:
    const Model& model_;
    bool with_grad_;
    std::vector<ad::Var> leaves_;
};

class Model {
public:
    Model(ModelConfig cfg, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    const FilterBank& fixed_bank() const { return fixed_bank_; }

    std::vector<ParamTensor>& params() { return params_; }
    const std::vector<ParamTensor>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    // --- forward pieces (all pure given the pass) ---

    // Analysis transform of a [T x C] signal into {a_S, d_1..d_S}.
    void twd_decompose(Pass& pass, const ad::Var& motion_tc, FrequencyFeatures& out) const;

    // Per-band conv + frame MLP, before positional encoding and attention.
    // band_index 0 is the low band, 1..S the detail bands.
    ad::Var band_preattn(Pass& pass, const ad::Var& band_tc, std::size_t band_index) const;

    void encode_intra(Pass& pass, FrequencyFeatures& feats) const;
    ad::Var encode_inter(Pass& pass, const ad::Var& intra_low,
                         const std::vector<ad::Var>& intra_high) const;
    ad::Var pool_motion(Pass& pass, const ad::Var& inter) const;

    // Full encoder: motion [T x C] (already normalized) -> features.
    FrequencyFeatures encode_motion(Pass& pass, const Tensor& motion_tc) const;

    ad::Var encode_text(Pass& pass, const std::vector<std::string>& tokens) const;

    ad::Var classify_logits(Pass& pass, const ad::Var& features) const;
    // Per-frame group probabilities, [T x lambda_g], rows summing to 1.
    Tensor classify_frames(const Tensor& features) const;

    // Band decoders + inverse transform (learnable synthesis side).
    ad::Var decode_intra(Pass& pass, const FrequencyFeatures& feats) const;
    ad::Var decode_inter(Pass& pass, const ad::Var& inter) const;

    ad::Var bank_analysis_low(Pass& pass) const;
    ad::Var bank_analysis_high(Pass& pass) const;
    ad::Var bank_synthesis_low(Pass& pass) const;
    ad::Var bank_synthesis_high(Pass& pass) const;

    static std::size_t hash_token(const std::string& token, std::size_t buckets);

private:
    friend class Pass;

    struct Lin {
        std::size_t w = 0, b = 0;
    };
    struct Block {
        std::size_t ln1_g, ln1_b;
        Lin q, k, v, o;
        std::size_t ln2_g, ln2_b;
        Lin ff1, ff2;
    };
    struct Stack {
        std::size_t pos;
        std::vector<Block> blocks;
        std::size_t ln_g, ln_b;
    };
    struct Mlp {
        Lin l1, l2;
    };

    std::size_t add_param(const std::string& name, Tensor init);
    Lin add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
    Mlp add_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                Rng& rng);
    Stack add_stack(const std::string& name, Rng& rng);

    ad::Var apply_linear(Pass& pass, const Lin& lin, const ad::Var& x) const;
    ad::Var apply_mlp(Pass& pass, const Mlp& mlp, const ad::Var& x) const;
    ad::Var apply_stack(Pass& pass, const Stack& stack, const ad::Var& x) const;

    ModelConfig cfg_;
    FilterBank fixed_bank_;
    std::vector<ParamTensor> params_;

    // filters (only registered as params in learnable mode)
    std::size_t h0_ = npos, g0_ = npos, h1_ = npos, g1_ = npos;

    struct Conv {
        std::size_t w = 0, b = 0;
    };
    std::vector<Conv> band_conv_;   // S+1 entries, index 0 = low
    std::vector<Mlp> band_proj_;    // S+1
    std::vector<Stack> band_stack_; // S+1
    Mlp fuse_;
    Stack inter_stack_;
    std::size_t pool_w_, pool_b_, pool_v_;
    Lin cls_;
    std::size_t text_table_;
    Mlp text_mlp_;
    std::vector<Mlp> dec_band_;     // S+1, index 0 decodes the low band
    Mlp dec_inter_;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

}  // namespace wamo
