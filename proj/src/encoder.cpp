#include "wamo/encoder.hpp"

#include <cmath>

#include "wamo/error.hpp"

namespace wamo {

using ad::Var;

void ModelConfig::validate() const {
    if (frames == 0 || joints == 0 || latent == 0 || levels == 0)
        throw ValidationError("model config: sizes must be positive");
    if (frames % (std::size_t(1) << levels) != 0)
        throw ValidationError("model config: frames must be a multiple of 2^levels");
    if (latent % heads != 0)
        throw ValidationError("model config: latent dim must be divisible by head count");
    if (lambda_g == 0 || lambda_g > frames)
        throw ValidationError("model config: lambda_g must be in [1, frames]");
    if (kernel_low % 2 == 0 || kernel_high % 2 == 0)
        throw ValidationError("model config: kernels must be odd for centered padding");
}

// ----------------------------------------------------------------------- Pass

Pass::Pass(const Model& model, bool with_grad)
    : model_(model), with_grad_(with_grad), leaves_(model.param_count()) {}

Var Pass::leaf(std::size_t param_index) {
    Var& slot = leaves_[param_index];
    if (!slot.defined())
        slot = Var::leaf(model_.params()[param_index].value, with_grad_);
    return slot;
}

const Tensor& Pass::grad(std::size_t param_index) const {
    static const Tensor empty;
    const Var& slot = leaves_[param_index];
    return slot.defined() ? slot.grad() : empty;
}

// ---------------------------------------------------------------------- Model

std::size_t Model::add_param(const std::string& name, Tensor init) {
    params_.push_back({name, std::move(init)});
    return params_.size() - 1;
}

namespace {

Tensor uniform_fan_in(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

Tensor normal_init(Rng& rng, std::vector<std::size_t> shape, double stddev) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

}  // namespace

Model::Lin Model::add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    Lin lin;
    lin.w = add_param(name + ".w", uniform_fan_in(rng, {in, out}, in));
    lin.b = add_param(name + ".b", Tensor::zeros({out}));
    return lin;
}

Model::Mlp Model::add_mlp(const std::string& name, std::size_t in, std::size_t hidden,
                          std::size_t out, Rng& rng) {
    Mlp mlp;
    mlp.l1 = add_linear(name + ".l1", in, hidden, rng);
    mlp.l2 = add_linear(name + ".l2", hidden, out, rng);
    return mlp;
}

Model::Stack Model::add_stack(const std::string& name, Rng& rng) {
    const std::size_t D = cfg_.latent, T = cfg_.frames;
    Stack st;
    st.pos = add_param(name + ".pos", normal_init(rng, {T, D}, 0.02));
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
        const std::string bn = name + ".block" + std::to_string(b);
        Block blk;
        blk.ln1_g = add_param(bn + ".ln1.g", Tensor::full({D}, 1.0));
        blk.ln1_b = add_param(bn + ".ln1.b", Tensor::zeros({D}));
        blk.q = add_linear(bn + ".q", D, D, rng);
        blk.k = add_linear(bn + ".k", D, D, rng);
        blk.v = add_linear(bn + ".v", D, D, rng);
        blk.o = add_linear(bn + ".o", D, D, rng);
        blk.ln2_g = add_param(bn + ".ln2.g", Tensor::full({D}, 1.0));
        blk.ln2_b = add_param(bn + ".ln2.b", Tensor::zeros({D}));
        blk.ff1 = add_linear(bn + ".ff1", D, 4 * D, rng);
        blk.ff2 = add_linear(bn + ".ff2", 4 * D, D, rng);
        st.blocks.push_back(blk);
    }
    st.ln_g = add_param(name + ".ln.g", Tensor::full({D}, 1.0));
    st.ln_b = add_param(name + ".ln.b", Tensor::zeros({D}));
    return st;
}

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    fixed_bank_ = make_filter_bank(cfg_.family,
                                   cfg_.learnable_bank ? BankMode::Learnable : BankMode::Fixed);
    Rng rng(init_seed);

    if (cfg_.learnable_bank) {
        h0_ = add_param("filters/analysis_low", fixed_bank_.analysis_low);
        g0_ = add_param("filters/analysis_high", fixed_bank_.analysis_high);
        h1_ = add_param("filters/synthesis_low", fixed_bank_.synthesis_low);
        g1_ = add_param("filters/synthesis_high", fixed_bank_.synthesis_high);
    }

    const std::size_t C = cfg_.channels(), D = cfg_.latent, S = cfg_.levels;
    for (std::size_t band = 0; band <= S; ++band) {
        const std::string gname = band == 0 ? "conv_low" : "conv_high" + std::to_string(band - 1);
        const std::size_t k = band == 0 ? cfg_.kernel_low : cfg_.kernel_high;
        Conv conv;
        conv.w = add_param(gname + "/w", uniform_fan_in(rng, {C, C, k}, C * k));
        conv.b = add_param(gname + "/b", Tensor::zeros({C}));
        band_conv_.push_back(conv);

        const std::string pname = band == 0 ? "proj_low" : "proj_high" + std::to_string(band - 1);
        band_proj_.push_back(add_mlp(pname + "/mlp", C, D, D, rng));

        const std::string sname =
            band == 0 ? "attn_intra_low" : "attn_intra_high" + std::to_string(band - 1);
        band_stack_.push_back(add_stack(sname + "/stack", rng));
    }

    fuse_ = add_mlp("fuse_mlp/mlp", (S + 1) * D, D, D, rng);
    inter_stack_ = add_stack("attn_inter/stack", rng);

    pool_w_ = add_param("pool/w", uniform_fan_in(rng, {D, D}, D));
    pool_b_ = add_param("pool/b", Tensor::zeros({D}));
    pool_v_ = add_param("pool/v", uniform_fan_in(rng, {D, 1}, D));

    cls_ = add_linear("cls_head/linear", D, cfg_.lambda_g, rng);

    // Fan-in-scaled rows keep mean-pooled text embeddings at O(1) norm, away
    // from the cosine normalization's singularity at zero.
    text_table_ = add_param("text_embed/table",
                            uniform_fan_in(rng, {cfg_.hash_buckets, D}, D));
    text_mlp_ = add_mlp("text_embed/mlp", D, D, D, rng);

    for (std::size_t band = 0; band <= S; ++band) {
        const std::string dname = band == 0 ? "dec_low" : "dec_high" + std::to_string(band - 1);
        dec_band_.push_back(add_mlp(dname + "/mlp", D, D, C, rng));
    }
    dec_inter_ = add_mlp("dec_inter/mlp", D, D, C, rng);
}

Var Model::apply_linear(Pass& pass, const Lin& lin, const Var& x) const {
    return ad::linear(x, pass.leaf(lin.w), pass.leaf(lin.b));
}

Var Model::apply_mlp(Pass& pass, const Mlp& mlp, const Var& x) const {
    return apply_linear(pass, mlp.l2, ad::gelu(apply_linear(pass, mlp.l1, x)));
}

// A generous epsilon keeps the normalization well away from its sigma->0
// singularity; third derivatives stay small enough for finite-difference
// gradient checks at step 1e-5 to resolve.
constexpr double kLnEps = 0.1;

Var Model::apply_stack(Pass& pass, const Stack& stack, const Var& x_in) const {
    const std::size_t D = cfg_.latent, H = cfg_.heads, dh = D / H;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    Var x = ad::add(x_in, pass.leaf(stack.pos));
    for (const Block& blk : stack.blocks) {
        Var h = ad::layer_norm(x, pass.leaf(blk.ln1_g), pass.leaf(blk.ln1_b), kLnEps);
        Var q = apply_linear(pass, blk.q, h);
        Var k = apply_linear(pass, blk.k, h);
        Var v = apply_linear(pass, blk.v, h);
        std::vector<Var> ctx;
        ctx.reserve(H);
        for (std::size_t hd = 0; hd < H; ++hd) {
            Var qh = ad::slice_cols(q, hd * dh, dh);
            Var kh = ad::slice_cols(k, hd * dh, dh);
            Var vh = ad::slice_cols(v, hd * dh, dh);
            Var scores = ad::scale(ad::matmul(qh, ad::transpose2d(kh)), inv_sqrt_dh);
            ctx.push_back(ad::matmul(ad::softmax_rows(scores), vh));
        }
        Var attn = apply_linear(pass, blk.o, ad::concat_cols(ctx));
        x = ad::add(x, attn);
        Var h2 = ad::layer_norm(x, pass.leaf(blk.ln2_g), pass.leaf(blk.ln2_b), kLnEps);
        Var ffn = apply_linear(pass, blk.ff2, ad::gelu(apply_linear(pass, blk.ff1, h2)));
        x = ad::add(x, ffn);
    }
    return ad::layer_norm(x, pass.leaf(stack.ln_g), pass.leaf(stack.ln_b), kLnEps);
}

Var Model::bank_analysis_low(Pass& pass) const {
    return cfg_.learnable_bank ? pass.leaf(h0_) : Var::constant(fixed_bank_.analysis_low);
}
Var Model::bank_analysis_high(Pass& pass) const {
    return cfg_.learnable_bank ? pass.leaf(g0_) : Var::constant(fixed_bank_.analysis_high);
}
Var Model::bank_synthesis_low(Pass& pass) const {
    return cfg_.learnable_bank ? pass.leaf(h1_) : Var::constant(fixed_bank_.synthesis_low);
}
Var Model::bank_synthesis_high(Pass& pass) const {
    return cfg_.learnable_bank ? pass.leaf(g1_) : Var::constant(fixed_bank_.synthesis_high);
}

void Model::twd_decompose(Pass& pass, const Var& motion_tc, FrequencyFeatures& out) const {
    VarPyramid pyr =
        swt_forward_var(motion_tc, bank_analysis_low(pass), bank_analysis_high(pass), cfg_.levels);
    out.band_low = pyr.approx;
    out.band_high = pyr.details;
}

Var Model::band_preattn(Pass& pass, const Var& band_tc, std::size_t band_index) const {
    const Conv& conv = band_conv_.at(band_index);
    // conv weights are stored [C x C x k] = [out x in x tap]
    Var y = ad::conv1d_circular(band_tc, pass.leaf(conv.w), pass.leaf(conv.b));
    return apply_mlp(pass, band_proj_.at(band_index), y);
}

void Model::encode_intra(Pass& pass, FrequencyFeatures& feats) const {
    feats.intra_low = apply_stack(pass, band_stack_[0], band_preattn(pass, feats.band_low, 0));
    feats.intra_high.clear();
    for (std::size_t s = 0; s < cfg_.levels; ++s)
        feats.intra_high.push_back(
            apply_stack(pass, band_stack_[s + 1], band_preattn(pass, feats.band_high[s], s + 1)));
}

Var Model::encode_inter(Pass& pass, const Var& intra_low,
                        const std::vector<Var>& intra_high) const {
    std::vector<Var> bands;
    bands.push_back(intra_low);
    for (const Var& h : intra_high) bands.push_back(h);
    Var multi = ad::concat_cols(bands);  // [T x (S+1)D]
    Var fused = apply_mlp(pass, fuse_, multi);
    return apply_stack(pass, inter_stack_, fused);
}

Var Model::pool_motion(Pass& pass, const Var& inter) const {
    // alpha = softmax(v^T tanh(W x + b)); output sum_t alpha_t x_t
    Var scores = ad::matmul(
        ad::tanh_v(ad::linear(inter, pass.leaf(pool_w_), pass.leaf(pool_b_))),
        pass.leaf(pool_v_));                                 // [T x 1]
    Var alpha = ad::softmax_rows(ad::transpose2d(scores));   // [1 x T]
    Var pooled = ad::matmul(alpha, inter);                   // [1 x D]
    return ad::reshape(pooled, {cfg_.latent});
}

FrequencyFeatures Model::encode_motion(Pass& pass, const Tensor& motion_tc) const {
    if (motion_tc.rank() != 2 || motion_tc.dim(0) != cfg_.frames ||
        motion_tc.dim(1) != cfg_.channels())
        throw ValidationError("encode_motion: expected [" + std::to_string(cfg_.frames) + " x " +
                              std::to_string(cfg_.channels()) + "] input, got " +
                              Tensor::shape_str(motion_tc.shape()));
    FrequencyFeatures feats;
    twd_decompose(pass, Var::constant(motion_tc), feats);
    encode_intra(pass, feats);
    feats.inter = encode_inter(pass, feats.intra_low, feats.intra_high);
    feats.pooled = pool_motion(pass, feats.inter);
    return feats;
}

std::size_t Model::hash_token(const std::string& token, std::size_t buckets) {
    // FNV-1a, 64-bit; stable across platforms.
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : token) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h % buckets);
}

Var Model::encode_text(Pass& pass, const std::vector<std::string>& tokens) const {
    if (tokens.empty()) throw ValidationError("encode_text: empty token list");
    std::vector<std::size_t> idx;
    idx.reserve(tokens.size());
    for (const auto& tok : tokens) idx.push_back(hash_token(tok, cfg_.hash_buckets));
    Var gathered = ad::pick_rows(pass.leaf(text_table_), idx);  // [n x D]
    Var pooled = ad::reshape(ad::mean_rows(gathered), {1, cfg_.latent});
    return ad::reshape(apply_mlp(pass, text_mlp_, pooled), {cfg_.latent});
}

Var Model::classify_logits(Pass& pass, const Var& features) const {
    return apply_linear(pass, cls_, features);
}

Tensor Model::classify_frames(const Tensor& features) const {
    Pass pass(*this, false);
    Var logits = classify_logits(pass, Var::constant(features));
    return ad::softmax_rows(logits).val();
}

Var Model::decode_intra(Pass& pass, const FrequencyFeatures& feats) const {
    VarPyramid pyr;
    pyr.level = cfg_.levels;
    pyr.approx = apply_mlp(pass, dec_band_[0], feats.intra_low);
    for (std::size_t s = 0; s < cfg_.levels; ++s)
        pyr.details.push_back(apply_mlp(pass, dec_band_[s + 1], feats.intra_high[s]));
    return iswt_inverse_var(pyr, bank_synthesis_low(pass), bank_synthesis_high(pass));
}

Var Model::decode_inter(Pass& pass, const Var& inter) const {
    return apply_mlp(pass, dec_inter_, inter);
}

}  // namespace wamo
