#include "wamo/swt.hpp"

#include <cmath>
#include <string>

namespace wamo {

namespace {

void check_signal(const Tensor& signal, std::size_t levels) {
    if (levels < 1) throw ValidationError("swt: level must be >= 1");
    if (signal.rank() != 2 || signal.dim(0) == 0 || signal.dim(1) == 0)
        throw ValidationError("swt: signal must be a non-empty [T x C] tensor");
    const std::size_t T = signal.dim(0);
    const std::size_t block = std::size_t(1) << levels;
    if (T % block != 0)
        throw ValidationError("swt: T=" + std::to_string(T) + " is not a multiple of 2^S=" +
                              std::to_string(block));
    if (!signal.all_finite()) throw ValidationError("swt: non-finite input value");
}

}  // namespace

WaveletPyramid swt_forward(const Tensor& signal, const FilterBank& bank, std::size_t levels) {
    bank.validate();
    check_signal(signal, levels);
    const std::size_t T = signal.dim(0), C = signal.dim(1), L = bank.length();

    WaveletPyramid pyr;
    pyr.level = levels;
    Tensor approx = signal;
    for (std::size_t s = 1; s <= levels; ++s) {
        const std::size_t dil = std::size_t(1) << (s - 1);
        Tensor next({T, C});
        Tensor detail({T, C});
        for (std::size_t n = 0; n < T; ++n)
            for (std::size_t k = 0; k < L; ++k) {
                const std::size_t src = (n + dil * k) % T;
                const double h = bank.analysis_low[k];
                const double g = bank.analysis_high[k];
                for (std::size_t c = 0; c < C; ++c) {
                    const double v = approx.at(src, c);
                    next.at(n, c) += h * v;
                    detail.at(n, c) += g * v;
                }
            }
        pyr.details.push_back(std::move(detail));
        approx = std::move(next);
    }
    pyr.approx = std::move(approx);
    return pyr;
}

Tensor iswt_inverse(const WaveletPyramid& pyramid, const FilterBank& bank) {
    bank.validate();
    if (pyramid.level == 0 || pyramid.details.size() != pyramid.level)
        throw ValidationError("iswt: pyramid must have at least one detail band");
    const std::size_t T = pyramid.approx.dim(0), C = pyramid.approx.dim(1), L = bank.length();
    for (const Tensor& d : pyramid.details)
        if (!d.same_shape(pyramid.approx))
            throw ValidationError("iswt: band shape mismatch " + Tensor::shape_str(d.shape()) +
                                  " vs " + Tensor::shape_str(pyramid.approx.shape()));

    // Per level: a_{s-1} = 1/2 (H^T a_s + G^T d_s), the adjoint synthesis.
    // The 1/2 is the polyphase averaging the undecimated analysis doubles up.
    Tensor approx = pyramid.approx;
    for (std::size_t s = pyramid.level; s >= 1; --s) {
        const std::size_t dil = std::size_t(1) << (s - 1);
        const Tensor& detail = pyramid.details[s - 1];
        Tensor prev({T, C});
        for (std::size_t n = 0; n < T; ++n)
            for (std::size_t k = 0; k < L; ++k) {
                const std::size_t step = (dil * k) % T;
                const std::size_t src = (n + T - step) % T;
                const double h = bank.synthesis_low[k];
                const double g = bank.synthesis_high[k];
                for (std::size_t c = 0; c < C; ++c)
                    prev.at(n, c) += h * approx.at(src, c) + g * detail.at(src, c);
            }
        for (std::size_t i = 0; i < prev.numel(); ++i) prev[i] *= 0.5;
        approx = std::move(prev);
    }
    return approx;
}

double pr_error(const FilterBank& bank, const Tensor& signal, std::size_t levels) {
    WaveletPyramid pyr = swt_forward(signal, bank, levels);
    Tensor rec = iswt_inverse(pyr, bank);
    return max_abs_diff(rec, signal);
}

VarPyramid swt_forward_var(const ad::Var& signal, const ad::Var& h0, const ad::Var& g0,
                           std::size_t levels) {
    check_signal(signal.val(), levels);
    VarPyramid pyr;
    pyr.level = levels;
    ad::Var approx = signal;
    for (std::size_t s = 1; s <= levels; ++s) {
        const std::size_t dil = std::size_t(1) << (s - 1);
        pyr.details.push_back(ad::circ_corr_dilated(approx, g0, dil));
        approx = ad::circ_corr_dilated(approx, h0, dil);
    }
    pyr.approx = approx;
    return pyr;
}

ad::Var iswt_inverse_var(const VarPyramid& pyramid, const ad::Var& h1, const ad::Var& g1) {
    if (pyramid.level == 0 || pyramid.details.size() != pyramid.level)
        throw ValidationError("iswt: pyramid must have at least one detail band");
    ad::Var approx = pyramid.approx;
    for (std::size_t s = pyramid.level; s >= 1; --s) {
        const std::size_t dil = std::size_t(1) << (s - 1);
        ad::Var low = ad::circ_conv_dilated(approx, h1, dil);
        ad::Var high = ad::circ_conv_dilated(pyramid.details[s - 1], g1, dil);
        approx = ad::scale(ad::add(low, high), 0.5);
    }
    return approx;
}

}  // namespace wamo
