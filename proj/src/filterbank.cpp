#include "wamo/filterbank.hpp"

#include <cmath>

namespace wamo {

void FilterBank::validate() const {
    const std::size_t L = analysis_low.numel();
    if (L < 2) throw ValidationError("filter bank: length must be >= 2");
    if (analysis_high.numel() != L || synthesis_low.numel() != L || synthesis_high.numel() != L)
        throw ValidationError("filter bank: all four filters must share one length");
    for (const Tensor* t : {&analysis_low, &analysis_high, &synthesis_low, &synthesis_high})
        if (!t->all_finite()) throw ValidationError("filter bank: non-finite coefficient");
}

FilterBank make_filter_bank(const std::string& family, BankMode mode) {
    std::vector<double> h0;
    if (family == "haar") {
        const double r = 1.0 / std::sqrt(2.0);
        h0 = {r, r};
    } else if (family == "db2") {
        // Solving sum h = sqrt(2), sum h^2 = 1, sum h[k]h[k+2] = 0 and two
        // vanishing moments for the 4-tap case gives h[k] ~ (1 ± sqrt(3)).
        const double s3 = std::sqrt(3.0);
        const double c = 1.0 / (4.0 * std::sqrt(2.0));
        h0 = {c * (1.0 + s3), c * (3.0 + s3), c * (3.0 - s3), c * (1.0 - s3)};
    } else {
        throw ValidationError("unknown wavelet family: " + family);
    }

    const std::size_t L = h0.size();
    std::vector<double> g0(L);
    for (std::size_t k = 0; k < L; ++k)
        g0[k] = ((k % 2 == 0) ? 1.0 : -1.0) * h0[L - 1 - k];  // quadrature mirror

    FilterBank bank;
    bank.analysis_low = Tensor::vec(h0);
    bank.analysis_high = Tensor::vec(g0);
    bank.synthesis_low = Tensor::vec(h0);
    bank.synthesis_high = Tensor::vec(g0);
    bank.mode = mode;
    bank.validate();
    return bank;
}

}  // namespace wamo
