#pragma once

#include <string>
#include <vector>

#include "wamo/tensor.hpp"

namespace wamo {

enum class BankMode { Fixed, Learnable };

// Analysis/synthesis filter quadruple. In fixed mode the synthesis pair is
// the adjoint of the analysis pair (same coefficients applied in the
// opposite index direction), which is what makes the undecimated round trip
// exact; in learnable mode all four vectors are free parameters initialized
// from the chosen family.
struct FilterBank {
    Tensor analysis_low;    // h0
    Tensor analysis_high;   // g0
    Tensor synthesis_low;   // h1
    Tensor synthesis_high;  // g1
    BankMode mode = BankMode::Fixed;

    std::size_t length() const { return analysis_low.numel(); }
    void validate() const;
};

// family: "haar" or "db2". db2 coefficients come from the closed-form
// solution of the orthonormality + two-vanishing-moment conditions.
FilterBank make_filter_bank(const std::string& family, BankMode mode);

}  // namespace wamo
