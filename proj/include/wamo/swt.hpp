#pragma once

#include <vector>

#include "wamo/autodiff.hpp"
#include "wamo/filterbank.hpp"
#include "wamo/tensor.hpp"

namespace wamo {

// Undecimated multilevel decomposition of a [T x C] signal. Every band keeps
// all T samples; level-s filters are dilated by 2^(s-1) with circular
// indexing.
struct WaveletPyramid {
    std::size_t level = 0;
    Tensor approx;                // a_S, [T x C]
    std::vector<Tensor> details;  // d_1 .. d_S, each [T x C]
};

WaveletPyramid swt_forward(const Tensor& signal, const FilterBank& bank, std::size_t levels);
Tensor iswt_inverse(const WaveletPyramid& pyramid, const FilterBank& bank);

// Max-abs elementwise error of the analysis->synthesis round trip.
double pr_error(const FilterBank& bank, const Tensor& signal, std::size_t levels);

// Tape versions used inside the trainable encoder / reconstruction path.
// Band order matches the plain version: details[0] = d_1, ... , approx last.
struct VarPyramid {
    std::size_t level = 0;
    ad::Var approx;
    std::vector<ad::Var> details;
};

VarPyramid swt_forward_var(const ad::Var& signal, const ad::Var& h0, const ad::Var& g0,
                           std::size_t levels);
ad::Var iswt_inverse_var(const VarPyramid& pyramid, const ad::Var& h1, const ad::Var& g1);

}  // namespace wamo
