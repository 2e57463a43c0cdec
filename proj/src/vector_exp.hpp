#pragma once

#include <cstddef>

namespace smoe::detail {

/// w[n] = exp(w[n] - shift) for all n, with results below exp(-700) set to
/// zero; returns the sum of the results.
/// Built with vector math so the loop maps to SIMD exp.
double exp_shifted(double* w, std::size_t n, double shift);

}  // namespace smoe::detail
