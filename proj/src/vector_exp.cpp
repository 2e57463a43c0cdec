#include "vector_exp.hpp"

#include <cmath>

namespace smoe::detail {

double exp_shifted(double* w, std::size_t n, double shift) {
  double sum = 0.0;
#pragma omp simd reduction(+ : sum)
  for (std::size_t k = 0; k < n; ++k) {
    // Arguments far below the underflow range take the slow scalar path of
    // the vector exp; exp(-700) is already negligible next to exp(0) = 1.
    const double d = w[k] - shift;
    const double e = std::exp(d < -700.0 ? -700.0 : d);
    w[k] = d < -700.0 ? 0.0 : e;
    sum += w[k];
  }
  return sum;
}

}  // namespace smoe::detail
