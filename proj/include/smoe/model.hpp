#pragma once

#include "smoe/video_io.hpp"

#include <array>
#include <vector>

namespace smoe {

using Mat3 = std::array<Vec3, 3>;

/// One Gaussian gate plus its hyperplane expert.
struct Kernel {
  Vec3 mu{};                    // centre, normalized coordinates
  std::array<double, 6> chol{}; // a11, a21, a22, a31, a32, a33 of the lower-triangular A
  double pi = 1.0;              // mixing coefficient
  Vec3 m0{};                    // expert offsets (Y, U, V)
  Mat3 slopes{};                // rows: Y, U, V slopes over (x_w, x_h, x_t)

  bool operator==(const Kernel&) const = default;
};

struct SmoeModel {
  std::vector<Kernel> kernels;
  int d = 3;
  Geometry geometry;
  bool slopes_enabled = false;

  std::size_t size() const { return kernels.size(); }
};

struct GridInit {
  int k_w = 1;
  int k_h = 1;
  int k_t = 1;

  int count() const { return k_w * k_h * k_t; }
};

/// Precision matrix A * A^T assembled from the packed lower-triangular factor.
Mat3 precision(const std::array<double, 6>& chol);

/// exp(-1/2 (x - mu)^T A A^T (x - mu)).
double kernel_eval(const Vec3& x, const Kernel& k);

/// Softmax gating weights; evaluated in log space with the per-x maximum
/// subtracted.
std::vector<double> gating(const Vec3& x, const SmoeModel& model);

Vec3 predict(const Vec3& x, const SmoeModel& model);

/// Evaluates the model on the samples of frame t and places each prediction
/// at the sample's raster position.
Frame reconstruct_frame(const SmoeModel& model, const SampleSet& samples, int t);

SmoeModel init_grid(const GridInit& g, const Geometry& geometry);

/// Sets each kernel's offsets to the mean amplitude of the samples it
/// dominates; kernels that dominate nothing keep their current offsets.
SmoeModel init_offsets(const SmoeModel& model, const SampleSet& samples);

/// Drops kernels with pi <= 0, keeping survivors in order.
SmoeModel prune(const SmoeModel& model);

/// Throws InvariantViolation unless every kernel is finite with pi > 0.
void validate(const SmoeModel& model);

}  // namespace smoe
