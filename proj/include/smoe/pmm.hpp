#pragma once

#include "smoe/video_io.hpp"

#include <Eigen/Core>

#include <array>
#include <span>
#include <vector>

namespace smoe::pmm {

using Homography = Eigen::Matrix3d;
using Point = Eigen::Vector2d;

inline constexpr double kDegenerateDenominator = 1e-12;

bool is_valid_complexity(int p);
/// Number of correspondences that pin down a model of complexity p.
int minimal_sample_size(int p);

/// Free parameters of a parametric motion model. Entries of
/// [[h0 h1 h2] [h3 h4 h5] [h6 h7 1]] are exposed in the order
/// h2, h5 | h0, h1 | h3, h4 | h6, h7, truncated to the first p.
/// p=4 ties h3 = -h1 and h4 = h0; p=2 fixes h0 = h4 = 1 and h1 = h3 = 0;
/// p<8 fixes h6 = h7 = 0.
struct MotionParams {
  int p = 2;
  std::array<double, 8> values{};

  static MotionParams identity(int p);

  std::span<double> free() { return {values.data(), static_cast<std::size_t>(p)}; }
  std::span<const double> free() const { return {values.data(), static_cast<std::size_t>(p)}; }

  bool operator==(const MotionParams&) const = default;
};

/// Row/column of the homography entry behind free parameter `index`.
std::array<int, 2> free_entry(int index);

Homography expand_to_homography(const MotionParams& m);
/// Inverse of expand_to_homography on the free entries (H is rescaled so that
/// its bottom-right entry is 1 first).
MotionParams extract(const Homography& h, int p);

/// Projective mapping of a pixel-unit point. Throws DegenerateDenominator when
/// the homogeneous scale vanishes.
Point apply(const Homography& h, const Point& pt);
Point apply(const MotionParams& m, const Point& pt);

/// a * b, renormalized to bottom-right 1; apply(compose(a, b), x) == apply(a, apply(b, x)).
Homography compose(const Homography& a, const Homography& b);

/// Chain-rule helper: folds a gradient over the 3x3 entries of expand(m)
/// into gradients over m's free parameters.
void accumulate_free_gradient(const Homography& d_entries, int p, std::span<double> out);

/// Per frame-pair motion; per_pair[t-1] maps frame t into frame t-1.
struct MotionTrack {
  int p = 2;
  std::vector<MotionParams> per_pair;
  int reference_frame = 0;

  static MotionTrack identity(int p, int frames);
  int frames() const { return static_cast<int>(per_pair.size()) + 1; }
};

/// Transform from every frame into the reference frame (index 0 is identity).
std::vector<Homography> composed_transforms(const MotionTrack& track);

/// Moves sample coordinates to the reference frame. Amplitudes and raster
/// indices are copied untouched.
SampleSet compensate_samples(const SampleSet& s, const MotionTrack& track);

/// Maps each centre through the transform of its nearest frame.
std::vector<Vec3> transform_kernel_centers(std::span<const Vec3> centers, const MotionTrack& track,
                                           const Geometry& geometry);

/// Normalized coordinate displacement helper shared with the trainer:
/// normalized position of pixel (i, j) of frame t after transform h.
Vec3 compensated_coord(const Homography& h, const Vec3& base, double px, double py, const Geometry& g);

}  // namespace smoe::pmm
