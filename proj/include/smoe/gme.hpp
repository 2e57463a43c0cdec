#pragma once

#include "smoe/pmm.hpp"
#include "smoe/video_io.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace smoe::gme {

/// src is a pixel position in frame t, dst where its content sits in frame t-1.
struct Correspondence {
  pmm::Point src;
  pmm::Point dst;
};

struct RansacConfig {
  int iterations = 1000;
  double inlier_threshold = 1.0;  // pixels
  std::uint64_t seed = 0;
  double min_inlier_fraction = 0.5;
};

/// Hierarchical block matching settings (SAD on luminance).
struct BlockMatchConfig {
  int block = 16;
  int search = 8;   // +/- pixels at every pyramid level
  int levels = 3;
  bool subpixel = true;
};

struct RansacResult {
  pmm::MotionParams params;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  double mean_error = 0.0;  // mean re-projection error over inliers, pixels
};

std::vector<Correspondence> motion_field(const Plane& a, const Plane& b, int grid_step,
                                         const BlockMatchConfig& cfg = {});

/// Exact or least-squares fit of a model of complexity p to the given
/// correspondences; nullopt when the points do not determine the model.
std::optional<pmm::MotionParams> fit_direct(std::span<const Correspondence> c, int p);

double reprojection_error(const pmm::MotionParams& m, const Correspondence& c);
/// Sum of squared re-projection errors.
double reprojection_objective(const pmm::MotionParams& m, std::span<const Correspondence> c);

RansacResult ransac_fit(std::span<const Correspondence> c, int p, const RansacConfig& cfg);

/// Gauss-Newton minimisation of the squared re-projection error.
pmm::MotionParams refine(const pmm::MotionParams& m, std::span<const Correspondence> inliers);

struct TrackEstimate {
  pmm::MotionTrack track;
  std::vector<double> pair_errors;  // mean inlier re-projection error per frame pair
};

TrackEstimate estimate_track_detailed(const VideoVolume& v, int p, const RansacConfig& cfg, int grid_step = 8);
pmm::MotionTrack estimate_track(const VideoVolume& v, int p, const RansacConfig& cfg, int grid_step = 8);

}  // namespace smoe::gme
