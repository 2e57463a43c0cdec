#pragma once

#include "smoe/model.hpp"
#include "smoe/video_io.hpp"

#include <array>
#include <span>
#include <vector>

namespace smoe::metrics {

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  std::array<double, 3> channel_weights{6.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0};
};

struct LossBreakdown {
  double ssim_loss = 0.0;
  double sparsity_loss = 0.0;
  double total = 0.0;
  std::vector<double> per_frame_ssim;
};

/// Mean SSIM over all window positions that fit inside the raster.
double ssim(const Plane& a, const Plane& b, const SsimConfig& cfg = {});

/// SSIM of `rec` against `target` plus d SSIM / d rec for every pixel.
double ssim_with_gradient(const Plane& target, const Plane& rec, Plane& grad, const SsimConfig& cfg = {});

/// Channel-weighted SSIM of one frame.
double weighted_ssim(const Frame& target, const Frame& rec, const SsimConfig& cfg = {});

/// 1 - mean over frame_set of the weighted SSIM. rec[n] is the
/// reconstruction of frame frame_set[n].
double ssim_loss(const VideoVolume& target, std::span<const Frame> rec, const SsimConfig& cfg,
                 std::span<const int> frame_set);

double sparsity_loss(const SmoeModel& model, double lambda_s);

/// Luminance PSNR in dB for unit peak; +infinity marks identical inputs.
double psnr(const Frame& a, const Frame& b);
double psnr(const VideoVolume& a, std::span<const Frame> b);

bool is_identical(double psnr_db);

/// -10 log10(1 - d), defined for d < 1.
double ssim_db(double d);

}  // namespace smoe::metrics
