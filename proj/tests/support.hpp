#pragma once

#include "smoe/model.hpp"
#include "smoe/pmm.hpp"
#include "smoe/video_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace smoe::testing {

/// Smooth texture on the infinite plane: a sum of random Gaussian blobs per channel.
class Texture {
 public:
  Texture(std::uint64_t seed, double extent_w, double extent_h, int blobs = 60, double r_min = 2.5,
          double r_max = 7.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> x(-0.5 * extent_w, 1.5 * extent_w);
    std::uniform_real_distribution<double> y(-0.25 * extent_h, 1.25 * extent_h);
    std::uniform_real_distribution<double> radius(r_min, r_max);
    std::uniform_real_distribution<double> amp(-0.3, 0.3);
    for (int n = 0; n < blobs; ++n) blobs_.push_back({x(rng), y(rng), radius(rng), {amp(rng), 0.3 * amp(rng), 0.3 * amp(rng)}});
  }

  Vec3 at(double x, double y) const {
    Vec3 v{0.5, 0.5, 0.5};
    for (const Blob& b : blobs_) {
      const double dx = x - b.x, dy = y - b.y;
      const double g = std::exp(-0.5 * (dx * dx + dy * dy) / (b.r * b.r));
      for (int c = 0; c < 3; ++c) v[c] += b.amp[c] * g;
    }
    for (double& c : v) c = std::clamp(c, 0.02, 0.98);
    return v;
  }

 private:
  struct Blob {
    double x, y, r;
    Vec3 amp;
  };
  std::vector<Blob> blobs_;
};

/// Static texture whose content moves `shift_x` pixels right per frame.
inline VideoVolume translating_texture(const Geometry& g, double shift_x, std::uint64_t seed = 7, int blobs = 60,
                                       double r_min = 2.5, double r_max = 7.0) {
  const Texture tex(seed, g.width, g.height, blobs, r_min, r_max);
  VideoVolume v(g);
  for (int t = 0; t < g.frames; ++t)
    for (int j = 0; j < g.height; ++j)
      for (int i = 0; i < g.width; ++i) {
        const Vec3 a = tex.at(i - shift_x * t, j);
        for (int c = 0; c < 3; ++c) v.at(i, j, t, static_cast<Channel>(c)) = a[c];
      }
  return v;
}

inline VideoVolume constant_video(const Geometry& g, Vec3 value) {
  VideoVolume v(g);
  for (int t = 0; t < g.frames; ++t)
    for (int j = 0; j < g.height; ++j)
      for (int i = 0; i < g.width; ++i)
        for (int c = 0; c < 3; ++c) v.at(i, j, t, static_cast<Channel>(c)) = value[c];
  return v;
}

/// Kernels spread over the volume, wide enough that each one matters everywhere.
inline SmoeModel random_model(std::mt19937_64& rng, int k, const Geometry& g, bool slopes) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> diag(2.0, 5.0);
  std::uniform_real_distribution<double> off(-1.0, 1.0);
  std::uniform_real_distribution<double> pi(0.5, 1.5);
  std::uniform_real_distribution<double> slope(-0.3, 0.3);
  SmoeModel m;
  m.geometry = g;
  m.slopes_enabled = slopes;
  for (int n = 0; n < k; ++n) {
    Kernel kern;
    kern.mu = {0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng), unit(rng)};
    kern.chol = {diag(rng), off(rng), diag(rng), off(rng), off(rng), diag(rng)};
    kern.pi = pi(rng);
    kern.m0 = {unit(rng), unit(rng), unit(rng)};
    if (slopes)
      for (auto& row : kern.slopes)
        for (double& s : row) s = slope(rng);
    m.kernels.push_back(kern);
  }
  return m;
}

inline VideoVolume random_smooth_video(std::mt19937_64& rng, const Geometry& g) {
  const Texture tex(rng(), g.width, g.height, 20);
  VideoVolume v(g);
  std::uniform_real_distribution<double> drift(-1.0, 1.0);
  const double dx = drift(rng), dy = drift(rng);
  for (int t = 0; t < g.frames; ++t)
    for (int j = 0; j < g.height; ++j)
      for (int i = 0; i < g.width; ++i) {
        const Vec3 a = tex.at(i - dx * t, j - dy * t);
        for (int c = 0; c < 3; ++c) v.at(i, j, t, static_cast<Channel>(c)) = a[c];
      }
  return v;
}

/// Small random motion around the identity, in pixel units.
inline pmm::MotionParams random_motion(std::mt19937_64& rng, int p, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  pmm::MotionParams m = pmm::MotionParams::identity(p);
  m.values[0] += 0.8 * scale * n(rng);
  m.values[1] += 0.8 * scale * n(rng);
  if (p >= 4) {
    m.values[2] += 0.02 * scale * n(rng);
    m.values[3] += 0.02 * scale * n(rng);
  }
  if (p >= 6) {
    m.values[4] += 0.02 * scale * n(rng);
    m.values[5] += 0.02 * scale * n(rng);
  }
  if (p == 8) {
    m.values[6] += 1e-3 * scale * n(rng);
    m.values[7] += 1e-3 * scale * n(rng);
  }
  return m;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("smoe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace smoe::testing
