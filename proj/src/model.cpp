#include "smoe/model.hpp"

#include "smoe/error.hpp"
#include "smoe/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace smoe {

namespace {

double log_gate(const Vec3& x, const Kernel& k) {
  const auto& a = k.chol;
  const double d0 = x[0] - k.mu[0];
  const double d1 = x[1] - k.mu[1];
  const double d2 = x[2] - k.mu[2];
  const double y0 = a[0] * d0 + a[1] * d1 + a[3] * d2;
  const double y1 = a[2] * d1 + a[4] * d2;
  const double y2 = a[5] * d2;
  return -0.5 * (y0 * y0 + y1 * y1 + y2 * y2);
}

}  // namespace

Mat3 precision(const std::array<double, 6>& c) {
  // A = [[c0 0 0] [c1 c2 0] [c3 c4 c5]]
  const double a[3][3] = {{c[0], 0.0, 0.0}, {c[1], c[2], 0.0}, {c[3], c[4], c[5]}};
  Mat3 p{};
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += a[r][k] * a[s][k];
      p[r][s] = v;
    }
  return p;
}

double kernel_eval(const Vec3& x, const Kernel& k) { return std::exp(log_gate(x, k)); }

std::vector<double> gating(const Vec3& x, const SmoeModel& model) {
  const std::size_t n = model.kernels.size();
  std::vector<double> w(n);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const Kernel& kern = model.kernels[k];
    if (!(kern.pi > 0.0)) {
      throw Error(ErrorCode::InvariantViolation, "gating needs pi > 0 (kernel " + std::to_string(k) + ")");
    }
    w[k] = std::log(kern.pi) + log_gate(x, kern);
    top = std::max(top, w[k]);
  }
  if (!(top > -std::numeric_limits<double>::infinity())) {
    throw Error(ErrorCode::GatingUnderflow, "every gate numerator underflows");
  }
  double sum = 0.0;
  for (double& v : w) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

Vec3 predict(const Vec3& x, const SmoeModel& model) {
  const auto w = gating(x, model);
  Vec3 y{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Kernel& kern = model.kernels[k];
    for (int c = 0; c < 3; ++c) {
      double expert = kern.m0[c];
      if (model.slopes_enabled)
        expert += kern.slopes[c][0] * x[0] + kern.slopes[c][1] * x[1] + kern.slopes[c][2] * x[2];
      y[c] += expert * w[k];
    }
  }
  return y;
}

Frame reconstruct_frame(const SmoeModel& model, const SampleSet& samples, int t) {
  FrameEvaluator eval(model);
  return eval.forward(frame_coords(samples, t));
}

SmoeModel init_grid(const GridInit& g, const Geometry& geometry) {
  if (g.k_w < 1 || g.k_h < 1 || g.k_t < 1) {
    throw Error(ErrorCode::InvalidArgument, "kernel grid dimensions must be >= 1");
  }
  SmoeModel m;
  m.geometry = geometry;
  m.kernels.reserve(static_cast<std::size_t>(g.count()));
  // Neighbour spacing 1/k equals two standard deviations, so 1/sigma = 2k.
  for (int l = 0; l < g.k_t; ++l)
    for (int j = 0; j < g.k_h; ++j)
      for (int i = 0; i < g.k_w; ++i) {
        Kernel k;
        k.mu = {(i + 0.5) / g.k_w, (j + 0.5) / g.k_h, (l + 0.5) / g.k_t};
        k.chol = {2.0 * g.k_w, 0.0, 2.0 * g.k_h, 0.0, 0.0, 2.0 * g.k_t};
        k.pi = 1.0;
        k.m0 = {0.5, 0.5, 0.5};
        m.kernels.push_back(k);
      }
  return m;
}

SmoeModel init_offsets(const SmoeModel& model, const SampleSet& samples) {
  if (samples.size() == 0) throw Error(ErrorCode::InvalidArgument, "init_offsets needs samples");
  const std::size_t k = model.kernels.size();
  std::vector<Vec3> sums(k, Vec3{0.0, 0.0, 0.0});
  std::vector<std::size_t> counts(k, 0);
  const Geometry& g = samples.geometry;

  std::vector<std::size_t> sample_at(g.pixels_per_frame());
  FrameEvaluator eval(model);
  for (int t = 0; t < g.frames; ++t) {
    for (std::size_t n = 0; n < samples.size(); ++n) {
      const RasterIndex& r = samples.raster[n];
      if (r.t == t) sample_at[static_cast<std::size_t>(r.j) * g.width + r.i] = n;
    }
    const auto owner = eval.dominant_kernels(frame_coords(samples, t));
    for (std::size_t px = 0; px < owner.size(); ++px) {
      const auto o = static_cast<std::size_t>(owner[px]);
      const Vec3& a = samples.amps[sample_at[px]];
      for (int c = 0; c < 3; ++c) sums[o][c] += a[c];
      ++counts[o];
    }
  }
  SmoeModel out = model;
  for (std::size_t n = 0; n < k; ++n) {
    if (counts[n] == 0) continue;
    for (int c = 0; c < 3; ++c) out.kernels[n].m0[c] = sums[n][c] / static_cast<double>(counts[n]);
  }
  return out;
}

SmoeModel prune(const SmoeModel& model) {
  SmoeModel out = model;
  std::erase_if(out.kernels, [](const Kernel& k) { return k.pi <= 0.0; });
  if (out.kernels.empty()) throw Error(ErrorCode::AllKernelsPruned, "every mixing coefficient reached zero");
  return out;
}

void validate(const SmoeModel& model) {
  if (model.d != 3) throw Error(ErrorCode::InvariantViolation, "input dimensionality must be 3");
  if (model.kernels.empty()) throw Error(ErrorCode::InvariantViolation, "model has no kernels");
  for (std::size_t n = 0; n < model.kernels.size(); ++n) {
    const Kernel& k = model.kernels[n];
    bool finite = std::isfinite(k.pi);
    for (double v : k.mu) finite = finite && std::isfinite(v);
    for (double v : k.chol) finite = finite && std::isfinite(v);
    for (double v : k.m0) finite = finite && std::isfinite(v);
    for (const auto& row : k.slopes)
      for (double v : row) finite = finite && std::isfinite(v);
    if (!finite) throw Error(ErrorCode::InvariantViolation, "kernel " + std::to_string(n) + " is not finite");
    if (!(k.pi > 0.0)) {
      throw Error(ErrorCode::InvariantViolation, "kernel " + std::to_string(n) + " has pi <= 0");
    }
  }
}

}  // namespace smoe
