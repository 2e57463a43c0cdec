#include "smoe/evaluator.hpp"

#include "smoe/error.hpp"
#include "vector_exp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace smoe {

namespace {

enum Field : int {
  kMu0, kMu1, kMu2,
  kA11, kA21, kA22, kA31, kA32, kA33,
  kLogPi,
  kM0Y, kM0U, kM0V,
  kS00, kS01, kS02, kS10, kS11, kS12, kS20, kS21, kS22,
  kFieldCount
};

}  // namespace

FrameCoords frame_coords(const SampleSet& samples, int t) {
  const Geometry& g = samples.geometry;
  if (t < 0 || t >= g.frames) throw Error(ErrorCode::OutOfBounds, "frame index " + std::to_string(t));
  FrameCoords fc;
  fc.width = g.width;
  fc.height = g.height;
  fc.coords.assign(g.pixels_per_frame(), Vec3{std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0});
  std::size_t found = 0;
  // Samples produced by to_samples are frame-contiguous; fall back to a scan otherwise.
  const std::size_t begin = g.pixels_per_frame() * static_cast<std::size_t>(t);
  const bool contiguous = samples.size() == g.pixel_count() && samples.raster[begin].t == t &&
                          samples.raster[begin + g.pixels_per_frame() - 1].t == t;
  const std::size_t lo = contiguous ? begin : 0;
  const std::size_t hi = contiguous ? begin + g.pixels_per_frame() : samples.size();
  for (std::size_t n = lo; n < hi; ++n) {
    const RasterIndex& r = samples.raster[n];
    if (r.t != t) continue;
    fc.coords[static_cast<std::size_t>(r.j) * g.width + r.i] = samples.coords[n];
    ++found;
  }
  if (found != g.pixels_per_frame()) {
    throw Error(ErrorCode::ShapeMismatch, "frame " + std::to_string(t) + " is missing samples");
  }
  return fc;
}

FrameEvaluator::FrameEvaluator(const SmoeModel& model, EvalOptions opts)
    : model_(model), opts_(opts), slopes_(model.slopes_enabled) {
  const std::size_t k = model.kernels.size();
  log_pi_.resize(k);
  lam_min_.resize(k);
  lam_max_.resize(k);
  for (std::size_t n = 0; n < k; ++n) {
    const Kernel& kern = model.kernels[n];
    if (!(kern.pi > 0.0)) {
      throw Error(ErrorCode::InvariantViolation, "kernel " + std::to_string(n) + " has non-positive pi");
    }
    log_pi_[n] = std::log(kern.pi);
    // Bounds on the eigenvalues of A A^T: trace bounds the largest, and
    // det / (trace/2)^2 bounds the smallest from below.
    const Mat3 p = precision(kern.chol);
    const double trace = p[0][0] + p[1][1] + p[2][2];
    const double det_a = kern.chol[0] * kern.chol[2] * kern.chol[5];
    const double half = 0.5 * trace;
    lam_max_[n] = trace * (1.0 + 1e-12);
    lam_min_[n] = half > 0.0 ? std::max(0.0, (det_a * det_a) / (half * half) * (1.0 - 1e-9)) : 0.0;
  }
}

void FrameEvaluator::build_tiles(const FrameCoords& fc) {
  if (fc.coords.size() != static_cast<std::size_t>(fc.width) * fc.height) {
    throw Error(ErrorCode::ShapeMismatch, "frame coordinate count does not match its raster");
  }
  tiles_.clear();
  const int ts = std::max(1, opts_.tile_size);
  for (int y0 = 0; y0 < fc.height; y0 += ts)
    for (int x0 = 0; x0 < fc.width; x0 += ts) {
      Tile tile;
      tile.x0 = x0;
      tile.y0 = y0;
      tile.x1 = std::min(x0 + ts, fc.width);
      tile.y1 = std::min(y0 + ts, fc.height);
      select_candidates(fc, tile);
      tiles_.push_back(std::move(tile));
    }
}

void FrameEvaluator::select_candidates(const FrameCoords& fc, Tile& tile) const {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-lo[0], -lo[1], -lo[2]};
  for (int y = tile.y0; y < tile.y1; ++y)
    for (int x = tile.x0; x < tile.x1; ++x) {
      const Vec3& c = fc.coords[static_cast<std::size_t>(y) * fc.width + x];
      for (int d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], c[d]);
        hi[d] = std::max(hi[d], c[d]);
      }
    }
  const std::size_t k = model_.kernels.size();
  tile.candidates.clear();
  if (!std::isfinite(lo[0] + lo[1] + lo[2] + hi[0] + hi[1] + hi[2])) {
    for (std::size_t n = 0; n < k; ++n) tile.candidates.push_back(static_cast<int>(n));
    return;
  }
  std::vector<double> upper(k);
  double best_lower = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < k; ++n) {
    const Vec3& mu = model_.kernels[n].mu;
    double dmin = 0.0, dmax = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double below = lo[d] - mu[d];
      const double above = mu[d] - hi[d];
      const double gap = std::max({below, above, 0.0});
      const double far = std::max(std::abs(mu[d] - lo[d]), std::abs(mu[d] - hi[d]));
      dmin += gap * gap;
      dmax += far * far;
    }
    upper[n] = log_pi_[n] - 0.5 * lam_min_[n] * dmin;
    best_lower = std::max(best_lower, log_pi_[n] - 0.5 * lam_max_[n] * dmax);
  }
  const double cutoff = best_lower - opts_.cull_margin;
  for (std::size_t n = 0; n < k; ++n)
    if (upper[n] >= cutoff) tile.candidates.push_back(static_cast<int>(n));
}

void FrameEvaluator::gather(const Tile& tile) {
  const std::size_t c = tile.candidates.size();
  local_stride_ = c;
  local_.assign(c * kFieldCount, 0.0);
  for (std::size_t n = 0; n < c; ++n) {
    const Kernel& k = model_.kernels[static_cast<std::size_t>(tile.candidates[n])];
    for (int d = 0; d < 3; ++d) local_[(kMu0 + d) * c + n] = k.mu[d];
    for (int e = 0; e < 6; ++e) local_[(kA11 + e) * c + n] = k.chol[e];
    local_[kLogPi * c + n] = log_pi_[static_cast<std::size_t>(tile.candidates[n])];
    for (int ch = 0; ch < 3; ++ch) local_[(kM0Y + ch) * c + n] = k.m0[ch];
    if (slopes_)
      for (int ch = 0; ch < 3; ++ch)
        for (int d = 0; d < 3; ++d) local_[(kS00 + 3 * ch + d) * c + n] = k.slopes[ch][d];
  }
}

Frame FrameEvaluator::forward(const FrameCoords& fc, bool retain) {
  build_tiles(fc);
  retained_ = retain;
  Frame out(fc.width, fc.height);
  for (Tile& tile : tiles_) {
    gather(tile);
    if (slopes_) {
      forward_tile<true>(fc, tile, retain, out);
    } else {
      forward_tile<false>(fc, tile, retain, out);
    }
  }
  return out;
}

template <bool Slopes>
void FrameEvaluator::forward_tile(const FrameCoords& fc, Tile& tile, bool retain, Frame& out) {
  const std::size_t c = local_stride_;
  const double* mu0 = &local_[kMu0 * c];
  const double* mu1 = &local_[kMu1 * c];
  const double* mu2 = &local_[kMu2 * c];
  const double* a11 = &local_[kA11 * c];
  const double* a21 = &local_[kA21 * c];
  const double* a22 = &local_[kA22 * c];
  const double* a31 = &local_[kA31 * c];
  const double* a32 = &local_[kA32 * c];
  const double* a33 = &local_[kA33 * c];
  const double* lpi = &local_[kLogPi * c];
  scratch_.resize(c);
  double* w = scratch_.data();
  const std::size_t npx = static_cast<std::size_t>(tile.x1 - tile.x0) * (tile.y1 - tile.y0);
  if (retain) tile.weights.assign(npx * c, 0.0);
  std::size_t px = 0;
  for (int y = tile.y0; y < tile.y1; ++y)
    for (int x = tile.x0; x < tile.x1; ++x, ++px) {
      const std::size_t idx = static_cast<std::size_t>(y) * fc.width + x;
      const double p0 = fc.coords[idx][0];
      const double p1 = fc.coords[idx][1];
      const double p2 = fc.coords[idx][2];
      double top = -std::numeric_limits<double>::infinity();
#pragma omp simd reduction(max : top)
      for (std::size_t n = 0; n < c; ++n) {
        const double d0 = p0 - mu0[n];
        const double d1 = p1 - mu1[n];
        const double d2 = p2 - mu2[n];
        const double y0 = a11[n] * d0 + a21[n] * d1 + a31[n] * d2;
        const double y1 = a22[n] * d1 + a32[n] * d2;
        const double y2 = a33[n] * d2;
        const double logit = lpi[n] - 0.5 * (y0 * y0 + y1 * y1 + y2 * y2);
        w[n] = logit;
        top = top > logit ? top : logit;
      }
      if (!(top > -std::numeric_limits<double>::infinity())) {
        throw Error(ErrorCode::GatingUnderflow, "no kernel contributes at pixel (" + std::to_string(x) + ", " +
                                                    std::to_string(y) + ")");
      }
      const double inv = 1.0 / detail::exp_shifted(w, c, top);
      const double* m0y = &local_[kM0Y * c];
      const double* m0u = &local_[kM0U * c];
      const double* m0v = &local_[kM0V * c];
      double sy = 0.0, su = 0.0, sv = 0.0;
      if constexpr (Slopes) {
        const double* s = &local_[kS00 * c];
#pragma omp simd reduction(+ : sy, su, sv)
        for (std::size_t n = 0; n < c; ++n) {
          sy += w[n] * (m0y[n] + s[0 * c + n] * p0 + s[1 * c + n] * p1 + s[2 * c + n] * p2);
          su += w[n] * (m0u[n] + s[3 * c + n] * p0 + s[4 * c + n] * p1 + s[5 * c + n] * p2);
          sv += w[n] * (m0v[n] + s[6 * c + n] * p0 + s[7 * c + n] * p1 + s[8 * c + n] * p2);
        }
      } else {
#pragma omp simd reduction(+ : sy, su, sv)
        for (std::size_t n = 0; n < c; ++n) {
          sy += w[n] * m0y[n];
          su += w[n] * m0u[n];
          sv += w[n] * m0v[n];
        }
      }
      out.channels[0].data[idx] = sy * inv;
      out.channels[1].data[idx] = su * inv;
      out.channels[2].data[idx] = sv * inv;
      if (retain) {
        double* dst = &tile.weights[px * c];
        for (std::size_t n = 0; n < c; ++n) dst[n] = w[n] * inv;
      }
    }
}

std::vector<int> FrameEvaluator::dominant_kernels(const FrameCoords& fc) {
  build_tiles(fc);
  retained_ = false;
  std::vector<int> out(fc.coords.size(), -1);
  for (const Tile& tile : tiles_) {
    for (int y = tile.y0; y < tile.y1; ++y)
      for (int x = tile.x0; x < tile.x1; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * fc.width + x;
        const Vec3& pt = fc.coords[idx];
        double best = -std::numeric_limits<double>::infinity();
        int arg = -1;
        for (int n : tile.candidates) {
          const Kernel& k = model_.kernels[static_cast<std::size_t>(n)];
          const double d0 = pt[0] - k.mu[0];
          const double d1 = pt[1] - k.mu[1];
          const double d2 = pt[2] - k.mu[2];
          const double y0 = k.chol[0] * d0 + k.chol[1] * d1 + k.chol[3] * d2;
          const double y1 = k.chol[2] * d1 + k.chol[4] * d2;
          const double y2 = k.chol[5] * d2;
          const double logit = log_pi_[static_cast<std::size_t>(n)] - 0.5 * (y0 * y0 + y1 * y1 + y2 * y2);
          if (logit > best) {
            best = logit;
            arg = n;
          }
        }
        out[idx] = arg;
      }
  }
  return out;
}

void FrameEvaluator::backward(const FrameCoords& fc, const Frame& pred, const Frame& dpred,
                              std::span<KernelGrad> grads, std::vector<Vec3>* dcoords) {
  if (grads.size() != model_.kernels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient buffer does not match the kernel count");
  }
  if (!retained_ || tiles_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "backward() needs a preceding forward(retain = true)");
  }
  if (dcoords) dcoords->assign(fc.coords.size(), Vec3{0.0, 0.0, 0.0});
  for (const Tile& tile : tiles_) {
    gather(tile);
    if (slopes_) {
      if (dcoords) {
        backward_tile<true, true>(fc, tile, pred, dpred, dcoords);
      } else {
        backward_tile<true, false>(fc, tile, pred, dpred, dcoords);
      }
    } else {
      if (dcoords) {
        backward_tile<false, true>(fc, tile, pred, dpred, dcoords);
      } else {
        backward_tile<false, false>(fc, tile, pred, dpred, dcoords);
      }
    }
    const std::size_t c = local_stride_;
    const double* acc = acc_.data();
    for (std::size_t n = 0; n < c; ++n) {
      const std::size_t kidx = static_cast<std::size_t>(tile.candidates[n]);
      KernelGrad& gk = grads[kidx];
      for (int d = 0; d < 3; ++d) gk.mu[d] += acc[(kMu0 + d) * c + n];
      for (int e = 0; e < 6; ++e) gk.chol[e] += acc[(kA11 + e) * c + n];
      gk.pi += acc[kLogPi * c + n] / model_.kernels[kidx].pi;
      for (int ch = 0; ch < 3; ++ch) gk.m0[ch] += acc[(kM0Y + ch) * c + n];
      if (slopes_)
        for (int ch = 0; ch < 3; ++ch)
          for (int d = 0; d < 3; ++d) gk.slopes[ch][d] += acc[(kS00 + 3 * ch + d) * c + n];
    }
  }
}

template <bool Slopes, bool Coords>
void FrameEvaluator::backward_tile(const FrameCoords& fc, const Tile& tile, const Frame& pred, const Frame& dpred,
                                   std::vector<Vec3>* dcoords) {
  const std::size_t c = local_stride_;
  acc_.assign(c * kFieldCount, 0.0);
  const double* mu0 = &local_[kMu0 * c];
  const double* mu1 = &local_[kMu1 * c];
  const double* mu2 = &local_[kMu2 * c];
  const double* a11 = &local_[kA11 * c];
  const double* a21 = &local_[kA21 * c];
  const double* a22 = &local_[kA22 * c];
  const double* a31 = &local_[kA31 * c];
  const double* a32 = &local_[kA32 * c];
  const double* a33 = &local_[kA33 * c];
  const double* m0y = &local_[kM0Y * c];
  const double* m0u = &local_[kM0U * c];
  const double* m0v = &local_[kM0V * c];
  const double* s = &local_[kS00 * c];
  double* acc = acc_.data();
  double* g_mu0 = acc + kMu0 * c;
  double* g_mu1 = acc + kMu1 * c;
  double* g_mu2 = acc + kMu2 * c;
  double* g_a11 = acc + kA11 * c;
  double* g_a21 = acc + kA21 * c;
  double* g_a22 = acc + kA22 * c;
  double* g_a31 = acc + kA31 * c;
  double* g_a32 = acc + kA32 * c;
  double* g_a33 = acc + kA33 * c;
  double* g_lpi = acc + kLogPi * c;
  double* g_my = acc + kM0Y * c;
  double* g_mu = acc + kM0U * c;
  double* g_mv = acc + kM0V * c;
  double* g_s = acc + kS00 * c;
  std::size_t px = 0;
  for (int y = tile.y0; y < tile.y1; ++y)
    for (int x = tile.x0; x < tile.x1; ++x, ++px) {
      const std::size_t idx = static_cast<std::size_t>(y) * fc.width + x;
      const double p0 = fc.coords[idx][0];
      const double p1 = fc.coords[idx][1];
      const double p2 = fc.coords[idx][2];
      const double gy = dpred.channels[0].data[idx];
      const double gu = dpred.channels[1].data[idx];
      const double gv = dpred.channels[2].data[idx];
      if (gy == 0.0 && gu == 0.0 && gv == 0.0) continue;
      const double gp = gy * pred.channels[0].data[idx] + gu * pred.channels[1].data[idx] +
                        gv * pred.channels[2].data[idx];
      const double* w = &tile.weights[px * c];
      double dx0 = 0.0, dx1 = 0.0, dx2 = 0.0;
#pragma omp simd reduction(+ : dx0, dx1, dx2)
      for (std::size_t n = 0; n < c; ++n) {
        double e0 = m0y[n];
        double e1 = m0u[n];
        double e2 = m0v[n];
        if constexpr (Slopes) {
          e0 += s[0 * c + n] * p0 + s[1 * c + n] * p1 + s[2 * c + n] * p2;
          e1 += s[3 * c + n] * p0 + s[4 * c + n] * p1 + s[5 * c + n] * p2;
          e2 += s[6 * c + n] * p0 + s[7 * c + n] * p1 + s[8 * c + n] * p2;
        }
        const double wn = w[n];
        const double dlogit = wn * (gy * e0 + gu * e1 + gv * e2 - gp);
        g_lpi[n] += dlogit;
        g_my[n] += wn * gy;
        g_mu[n] += wn * gu;
        g_mv[n] += wn * gv;
        if constexpr (Slopes) {
          const double wy = wn * gy, wu = wn * gu, wv = wn * gv;
          g_s[0 * c + n] += wy * p0;
          g_s[1 * c + n] += wy * p1;
          g_s[2 * c + n] += wy * p2;
          g_s[3 * c + n] += wu * p0;
          g_s[4 * c + n] += wu * p1;
          g_s[5 * c + n] += wu * p2;
          g_s[6 * c + n] += wv * p0;
          g_s[7 * c + n] += wv * p1;
          g_s[8 * c + n] += wv * p2;
          if constexpr (Coords) {
            dx0 += wy * s[0 * c + n] + wu * s[3 * c + n] + wv * s[6 * c + n];
            dx1 += wy * s[1 * c + n] + wu * s[4 * c + n] + wv * s[7 * c + n];
            dx2 += wy * s[2 * c + n] + wu * s[5 * c + n] + wv * s[8 * c + n];
          }
        }
        // q = |A^T d|^2, dlogit/dq = -1/2
        const double two_dq = -dlogit;
        const double d0 = p0 - mu0[n];
        const double d1 = p1 - mu1[n];
        const double d2 = p2 - mu2[n];
        const double y0 = a11[n] * d0 + a21[n] * d1 + a31[n] * d2;
        const double y1 = a22[n] * d1 + a32[n] * d2;
        const double y2 = a33[n] * d2;
        g_a11[n] += two_dq * d0 * y0;
        g_a21[n] += two_dq * d1 * y0;
        g_a22[n] += two_dq * d1 * y1;
        g_a31[n] += two_dq * d2 * y0;
        g_a32[n] += two_dq * d2 * y1;
        g_a33[n] += two_dq * d2 * y2;
        const double ay0 = a11[n] * y0;
        const double ay1 = a21[n] * y0 + a22[n] * y1;
        const double ay2 = a31[n] * y0 + a32[n] * y1 + a33[n] * y2;
        g_mu0[n] -= two_dq * ay0;
        g_mu1[n] -= two_dq * ay1;
        g_mu2[n] -= two_dq * ay2;
        if constexpr (Coords) {
          dx0 += two_dq * ay0;
          dx1 += two_dq * ay1;
          dx2 += two_dq * ay2;
        }
      }
      if constexpr (Coords) (*dcoords)[idx] = {dx0, dx1, dx2};
    }
}

}  // namespace smoe
