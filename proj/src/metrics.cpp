#include "smoe/metrics.hpp"

#include "smoe/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace smoe::metrics {

namespace {

std::vector<double> gaussian_taps(const SsimConfig& cfg) {
  std::vector<double> taps(static_cast<std::size_t>(cfg.window));
  const int half = cfg.window / 2;
  double sum = 0.0;
  for (int k = 0; k < cfg.window; ++k) {
    const double r = k - half;
    taps[static_cast<std::size_t>(k)] = std::exp(-(r * r) / (2.0 * cfg.sigma * cfg.sigma));
    sum += taps[static_cast<std::size_t>(k)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable "valid" filtering: out is (w - n + 1) x (h - n + 1).
Plane filter_valid(const Plane& in, const std::vector<double>& taps) {
  const int n = static_cast<int>(taps.size());
  const int ow = in.width - n + 1;
  const int oh = in.height - n + 1;
  Plane rows(ow, in.height);
  for (int j = 0; j < in.height; ++j)
    for (int i = 0; i < ow; ++i) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += taps[static_cast<std::size_t>(k)] * in.at(i + k, j);
      rows.at(i, j) = s;
    }
  Plane out(ow, oh);
  for (int j = 0; j < oh; ++j)
    for (int i = 0; i < ow; ++i) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += taps[static_cast<std::size_t>(k)] * rows.at(i, j + k);
      out.at(i, j) = s;
    }
  return out;
}

// Adjoint of filter_valid: scatters a valid-sized map back onto the full raster.
Plane filter_adjoint(const Plane& in, const std::vector<double>& taps, int width, int height) {
  const int n = static_cast<int>(taps.size());
  Plane cols(in.width, height);
  for (int j = 0; j < in.height; ++j)
    for (int i = 0; i < in.width; ++i) {
      const double v = in.at(i, j);
      for (int k = 0; k < n; ++k) cols.at(i, j + k) += taps[static_cast<std::size_t>(k)] * v;
    }
  Plane out(width, height);
  for (int j = 0; j < height; ++j)
    for (int i = 0; i < in.width; ++i) {
      const double v = cols.at(i, j);
      for (int k = 0; k < n; ++k) out.at(i + k, j) += taps[static_cast<std::size_t>(k)] * v;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.width, a.height);
  for (std::size_t n = 0; n < a.data.size(); ++n) out.data[n] = a.data[n] * b.data[n];
  return out;
}

void check_shapes(const Plane& a, const Plane& b, const SsimConfig& cfg) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::ShapeMismatch, "SSIM operands differ in size");
  }
  if (a.width < cfg.window || a.height < cfg.window) {
    throw Error(ErrorCode::RasterTooSmall, std::to_string(a.width) + "x" + std::to_string(a.height) +
                                               " raster is smaller than the " + std::to_string(cfg.window) +
                                               "-tap window");
  }
}

struct Moments {
  Plane mu_a, mu_b, e_aa, e_bb, e_ab;
};

Moments moments(const Plane& a, const Plane& b, const std::vector<double>& taps) {
  return {filter_valid(a, taps), filter_valid(b, taps), filter_valid(product(a, a), taps),
          filter_valid(product(b, b), taps), filter_valid(product(a, b), taps)};
}

}  // namespace

double ssim(const Plane& a, const Plane& b, const SsimConfig& cfg) {
  check_shapes(a, b, cfg);
  const auto taps = gaussian_taps(cfg);
  const Moments m = moments(a, b, taps);
  double total = 0.0;
  for (std::size_t n = 0; n < m.mu_a.data.size(); ++n) {
    const double ma = m.mu_a.data[n];
    const double mb = m.mu_b.data[n];
    const double va = m.e_aa.data[n] - ma * ma;
    const double vb = m.e_bb.data[n] - mb * mb;
    const double cov = m.e_ab.data[n] - ma * mb;
    total += ((2.0 * ma * mb + cfg.c1) * (2.0 * cov + cfg.c2)) /
             ((ma * ma + mb * mb + cfg.c1) * (va + vb + cfg.c2));
  }
  return total / static_cast<double>(m.mu_a.data.size());
}

double ssim_with_gradient(const Plane& x, const Plane& y, Plane& grad, const SsimConfig& cfg) {
  check_shapes(x, y, cfg);
  const auto taps = gaussian_taps(cfg);
  const Moments m = moments(x, y, taps);
  const std::size_t count = m.mu_a.data.size();
  const double inv_n = 1.0 / static_cast<double>(count);
  // dS/d(mu_y), dS/d(E[y^2]), dS/d(E[xy]) per window position
  Plane da(m.mu_a.width, m.mu_a.height), db(da), dc(da);
  double total = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const double mx = m.mu_a.data[n];
    const double my = m.mu_b.data[n];
    const double vx = m.e_aa.data[n] - mx * mx;
    const double vy = m.e_bb.data[n] - my * my;
    const double cov = m.e_ab.data[n] - mx * my;
    const double a1 = 2.0 * mx * my + cfg.c1;
    const double a2 = 2.0 * cov + cfg.c2;
    const double b1 = mx * mx + my * my + cfg.c1;
    const double b2 = vx + vy + cfg.c2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    const double ds_dmy = s * (2.0 * mx / a1 - 2.0 * my / b1);
    const double ds_dvy = -s / b2;
    const double ds_dcov = 2.0 * s / a2;
    db.data[n] = ds_dvy * inv_n;
    dc.data[n] = ds_dcov * inv_n;
    da.data[n] = (ds_dmy - 2.0 * my * ds_dvy - mx * ds_dcov) * inv_n;
  }
  const Plane ga = filter_adjoint(da, taps, y.width, y.height);
  const Plane gb = filter_adjoint(db, taps, y.width, y.height);
  const Plane gc = filter_adjoint(dc, taps, y.width, y.height);
  grad = Plane(y.width, y.height);
  for (std::size_t n = 0; n < grad.data.size(); ++n)
    grad.data[n] = ga.data[n] + 2.0 * y.data[n] * gb.data[n] + x.data[n] * gc.data[n];
  return total * inv_n;
}

double weighted_ssim(const Frame& target, const Frame& rec, const SsimConfig& cfg) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += cfg.channel_weights[c] * ssim(target.channels[c], rec.channels[c], cfg);
  return s;
}

double ssim_loss(const VideoVolume& target, std::span<const Frame> rec, const SsimConfig& cfg,
                 std::span<const int> frame_set) {
  if (frame_set.empty()) throw Error(ErrorCode::InvalidArgument, "frame set is empty");
  if (rec.size() != frame_set.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one reconstruction per selected frame is required");
  }
  double sum = 0.0;
  for (std::size_t n = 0; n < frame_set.size(); ++n) {
    const int t = frame_set[n];
    if (t < 0 || t >= target.frames()) throw Error(ErrorCode::OutOfBounds, "frame " + std::to_string(t));
    sum += weighted_ssim(target.frame(t), rec[n], cfg);
  }
  return 1.0 - sum / static_cast<double>(frame_set.size());
}

double sparsity_loss(const SmoeModel& model, double lambda_s) {
  double s = 0.0;
  for (const Kernel& k : model.kernels) s += k.pi;
  return lambda_s * s;
}

namespace {

double psnr_from_mse(double sse, std::size_t n) {
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (sse / static_cast<double>(n)));
}

double luma_sse(const Plane& a, const Plane& b) {
  double s = 0.0;
  for (std::size_t n = 0; n < a.data.size(); ++n) {
    const double d = a.data[n] - b.data[n];
    s += d * d;
  }
  return s;
}

}  // namespace

double psnr(const Frame& a, const Frame& b) {
  if (a.width != b.width || a.height != b.height) throw Error(ErrorCode::ShapeMismatch, "PSNR operands differ");
  return psnr_from_mse(luma_sse(a.channels[kY], b.channels[kY]), a.channels[kY].data.size());
}

double psnr(const VideoVolume& a, std::span<const Frame> b) {
  if (static_cast<int>(b.size()) != a.frames()) throw Error(ErrorCode::ShapeMismatch, "frame count differs");
  double sse = 0.0;
  for (int t = 0; t < a.frames(); ++t) {
    const Frame& f = b[static_cast<std::size_t>(t)];
    if (f.width != a.width() || f.height != a.height()) throw Error(ErrorCode::ShapeMismatch, "frame size differs");
    sse += luma_sse(a.luminance(t), f.channels[kY]);
  }
  return psnr_from_mse(sse, a.geometry().pixel_count());
}

bool is_identical(double psnr_db) { return std::isinf(psnr_db) && psnr_db > 0; }

double ssim_db(double d) {
  if (!(d < 1.0)) throw Error(ErrorCode::InvalidArgument, "SSIM-dB is undefined for d >= 1");
  return -10.0 * std::log10(1.0 - d);
}

}  // namespace smoe::metrics
