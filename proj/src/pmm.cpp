#include "smoe/pmm.hpp"

#include "smoe/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <string>

namespace smoe::pmm {

namespace {

constexpr std::array<std::array<int, 2>, 8> kFreeEntries{{
    {0, 2}, {1, 2}, {0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 1},
}};

void require_complexity(int p) {
  if (!is_valid_complexity(p)) {
    throw Error(ErrorCode::InvalidArgument, "motion complexity must be 2, 4, 6 or 8, got " + std::to_string(p));
  }
}

}  // namespace

bool is_valid_complexity(int p) { return p == 2 || p == 4 || p == 6 || p == 8; }

int minimal_sample_size(int p) {
  require_complexity(p);
  return p / 2;
}

std::array<int, 2> free_entry(int index) { return kFreeEntries.at(static_cast<std::size_t>(index)); }

MotionParams MotionParams::identity(int p) {
  require_complexity(p);
  MotionParams m;
  m.p = p;
  if (p >= 4) m.values[2] = 1.0;  // h0
  if (p >= 6) m.values[5] = 1.0;  // h4
  return m;
}

Homography expand_to_homography(const MotionParams& m) {
  require_complexity(m.p);
  Homography h = Homography::Identity();
  for (int k = 0; k < m.p; ++k) {
    const auto [r, c] = kFreeEntries[k];
    h(r, c) = m.values[k];
  }
  if (m.p == 4) {
    h(1, 0) = -h(0, 1);
    h(1, 1) = h(0, 0);
  }
  return h;
}

MotionParams extract(const Homography& h, int p) {
  require_complexity(p);
  const double s = h(2, 2);
  if (std::abs(s) < kDegenerateDenominator) {
    throw Error(ErrorCode::SingularProduct, "homography has vanishing bottom-right entry");
  }
  MotionParams m;
  m.p = p;
  for (int k = 0; k < p; ++k) {
    const auto [r, c] = kFreeEntries[k];
    m.values[k] = h(r, c) / s;
  }
  return m;
}

Point apply(const Homography& h, const Point& pt) {
  const double den = h(2, 0) * pt.x() + h(2, 1) * pt.y() + h(2, 2);
  if (!(std::abs(den) >= kDegenerateDenominator)) {
    throw Error(ErrorCode::DegenerateDenominator, "projective scale vanishes");
  }
  const double x = h(0, 0) * pt.x() + h(0, 1) * pt.y() + h(0, 2);
  const double y = h(1, 0) * pt.x() + h(1, 1) * pt.y() + h(1, 2);
  return {x / den, y / den};
}

Point apply(const MotionParams& m, const Point& pt) { return apply(expand_to_homography(m), pt); }

Homography compose(const Homography& a, const Homography& b) {
  Homography prod = a * b;
  const double scale = prod.cwiseAbs().maxCoeff();
  const double det = prod.determinant();
  if (!std::isfinite(det) || scale == 0.0 || std::abs(det) <= 1e-14 * scale * scale * scale) {
    throw Error(ErrorCode::SingularProduct, "composed homography is singular");
  }
  const double s = prod(2, 2);
  if (std::abs(s) < kDegenerateDenominator * scale) {
    throw Error(ErrorCode::SingularProduct, "composed homography maps the origin to infinity");
  }
  if (s != 1.0) prod /= s;
  prod(2, 2) = 1.0;
  return prod;
}

void accumulate_free_gradient(const Homography& d, int p, std::span<double> out) {
  require_complexity(p);
  out[0] += d(0, 2);
  out[1] += d(1, 2);
  if (p == 4) {
    out[2] += d(0, 0) + d(1, 1);
    out[3] += d(0, 1) - d(1, 0);
  } else if (p >= 6) {
    out[2] += d(0, 0);
    out[3] += d(0, 1);
    out[4] += d(1, 0);
    out[5] += d(1, 1);
    if (p == 8) {
      out[6] += d(2, 0);
      out[7] += d(2, 1);
    }
  }
}

MotionTrack MotionTrack::identity(int p, int frames) {
  MotionTrack t;
  t.p = p;
  t.per_pair.assign(static_cast<std::size_t>(std::max(frames - 1, 0)), MotionParams::identity(p));
  return t;
}

std::vector<Homography> composed_transforms(const MotionTrack& track) {
  std::vector<Homography> out;
  out.reserve(track.per_pair.size() + 1);
  out.push_back(Homography::Identity());
  for (const auto& m : track.per_pair) {
    if (m.p != track.p) throw Error(ErrorCode::InvariantViolation, "motion track mixes complexities");
    out.push_back(compose(out.back(), expand_to_homography(m)));
  }
  return out;
}

Vec3 compensated_coord(const Homography& h, const Vec3& base, double px, double py, const Geometry& g) {
  const Point mapped = apply(h, Point(px, py));
  // Adding the displacement keeps the identity transform bit-exact.
  return {base[0] + (mapped.x() - px) / g.width, base[1] + (mapped.y() - py) / g.height, base[2]};
}

SampleSet compensate_samples(const SampleSet& s, const MotionTrack& track) {
  if (track.frames() != s.geometry.frames) {
    throw Error(ErrorCode::ShapeMismatch, "motion track covers " + std::to_string(track.frames()) +
                                              " frames, samples have " + std::to_string(s.geometry.frames));
  }
  const auto transforms = composed_transforms(track);
  SampleSet out = s;
  for (std::size_t n = 0; n < s.size(); ++n) {
    const RasterIndex& r = s.raster[n];
    if (r.t == track.reference_frame) continue;
    out.coords[n] = compensated_coord(transforms[r.t], s.coords[n], r.i, r.j, s.geometry);
  }
  return out;
}

std::vector<Vec3> transform_kernel_centers(std::span<const Vec3> centers, const MotionTrack& track,
                                           const Geometry& g) {
  if (track.frames() != g.frames) {
    throw Error(ErrorCode::ShapeMismatch, "motion track does not match geometry");
  }
  const auto transforms = composed_transforms(track);
  std::vector<Vec3> out(centers.begin(), centers.end());
  for (auto& mu : out) {
    const int f = std::clamp(static_cast<int>(std::lround(mu[2] * g.frames)), 0, g.frames - 1);
    if (f == track.reference_frame) continue;
    mu = compensated_coord(transforms[f], mu, mu[0] * g.width, mu[1] * g.height, g);
  }
  return out;
}

}  // namespace smoe::pmm
