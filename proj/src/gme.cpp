#include "smoe/gme.hpp"

#include "smoe/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace smoe::gme {

namespace {

// ---------------------------------------------------------------- block matching

Plane downsample(const Plane& in) {
  Plane out(in.width / 2, in.height / 2);
  for (int j = 0; j < out.height; ++j)
    for (int i = 0; i < out.width; ++i)
      out.at(i, j) = 0.25 * (in.at(2 * i, 2 * j) + in.at(2 * i + 1, 2 * j) + in.at(2 * i, 2 * j + 1) +
                             in.at(2 * i + 1, 2 * j + 1));
  return out;
}

// Mean absolute difference between the block of `a` whose top-left
// corner is (x0, y0) and the block of `b` displaced by (dx, dy). Only pixel pairs
// inside both rasters count; too little overlap scores +inf.
double block_cost(const Plane& a, const Plane& b, int x0, int y0, int size, int dx, int dy) {
  double sum = 0.0;
  int count = 0;
  for (int y = y0; y < y0 + size; ++y) {
    if (y < 0 || y >= a.height || y + dy < 0 || y + dy >= b.height) continue;
    for (int x = x0; x < x0 + size; ++x) {
      if (x < 0 || x >= a.width || x + dx < 0 || x + dx >= b.width) continue;
      const double d = a.at(x, y) - b.at(x + dx, y + dy);
      sum += std::abs(d);
      ++count;
    }
  }
  if (count * 2 < size * size) return std::numeric_limits<double>::infinity();
  return sum / count;
}

struct Displacement {
  int dx = 0;
  int dy = 0;
};

Displacement search(const Plane& a, const Plane& b, int cx, int cy, int block, int range, Displacement guess) {
  const int x0 = cx - block / 2;
  const int y0 = cy - block / 2;
  Displacement best = guess;
  double best_cost = std::numeric_limits<double>::infinity();
  int best_dist = std::numeric_limits<int>::max();
  for (int dy = guess.dy - range; dy <= guess.dy + range; ++dy)
    for (int dx = guess.dx - range; dx <= guess.dx + range; ++dx) {
      const double cost = block_cost(a, b, x0, y0, block, dx, dy);
      const int dist = (dx - guess.dx) * (dx - guess.dx) + (dy - guess.dy) * (dy - guess.dy);
      if (cost < best_cost || (cost == best_cost && dist < best_dist)) {
        best_cost = cost;
        best_dist = dist;
        best = {dx, dy};
      }
    }
  return best;
}

double bilinear(const Plane& p, double x, double y) {
  const int ix = std::min(static_cast<int>(x), p.width - 2);
  const int iy = std::min(static_cast<int>(y), p.height - 2);
  const double fx = x - ix, fy = y - iy;
  return (1 - fy) * ((1 - fx) * p.at(ix, iy) + fx * p.at(ix + 1, iy)) +
         fy * ((1 - fx) * p.at(ix, iy + 1) + fx * p.at(ix + 1, iy + 1));
}

// Gauss-Newton refinement of an integer block match on the intensity
// residual, result clamped to half a pixel per axis. Exact matches stay put.
std::array<double, 2> subpixel_offset(const Plane& a, const Plane& b, int x0, int y0, int size, Displacement d) {
  double sx = 0.0, sy = 0.0;
  for (int iter = 0; iter < 4; ++iter) {
    double gxx = 0, gxy = 0, gyy = 0, bx = 0, by = 0;
    for (int y = y0; y < y0 + size; ++y)
      for (int x = x0; x < x0 + size; ++x) {
        const double u = x + d.dx + sx, v = y + d.dy + sy;
        if (y < 0 || x < 0 || y >= a.height || x >= a.width) continue;
        if (u < 1.0 || v < 1.0 || u > b.width - 2.0 || v > b.height - 2.0) continue;
        const double e = a.at(x, y) - bilinear(b, u, v);
        const double gx = 0.5 * (bilinear(b, u + 1, v) - bilinear(b, u - 1, v));
        const double gy = 0.5 * (bilinear(b, u, v + 1) - bilinear(b, u, v - 1));
        gxx += gx * gx;
        gxy += gx * gy;
        gyy += gy * gy;
        bx += gx * e;
        by += gy * e;
      }
    const double det = gxx * gyy - gxy * gxy;
    if (!(det > 1e-12 * (gxx + gyy) * (gxx + gyy)) || (bx == 0.0 && by == 0.0)) break;
    const double step_x = (gyy * bx - gxy * by) / det;
    const double step_y = (gxx * by - gxy * bx) / det;
    sx = std::clamp(sx + step_x, -0.5, 0.5);
    sy = std::clamp(sy + step_y, -0.5, 0.5);
    if (std::abs(step_x) + std::abs(step_y) < 1e-4) break;
  }
  return {sx, sy};
}

// ---------------------------------------------------------------- model fitting

// Isotropic similarity normalisation: centroid to origin, mean distance sqrt(2).
Eigen::Matrix3d normaliser(std::span<const pmm::Point> pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = s;
  t(1, 1) = s;
  t(0, 2) = -s * centroid.x();
  t(1, 2) = -s * centroid.y();
  return t;
}

pmm::Point transform(const Eigen::Matrix3d& t, const pmm::Point& p) {
  return {t(0, 0) * p.x() + t(0, 1) * p.y() + t(0, 2), t(1, 0) * p.x() + t(1, 1) * p.y() + t(1, 2)};
}

bool collinear(const pmm::Point& a, const pmm::Point& b, const pmm::Point& c) {
  const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
  return std::abs(area) <= 1e-9 * scale;
}

bool any_collinear_triple(std::span<const pmm::Point> pts) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      for (std::size_t k = j + 1; k < pts.size(); ++k)
        if (collinear(pts[i], pts[j], pts[k])) return true;
  return false;
}

std::optional<pmm::MotionParams> fit_translation(std::span<const Correspondence> c) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (const auto& k : c) sum += k.dst - k.src;
  sum /= static_cast<double>(c.size());
  pmm::MotionParams m = pmm::MotionParams::identity(2);
  m.values[0] = sum.x();
  m.values[1] = sum.y();
  return m;
}

// Similarity (p=4) and affine (p=6) models are linear in their parameters.
std::optional<pmm::MotionParams> fit_linear(std::span<const Correspondence> c, int p) {
  std::vector<pmm::Point> all;
  for (const auto& k : c) {
    all.push_back(k.src);
    all.push_back(k.dst);
  }
  const Eigen::Matrix3d t = normaliser(all);
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, p);
  Eigen::VectorXd rhs(2 * n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const pmm::Point s = transform(t, c[static_cast<std::size_t>(r)].src);
    const pmm::Point d = transform(t, c[static_cast<std::size_t>(r)].dst);
    // parameter order h2, h5, h0, h1 [, h3, h4]
    a(2 * r, 0) = 1.0;
    a(2 * r + 1, 1) = 1.0;
    a(2 * r, 2) = s.x();
    a(2 * r, 3) = s.y();
    if (p == 4) {
      a(2 * r + 1, 2) = s.y();
      a(2 * r + 1, 3) = -s.x();
    } else {
      a(2 * r + 1, 4) = s.x();
      a(2 * r + 1, 5) = s.y();
    }
    rhs(2 * r) = d.x();
    rhs(2 * r + 1) = d.y();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) return std::nullopt;
  const Eigen::VectorXd theta = qr.solve(rhs);
  pmm::MotionParams local;
  local.p = p;
  for (int k = 0; k < p; ++k) local.values[static_cast<std::size_t>(k)] = theta(k);
  const Eigen::Matrix3d h = t.inverse() * pmm::expand_to_homography(local) * t;
  return pmm::extract(h, p);
}

// Normalised DLT for the full homography.
std::optional<pmm::MotionParams> fit_homography(std::span<const Correspondence> c) {
  std::vector<pmm::Point> src, dst;
  for (const auto& k : c) {
    src.push_back(k.src);
    dst.push_back(k.dst);
  }
  if (c.size() == 4 && (any_collinear_triple(src) || any_collinear_triple(dst))) return std::nullopt;
  const Eigen::Matrix3d ts = normaliser(src);
  const Eigen::Matrix3d td = normaliser(dst);
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (Eigen::Index r = 0; r < n; ++r) {
    const pmm::Point s = transform(ts, src[static_cast<std::size_t>(r)]);
    const pmm::Point d = transform(td, dst[static_cast<std::size_t>(r)]);
    a.row(2 * r) << -s.x(), -s.y(), -1.0, 0.0, 0.0, 0.0, d.x() * s.x(), d.x() * s.y(), d.x();
    a.row(2 * r + 1) << 0.0, 0.0, 0.0, -s.x(), -s.y(), -1.0, d.y() * s.x(), d.y() * s.y(), d.y();
  }
  if (n == 4) a.conservativeResize(9, 9), a.row(8).setZero();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(0) <= 0.0 || sv(7) <= 1e-10 * sv(0)) return std::nullopt;
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d full = td.inverse() * hn * ts;
  if (std::abs(full(2, 2)) < 1e-12 * full.cwiseAbs().maxCoeff()) return std::nullopt;
  return pmm::extract(full, 8);
}

std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> picked;
  picked.reserve(k);
  while (picked.size() < k) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t idx = pick(rng);
    if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
  }
  return picked;
}

}  // namespace

std::vector<Correspondence> motion_field(const Plane& a, const Plane& b, int grid_step, const BlockMatchConfig& cfg) {
  if (a.width != b.width || a.height != b.height) throw Error(ErrorCode::ShapeMismatch, "frames differ in size");
  if (grid_step < 4) throw Error(ErrorCode::InvalidArgument, "grid step must be at least 4 pixels");
  if (a.width < cfg.block || a.height < cfg.block) {
    throw Error(ErrorCode::FrameTooSmall, std::to_string(a.width) + "x" + std::to_string(a.height) +
                                              " frame is smaller than one " + std::to_string(cfg.block) +
                                              "-pixel block");
  }
  std::vector<Plane> pyr_a{a}, pyr_b{b};
  while (static_cast<int>(pyr_a.size()) < cfg.levels) {
    const Plane& top = pyr_a.back();
    if (top.width / 2 < cfg.block || top.height / 2 < cfg.block) break;
    pyr_a.push_back(downsample(top));
    pyr_b.push_back(downsample(pyr_b.back()));
  }
  const int levels = static_cast<int>(pyr_a.size());
  const int margin = cfg.block / 2;
  std::vector<Correspondence> out;
  for (int py = margin; py <= a.height - margin; py += grid_step)
    for (int px = margin; px <= a.width - margin; px += grid_step) {
      Displacement d;
      for (int l = levels - 1; l >= 0; --l) {
        const Displacement guess{d.dx * (l == levels - 1 ? 0 : 2), d.dy * (l == levels - 1 ? 0 : 2)};
        d = search(pyr_a[static_cast<std::size_t>(l)], pyr_b[static_cast<std::size_t>(l)], px >> l, py >> l,
                   cfg.block, cfg.search, guess);
      }
      double sx = 0.0, sy = 0.0;
      if (cfg.subpixel) {
        const auto [ox, oy] = subpixel_offset(a, b, px - margin, py - margin, cfg.block, d);
        sx = ox;
        sy = oy;
      }
      const pmm::Point src(px, py);
      out.push_back({src, src + pmm::Point(d.dx + sx, d.dy + sy)});
    }
  return out;
}

std::optional<pmm::MotionParams> fit_direct(std::span<const Correspondence> c, int p) {
  if (static_cast<int>(c.size()) < pmm::minimal_sample_size(p)) return std::nullopt;
  switch (p) {
    case 2: return fit_translation(c);
    case 4:
    case 6: return fit_linear(c, p);
    default: return fit_homography(c);
  }
}

double reprojection_error(const pmm::MotionParams& m, const Correspondence& c) {
  return (pmm::apply(m, c.src) - c.dst).norm();
}

double reprojection_objective(const pmm::MotionParams& m, std::span<const Correspondence> c) {
  const pmm::Homography h = pmm::expand_to_homography(m);
  double s = 0.0;
  for (const auto& k : c) s += (pmm::apply(h, k.src) - k.dst).squaredNorm();
  return s;
}

pmm::MotionParams refine(const pmm::MotionParams& m, std::span<const Correspondence> inliers) {
  const int p = m.p;
  if (static_cast<int>(inliers.size()) < pmm::minimal_sample_size(p)) {
    throw Error(ErrorCode::InsufficientCorrespondences, "refinement needs at least " +
                                                            std::to_string(pmm::minimal_sample_size(p)) +
                                                            " correspondences");
  }
  const double start = reprojection_objective(m, inliers);
  if (p == 2) {
    // Least squares for a pure translation is the mean displacement.
    const pmm::MotionParams closed = *fit_translation(inliers);
    return reprojection_objective(closed, inliers) <= start ? closed : m;
  }
  pmm::MotionParams current = m;
  double objective = start;
  const auto n = static_cast<Eigen::Index>(inliers.size());
  for (int iter = 0; iter < 20; ++iter) {
    const pmm::Homography h = pmm::expand_to_homography(current);
    Eigen::MatrixXd jac(2 * n, p);
    Eigen::VectorXd res(2 * n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const Correspondence& c = inliers[static_cast<std::size_t>(r)];
      const Eigen::Vector3d u(c.src.x(), c.src.y(), 1.0);
      const Eigen::Vector3d q = h * u;
      if (std::abs(q.z()) < pmm::kDegenerateDenominator) {
        throw Error(ErrorCode::DegenerateDenominator, "projective scale vanishes during refinement");
      }
      res(2 * r) = q.x() / q.z() - c.dst.x();
      res(2 * r + 1) = q.y() / q.z() - c.dst.y();
      for (int axis = 0; axis < 2; ++axis) {
        pmm::Homography d = pmm::Homography::Zero();
        d.row(axis) = u.transpose() / q.z();
        d.row(2) = -(axis == 0 ? q.x() : q.y()) / (q.z() * q.z()) * u.transpose();
        std::array<double, 8> g{};
        pmm::accumulate_free_gradient(d, p, g);
        for (int k = 0; k < p; ++k) jac(2 * r + axis, k) = g[static_cast<std::size_t>(k)];
      }
    }
    // Column scaling keeps the perspective terms comparable to the shifts.
    Eigen::VectorXd scale(p);
    for (int k = 0; k < p; ++k) {
      const double norm = jac.col(k).norm();
      scale(k) = norm > 0.0 ? 1.0 / norm : 1.0;
    }
    const Eigen::MatrixXd scaled = jac * scale.asDiagonal();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    qr.setThreshold(1e-12);
    if (qr.rank() < p) throw Error(ErrorCode::SingularNormalEquations, "re-projection Jacobian is rank deficient");
    const Eigen::VectorXd step = scale.asDiagonal() * qr.solve(-res);
    // Halve until the objective does not increase.
    double factor = 1.0;
    bool accepted = false;
    pmm::MotionParams trial = current;
    for (int halving = 0; halving < 12; ++halving, factor *= 0.5) {
      trial = current;
      for (int k = 0; k < p; ++k) trial.values[static_cast<std::size_t>(k)] += factor * step(k);
      double value;
      try {
        value = reprojection_objective(trial, inliers);
      } catch (const Error&) {
        continue;
      }
      if (value <= objective) {
        accepted = true;
        objective = value;
        break;
      }
    }
    if (!accepted) break;
    current = trial;
    if ((factor * step).norm() < 1e-10) break;
  }
  return current;
}

RansacResult ransac_fit(std::span<const Correspondence> c, int p, const RansacConfig& cfg) {
  if (!pmm::is_valid_complexity(p)) {
    throw Error(ErrorCode::InvalidArgument, "motion complexity must be 2, 4, 6 or 8");
  }
  if (cfg.iterations < 1 || !(cfg.inlier_threshold > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "RANSAC needs iterations >= 1 and a positive threshold");
  }
  const std::size_t minimal = static_cast<std::size_t>(pmm::minimal_sample_size(p));
  if (c.size() < minimal) {
    throw Error(ErrorCode::InsufficientCorrespondences, std::to_string(c.size()) + " correspondences, p=" +
                                                            std::to_string(p) + " needs " +
                                                            std::to_string(minimal));
  }
  std::mt19937_64 rng(cfg.seed);
  std::optional<pmm::MotionParams> best;
  std::size_t best_count = 0;
  double best_sum = std::numeric_limits<double>::infinity();
  std::vector<Correspondence> sample(minimal);

  auto score = [&](const pmm::MotionParams& m, std::size_t& count, double& sum) {
    count = 0;
    sum = 0.0;
    const pmm::Homography h = pmm::expand_to_homography(m);
    for (const auto& k : c) {
      const double den = h(2, 0) * k.src.x() + h(2, 1) * k.src.y() + 1.0;
      if (std::abs(den) < pmm::kDegenerateDenominator) continue;
      const double e = (pmm::apply(h, k.src) - k.dst).norm();
      if (e < cfg.inlier_threshold) {
        ++count;
        sum += e;
      }
    }
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto idx = sample_indices(rng, c.size(), minimal);
    for (std::size_t k = 0; k < minimal; ++k) sample[k] = c[idx[k]];
    const auto hyp = fit_direct(sample, p);
    if (!hyp) continue;
    std::size_t count;
    double sum;
    score(*hyp, count, sum);
    if (count > best_count || (count == best_count && count > 0 && sum < best_sum)) {
      best = hyp;
      best_count = count;
      best_sum = sum;
    }
  }
  if (!best) throw Error(ErrorCode::DegenerateSample, "every minimal sample was degenerate");
  if (static_cast<double>(best_count) < cfg.min_inlier_fraction * static_cast<double>(c.size()) ||
      best_count < minimal) {
    throw Error(ErrorCode::NoConsensus, "best hypothesis has " + std::to_string(best_count) + " of " +
                                            std::to_string(c.size()) + " inliers");
  }

  RansacResult result;
  auto collect = [&](const pmm::MotionParams& m, std::vector<bool>& mask) {
    std::vector<Correspondence> in;
    mask.assign(c.size(), false);
    const pmm::Homography h = pmm::expand_to_homography(m);
    for (std::size_t k = 0; k < c.size(); ++k) {
      const double den = h(2, 0) * c[k].src.x() + h(2, 1) * c[k].src.y() + 1.0;
      if (std::abs(den) < pmm::kDegenerateDenominator) continue;
      if ((pmm::apply(h, c[k].src) - c[k].dst).norm() < cfg.inlier_threshold) {
        mask[k] = true;
        in.push_back(c[k]);
      }
    }
    return in;
  };

  pmm::MotionParams current = *best;
  std::vector<bool> mask;
  std::vector<Correspondence> inliers = collect(current, mask);
  // Refine on the consensus set and re-collect until the set settles.
  for (int round = 0; round < 3; ++round) {
    const pmm::MotionParams refined = refine(current, inliers);
    std::vector<bool> next_mask;
    std::vector<Correspondence> next = collect(refined, next_mask);
    if (next.size() < minimal || next.size() < inliers.size()) break;
    const bool settled = next_mask == mask;
    current = refined;
    mask = std::move(next_mask);
    inliers = std::move(next);
    if (settled) break;
  }
  result.params = current;
  result.inliers = mask;
  result.inlier_count = inliers.size();
  double total = 0.0;
  for (const auto& k : inliers) total += reprojection_error(current, k);
  result.mean_error = inliers.empty() ? 0.0 : total / static_cast<double>(inliers.size());
  return result;
}

TrackEstimate estimate_track_detailed(const VideoVolume& v, int p, const RansacConfig& cfg, int grid_step) {
  if (!pmm::is_valid_complexity(p)) throw Error(ErrorCode::InvalidArgument, "motion complexity must be 2, 4, 6 or 8");
  if (v.frames() < 2) throw Error(ErrorCode::InvalidArgument, "motion estimation needs at least two frames");
  TrackEstimate out;
  out.track.p = p;
  for (int t = 1; t < v.frames(); ++t) {
    try {
      const auto field = motion_field(v.luminance(t), v.luminance(t - 1), grid_step);
      RansacConfig pair_cfg = cfg;
      pair_cfg.seed = cfg.seed + static_cast<std::uint64_t>(t) * 0x9E3779B97F4A7C15ULL;
      const RansacResult r = ransac_fit(field, p, pair_cfg);
      out.track.per_pair.push_back(r.params);
      out.pair_errors.push_back(r.mean_error);
    } catch (const Error& e) {
      throw Error(e.code(), "frame pair " + std::to_string(t) + "->" + std::to_string(t - 1) + ": " + e.what());
    }
  }
  return out;
}

pmm::MotionTrack estimate_track(const VideoVolume& v, int p, const RansacConfig& cfg, int grid_step) {
  return estimate_track_detailed(v, p, cfg, grid_step).track;
}

}  // namespace smoe::gme
