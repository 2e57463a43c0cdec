#pragma once

#include "smoe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace smoe::testing {

struct GradientCheck {
  double worst = 0.0;  // largest relative error seen
  std::string where;   // parameter behind `worst`
  int partials = 0;
};

/// Compares every analytic partial of the loss over all frames with central
/// differences of step h. Relative error uses max(|analytic|, 1e-8) below.
inline GradientCheck check_gradients(const SmoeModel& model, const std::optional<pmm::MotionTrack>& track,
                                     const VideoVolume& v, double lambda_s, double h = 1e-4) {
  std::vector<int> all(static_cast<std::size_t>(v.frames()));
  std::iota(all.begin(), all.end(), 0);
  const auto coords = [&](const std::optional<pmm::MotionTrack>& tr) {
    return train::frame_coordinates(v.geometry(), tr ? &*tr : nullptr);
  };
  const auto loss = [&](const SmoeModel& m, const std::optional<pmm::MotionTrack>& tr) {
    return train::evaluate_loss(m, coords(tr), v, lambda_s, all).total;
  };
  const auto base_frames = coords(track);
  const train::Gradients g =
      train::gradients(model, base_frames, v, lambda_s, all, {}, track ? &*track : nullptr);

  GradientCheck out;
  const auto compare = [&](double analytic, double plus, double minus, const std::string& name) {
    const double fd = (plus - minus) / (2.0 * h);
    const double rel = std::abs(analytic - fd) / std::max(std::abs(analytic), 1e-8);
    ++out.partials;
    if (rel > out.worst || std::isnan(rel)) {
      out.worst = std::isnan(rel) ? INFINITY : rel;
      out.where = name + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(fd);
    }
  };
  const auto probe = [&](double analytic, const std::string& name, auto&& field) {
    SmoeModel m = model;
    double& x = field(m);
    const double x0 = x;
    x = x0 + h;
    const double plus = loss(m, track);
    x = x0 - h;
    const double minus = loss(m, track);
    compare(analytic, plus, minus, name);
  };

  for (std::size_t k = 0; k < model.kernels.size(); ++k) {
    const std::string tag = "kernel " + std::to_string(k) + " ";
    const KernelGrad& gk = g.kernels[k];
    for (int d = 0; d < 3; ++d)
      probe(gk.mu[d], tag + "mu" + std::to_string(d), [&](SmoeModel& m) -> double& { return m.kernels[k].mu[d]; });
    for (int e = 0; e < 6; ++e)
      probe(gk.chol[e], tag + "chol" + std::to_string(e),
            [&](SmoeModel& m) -> double& { return m.kernels[k].chol[e]; });
    probe(gk.pi, tag + "pi", [&](SmoeModel& m) -> double& { return m.kernels[k].pi; });
    for (int c = 0; c < 3; ++c)
      probe(gk.m0[c], tag + "m0_" + std::to_string(c), [&](SmoeModel& m) -> double& { return m.kernels[k].m0[c]; });
    if (model.slopes_enabled)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d)
          probe(gk.slopes[c][d], tag + "slope" + std::to_string(c) + std::to_string(d),
                [&](SmoeModel& m) -> double& { return m.kernels[k].slopes[c][d]; });
  }
  if (track) {
    for (std::size_t n = 0; n < track->per_pair.size(); ++n)
      for (int q = 0; q < track->p; ++q) {
        auto tr = track;
        double& x = tr->per_pair[n].values[static_cast<std::size_t>(q)];
        const double x0 = x;
        x = x0 + h;
        const double plus = loss(model, tr);
        x = x0 - h;
        const double minus = loss(model, tr);
        compare(g.motion[n][static_cast<std::size_t>(q)], plus, minus,
                "pair " + std::to_string(n) + " motion" + std::to_string(q));
      }
  }
  return out;
}

}  // namespace smoe::testing
