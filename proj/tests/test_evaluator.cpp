#include "smoe/evaluator.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace smoe;

namespace {

// Linear functional sum(weight * prediction) used to exercise the adjoint.
double functional(const SmoeModel& m, const FrameCoords& fc, const Frame& weight) {
  FrameEvaluator eval(m);
  const Frame f = eval.forward(fc);
  double s = 0.0;
  for (int c = 0; c < 3; ++c)
    for (std::size_t n = 0; n < f.channels[c].data.size(); ++n) s += weight.channels[c].data[n] * f.channels[c].data[n];
  return s;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), 1e-6); }

}  // namespace

TEST_SUITE("evaluator") {
  TEST_CASE("backward matches finite differences") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Geometry g{11, 9, 2};
    const SampleSet s = to_samples(VideoVolume(g));
    for (bool slopes : {false, true}) {
      const SmoeModel m = testing::random_model(rng, 5, g, slopes);
      const FrameCoords fc = frame_coords(s, 1);
      Frame weight(g.width, g.height);
      for (auto& p : weight.channels)
        for (double& a : p.data) a = u(rng);

      FrameEvaluator eval(m);
      const Frame pred = eval.forward(fc, true);
      std::vector<KernelGrad> grads(m.size());
      std::vector<Vec3> dcoords;
      eval.backward(fc, pred, weight, grads, &dcoords);

      const double h = 1e-6;
      double worst = 0.0;
      const auto probe = [&](double analytic, auto&& field) {
        SmoeModel mm = m;
        double& x = field(mm);
        x += h;
        const double plus = functional(mm, fc, weight);
        x -= 2 * h;
        const double minus = functional(mm, fc, weight);
        worst = std::max(worst, rel_err(analytic, (plus - minus) / (2 * h)));
      };
      for (std::size_t k = 0; k < m.size(); ++k) {
        for (int d = 0; d < 3; ++d) probe(grads[k].mu[d], [&](SmoeModel& x) -> double& { return x.kernels[k].mu[d]; });
        for (int e = 0; e < 6; ++e)
          probe(grads[k].chol[e], [&](SmoeModel& x) -> double& { return x.kernels[k].chol[e]; });
        probe(grads[k].pi, [&](SmoeModel& x) -> double& { return x.kernels[k].pi; });
        for (int c = 0; c < 3; ++c) probe(grads[k].m0[c], [&](SmoeModel& x) -> double& { return x.kernels[k].m0[c]; });
        if (slopes)
          for (int c = 0; c < 3; ++c)
            for (int d = 0; d < 3; ++d)
              probe(grads[k].slopes[c][d], [&](SmoeModel& x) -> double& { return x.kernels[k].slopes[c][d]; });
      }
      CHECK(worst < 1e-5);

      REQUIRE(dcoords.size() == fc.coords.size());
      double worst_x = 0.0;
      for (std::size_t n : {0u, 17u, 50u, 98u}) {
        for (int d = 0; d < 3; ++d) {
          FrameCoords shifted = fc;
          shifted.coords[n][d] += h;
          const double plus = functional(m, shifted, weight);
          shifted.coords[n][d] -= 2 * h;
          const double minus = functional(m, shifted, weight);
          worst_x = std::max(worst_x, rel_err(dcoords[n][d], (plus - minus) / (2 * h)));
        }
      }
      CHECK(worst_x < 1e-5);
    }
  }

  TEST_CASE("culling leaves predictions unchanged on a wide spread of kernel sizes") {
    std::mt19937_64 rng(22);
    const Geometry g{40, 33, 2};
    const SampleSet s = to_samples(VideoVolume(g));
    SmoeModel m = testing::random_model(rng, 40, g, false);
    for (std::size_t k = 0; k < m.size(); ++k)
      for (double& a : m.kernels[k].chol) a *= 1.0 + static_cast<double>(k);
    EvalOptions loose;
    loose.cull_margin = 1e6;
    for (int t = 0; t < 2; ++t) {
      const FrameCoords fc = frame_coords(s, t);
      FrameEvaluator culled(m), full(m, loose);
      const Frame a = culled.forward(fc), b = full.forward(fc);
      for (int c = 0; c < 3; ++c)
        for (std::size_t n = 0; n < a.channels[c].data.size(); ++n)
          CHECK(std::abs(a.channels[c].data[n] - b.channels[c].data[n]) < 1e-12);
    }
  }

  TEST_CASE("frame coordinates follow the raster") {
    const Geometry g{4, 3, 2};
    const FrameCoords fc = frame_coords(to_samples(VideoVolume(g)), 1);
    CHECK(fc.width == 4);
    CHECK(fc.height == 3);
    REQUIRE(fc.coords.size() == 12);
    CHECK(fc.coords[0] == Vec3{0.0, 0.0, 0.5});
    CHECK(fc.coords[7] == Vec3{0.75, 1.0 / 3.0, 0.5});
  }
}
