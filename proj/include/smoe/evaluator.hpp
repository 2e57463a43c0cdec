#pragma once

#include "smoe/model.hpp"
#include "smoe/video_io.hpp"

#include <span>
#include <vector>

namespace smoe {

/// Coordinates of one frame's samples, indexed by raster position.
struct FrameCoords {
  int width = 0;
  int height = 0;
  std::vector<Vec3> coords;
};

FrameCoords frame_coords(const SampleSet& samples, int t);

/// Gradient of a scalar with respect to one kernel's parameters.
struct KernelGrad {
  Vec3 mu{};
  std::array<double, 6> chol{};
  double pi = 0.0;
  Vec3 m0{};
  Mat3 slopes{};
};

struct EvalOptions {
  // Kernels whose gate is provably below exp(-cull_margin) times the
  // strongest gate everywhere in a tile are skipped.
  double cull_margin = 40.0;
  int tile_size = 8;
};

/// Tile-based forward/adjoint evaluation of the gated expert sum over full
/// frames. Each tile first bounds every kernel's log-gate over the tile's
/// coordinate box and keeps only kernels that can matter.
class FrameEvaluator {
 public:
  explicit FrameEvaluator(const SmoeModel& model, EvalOptions opts = {});

  /// Prediction for every pixel. With `retain`, gating weights are kept for
  /// a following backward() on the same coordinates.
  Frame forward(const FrameCoords& fc, bool retain = false);

  /// Index of the kernel with the largest gate at each pixel (ties: lowest index).
  std::vector<int> dominant_kernels(const FrameCoords& fc);

  /// Accumulates dL/dparams into `grads` (one entry per kernel) given dL/dpred.
  /// When `dcoords` is non-null it receives dL/dx per pixel.
  void backward(const FrameCoords& fc, const Frame& pred, const Frame& dpred, std::span<KernelGrad> grads,
                std::vector<Vec3>* dcoords);

 private:
  struct Tile {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    std::vector<int> candidates;
    std::vector<double> weights;  // pixel-major, candidates.size() per pixel
  };

  void build_tiles(const FrameCoords& fc);
  void select_candidates(const FrameCoords& fc, Tile& tile) const;
  void gather(const Tile& tile);
  template <bool Slopes>
  void forward_tile(const FrameCoords& fc, Tile& tile, bool retain, Frame& out);
  template <bool Slopes, bool Coords>
  void backward_tile(const FrameCoords& fc, const Tile& tile, const Frame& pred, const Frame& dpred,
                     std::vector<Vec3>* dcoords);

  const SmoeModel& model_;
  EvalOptions opts_;
  bool slopes_ = false;
  bool retained_ = false;
  // per-kernel packed parameters
  std::vector<double> log_pi_, lam_min_, lam_max_;
  std::vector<Tile> tiles_;
  // candidate-local parameter block, field-major
  std::vector<double> local_;
  std::size_t local_stride_ = 0;
  std::vector<double> scratch_;
  std::vector<double> acc_;
};

}  // namespace smoe
