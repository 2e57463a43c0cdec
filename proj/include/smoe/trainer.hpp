#pragma once

#include "smoe/adam.hpp"
#include "smoe/evaluator.hpp"
#include "smoe/gme.hpp"
#include "smoe/metrics.hpp"
#include "smoe/model.hpp"
#include "smoe/pmm.hpp"
#include "smoe/video_io.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace smoe::train {

struct LearningRates {
  double chol = 1.0;
  double pi = 1e-4;
  double mu = 1e-3;
  double experts = 1e-3;
  double motion = 1e-3;
};

struct TrainConfig {
  GridInit grid{8, 8, 4};
  int p = 0;  // 0 disables motion compensation
  bool train_motion = false;
  bool slopes = false;
  LearningRates lr;
  long pretrain_iters = 10000;
  int sparsify_steps = 50;
  long iters_per_step = 1000;
  long finetune_iters = 200;
  std::array<double, 2> s_range{1.0, 150.0};
  int batch_frames = 4;
  std::uint64_t seed = 0;
  AdamConfig adam;
  gme::RansacConfig ransac;
  int gme_grid_step = 8;
  double cull_margin = 40.0;
  metrics::SsimConfig ssim;
};

/// Throws InvalidArgument when a field is out of range.
void validate(const TrainConfig& cfg);

/// Reads key=value lines ('#' starts a comment) on top of `base`.
TrainConfig parse_config(std::istream& in, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

double lambda_schedule(int step, const TrainConfig& cfg);

enum class Stage { Pretrain, Sparsify, Finetune };
std::string_view to_string(Stage s);

struct HistoryRow {
  Stage stage = Stage::Pretrain;
  long iter = 0;         // global iteration index, from 1
  double loss = 0.0;     // before the optimizer step
  double ssim_loss = 0.0;
  double sparsity_loss = 0.0;
  std::size_t kernels = 0;  // after pruning
};

struct TrainReport {
  std::vector<HistoryRow> history;
  double psnr = 0.0;
  double ssim = 0.0;
  double ssim_db = 0.0;
  std::array<double, 3> stage_seconds{};
  bool target_reached = true;
  int sparsify_steps_run = 0;
};

void write_report_csv(const TrainReport& r, std::ostream& out);

/// Evaluation coordinates of every frame: the raster grid, moved into the
/// reference frame when a track is given.
std::vector<FrameCoords> frame_coordinates(const Geometry& g, const pmm::MotionTrack* track);

struct Gradients {
  std::vector<KernelGrad> kernels;
  std::vector<std::array<double, 8>> motion;  // per frame pair, first p entries used
  metrics::LossBreakdown loss;
};

/// Loss and its exact gradient. `frames[t]` holds the coordinates of frame t.
/// With a non-null `track`, `frames` must be frame_coordinates(g, track) and
/// gradients of the motion parameters are filled in too.
Gradients gradients(const SmoeModel& model, std::span<const FrameCoords> frames, const VideoVolume& target,
                    double lambda_s, std::span<const int> frame_set, const metrics::SsimConfig& ssim = {},
                    const pmm::MotionTrack* track = nullptr, const EvalOptions& eval = {});

/// Loss only, same conventions as gradients().
metrics::LossBreakdown evaluate_loss(const SmoeModel& model, std::span<const FrameCoords> frames,
                                     const VideoVolume& target, double lambda_s, std::span<const int> frame_set,
                                     const metrics::SsimConfig& ssim = {}, const EvalOptions& eval = {});

/// Reconstructions of all frames.
std::vector<Frame> reconstruct_video(const SmoeModel& model, std::span<const FrameCoords> frames,
                                     const EvalOptions& eval = {});

struct FinalMetrics {
  double psnr = 0.0;
  double ssim = 0.0;  // channel-weighted, averaged over frames
  double ssim_db = 0.0;
  std::vector<double> frame_psnr;
  std::vector<double> frame_ssim;
};

FinalMetrics final_metrics(const VideoVolume& target, std::span<const Frame> rec, const metrics::SsimConfig& cfg = {});

struct TrainResult {
  SmoeModel model;
  std::optional<pmm::MotionTrack> track;
  TrainReport report;
};

using Progress = std::function<void(const HistoryRow&)>;

struct PipelineOptions {
  std::optional<pmm::MotionTrack> initial_track;  // skips motion estimation
  std::optional<std::size_t> target_kernels;      // stop sparsifying once reached
  Progress progress;
};

TrainResult run_pipeline(const VideoVolume& v, const TrainConfig& cfg, const PipelineOptions& opts = {});

/// run_pipeline that ends sparsification at the first step whose kernel
/// count is at or below target after some pruning happened in that stage.
/// report.target_reached is false when the schedule ran out first.
TrainResult sparsify_to_target(const VideoVolume& v, const TrainConfig& cfg, std::size_t target_kernels,
                               PipelineOptions opts = {});

}  // namespace smoe::train
