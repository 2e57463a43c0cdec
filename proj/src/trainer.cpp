#include "smoe/trainer.hpp"

#include "smoe/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace smoe::train {

double lambda_schedule(int step, const TrainConfig& cfg) {
  if (step < 1 || step > cfg.sparsify_steps) {
    throw Error(ErrorCode::InvalidArgument, "sparsification step " + std::to_string(step) + " outside 1.." +
                                                std::to_string(cfg.sparsify_steps));
  }
  const auto [s_min, s_max] = cfg.s_range;
  const double s =
      cfg.sparsify_steps == 1 ? s_min : s_min + (step - 1) * (s_max - s_min) / (cfg.sparsify_steps - 1);
  return s * s / static_cast<double>(cfg.grid.count());
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Pretrain: return "pretrain";
    case Stage::Sparsify: return "sparsify";
    case Stage::Finetune: return "finetune";
  }
  return "?";
}

void write_report_csv(const TrainReport& r, std::ostream& out) {
  out << "stage,iter,loss,ssim_loss,sparsity_loss,K\n";
  const auto precision = out.precision(17);
  for (const HistoryRow& row : r.history) {
    out << to_string(row.stage) << ',' << row.iter << ',' << row.loss << ',' << row.ssim_loss << ','
        << row.sparsity_loss << ',' << row.kernels << '\n';
  }
  out.precision(precision);
}

std::vector<FrameCoords> frame_coordinates(const Geometry& g, const pmm::MotionTrack* track) {
  std::vector<pmm::Homography> transforms;
  if (track) {
    if (track->frames() != g.frames) {
      throw Error(ErrorCode::ShapeMismatch, "motion track covers " + std::to_string(track->frames()) +
                                                " frames, video has " + std::to_string(g.frames));
    }
    transforms = pmm::composed_transforms(*track);
  }
  std::vector<FrameCoords> out(static_cast<std::size_t>(g.frames));
  for (int t = 0; t < g.frames; ++t) {
    FrameCoords& fc = out[static_cast<std::size_t>(t)];
    fc.width = g.width;
    fc.height = g.height;
    fc.coords.reserve(g.pixels_per_frame());
    const bool moved = track && t != track->reference_frame;
    for (int j = 0; j < g.height; ++j)
      for (int i = 0; i < g.width; ++i) {
        const Vec3 base = normalized_coord(g, i, j, t);
        fc.coords.push_back(moved ? pmm::compensated_coord(transforms[static_cast<std::size_t>(t)], base, i, j, g)
                                  : base);
      }
  }
  return out;
}

namespace {

void check_frame_set(std::span<const int> frame_set, std::size_t frames, const VideoVolume& target) {
  if (frame_set.empty()) throw Error(ErrorCode::InvalidArgument, "frame set is empty");
  if (frames != static_cast<std::size_t>(target.frames())) {
    throw Error(ErrorCode::ShapeMismatch, "coordinates for " + std::to_string(frames) + " frames, video has " +
                                              std::to_string(target.frames()));
  }
  for (int t : frame_set) {
    if (t < 0 || t >= target.frames()) throw Error(ErrorCode::OutOfBounds, "frame " + std::to_string(t));
  }
}

bool finite(const Vec3& v) { return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]); }

void check_finite(const Gradients& g) {
  if (!std::isfinite(g.loss.total)) throw Error(ErrorCode::NonFinite, "loss is not finite");
  for (const KernelGrad& k : g.kernels) {
    if (!finite(k.mu)) throw Error(ErrorCode::NonFinite, "centre gradient is not finite");
    for (double c : k.chol)
      if (!std::isfinite(c)) throw Error(ErrorCode::NonFinite, "precision factor gradient is not finite");
    if (!std::isfinite(k.pi)) throw Error(ErrorCode::NonFinite, "mixing weight gradient is not finite");
    if (!finite(k.m0) || !finite(k.slopes[0]) || !finite(k.slopes[1]) || !finite(k.slopes[2])) {
      throw Error(ErrorCode::NonFinite, "expert gradient is not finite");
    }
  }
  for (const auto& m : g.motion)
    for (double v : m)
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "motion gradient is not finite");
}

// Adjoint of pixel (i, j) -> base + (apply(P, (i, j)) - (i, j)) / (W, H) with
// respect to the raw (unnormalised) product P of the frame's pair transforms.
pmm::Homography product_adjoint(const pmm::Homography& product, const FrameCoords& fc,
                                const std::vector<Vec3>& dcoords) {
  pmm::Homography g = pmm::Homography::Zero();
  const double inv_w = 1.0 / fc.width;
  const double inv_h = 1.0 / fc.height;
  std::size_t idx = 0;
  for (int j = 0; j < fc.height; ++j)
    for (int i = 0; i < fc.width; ++i, ++idx) {
      const double a = dcoords[idx][0] * inv_w;
      const double b = dcoords[idx][1] * inv_h;
      if (a == 0.0 && b == 0.0) continue;
      const Eigen::Vector3d u(i, j, 1.0);
      const Eigen::Vector3d n = product * u;
      const double inv = 1.0 / n.z();
      g.row(0) += (a * inv) * u.transpose();
      g.row(1) += (b * inv) * u.transpose();
      g.row(2) -= ((a * n.x() + b * n.y()) * inv * inv) * u.transpose();
    }
  return g;
}

}  // namespace

Gradients gradients(const SmoeModel& model, std::span<const FrameCoords> frames, const VideoVolume& target,
                    double lambda_s, std::span<const int> frame_set, const metrics::SsimConfig& ssim,
                    const pmm::MotionTrack* track, const EvalOptions& eval) {
  check_frame_set(frame_set, frames.size(), target);
  Gradients out;
  out.kernels.assign(model.kernels.size(), KernelGrad{});
  for (KernelGrad& k : out.kernels) k.pi = lambda_s;
  std::vector<pmm::Homography> pairs;
  if (track) {
    if (track->frames() != target.frames()) throw Error(ErrorCode::ShapeMismatch, "motion track does not match video");
    out.motion.assign(track->per_pair.size(), std::array<double, 8>{});
    for (const auto& m : track->per_pair) pairs.push_back(pmm::expand_to_homography(m));
  }

  FrameEvaluator evaluator(model, eval);
  const double scale = 1.0 / static_cast<double>(frame_set.size());
  double ssim_sum = 0.0;
  std::vector<Vec3> dcoords;
  for (int t : frame_set) {
    const FrameCoords& fc = frames[static_cast<std::size_t>(t)];
    const Frame pred = evaluator.forward(fc, true);
    const Frame truth = target.frame(t);
    Frame dpred(fc.width, fc.height);
    double weighted = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double w = ssim.channel_weights[static_cast<std::size_t>(c)];
      Plane& grad = dpred.channels[static_cast<std::size_t>(c)];
      weighted += w * metrics::ssim_with_gradient(truth.channels[static_cast<std::size_t>(c)],
                                                  pred.channels[static_cast<std::size_t>(c)], grad, ssim);
      for (double& d : grad.data) d *= -w * scale;
    }
    out.loss.per_frame_ssim.push_back(weighted);
    ssim_sum += weighted;

    const bool motion = track && t != track->reference_frame;
    evaluator.backward(fc, pred, dpred, out.kernels, motion ? &dcoords : nullptr);
    if (!motion) continue;

    // Frame t reaches the reference through P_0 P_1 ... P_{t-1}.
    pmm::Homography product = pmm::Homography::Identity();
    for (int n = 0; n < t; ++n) product = product * pairs[static_cast<std::size_t>(n)];
    const pmm::Homography g = product_adjoint(product, fc, dcoords);
    pmm::Homography left = pmm::Homography::Identity();
    for (int n = 0; n < t; ++n) {
      pmm::Homography right = pmm::Homography::Identity();
      for (int r = n + 1; r < t; ++r) right = right * pairs[static_cast<std::size_t>(r)];
      const pmm::Homography d = left.transpose() * g * right.transpose();
      pmm::accumulate_free_gradient(d, track->p, out.motion[static_cast<std::size_t>(n)]);
      left = left * pairs[static_cast<std::size_t>(n)];
    }
  }
  out.loss.ssim_loss = 1.0 - ssim_sum * scale;
  out.loss.sparsity_loss = metrics::sparsity_loss(model, lambda_s);
  out.loss.total = out.loss.ssim_loss + out.loss.sparsity_loss;
  check_finite(out);
  return out;
}

std::vector<Frame> reconstruct_video(const SmoeModel& model, std::span<const FrameCoords> frames,
                                     const EvalOptions& eval) {
  FrameEvaluator evaluator(model, eval);
  std::vector<Frame> out;
  out.reserve(frames.size());
  for (const FrameCoords& fc : frames) out.push_back(evaluator.forward(fc));
  return out;
}

metrics::LossBreakdown evaluate_loss(const SmoeModel& model, std::span<const FrameCoords> frames,
                                     const VideoVolume& target, double lambda_s, std::span<const int> frame_set,
                                     const metrics::SsimConfig& ssim, const EvalOptions& eval) {
  check_frame_set(frame_set, frames.size(), target);
  FrameEvaluator evaluator(model, eval);
  metrics::LossBreakdown out;
  double sum = 0.0;
  for (int t : frame_set) {
    const double s = metrics::weighted_ssim(target.frame(t), evaluator.forward(frames[static_cast<std::size_t>(t)]), ssim);
    out.per_frame_ssim.push_back(s);
    sum += s;
  }
  out.ssim_loss = 1.0 - sum / static_cast<double>(frame_set.size());
  out.sparsity_loss = metrics::sparsity_loss(model, lambda_s);
  out.total = out.ssim_loss + out.sparsity_loss;
  return out;
}

FinalMetrics final_metrics(const VideoVolume& target, std::span<const Frame> rec, const metrics::SsimConfig& cfg) {
  if (rec.size() != static_cast<std::size_t>(target.frames())) {
    throw Error(ErrorCode::ShapeMismatch, "one reconstruction per frame is required");
  }
  FinalMetrics m;
  double sum = 0.0;
  for (int t = 0; t < target.frames(); ++t) {
    const Frame truth = target.frame(t);
    const Frame& r = rec[static_cast<std::size_t>(t)];
    m.frame_psnr.push_back(metrics::psnr(truth, r));
    m.frame_ssim.push_back(metrics::weighted_ssim(truth, r, cfg));
    sum += m.frame_ssim.back();
  }
  m.psnr = metrics::psnr(target, rec);
  m.ssim = sum / target.frames();
  m.ssim_db = m.ssim >= 1.0 ? std::numeric_limits<double>::infinity() : metrics::ssim_db(m.ssim);
  return m;
}

namespace {

constexpr std::size_t kCholSize = 6;
constexpr std::size_t kMuSize = 3;

std::size_t expert_size(const SmoeModel& m) { return m.slopes_enabled ? 12 : 3; }

// Flat per-group parameter views: kernel k owns a fixed-width block.
struct Groups {
  std::vector<double> chol, pi, mu, experts;
};

Groups pack(const SmoeModel& m) {
  Groups g;
  for (const Kernel& k : m.kernels) {
    g.chol.insert(g.chol.end(), k.chol.begin(), k.chol.end());
    g.pi.push_back(k.pi);
    g.mu.insert(g.mu.end(), k.mu.begin(), k.mu.end());
    g.experts.insert(g.experts.end(), k.m0.begin(), k.m0.end());
    if (m.slopes_enabled)
      for (const Vec3& row : k.slopes) g.experts.insert(g.experts.end(), row.begin(), row.end());
  }
  return g;
}

Groups pack(const std::vector<KernelGrad>& grads, bool slopes) {
  Groups g;
  for (const KernelGrad& k : grads) {
    g.chol.insert(g.chol.end(), k.chol.begin(), k.chol.end());
    g.pi.push_back(k.pi);
    g.mu.insert(g.mu.end(), k.mu.begin(), k.mu.end());
    g.experts.insert(g.experts.end(), k.m0.begin(), k.m0.end());
    if (slopes)
      for (const Vec3& row : k.slopes) g.experts.insert(g.experts.end(), row.begin(), row.end());
  }
  return g;
}

void unpack(const Groups& g, SmoeModel& m) {
  const std::size_t es = expert_size(m);
  for (std::size_t n = 0; n < m.kernels.size(); ++n) {
    Kernel& k = m.kernels[n];
    std::copy_n(g.chol.begin() + static_cast<std::ptrdiff_t>(n * kCholSize), kCholSize, k.chol.begin());
    k.pi = g.pi[n];
    std::copy_n(g.mu.begin() + static_cast<std::ptrdiff_t>(n * kMuSize), kMuSize, k.mu.begin());
    const auto e = g.experts.begin() + static_cast<std::ptrdiff_t>(n * es);
    std::copy_n(e, 3, k.m0.begin());
    if (m.slopes_enabled)
      for (std::size_t r = 0; r < 3; ++r) std::copy_n(e + static_cast<std::ptrdiff_t>(3 + 3 * r), 3, k.slopes[r].begin());
  }
}

void erase_blocks(std::vector<double>& v, const std::vector<bool>& drop, std::size_t width) {
  std::size_t w = 0;
  for (std::size_t n = 0; n < drop.size(); ++n) {
    if (drop[n]) continue;
    if (w != n) std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(n * width), width, v.begin() + static_cast<std::ptrdiff_t>(w * width));
    ++w;
  }
  v.resize(w * width);
}

void erase_blocks(AdamState& s, const std::vector<bool>& drop, std::size_t width) {
  erase_blocks(s.m, drop, width);
  erase_blocks(s.v, drop, width);
}

class Trainer {
 public:
  Trainer(const VideoVolume& v, const TrainConfig& cfg, SmoeModel model, std::optional<pmm::MotionTrack> track,
          const Progress& progress)
      : v_(v),
        cfg_(cfg),
        model_(std::move(model)),
        track_(std::move(track)),
        progress_(progress),
        rng_(cfg.seed),
        eval_{cfg.cull_margin, 8} {
    frames_ = frame_coordinates(v_.geometry(), track_ ? &*track_ : nullptr);
    order_.resize(static_cast<std::size_t>(v_.frames()));
  }

  // Returns true when any kernel was pruned.
  bool run(Stage stage, long iters, double lambda_s, TrainReport& report) {
    bool pruned = false;
    for (long n = 0; n < iters; ++n) pruned |= step(stage, lambda_s, report);
    return pruned;
  }

  SmoeModel& model() { return model_; }
  std::optional<pmm::MotionTrack>& track() { return track_; }
  const std::vector<FrameCoords>& frames() const { return frames_; }
  const EvalOptions& eval() const { return eval_; }

 private:
  std::vector<int> pick_frames() {
    const int total = v_.frames();
    const int b = std::min(cfg_.batch_frames, total);
    std::iota(order_.begin(), order_.end(), 0);
    for (int k = 0; k < b; ++k) {
      std::uniform_int_distribution<int> pick(k, total - 1);
      std::swap(order_[static_cast<std::size_t>(k)], order_[static_cast<std::size_t>(pick(rng_))]);
    }
    std::vector<int> set(order_.begin(), order_.begin() + b);
    std::sort(set.begin(), set.end());
    return set;
  }

  bool step(Stage stage, double lambda_s, TrainReport& report) {
    const auto set = pick_frames();
    const bool motion = cfg_.train_motion && track_;
    const Gradients g =
        gradients(model_, frames_, v_, lambda_s, set, cfg_.ssim, motion ? &*track_ : nullptr, eval_);
    ++iter_;

    Groups params = pack(model_);
    const Groups grads = pack(g.kernels, model_.slopes_enabled);
    chol_state_.resize(params.chol.size());
    pi_state_.resize(params.pi.size());
    mu_state_.resize(params.mu.size());
    expert_state_.resize(params.experts.size());
    adam_step(params.chol, grads.chol, chol_state_, cfg_.lr.chol, iter_, cfg_.adam);
    adam_step(params.pi, grads.pi, pi_state_, cfg_.lr.pi, iter_, cfg_.adam);
    adam_step(params.mu, grads.mu, mu_state_, cfg_.lr.mu, iter_, cfg_.adam);
    adam_step(params.experts, grads.experts, expert_state_, cfg_.lr.experts, iter_, cfg_.adam);
    unpack(params, model_);

    if (motion) {
      const auto p = static_cast<std::size_t>(track_->p);
      std::vector<double> h, gh;
      for (std::size_t n = 0; n < track_->per_pair.size(); ++n) {
        h.insert(h.end(), track_->per_pair[n].values.begin(), track_->per_pair[n].values.begin() + static_cast<std::ptrdiff_t>(p));
        gh.insert(gh.end(), g.motion[n].begin(), g.motion[n].begin() + static_cast<std::ptrdiff_t>(p));
      }
      motion_state_.resize(h.size());
      adam_step(h, gh, motion_state_, cfg_.lr.motion, iter_, cfg_.adam);
      for (std::size_t n = 0; n < track_->per_pair.size(); ++n)
        std::copy_n(h.begin() + static_cast<std::ptrdiff_t>(n * p), p, track_->per_pair[n].values.begin());
      frames_ = frame_coordinates(v_.geometry(), &*track_);
    }

    const bool pruned = prune_kernels();
    HistoryRow row{stage, iter_, g.loss.total, g.loss.ssim_loss, g.loss.sparsity_loss, model_.kernels.size()};
    report.history.push_back(row);
    if (progress_) progress_(row);
    return pruned;
  }

  bool prune_kernels() {
    std::vector<bool> drop(model_.kernels.size());
    bool any = false;
    for (std::size_t n = 0; n < drop.size(); ++n) {
      drop[n] = !(model_.kernels[n].pi > 0.0);
      any |= drop[n];
    }
    if (!any) return false;
    model_ = prune(model_);  // throws when nothing would survive
    erase_blocks(chol_state_, drop, kCholSize);
    erase_blocks(pi_state_, drop, 1);
    erase_blocks(mu_state_, drop, kMuSize);
    erase_blocks(expert_state_, drop, expert_size(model_));
    return true;
  }

  const VideoVolume& v_;
  const TrainConfig& cfg_;
  SmoeModel model_;
  std::optional<pmm::MotionTrack> track_;
  const Progress& progress_;
  std::mt19937_64 rng_;
  EvalOptions eval_;
  std::vector<FrameCoords> frames_;
  std::vector<int> order_;
  long iter_ = 0;
  AdamState chol_state_, pi_state_, mu_state_, expert_state_, motion_state_;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrainResult run_pipeline(const VideoVolume& v, const TrainConfig& cfg, const PipelineOptions& opts) {
  validate(cfg);
  if (v.frames() < 1) throw Error(ErrorCode::ZeroFrames, "video has no frames");
  if (opts.target_kernels && *opts.target_kernels < 1) {
    throw Error(ErrorCode::InvalidArgument, "target kernel count must be >= 1");
  }
  const Geometry& geo = v.geometry();
  TrainReport report;

  auto start = std::chrono::steady_clock::now();
  std::optional<pmm::MotionTrack> track;
  if (cfg.p != 0) {
    if (opts.initial_track) {
      if (opts.initial_track->p != cfg.p) {
        throw Error(ErrorCode::ShapeMismatch, "initial track has p=" + std::to_string(opts.initial_track->p) +
                                                  ", configuration asks for p=" + std::to_string(cfg.p));
      }
      if (opts.initial_track->frames() != v.frames()) {
        throw Error(ErrorCode::ShapeMismatch, "initial track does not match the video length");
      }
      track = opts.initial_track;
    } else if (v.frames() == 1) {
      track = pmm::MotionTrack::identity(cfg.p, 1);
    } else {
      track = gme::estimate_track(v, cfg.p, cfg.ransac, cfg.gme_grid_step);
    }
  }

  SmoeModel model = init_grid(cfg.grid, geo);
  model.slopes_enabled = cfg.slopes;
  SampleSet samples = to_samples(v);
  if (track) {
    std::vector<Vec3> centres;
    for (const Kernel& k : model.kernels) centres.push_back(k.mu);
    centres = pmm::transform_kernel_centers(centres, *track, geo);
    for (std::size_t n = 0; n < centres.size(); ++n) model.kernels[n].mu = centres[n];
    samples = pmm::compensate_samples(samples, *track);
  }
  model = init_offsets(model, samples);

  Trainer trainer(v, cfg, std::move(model), std::move(track), opts.progress);
  trainer.run(Stage::Pretrain, cfg.pretrain_iters, 0.0, report);
  report.stage_seconds[0] = seconds_since(start);

  start = std::chrono::steady_clock::now();
  bool pruned_in_stage = false;
  bool reached = false;
  for (int s = 1; s <= cfg.sparsify_steps; ++s) {
    pruned_in_stage |= trainer.run(Stage::Sparsify, cfg.iters_per_step, lambda_schedule(s, cfg), report);
    report.sparsify_steps_run = s;
    if (opts.target_kernels && pruned_in_stage && trainer.model().kernels.size() <= *opts.target_kernels) {
      reached = true;
      break;
    }
  }
  report.target_reached = !opts.target_kernels || reached;
  report.stage_seconds[1] = seconds_since(start);

  start = std::chrono::steady_clock::now();
  trainer.run(Stage::Finetune, cfg.finetune_iters, 0.0, report);
  report.stage_seconds[2] = seconds_since(start);

  const auto rec = reconstruct_video(trainer.model(), trainer.frames(), trainer.eval());
  const FinalMetrics fm = final_metrics(v, rec, cfg.ssim);
  report.psnr = fm.psnr;
  report.ssim = fm.ssim;
  report.ssim_db = fm.ssim_db;
  return {std::move(trainer.model()), std::move(trainer.track()), std::move(report)};
}

TrainResult sparsify_to_target(const VideoVolume& v, const TrainConfig& cfg, std::size_t target_kernels,
                               PipelineOptions opts) {
  if (target_kernels < 1) throw Error(ErrorCode::InvalidArgument, "target kernel count must be >= 1");
  opts.target_kernels = target_kernels;
  return run_pipeline(v, cfg, opts);
}

}  // namespace smoe::train
