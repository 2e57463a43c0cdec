#include "smoe/error.hpp"
#include "smoe/gme.hpp"
#include "smoe/model_store.hpp"
#include "smoe/trainer.hpp"
#include "smoe/video_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace smoe;

namespace {

struct GeometryFlags {
  std::string input;
  int width = 0;
  int height = 0;
  int frames = 0;

  void add(CLI::App* app, bool required) {
    auto* i = app->add_option("--input", input, "raw YUV 4:2:0 file");
    auto* w = app->add_option("--width", width, "frame width in pixels");
    auto* h = app->add_option("--height", height, "frame height in pixels");
    auto* f = app->add_option("--frames", frames, "number of frames");
    if (required) {
      i->required()->check(CLI::ExistingFile);
      w->required();
      h->required();
      f->required();
    }
  }

  VideoVolume load() const { return load_yuv420(input, width, height, frames); }
};

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Numeric: return 4;
  }
  return 1;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void check_geometry(const Geometry& model, const Geometry& video) {
  if (!(model == video)) {
    throw Error(ErrorCode::ShapeMismatch,
                "model is " + std::to_string(model.width) + "x" + std::to_string(model.height) + "x" +
                    std::to_string(model.frames) + ", video is " + std::to_string(video.width) + "x" +
                    std::to_string(video.height) + "x" + std::to_string(video.frames));
  }
}

std::vector<Frame> reconstruct(const store::Stored& s) {
  if (s.model.kernels.empty()) throw Error(ErrorCode::InvariantViolation, "model file holds only a motion track");
  const auto coords = train::frame_coordinates(s.model.geometry, s.track ? &*s.track : nullptr);
  return train::reconstruct_video(s.model, coords);
}

int cmd_estimate_motion(const GeometryFlags& geo, int p, std::uint64_t seed, const std::string& out) {
  const VideoVolume v = geo.load();
  gme::RansacConfig cfg;
  cfg.seed = seed;
  const auto est = gme::estimate_track_detailed(v, p, cfg);
  SmoeModel empty;
  empty.geometry = v.geometry();
  store::save(empty, est.track, out);
  for (std::size_t n = 0; n < est.track.per_pair.size(); ++n) {
    const auto& m = est.track.per_pair[n];
    std::cout << "pair=" << n + 1 << "->" << n << " error=" << fmt(est.pair_errors[n]) << " shift_x=" << fmt(m.values[0])
              << " shift_y=" << fmt(m.values[1]) << '\n';
  }
  return 0;
}

struct TrainFlags {
  GeometryFlags geo;
  std::vector<int> grid;
  int p = 0;
  bool train_motion = false;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string report;
  std::string track;
};

int cmd_train(const TrainFlags& f) {
  train::TrainConfig cfg;
  if (!f.config.empty()) cfg = train::load_config(f.config, cfg);
  if (!f.grid.empty()) cfg.grid = {f.grid[0], f.grid[1], f.grid[2]};
  cfg.p = f.p;
  cfg.train_motion = f.train_motion || cfg.train_motion;
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.ransac.seed = *f.seed;
  }
  const VideoVolume v = f.geo.load();
  train::PipelineOptions opts;
  if (!f.track.empty()) {
    auto stored = store::load(f.track);
    if (!stored.track) throw Error(ErrorCode::InvariantViolation, f.track + " holds no motion track");
    opts.initial_track = std::move(stored.track);
  }
  const auto result = train::run_pipeline(v, cfg, opts);
  store::save(result.model, result.track, f.out);
  if (!f.report.empty()) {
    std::ofstream csv(f.report);
    if (!csv) throw Error(ErrorCode::IoFailure, "cannot open " + f.report);
    train::write_report_csv(result.report, csv);
  }
  std::cout << "K=" << result.model.kernels.size() << '\n'
            << "psnr=" << fmt(result.report.psnr) << '\n'
            << "ssim=" << fmt(result.report.ssim) << '\n'
            << "ssim_db=" << fmt(result.report.ssim_db) << '\n';
  return 0;
}

int cmd_reconstruct(const std::string& model, const GeometryFlags& geo, const std::string& dir,
                    const std::string& format) {
  const auto s = store::load(model);
  if (geo.width || geo.height || geo.frames) {
    check_geometry(s.model.geometry, {geo.width, geo.height, geo.frames});
  }
  const auto frames = reconstruct(s);
  fs::create_directories(dir);
  const bool ppm = format == "ppm";
  for (std::size_t t = 0; t < frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.%s", t, ppm ? "ppm" : "pgm");
    write_frame(frames[t], fs::path(dir) / name, ppm ? ImageFormat::PpmRgb : ImageFormat::PgmY);
  }
  std::cout << "frames=" << frames.size() << '\n';
  return 0;
}

int cmd_metrics(const std::string& model, const GeometryFlags& geo) {
  const auto s = store::load(model);
  const VideoVolume v = geo.load();
  check_geometry(s.model.geometry, v.geometry());
  const auto rec = reconstruct(s);
  const auto m = train::final_metrics(v, rec);
  for (std::size_t t = 0; t < rec.size(); ++t) {
    const double fs = m.frame_ssim[t];
    std::cout << "frame=" << t << " psnr=" << fmt(m.frame_psnr[t]) << " ssim=" << fmt(fs)
              << " ssim_db=" << fmt(fs >= 1.0 ? INFINITY : metrics::ssim_db(fs)) << '\n';
  }
  std::cout << "psnr=" << fmt(m.psnr) << '\n' << "ssim=" << fmt(m.ssim) << '\n' << "ssim_db=" << fmt(m.ssim_db) << '\n';
  return 0;
}

int cmd_info(const std::string& model) {
  const auto s = store::load(model);
  const Geometry& g = s.model.geometry;
  std::cout << "width=" << g.width << '\n'
            << "height=" << g.height << '\n'
            << "frames=" << g.frames << '\n'
            << "K=" << s.model.kernels.size() << '\n'
            << "p=" << (s.track ? s.track->p : 0) << '\n'
            << "slopes=" << (s.model.slopes_enabled ? 1 : 0) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steered mixture-of-experts video modelling with global motion compensation"};
  app.require_subcommand(1);

  GeometryFlags em_geo;
  int em_p = 0;
  std::uint64_t em_seed = 0;
  std::string em_out;
  auto* em = app.add_subcommand("estimate-motion", "estimate a global motion track");
  em_geo.add(em, true);
  em->add_option("--p", em_p, "motion complexity")->required()->check(CLI::IsMember({2, 4, 6, 8}));
  em->add_option("--seed", em_seed, "RANSAC seed");
  em->add_option("--out", em_out, "output model file")->required();

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "fit a model to a video");
  tf.geo.add(tr, true);
  tr->add_option("--grid", tf.grid, "initial kernel grid kw,kh,kt")
      ->delimiter(',')
      ->expected(3)
      ->check(CLI::PositiveNumber);
  tr->add_option("--p", tf.p, "motion complexity, 0 disables compensation")->check(CLI::IsMember({0, 2, 4, 6, 8}));
  tr->add_flag("--train-motion", tf.train_motion, "optimise the motion track too");
  tr->add_option("--config", tf.config, "key=value training configuration")->check(CLI::ExistingFile);
  tr->add_option("--seed", tf.seed, "random seed");
  tr->add_option("--out", tf.out, "output model file")->required();
  tr->add_option("--report", tf.report, "CSV training history");
  tr->add_option("--track", tf.track, "use the motion track in this model file instead of estimating one")
      ->check(CLI::ExistingFile);

  std::string rc_model, rc_dir, rc_format = "ppm";
  GeometryFlags rc_geo;
  auto* rc = app.add_subcommand("reconstruct", "render a model to image files");
  rc->add_option("--model", rc_model, "model file")->required();
  rc_geo.add(rc, false);
  rc->add_option("--frames-out", rc_dir, "output directory")->required();
  rc->add_option("--format", rc_format, "ppm (RGB) or pgm (luminance)")->check(CLI::IsMember({"ppm", "pgm"}));

  std::string mt_model;
  GeometryFlags mt_geo;
  auto* mt = app.add_subcommand("metrics", "compare a model against a video");
  mt->add_option("--model", mt_model, "model file")->required();
  mt_geo.add(mt, true);

  std::string in_model;
  auto* in = app.add_subcommand("info", "print a model file header");
  in->add_option("--model", in_model, "model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*em) return cmd_estimate_motion(em_geo, em_p, em_seed, em_out);
    if (*tr) return cmd_train(tf);
    if (*rc) return cmd_reconstruct(rc_model, rc_geo, rc_dir, rc_format);
    if (*mt) return cmd_metrics(mt_model, mt_geo);
    if (*in) return cmd_info(in_model);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
