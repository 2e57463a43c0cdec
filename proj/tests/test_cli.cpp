#include "smoe/model_store.hpp"
#include "smoe/video_io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace smoe;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run smoe_cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "stdout.txt";
  const std::string cmd = std::string("\"") + SMOE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2> \"" +
                          (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, {std::istreambuf_iterator<char>(in), {}}};
}

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Fixture {
  fs::path dir = testing::scratch_dir("cli");
  fs::path video = dir / "clip.yuv";
  fs::path config = dir / "quick.cfg";
  std::string geometry = "--width 16 --height 16 --frames 3";

  Fixture() {
    save_yuv420(testing::translating_texture({16, 16, 3}, 1.0, 3, 20), video);
    std::ofstream(config) << "grid = 2,2,1\npretrain_iters = 3\nsparsify_steps = 1\niters_per_step = 2\n"
                             "finetune_iters = 1\n";
  }

  std::string input() const { return "--input \"" + video.string() + "\" " + geometry; }
  std::string path(const std::string& name) const { return "\"" + (dir / name).string() + "\""; }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    const Fixture f;
    CHECK(smoe_cli("", f.dir).code == 2);
    CHECK(smoe_cli("frobnicate", f.dir).code == 2);
    CHECK(smoe_cli("estimate-motion " + f.input() + " --p 5 --out " + f.path("m.smoe"), f.dir).code == 2);
    CHECK(smoe_cli("train " + f.input(), f.dir).code == 2);
    CHECK(smoe_cli("--help", f.dir).code == 0);
  }

  TEST_CASE("estimate, train, inspect, render and score") {
    const Fixture f;
    const Run est = smoe_cli("estimate-motion " + f.input() + " --p 2 --out " + f.path("track.smoe"), f.dir);
    REQUIRE(est.code == 0);
    CHECK(est.out.find("pair=1->0 error=") != std::string::npos);
    CHECK(est.out.find("pair=2->1 error=") != std::string::npos);

    const Run tr = smoe_cli("train " + f.input() + " --p 2 --config " + f.path("quick.cfg") + " --track " +
                                f.path("track.smoe") + " --out " + f.path("model.smoe") + " --report " +
                                f.path("report.csv"),
                            f.dir);
    REQUIRE(tr.code == 0);
    CHECK(tr.out.find("K=4\n") != std::string::npos);
    CHECK(tr.out.find("ssim=") != std::string::npos);
    CHECK(bytes_of(f.dir / "report.csv").rfind("stage,iter,loss,ssim_loss,sparsity_loss,K\n", 0) == 0);

    const Run info = smoe_cli("info --model " + f.path("model.smoe"), f.dir);
    REQUIRE(info.code == 0);
    CHECK(info.out == "width=16\nheight=16\nframes=3\nK=4\np=2\nslopes=0\n");

    const Run rec = smoe_cli("reconstruct --model " + f.path("model.smoe") + " --frames-out " + f.path("frames"), f.dir);
    REQUIRE(rec.code == 0);
    CHECK(fs::exists(f.dir / "frames" / "frame_0002.ppm"));
    CHECK(bytes_of(f.dir / "frames" / "frame_0000.ppm").rfind("P6\n16 16\n255\n", 0) == 0);
    CHECK(smoe_cli("reconstruct --model " + f.path("model.smoe") + " --frames-out " + f.path("gray") +
                       " --format pgm " + f.geometry,
                   f.dir)
              .code == 0);
    CHECK(fs::exists(f.dir / "gray" / "frame_0001.pgm"));

    const Run met = smoe_cli("metrics --model " + f.path("model.smoe") + " " + f.input(), f.dir);
    REQUIRE(met.code == 0);
    CHECK(met.out.find("frame=2 psnr=") != std::string::npos);
    CHECK(met.out.find("\nssim_db=") != std::string::npos);
  }

  TEST_CASE("data errors exit with 3") {
    const Fixture f;
    REQUIRE(smoe_cli("train " + f.input() + " --config " + f.path("quick.cfg") + " --out " + f.path("m.smoe"), f.dir)
                .code == 0);
    CHECK(smoe_cli("reconstruct --model " + f.path("m.smoe") + " --frames-out " + f.path("x") +
                       " --width 16 --height 16 --frames 4",
                   f.dir)
              .code == 3);
    CHECK(smoe_cli("metrics --model " + f.path("m.smoe") + " --input \"" + f.video.string() +
                       "\" --width 16 --height 16 --frames 2",
                   f.dir)
              .code == 3);
    std::ofstream(f.dir / "junk.smoe") << "not a model";
    CHECK(smoe_cli("info --model " + f.path("junk.smoe"), f.dir).code == 3);
    CHECK(smoe_cli("train --input \"" + f.video.string() + "\" --width 16 --height 16 --frames 9 --out " +
                       f.path("n.smoe"),
                   f.dir)
              .code == 3);
  }

  TEST_CASE("no compensation equals an identity track") {
    const Fixture f;
    SmoeModel none;
    none.geometry = {16, 16, 3};
    store::save(none, pmm::MotionTrack::identity(2, 3), f.dir / "identity.smoe");
    const std::string common = "train " + f.input() + " --config " + f.path("quick.cfg") + " --seed 4 ";
    REQUIRE(smoe_cli(common + "--p 0 --out " + f.path("a.smoe"), f.dir).code == 0);
    REQUIRE(smoe_cli(common + "--p 2 --track " + f.path("identity.smoe") + " --out " + f.path("b.smoe"), f.dir).code ==
            0);
    const auto a = store::load(f.dir / "a.smoe"), b = store::load(f.dir / "b.smoe");
    CHECK(a.model.kernels == b.model.kernels);
    CHECK_FALSE(a.track);
    CHECK(b.track);
  }
}
