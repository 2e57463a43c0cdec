#include "smoe/error.hpp"
#include "smoe/video_io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

using namespace smoe;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Pixel payload of a binary PNM file (skips the three header tokens).
std::vector<unsigned char> pnm_payload(const std::filesystem::path& p, std::string& magic, int& w, int& h) {
  const auto bytes = read_bytes(p);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  const auto offset = static_cast<std::size_t>(in.tellg()) + 1;
  return {bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end()};
}

int error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

}  // namespace

TEST_SUITE("video_io") {
  TEST_CASE("constant 2x2x1 file decodes to 128/255 everywhere") {
    const auto dir = testing::scratch_dir("vio_const");
    write_bytes(dir / "c.yuv", std::vector<unsigned char>(6, 128));
    const VideoVolume v = load_yuv420(dir / "c.yuv", 2, 2, 1);
    REQUIRE(v.amplitudes().size() == 12);
    for (double a : v.amplitudes()) CHECK(a == 128.0 / 255.0);
  }

  TEST_CASE("load rejects short files, odd sizes and zero frames") {
    const auto dir = testing::scratch_dir("vio_err");
    write_bytes(dir / "short.yuv", std::vector<unsigned char>(5, 0));
    write_bytes(dir / "ok.yuv", std::vector<unsigned char>(64, 0));
    CHECK(error_of([&] { load_yuv420(dir / "short.yuv", 2, 2, 1); }) == static_cast<int>(ErrorCode::FileTooShort));
    CHECK(error_of([&] { load_yuv420(dir / "ok.yuv", 3, 2, 1); }) == static_cast<int>(ErrorCode::OddDimensions));
    CHECK(error_of([&] { load_yuv420(dir / "ok.yuv", 2, 2, 0); }) == static_cast<int>(ErrorCode::ZeroFrames));
    CHECK(error_of([&] { load_yuv420(dir / "missing.yuv", 2, 2, 1); }) == static_cast<int>(ErrorCode::IoFailure));
  }

  TEST_CASE("chroma-constant source upsamples exactly") {
    const auto dir = testing::scratch_dir("vio_chroma");
    const int w = 8, h = 6;
    std::vector<unsigned char> bytes;
    for (int n = 0; n < w * h; ++n) bytes.push_back(static_cast<unsigned char>(n * 5));
    bytes.insert(bytes.end(), w * h / 4, 40);
    bytes.insert(bytes.end(), w * h / 4, 200);
    write_bytes(dir / "c.yuv", bytes);
    const VideoVolume v = load_yuv420(dir / "c.yuv", w, h, 1);
    CHECK(v.chroma_layout() == ChromaLayout::k420Upsampled);
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) {
        CHECK(v.at(i, j, 0, kY) == (j * w + i) * 5 / 255.0);
        CHECK(v.at(i, j, 0, kU) == 40 / 255.0);
        CHECK(v.at(i, j, 0, kV) == 200 / 255.0);
      }
  }

  TEST_CASE("save then load keeps luminance bytes") {
    const auto dir = testing::scratch_dir("vio_roundtrip");
    VideoVolume v({4, 4, 2});
    for (int t = 0; t < 2; ++t)
      for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
          v.at(i, j, t, kY) = (i + 4 * j + 16 * t) / 255.0;
          v.at(i, j, t, kU) = 0.5;
          v.at(i, j, t, kV) = 0.25;
        }
    save_yuv420(v, dir / "v.yuv");
    CHECK(std::filesystem::file_size(dir / "v.yuv") == 2 * (16 + 8));
    const VideoVolume back = load_yuv420(dir / "v.yuv", 4, 4, 2);
    for (int t = 0; t < 2; ++t)
      for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) CHECK(back.at(i, j, t, kY) == v.at(i, j, t, kY));
  }

  TEST_CASE("crop") {
    const VideoVolume v = testing::translating_texture({8, 6, 3}, 1.0);
    SUBCASE("full window is the identity") {
      const VideoVolume c = crop(v, {0, 0, 0}, {8, 6, 3});
      CHECK(c.amplitudes() == v.amplitudes());
    }
    SUBCASE("single pixel") {
      const VideoVolume c = crop(v, {0, 0, 0}, {1, 1, 1});
      REQUIRE(c.amplitudes().size() == 3);
      for (int ch = 0; ch < 3; ++ch) CHECK(c.at(0, 0, 0, ch) == v.at(0, 0, 0, ch));
    }
    SUBCASE("interior window") {
      const VideoVolume c = crop(v, {2, 1, 1}, {4, 3, 2});
      CHECK(c.at(3, 2, 1, kV) == v.at(5, 3, 2, kV));
    }
    SUBCASE("window outside the volume") {
      CHECK(error_of([&] { crop(v, {6, 0, 0}, {4, 1, 1}); }) == static_cast<int>(ErrorCode::OutOfBounds));
      CHECK(error_of([&] { crop(v, {0, 0, 3}, {1, 1, 1}); }) == static_cast<int>(ErrorCode::OutOfBounds));
    }
  }

  TEST_CASE("samples carry normalized coordinates and raster indices") {
    VideoVolume v({2, 2, 2});
    const SampleSet s = to_samples(v);
    REQUIRE(s.size() == 8);
    bool found = false;
    for (std::size_t n = 0; n < s.size(); ++n) {
      const RasterIndex& r = s.raster[n];
      if (r.i == 1 && r.j == 0 && r.t == 1) {
        found = true;
        CHECK(s.coords[n] == Vec3{0.5, 0.0, 0.5});
      }
    }
    CHECK(found);
  }

  TEST_CASE("regrouping samples by raster index reproduces the volume") {
    const VideoVolume v = testing::translating_texture({6, 4, 3}, 0.7);
    const SampleSet s = to_samples(v);
    VideoVolume back(v.geometry());
    for (std::size_t n = 0; n < s.size(); ++n)
      for (int c = 0; c < 3; ++c) back.at(s.raster[n].i, s.raster[n].j, s.raster[n].t, c) = s.amps[n][c];
    CHECK(back.amplitudes() == v.amplitudes());
  }

  TEST_CASE("image export") {
    const auto dir = testing::scratch_dir("vio_images");
    std::string magic;
    int w = 0, h = 0;
    SUBCASE("mid-gray PGM is constant 128 and round-trips byte-exactly") {
      const Frame f(3, 2, 0.5);
      write_frame(f, dir / "g.pgm", ImageFormat::PgmY);
      const auto px = pnm_payload(dir / "g.pgm", magic, w, h);
      CHECK(magic == "P5");
      CHECK(w == 3);
      CHECK(h == 2);
      REQUIRE(px.size() == 6);
      for (unsigned char b : px) CHECK(b == 128);
      Frame back(3, 2);
      for (std::size_t n = 0; n < px.size(); ++n) back.channels[0].data[n] = px[n] / 255.0;
      write_frame(back, dir / "g2.pgm", ImageFormat::PgmY);
      CHECK(read_bytes(dir / "g.pgm") == read_bytes(dir / "g2.pgm"));
    }
    SUBCASE("white point maps to white RGB") {
      Frame f(1, 1);
      f.channels[0].data[0] = 1.0;
      f.channels[1].data[0] = 0.5;
      f.channels[2].data[0] = 0.5;
      write_frame(f, dir / "w.ppm", ImageFormat::PpmRgb);
      const auto px = pnm_payload(dir / "w.ppm", magic, w, h);
      CHECK(magic == "P6");
      CHECK(px == std::vector<unsigned char>{255, 255, 255});
    }
    SUBCASE("out-of-range amplitudes clamp") {
      CHECK(to_byte(1.2) == 255);
      CHECK(to_byte(-0.3) == 0);
      CHECK(yuv_to_rgb8(1.2, 0.5, 0.5) == std::array<unsigned char, 3>{255, 255, 255});
    }
    SUBCASE("unwritable path") {
      CHECK(error_of([&] { write_frame(Frame(1, 1), dir / "no" / "such" / "f.pgm", ImageFormat::PgmY); }) ==
            static_cast<int>(ErrorCode::IoFailure));
    }
  }
}
