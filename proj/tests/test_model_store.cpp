#include "smoe/error.hpp"
#include "smoe/model_store.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

using namespace smoe;
namespace fs = std::filesystem;

namespace {

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ErrorCode load_error(const fs::path& p) {
  try {
    store::load(p);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("file was accepted");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("model_store") {
  TEST_CASE("round trip is bitwise") {
    const auto dir = testing::scratch_dir("store_roundtrip");
    std::mt19937_64 rng(51);
    for (int n = 0; n < 10; ++n) {
      const Geometry g{16 + n, 8, 1 + n % 4};
      const SmoeModel m = testing::random_model(rng, 1 + n, g, n % 2 == 1);
      std::optional<pmm::MotionTrack> track;
      if (n % 3 != 0) {
        const int p = 2 * (1 + n % 4);
        track = pmm::MotionTrack::identity(p, g.frames);
        for (auto& pair : track->per_pair) pair = testing::random_motion(rng, p);
      }
      const fs::path path = dir / "m.smoe";
      store::save(m, track, path);
      CHECK(fs::file_size(path) == store::file_size(m.size(), m.slopes_enabled, track ? track->p : 0, g.frames));
      const store::Stored s = store::load(path);
      CHECK(s.model.kernels == m.kernels);
      CHECK(s.model.geometry == g);
      CHECK(s.model.slopes_enabled == m.slopes_enabled);
      REQUIRE(s.track.has_value() == track.has_value());
      if (track) {
        CHECK(s.track->p == track->p);
        CHECK(s.track->per_pair == track->per_pair);
      }
    }
  }

  TEST_CASE("file sizes") {
    CHECK(store::file_size(1, false, 0, 1) == 128);
    CHECK(store::file_size(2, true, 0, 4) == 24 + 2 * 22 * 8);
    CHECK(store::file_size(0, false, 8, 3) == 24 + 2 * 8 * 8);
  }

  TEST_CASE("corrupt files are rejected") {
    const auto dir = testing::scratch_dir("store_corrupt");
    std::mt19937_64 rng(52);
    const SmoeModel m = testing::random_model(rng, 2, {8, 8, 2}, false);
    const fs::path good = dir / "good.smoe";
    store::save(m, pmm::MotionTrack::identity(2, 2), good);
    const std::vector<char> bytes = read_bytes(good);

    auto magic = bytes;
    magic[0] = 'X';
    write_bytes(dir / "magic.smoe", magic);
    CHECK(load_error(dir / "magic.smoe") == ErrorCode::BadMagic);

    auto version = bytes;
    version[4] = 9;
    write_bytes(dir / "version.smoe", version);
    CHECK(load_error(dir / "version.smoe") == ErrorCode::UnsupportedVersion);

    write_bytes(dir / "short.smoe", std::vector<char>(bytes.begin(), bytes.end() - 3));
    CHECK(load_error(dir / "short.smoe") == ErrorCode::TruncatedFile);
    write_bytes(dir / "header.smoe", std::vector<char>(bytes.begin(), bytes.begin() + 10));
    CHECK(load_error(dir / "header.smoe") == ErrorCode::TruncatedFile);

    auto extra = bytes;
    extra.push_back(0);
    write_bytes(dir / "extra.smoe", extra);
    CHECK(load_error(dir / "extra.smoe") == ErrorCode::InvariantViolation);

    // pi of the first kernel sits after mu (3 doubles) and chol (6 doubles)
    auto negative = bytes;
    const double minus_one = -1.0;
    std::memcpy(negative.data() + store::kHeaderBytes + 9 * 8, &minus_one, 8);
    write_bytes(dir / "negative.smoe", negative);
    CHECK(load_error(dir / "negative.smoe") == ErrorCode::InvariantViolation);

    auto flags = bytes;
    flags[store::kHeaderBytes - 1] = 0x40;
    write_bytes(dir / "flags.smoe", flags);
    CHECK(load_error(dir / "flags.smoe") == ErrorCode::InvariantViolation);

    CHECK(load_error(dir / "missing.smoe") == ErrorCode::IoFailure);
  }

  TEST_CASE("invalid contents are refused on save") {
    const auto dir = testing::scratch_dir("store_save");
    std::mt19937_64 rng(53);
    SmoeModel m = testing::random_model(rng, 2, {8, 8, 2}, false);
    CHECK_THROWS_AS(store::save(m, pmm::MotionTrack::identity(2, 3), dir / "a.smoe"), Error);
    CHECK_THROWS_AS(store::save(m, std::nullopt, dir / "no" / "such" / "dir" / "a.smoe"), Error);
    m.kernels[1].pi = -1.0;
    CHECK_THROWS_AS(store::save(m, std::nullopt, dir / "b.smoe"), Error);
  }

  TEST_CASE("a file may carry only a track") {
    const auto dir = testing::scratch_dir("store_track");
    SmoeModel empty;
    empty.geometry = {8, 8, 3};
    store::save(empty, pmm::MotionTrack::identity(4, 3), dir / "t.smoe");
    const auto s = store::load(dir / "t.smoe");
    CHECK(s.model.kernels.empty());
    REQUIRE(s.track);
    CHECK(s.track->p == 4);
  }
}
