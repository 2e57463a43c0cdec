#include "smoe/model_store.hpp"

#include "smoe/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace smoe::store {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'O', 'E'};
constexpr std::size_t kKernelValues = 13;
constexpr std::size_t kSlopeValues = 9;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    buf_.insert(buf_.end(), std::begin(bytes), std::end(bytes));
  }
  void raw(const char* data, std::size_t n) { buf_.insert(buf_.end(), data, data + n); }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& buf) : buf_(buf) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw Error(ErrorCode::TruncatedFile, "file ends inside a record");
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

 private:
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t file_size(std::size_t kernels, bool slopes, int p, int frames) {
  const std::size_t per_kernel = kKernelValues + (slopes ? kSlopeValues : 0);
  const std::size_t motion = p > 0 && frames > 0 ? static_cast<std::size_t>(frames - 1) * static_cast<std::size_t>(p) : 0;
  return kHeaderBytes + 8 * (kernels * per_kernel + motion);
}

void save(const SmoeModel& model, const std::optional<pmm::MotionTrack>& track, const std::filesystem::path& path) {
  for (const Kernel& k : model.kernels) {
    if (!(k.pi > 0.0)) throw Error(ErrorCode::InvariantViolation, "refusing to save a kernel with pi <= 0");
  }
  const Geometry& g = model.geometry;
  const int p = track ? track->p : 0;
  if (track) {
    if (!pmm::is_valid_complexity(p)) throw Error(ErrorCode::InvalidArgument, "track has invalid complexity");
    if (track->frames() != g.frames) {
      throw Error(ErrorCode::ShapeMismatch, "track covers " + std::to_string(track->frames()) +
                                                " frames, model geometry has " + std::to_string(g.frames));
    }
  }
  Writer w;
  w.raw(kMagic, 4);
  w.put<std::uint16_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.height));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.frames));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.kernels.size()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(p));
  w.put<std::uint8_t>(model.slopes_enabled ? 1 : 0);
  for (const Kernel& k : model.kernels) {
    for (double v : k.mu) w.put(v);
    for (double v : k.chol) w.put(v);
    w.put(k.pi);
    for (double v : k.m0) w.put(v);
    if (model.slopes_enabled)
      for (const Vec3& row : k.slopes)
        for (double v : row) w.put(v);
  }
  if (track)
    for (const auto& m : track->per_pair)
      for (double v : m.free()) w.put(v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  out.close();
  if (!out) throw Error(ErrorCode::IoFailure, "write to " + path.string() + " failed");
}

Stored load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, path.string() + " is not a model file");
  }
  if (buf.size() < kHeaderBytes) throw Error(ErrorCode::TruncatedFile, "header is incomplete");
  Reader r(buf);
  for (int n = 0; n < 4; ++n) r.get<std::uint8_t>();
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "format version " + std::to_string(version));
  }
  Geometry g;
  g.width = static_cast<int>(r.get<std::uint32_t>());
  g.height = static_cast<int>(r.get<std::uint32_t>());
  g.frames = static_cast<int>(r.get<std::uint32_t>());
  const auto k = r.get<std::uint32_t>();
  const int p = r.get<std::uint8_t>();
  const auto flags = r.get<std::uint8_t>();
  if (p != 0 && !pmm::is_valid_complexity(p)) {
    throw Error(ErrorCode::InvariantViolation, "motion complexity " + std::to_string(p) + " in header");
  }
  if (flags & ~1u) throw Error(ErrorCode::InvariantViolation, "unknown flag bits in header");
  if (p > 0 && g.frames < 1) throw Error(ErrorCode::InvariantViolation, "a track needs at least one frame");
  const bool slopes = flags & 1u;
  const std::size_t expected = file_size(k, slopes, p, g.frames);
  if (buf.size() < expected) {
    throw Error(ErrorCode::TruncatedFile, "header declares " + std::to_string(expected) + " bytes, file has " +
                                              std::to_string(buf.size()));
  }
  if (buf.size() > expected) {
    throw Error(ErrorCode::InvariantViolation, "file has " + std::to_string(buf.size() - expected) +
                                                   " bytes beyond the declared content");
  }

  Stored s;
  s.model.geometry = g;
  s.model.slopes_enabled = slopes;
  s.model.kernels.resize(k);
  for (Kernel& kern : s.model.kernels) {
    for (double& v : kern.mu) v = r.get<double>();
    for (double& v : kern.chol) v = r.get<double>();
    kern.pi = r.get<double>();
    for (double& v : kern.m0) v = r.get<double>();
    if (slopes)
      for (Vec3& row : kern.slopes)
        for (double& v : row) v = r.get<double>();
  }
  if (p > 0) {
    pmm::MotionTrack t = pmm::MotionTrack::identity(p, g.frames);
    for (auto& m : t.per_pair)
      for (double& v : m.free()) {
        v = r.get<double>();
        if (!std::isfinite(v)) throw Error(ErrorCode::InvariantViolation, "non-finite motion parameter");
      }
    s.track = std::move(t);
  }
  if (k > 0) {
    validate(s.model);
  } else if (p == 0) {
    throw Error(ErrorCode::InvariantViolation, "file holds neither kernels nor a motion track");
  }
  return s;
}

}  // namespace smoe::store
