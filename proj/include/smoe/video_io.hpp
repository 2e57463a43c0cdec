#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace smoe {

using Vec3 = std::array<double, 3>;

enum Channel : int { kY = 0, kU = 1, kV = 2 };

struct Geometry {
  int width = 0;
  int height = 0;
  int frames = 0;

  std::size_t pixels_per_frame() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t pixel_count() const { return pixels_per_frame() * static_cast<std::size_t>(frames); }

  bool operator==(const Geometry&) const = default;
};

/// Single-channel raster, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int i, int j) { return data[static_cast<std::size_t>(j) * width + i]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(j) * width + i]; }
};

/// One Y,U,V frame at full (4:4:4) resolution.
struct Frame {
  int width = 0;
  int height = 0;
  std::array<Plane, 3> channels;

  Frame() = default;
  Frame(int w, int h, double fill = 0.0)
      : width(w), height(h), channels{Plane(w, h, fill), Plane(w, h, fill), Plane(w, h, fill)} {}
};

enum class ChromaLayout { k444, k420Upsampled };

/// Decoded video as a 3-D amplitude field. Amplitudes are interleaved per pixel
/// (Y,U,V) in raster order: frame, row, column.
class VideoVolume {
 public:
  VideoVolume() = default;
  VideoVolume(Geometry g, ChromaLayout layout = ChromaLayout::k444);

  const Geometry& geometry() const { return geometry_; }
  int width() const { return geometry_.width; }
  int height() const { return geometry_.height; }
  int frames() const { return geometry_.frames; }
  ChromaLayout chroma_layout() const { return layout_; }

  double& at(int i, int j, int t, int c) { return amps_[index(i, j, t) + c]; }
  double at(int i, int j, int t, int c) const { return amps_[index(i, j, t) + c]; }

  const std::vector<double>& amplitudes() const { return amps_; }
  std::vector<double>& amplitudes() { return amps_; }

  Frame frame(int t) const;
  Plane luminance(int t) const;

 private:
  std::size_t index(int i, int j, int t) const {
    return ((static_cast<std::size_t>(t) * geometry_.height + j) * geometry_.width + i) * 3;
  }

  Geometry geometry_;
  ChromaLayout layout_ = ChromaLayout::k444;
  std::vector<double> amps_;
};

struct RasterIndex {
  int i = 0;  // column
  int j = 0;  // row
  int t = 0;  // frame
};

/// Flat training samples, one per pixel, in raster order.
struct SampleSet {
  std::vector<Vec3> coords;  // (x_w, x_h, x_t), normalized
  std::vector<Vec3> amps;    // (Y, U, V)
  std::vector<RasterIndex> raster;
  Geometry geometry;

  std::size_t size() const { return coords.size(); }
};

/// Normalized coordinate of pixel (i, j) in frame t.
Vec3 normalized_coord(const Geometry& g, double i, double j, int t);

VideoVolume load_yuv420(const std::filesystem::path& path, int width, int height, int frames);
void save_yuv420(const VideoVolume& v, const std::filesystem::path& path);

VideoVolume crop(const VideoVolume& v, std::array<int, 3> origin, std::array<int, 3> size);

SampleSet to_samples(const VideoVolume& v);

enum class ImageFormat { PpmRgb, PgmY };

void write_frame(const Frame& frame, const std::filesystem::path& path, ImageFormat format);

/// BT.601 full-range conversion of one pixel to 8-bit RGB with clamping.
std::array<unsigned char, 3> yuv_to_rgb8(double y, double u, double v);
unsigned char to_byte(double amplitude);

}  // namespace smoe
