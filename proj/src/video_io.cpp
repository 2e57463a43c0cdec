#include "smoe/video_io.hpp"

#include "smoe/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace smoe {

VideoVolume::VideoVolume(Geometry g, ChromaLayout layout) : geometry_(g), layout_(layout) {
  if (g.width < 1 || g.height < 1) {
    throw Error(ErrorCode::InvalidArgument, "video dimensions must be positive");
  }
  if (g.frames < 1) throw Error(ErrorCode::ZeroFrames, "video needs at least one frame");
  amps_.assign(g.pixel_count() * 3, 0.0);
}

Frame VideoVolume::frame(int t) const {
  Frame f(width(), height());
  for (int j = 0; j < height(); ++j)
    for (int i = 0; i < width(); ++i)
      for (int c = 0; c < 3; ++c) f.channels[c].at(i, j) = at(i, j, t, c);
  return f;
}

Plane VideoVolume::luminance(int t) const {
  Plane p(width(), height());
  for (int j = 0; j < height(); ++j)
    for (int i = 0; i < width(); ++i) p.at(i, j) = at(i, j, t, kY);
  return p;
}

Vec3 normalized_coord(const Geometry& g, double i, double j, int t) {
  return {i / g.width, j / g.height, static_cast<double>(t) / g.frames};
}

namespace {

// Chroma samples sit centred between their 2x2 luma block. Bilinear weights
// with edge clamping; a constant chroma plane is reproduced exactly.
void upsample_chroma(const unsigned char* src, int cw, int ch, VideoVolume& v, int t, int c) {
  const int w = v.width();
  const int h = v.height();
  for (int j = 0; j < h; ++j) {
    const double cy = std::clamp(0.5 * j - 0.25, 0.0, static_cast<double>(ch - 1));
    const int y0 = static_cast<int>(std::floor(cy));
    const int y1 = std::min(y0 + 1, ch - 1);
    const double fy = cy - y0;
    for (int i = 0; i < w; ++i) {
      const double cx = std::clamp(0.5 * i - 0.25, 0.0, static_cast<double>(cw - 1));
      const int x0 = static_cast<int>(std::floor(cx));
      const int x1 = std::min(x0 + 1, cw - 1);
      const double fx = cx - x0;
      const double s00 = src[y0 * cw + x0];
      const double s01 = src[y0 * cw + x1];
      const double s10 = src[y1 * cw + x0];
      const double s11 = src[y1 * cw + x1];
      double value;
      if (s00 == s01 && s00 == s10 && s00 == s11) {
        value = s00;
      } else {
        value = (1 - fy) * ((1 - fx) * s00 + fx * s01) + fy * ((1 - fx) * s10 + fx * s11);
      }
      v.at(i, j, t, c) = value / 255.0;
    }
  }
}

}  // namespace

VideoVolume load_yuv420(const std::filesystem::path& path, int width, int height, int frames) {
  if (frames < 1) throw Error(ErrorCode::ZeroFrames, "frame count must be at least 1");
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::InvalidArgument, "width and height must be positive");
  }
  if (width % 2 != 0 || height % 2 != 0) {
    throw Error(ErrorCode::OddDimensions,
                "I420 input needs even dimensions, got " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());

  const std::size_t luma = static_cast<std::size_t>(width) * height;
  const int cw = width / 2;
  const int ch = height / 2;
  const std::size_t chroma = static_cast<std::size_t>(cw) * ch;
  const std::size_t frame_bytes = luma + 2 * chroma;

  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t needed = frame_bytes * static_cast<std::size_t>(frames);
  if (bytes.size() < needed) {
    throw Error(ErrorCode::FileTooShort, path.string() + " holds " + std::to_string(bytes.size()) +
                                             " bytes, need " + std::to_string(needed));
  }

  VideoVolume v({width, height, frames}, ChromaLayout::k420Upsampled);
  for (int t = 0; t < frames; ++t) {
    const unsigned char* base = bytes.data() + frame_bytes * t;
    for (int j = 0; j < height; ++j)
      for (int i = 0; i < width; ++i) v.at(i, j, t, kY) = base[j * width + i] / 255.0;
    upsample_chroma(base + luma, cw, ch, v, t, kU);
    upsample_chroma(base + luma + chroma, cw, ch, v, t, kV);
  }
  return v;
}

void save_yuv420(const VideoVolume& v, const std::filesystem::path& path) {
  if (v.width() % 2 != 0 || v.height() % 2 != 0) {
    throw Error(ErrorCode::OddDimensions, "I420 output needs even dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  const int cw = v.width() / 2;
  const int ch = v.height() / 2;
  std::vector<unsigned char> buf;
  for (int t = 0; t < v.frames(); ++t) {
    buf.clear();
    for (int j = 0; j < v.height(); ++j)
      for (int i = 0; i < v.width(); ++i) buf.push_back(to_byte(v.at(i, j, t, kY)));
    for (int c : {kU, kV}) {
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
          const double avg = 0.25 * (v.at(2 * x, 2 * y, t, c) + v.at(2 * x + 1, 2 * y, t, c) +
                                     v.at(2 * x, 2 * y + 1, t, c) + v.at(2 * x + 1, 2 * y + 1, t, c));
          buf.push_back(to_byte(avg));
        }
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

VideoVolume crop(const VideoVolume& v, std::array<int, 3> origin, std::array<int, 3> size) {
  const std::array<int, 3> dims{v.width(), v.height(), v.frames()};
  for (int d = 0; d < 3; ++d) {
    if (origin[d] < 0 || size[d] < 1 || origin[d] + size[d] > dims[d]) {
      throw Error(ErrorCode::OutOfBounds, "crop window exceeds the volume along axis " + std::to_string(d));
    }
  }
  VideoVolume out({size[0], size[1], size[2]}, v.chroma_layout());
  for (int t = 0; t < size[2]; ++t)
    for (int j = 0; j < size[1]; ++j)
      for (int i = 0; i < size[0]; ++i)
        for (int c = 0; c < 3; ++c)
          out.at(i, j, t, c) = v.at(origin[0] + i, origin[1] + j, origin[2] + t, c);
  return out;
}

SampleSet to_samples(const VideoVolume& v) {
  SampleSet s;
  s.geometry = v.geometry();
  const std::size_t n = s.geometry.pixel_count();
  s.coords.reserve(n);
  s.amps.reserve(n);
  s.raster.reserve(n);
  for (int t = 0; t < v.frames(); ++t)
    for (int j = 0; j < v.height(); ++j)
      for (int i = 0; i < v.width(); ++i) {
        s.coords.push_back(normalized_coord(s.geometry, i, j, t));
        s.amps.push_back({v.at(i, j, t, kY), v.at(i, j, t, kU), v.at(i, j, t, kV)});
        s.raster.push_back({i, j, t});
      }
  return s;
}

unsigned char to_byte(double amplitude) {
  const double scaled = std::round(amplitude * 255.0);
  return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

std::array<unsigned char, 3> yuv_to_rgb8(double y, double u, double v) {
  const double cb = u - 0.5;
  const double cr = v - 0.5;
  const double r = y + 1.402 * cr;
  const double g = y - 0.344136 * cb - 0.714136 * cr;
  const double b = y + 1.772 * cb;
  return {to_byte(r), to_byte(g), to_byte(b)};
}

void write_frame(const Frame& frame, const std::filesystem::path& path, ImageFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  const bool rgb = format == ImageFormat::PpmRgb;
  out << (rgb ? "P6" : "P5") << "\n" << frame.width << " " << frame.height << "\n255\n";
  std::vector<unsigned char> buf;
  buf.reserve(static_cast<std::size_t>(frame.width) * frame.height * (rgb ? 3 : 1));
  for (int j = 0; j < frame.height; ++j)
    for (int i = 0; i < frame.width; ++i) {
      const double y = frame.channels[kY].at(i, j);
      if (rgb) {
        const auto px = yuv_to_rgb8(y, frame.channels[kU].at(i, j), frame.channels[kV].at(i, j));
        buf.insert(buf.end(), px.begin(), px.end());
      } else {
        buf.push_back(to_byte(y));
      }
    }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

}  // namespace smoe
