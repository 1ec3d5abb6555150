#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace promptloop::imagekit {

/// 8-bit raster, row-major with interleaved channels. Immutable once built.
class Image {
 public:
  /// Throws DataError when the dimensions are not positive, channels is not
  /// 1 or 3, or the buffer length differs from width * height * channels.
  Image(int width, int height, int channels, std::vector<std::uint8_t> pixels);

  static Image filled(int width, int height, int channels, std::uint8_t value);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  /// Replicated-edge access: coordinates are clamped into the image.
  std::uint8_t clamped(int x, int y, int c = 0) const;

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_;
  int height_;
  int channels_;
  std::vector<std::uint8_t> pixels_;
};

/// Ordered frame sequence; every frame shares one shape.
class Video {
 public:
  /// Throws DataError for an empty sequence or mismatched frame shapes.
  explicit Video(std::vector<Image> frames, double fps = 24.0);

  std::size_t size() const { return frames_.size(); }
  const Image& frame(std::size_t i) const { return frames_[i]; }
  const std::vector<Image>& frames() const { return frames_; }
  double fps() const { return fps_; }

  /// Frames [first, last] (0-based, inclusive) as a new video.
  Video slice(std::size_t first, std::size_t last) const;

  friend bool operator==(const Video&, const Video&) = default;

 private:
  std::vector<Image> frames_;
  double fps_;
};

struct GradientMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Round half away from zero, saturated to [0, 255].
std::uint8_t quantize(double value);

Image to_grayscale(const Image& img);

/// 3x3 Sobel magnitude with replicated edges. Requires a 1-channel image of
/// at least 3x3.
GradientMap sobel_magnitude(const Image& gray);

/// Bilinear resampling at pixel centres to floor(dim / factor). `min_dim`
/// guards the smallest acceptable output side.
Image downscale_bilinear(const Image& img, double factor, int min_dim = 8);

// Binary netpbm (P5 / P6, maxval 255).
Image decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Image& img);
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& img);

/// Frame file name for 1-based index `index`: frame_000001.ppm. Grayscale
/// frames keep the .ppm name; readers go by the magic number.
std::string frame_filename(std::size_t index);

/// Writes frame_000001.* ... into `dir` (created if missing).
void write_video_dir(const std::filesystem::path& dir, const Video& video);

/// Reads every frame_*.ppm / frame_*.pgm file of `dir` in lexicographic order.
Video read_video_dir(const std::filesystem::path& dir);

}  // namespace promptloop::imagekit
