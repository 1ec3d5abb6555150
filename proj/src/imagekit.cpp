#include "promptloop/imagekit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "promptloop/error.hpp"

namespace promptloop::imagekit {

Image::Image(int width, int height, int channels, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) {
    throw DataError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
  if (channels != 1 && channels != 3) {
    throw DataError("image channels must be 1 or 3, got " + std::to_string(channels));
  }
  const auto expected = static_cast<std::size_t>(width) * height * channels;
  if (pixels_.size() != expected) {
    throw DataError("pixel buffer holds " + std::to_string(pixels_.size()) + " samples, expected " +
                    std::to_string(expected));
  }
}

Image Image::filled(int width, int height, int channels, std::uint8_t value) {
  const auto n = static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) * std::max(channels, 0);
  return Image(width, height, channels, std::vector<std::uint8_t>(n, value));
}

std::uint8_t Image::clamped(int x, int y, int c) const {
  return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1), c);
}

Video::Video(std::vector<Image> frames, double fps) : frames_(std::move(frames)), fps_(fps) {
  if (frames_.empty()) throw DataError("video must contain at least one frame");
  for (std::size_t i = 1; i < frames_.size(); ++i) {
    if (!frames_[i].same_shape(frames_[0])) {
      throw DataError("frame " + std::to_string(i + 1) + " differs in shape from frame 1");
    }
  }
}

Video Video::slice(std::size_t first, std::size_t last) const {
  if (first > last || last >= frames_.size()) throw DataError("video slice out of range");
  return Video(std::vector<Image>(frames_.begin() + static_cast<std::ptrdiff_t>(first),
                                  frames_.begin() + static_cast<std::ptrdiff_t>(last) + 1),
               fps_);
}

std::uint8_t quantize(double value) {
  const long r = std::lround(value);  // half away from zero
  return static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
}

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(img.width()) * img.height());
  const auto px = img.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double luma = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
    out[i] = quantize(luma);
  }
  return Image(img.width(), img.height(), 1, std::move(out));
}

GradientMap sobel_magnitude(const Image& gray) {
  if (gray.channels() != 1) throw DataError("sobel_magnitude expects a grayscale image");
  if (gray.width() < 3 || gray.height() < 3) throw DataError("sobel_magnitude needs at least 3x3 pixels");
  GradientMap g{gray.width(), gray.height(), {}};
  g.values.resize(static_cast<std::size_t>(g.width) * g.height);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      auto p = [&](int dx, int dy) { return static_cast<int>(gray.clamped(x + dx, y + dy)); };
      const int gx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
      const int gy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
      g.values[static_cast<std::size_t>(y) * g.width + x] = std::sqrt(static_cast<double>(gx * gx + gy * gy));
    }
  }
  return g;
}

Image downscale_bilinear(const Image& img, double factor, int min_dim) {
  if (!(factor > 1.0)) throw DataError("downscale factor must exceed 1");
  const int w = static_cast<int>(std::floor(img.width() / factor));
  const int h = static_cast<int>(std::floor(img.height() / factor));
  if (w < std::max(min_dim, 1) || h < std::max(min_dim, 1)) {
    throw DataError("downscaled image " + std::to_string(w) + "x" + std::to_string(h) + " is below the " +
                    std::to_string(min_dim) + "x" + std::to_string(min_dim) + " minimum");
  }
  const int c = img.channels();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * c);
  for (int y = 0; y < h; ++y) {
    const double sy = (y + 0.5) * factor - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    for (int x = 0; x < w; ++x) {
      const double sx = (x + 0.5) * factor - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double top = (1 - fx) * img.clamped(x0, y0, ch) + fx * img.clamped(x0 + 1, y0, ch);
        const double bottom = (1 - fx) * img.clamped(x0, y0 + 1, ch) + fx * img.clamped(x0 + 1, y0 + 1, ch);
        out[(static_cast<std::size_t>(y) * w + x) * c + ch] = quantize((1 - fy) * top + fy * bottom);
      }
    }
  }
  return Image(w, h, c, std::move(out));
}

}  // namespace promptloop::imagekit
