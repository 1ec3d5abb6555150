#include <algorithm>
#include <fstream>
#include <iterator>
#include <string>

#include "promptloop/error.hpp"
#include "promptloop/imagekit.hpp"

namespace promptloop::imagekit {
namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t offset() const { return pos_; }

  // Skips whitespace and '#' comments (a comment runs to end of line).
  void skip_separators() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  int read_uint(const char* field) {
    skip_separators();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) fail(std::string("value of ") + field + " too large", start);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + field, start);
    return static_cast<int>(value);
  }

  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw DataError("pnm: " + what + " at byte offset " + std::to_string(at));
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void expect_single_space() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) fail("expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(std::span<const std::uint8_t> bytes) {
  HeaderReader header(bytes, 2);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    header.fail("missing P5/P6 magic", 0);
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  const int width = header.read_uint("width");
  const int height = header.read_uint("height");
  if (width < 1 || height < 1) header.fail("non-positive dimensions", header.offset());
  header.skip_separators();
  const std::size_t maxval_at = header.offset();
  const int maxval = header.read_uint("maxval");
  if (maxval != 255) header.fail("maxval " + std::to_string(maxval) + " is not 255", maxval_at);
  header.expect_single_space();

  const std::size_t data_start = header.offset();
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  const std::size_t have = bytes.size() - data_start;
  if (have < need) {
    header.fail("truncated pixel data (" + std::to_string(have) + " of " + std::to_string(need) + " samples)",
            data_start + have);
  }
  std::vector<std::uint8_t> pixels(bytes.begin() + static_cast<std::ptrdiff_t>(data_start),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(data_start + need));
  return Image(width, height, channels, std::move(pixels));
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width()) +
                             " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels().begin(), img.pixels().end());
  return out;
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot write " + path.string());
  const auto bytes = encode_pnm(img);
  file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw DataError("write failed for " + path.string());
}

std::string frame_filename(std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "frame_" + digits + ".ppm";
}

void write_video_dir(const std::filesystem::path& dir, const Video& video) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < video.size(); ++i) {
    write_pnm(dir / frame_filename(i + 1), video.frame(i));
  }
}

Video read_video_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && name.rfind("frame_", 0) == 0 && (ext == ".ppm" || ext == ".pgm")) {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw DataError("no frame_*.ppm files in " + dir.string());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  std::vector<Image> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_pnm(f));
  return Video(std::move(frames));
}

}  // namespace promptloop::imagekit
