#include "promptloop/smoothness.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "promptloop/error.hpp"

namespace promptloop::smoothness {
namespace {

static_assert(std::endian::native == std::endian::little, "embedding files assume a little-endian host");

std::uint64_t read_u64(std::istream& in, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated embedding header in " + path.string());
  return v;
}

}  // namespace

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::uint64_t count = read_u64(in, path);
  const std::uint64_t dim = read_u64(in, path);
  if (dim == 0 || count == 0 || count > (1u << 24) || dim > (1u << 24)) {
    throw DataError("implausible embedding table shape in " + path.string());
  }
  EmbeddingTable table{static_cast<std::size_t>(dim), {}};
  table.rows.assign(count, Embedding(dim));
  for (auto& row : table.rows) {
    if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(double)))) {
      throw DataError("truncated embedding data in " + path.string());
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw DataError("non-finite embedding value in " + path.string());
    }
  }
  return table;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::uint64_t count = table.rows.size();
  const std::uint64_t dim = table.dim;
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  for (const auto& row : table.rows) {
    if (row.size() != table.dim) throw DataError("embedding row length differs from table dim");
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  }
}

EmbedderSpec EmbedderSpec::precomputed(EmbeddingTable table) {
  EmbedderSpec spec;
  spec.kind = Kind::Precomputed;
  spec.table = std::make_shared<const EmbeddingTable>(std::move(table));
  return spec;
}

Embedding embed_frame(const imagekit::Image& frame, const EmbedderSpec& spec) {
  if (spec.kind != EmbedderSpec::Kind::GridDescriptor) {
    throw DataError("precomputed embeddings are indexed by frame; use embed_video");
  }
  const int grid = spec.grid;
  if (grid < 1) throw DataError("embedder grid must be >= 1");
  if (frame.width() < grid || frame.height() < grid) throw DataError("frame is smaller than the embedder grid");

  const imagekit::Image gray = imagekit::to_grayscale(frame);
  const imagekit::GradientMap grad = imagekit::sobel_magnitude(gray);
  const int cell_w = gray.width() / grid;
  const int cell_h = gray.height() / grid;
  const std::size_t cells = static_cast<std::size_t>(grid) * grid;

  std::vector<double> sum(cells), sum_sq(cells), grad_sum(cells);
  std::vector<std::size_t> count(cells);
  for (int y = 0; y < gray.height(); ++y) {
    const int cy = std::min(y / cell_h, grid - 1);
    for (int x = 0; x < gray.width(); ++x) {
      const int cx = std::min(x / cell_w, grid - 1);
      const std::size_t c = static_cast<std::size_t>(cy) * grid + cx;
      const double v = gray.at(x, y);
      sum[c] += v;
      sum_sq[c] += v * v;
      grad_sum[c] += grad.at(x, y);
      ++count[c];
    }
  }

  Embedding out;
  out.reserve(3 * cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const double n = static_cast<double>(count[c]);
    const double mean = sum[c] / n;
    const double var = std::max(0.0, sum_sq[c] / n - mean * mean);
    out.push_back(mean / 255.0);
    out.push_back(std::sqrt(var) / 255.0);
    out.push_back(grad_sum[c] / n / 1020.0);
  }
  return out;
}

std::vector<Embedding> embed_video(const imagekit::Video& video, const EmbedderSpec& spec) {
  if (spec.kind == EmbedderSpec::Kind::Precomputed) {
    if (!spec.table || spec.table->rows.size() < video.size()) {
      throw DataError("precomputed embedding table does not cover every frame");
    }
    return {spec.table->rows.begin(), spec.table->rows.begin() + static_cast<std::ptrdiff_t>(video.size())};
  }
  std::vector<Embedding> out;
  out.reserve(video.size());
  for (const auto& frame : video.frames()) out.push_back(embed_frame(frame, spec));
  return out;
}

double squared_distance(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw DataError("embedding lengths differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

FidCurve fid_from_embeddings(const std::vector<Embedding>& embeddings) {
  FidCurve curve;
  for (std::size_t t = 0; t + 1 < embeddings.size(); ++t) {
    curve.scores.push_back(squared_distance(embeddings[t], embeddings[t + 1]));
  }
  return curve;
}

FidCurve fid_adjacent(const imagekit::Video& video, const EmbedderSpec& spec) {
  return fid_from_embeddings(embed_video(video, spec));
}

double smoothness_reward(const FidCurve& curve) {
  double total = 0.0;
  for (double s : curve.scores) total += s;
  return -total;
}

std::vector<double> smoothness_reward_per_clip(const FidCurve& curve, const script::ClipRanges& ranges) {
  const int frames = static_cast<int>(curve.scores.size()) + 1;
  if (ranges.empty() || ranges.front().lo != 1 || ranges.back().hi != frames) {
    throw DataError("clip ranges do not cover the " + std::to_string(frames) + " frames of the curve");
  }
  for (std::size_t n = 0; n < ranges.size(); ++n) {
    if (ranges[n].hi < ranges[n].lo || (n > 0 && ranges[n].lo != ranges[n - 1].hi + 1)) {
      throw DataError("clip ranges are not a contiguous partition");
    }
  }
  std::vector<double> out(ranges.size(), 0.0);
  for (std::size_t n = 0; n < ranges.size(); ++n) {
    // Transitions t = lo .. hi, except the final clip which has no outgoing one.
    const int last = std::min(ranges[n].hi, frames - 1);
    double total = 0.0;
    for (int t = ranges[n].lo; t <= last; ++t) total += curve.scores[static_cast<std::size_t>(t - 1)];
    out[n] = -total;
  }
  return out;
}

double mean_fid(const FidCurve& curve) {
  if (curve.scores.empty()) return 0.0;
  return -smoothness_reward(curve) / static_cast<double>(curve.scores.size());
}

std::string fid_curve_csv(const FidCurve& curve) {
  std::string out = "frame_id,fid\n";
  char buf[64];
  for (std::size_t t = 0; t < curve.scores.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", t + 1, curve.scores[t]);
    out += buf;
  }
  return out;
}

void write_fid_csv(const std::filesystem::path& path, const FidCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << fid_curve_csv(curve);
}

}  // namespace promptloop::smoothness
