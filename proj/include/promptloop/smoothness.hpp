#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "promptloop/imagekit.hpp"
#include "promptloop/script.hpp"

namespace promptloop::smoothness {

using Embedding = std::vector<double>;

/// Externally supplied per-frame features, e.g. from a pretrained network.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<Embedding> rows;  // one per frame
};

/// Binary layout, little-endian: uint64 frame count, uint64 dim, then
/// count * dim IEEE-754 doubles in row-major order.
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

struct EmbedderSpec {
  enum class Kind { GridDescriptor, Precomputed };

  Kind kind = Kind::GridDescriptor;
  int grid = 8;
  std::shared_ptr<const EmbeddingTable> table;  // Precomputed only

  static EmbedderSpec precomputed(EmbeddingTable table);
};

/// Adjacent-frame feature distances; scores[t-1] is the transition t -> t+1.
struct FidCurve {
  std::vector<double> scores;
};

/// Grid descriptor: per cell (mean / 255, stddev / 255, mean Sobel / 1020),
/// cells row-major, 3 * grid^2 values. Remainder pixels fall into the last
/// row and column of cells.
Embedding embed_frame(const imagekit::Image& frame, const EmbedderSpec& spec);

/// Embeds every frame. Precomputed tables are indexed by frame position.
std::vector<Embedding> embed_video(const imagekit::Video& video, const EmbedderSpec& spec);

double squared_distance(const Embedding& a, const Embedding& b);

FidCurve fid_from_embeddings(const std::vector<Embedding>& embeddings);
FidCurve fid_adjacent(const imagekit::Video& video, const EmbedderSpec& spec = {});

/// -(sum of the curve); 0 for an empty curve.
double smoothness_reward(const FidCurve& curve);

/// Each transition t is charged to the clip owning frame t, so the entries
/// sum to smoothness_reward(curve).
std::vector<double> smoothness_reward_per_clip(const FidCurve& curve, const script::ClipRanges& ranges);

double mean_fid(const FidCurve& curve);

/// "frame_id,fid" header then one row per transition, frame_id 1-based.
std::string fid_curve_csv(const FidCurve& curve);
void write_fid_csv(const std::filesystem::path& path, const FidCurve& curve);

}  // namespace promptloop::smoothness
