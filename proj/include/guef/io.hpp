#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "guef/localization.hpp"
#include "guef/model.hpp"
#include "guef/tensor.hpp"

namespace guef {

// Feature file: "GUEF", u32 version (1), u32 D, u32 W, u32 dtype (0 = f32), then D*W
// little-endian values, row-major (channel-major). Header is 20 bytes.
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;

Tensor read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Tensor& features);
Tensor decode_features(const std::string& bytes);
std::string encode_features(const Tensor& features);

// Checkpoint: "GCKP", u32 version (1), u32 D, u32 T, u32 hidden, u32 heads, u32 count, then
// per tensor: u32 name length, name bytes, u32 rank, rank x u32 dims, f64 payload.
void write_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams read_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::string& bytes);

struct LabeledSegment {
  Segment segment;
  std::size_t label = 0;
};

struct VideoRecord {
  std::string id;
  std::filesystem::path rgb;
  std::filesystem::path flow;
  std::vector<std::size_t> labels;
  std::vector<LabeledSegment> segments;
  double fps = 25.0;
  std::string split = "train";
};

/// One JSON object per line. Keys: id, rgb, flow, labels, segments [{start,end,label}], fps, split.
/// Relative feature paths resolve against the manifest's directory.
struct Manifest {
  std::vector<VideoRecord> videos;

  static Manifest read(const std::filesystem::path& path);
  static Manifest parse(std::istream& in, const std::filesystem::path& base_dir);
  void write(const std::filesystem::path& path) const;
  std::vector<const VideoRecord*> split(const std::string& name) const;
  const VideoRecord* find(const std::string& id) const;
  std::vector<GroundTruth> ground_truth(const std::string& split_name) const;
};

/// Proposal records: {"video","start","end","label","score","t_start","t_end"}; seconds use
/// 16 frames per snippet at the video's nominal fps.
void write_proposals(std::ostream& out, const std::vector<Proposal>& proposals, const Manifest* manifest);
std::vector<Proposal> read_proposals(std::istream& in);

}  // namespace guef
