#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "guef/config.hpp"
#include "guef/io.hpp"
#include "guef/tensor.hpp"

namespace guef {

struct SyntheticVideo {
  VideoRecord record;
  Tensor rgb;   // D x W
  Tensor flow;  // D x W
};

/// Class and background prototypes used to draw snippet features.
struct SyntheticPrototypes {
  std::vector<Tensor> rgb_class_means;   // T entries, each D x 1
  std::vector<Tensor> flow_class_means;  // T entries, each D x 1
  Tensor rgb_background;
  Tensor flow_background;
};

struct SyntheticDataset {
  SyntheticPrototypes prototypes;
  std::vector<SyntheticVideo> videos;
};

/// Each video gets 1-3 non-overlapping planted segments. Action snippets draw both streams
/// from class prototypes plus Gaussian noise; background snippets draw from a shared prototype,
/// and a fraction of them carry a partial class prototype on a random channel subset of one
/// stream (action-like background clutter).
SyntheticDataset synthesize(const RunConfig& config, std::uint64_t seed);

/// Writes features/<id>_{rgb,flow}.bin and manifest.jsonl under `dir`; returns the manifest.
Manifest write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace guef
