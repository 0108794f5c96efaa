#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "guef/model.hpp"
#include "guef/objectives.hpp"

namespace guef {

/// Run configuration. Text form is flat `key = value` lines; `#` starts a comment.
///
/// Keys (defaults in parentheses):
///   feature_dim (16)  classes (3)  hidden (32)  heads (4)
///   max_snippets (320)  learning_rate (5e-5)  iterations (5000)  batch_size (10)
///   lambda1 (0.8)  lambda2 (1.0)  delta (0.7)  topk_ratio (0.125)
///   thresholds (0.1,...,0.9)  nms_iou (0.5)  class_gate (0.1)
///   checkpoint_every (0 = end only)  use_guef (true)  use_hmha (true)  audit_masses (false)
///   seed (required)
///   synth.train_videos (40)  synth.test_videos (20)  synth.width (50)  synth.noise (0.6)
///   synth.distractor (0.5)  synth.distractor_rate (0.3)  synth.min_len (4)  synth.max_len (10)  synth.fps (25)
///   synth.multi_class_rate (0)
struct SynthConfig {
  std::size_t train_videos = 40;
  std::size_t test_videos = 20;
  std::size_t width = 50;
  double noise = 0.6;
  double distractor = 0.5;
  double distractor_rate = 0.3;
  std::size_t min_len = 4;
  std::size_t max_len = 10;
  double fps = 25.0;
  double multi_class_rate = 0.0;
};

struct RunConfig {
  ModelDims dims;
  std::size_t max_snippets = 320;
  double learning_rate = 5e-5;
  std::size_t iterations = 5000;
  std::size_t batch_size = 10;
  double lambda1 = 0.8;
  double lambda2 = 1.0;
  double delta = 0.7;
  double topk_ratio = 0.125;
  std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double nms_iou = 0.5;
  double class_gate = 0.1;
  std::size_t checkpoint_every = 0;
  bool use_guef = true;
  bool use_hmha = true;
  bool audit_masses = false;
  std::optional<std::uint64_t> seed;
  SynthConfig synth;

  /// Throws ValidationError for non-positive sizes, a missing seed, or out-of-range weights.
  void validate() const;
  std::uint64_t require_seed() const;

  void set(const std::string& key, const std::string& value);
  static RunConfig parse(std::istream& in);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

}  // namespace guef
