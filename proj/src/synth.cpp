#include "guef/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "guef/error.hpp"

namespace guef {
namespace {

Tensor random_vector(std::mt19937_64& rng, std::size_t d, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t({d, 1});
  for (double& v : t.data()) v = scale * normal(rng);
  return t;
}

std::vector<LabeledSegment> plant_segments(std::mt19937_64& rng, const SynthConfig& s, std::size_t classes) {
  std::uniform_int_distribution<std::size_t> count_dist(1, 3);
  std::uniform_int_distribution<std::size_t> len_dist(s.min_len, s.max_len);
  std::uniform_int_distribution<std::size_t> class_dist(0, classes - 1);
  const std::size_t count = count_dist(rng);
  const std::size_t primary = class_dist(rng);
  std::vector<std::size_t> lengths(count);
  for (auto& l : lengths) l = len_dist(rng);
  // Distribute the free snippets over count+1 gaps, keeping one snippet between segments.
  const std::size_t used = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}) + (count - 1);
  std::size_t slack = s.width - used;
  std::vector<std::size_t> gaps(count + 1, 0);
  for (std::size_t i = 0; i < slack; ++i) gaps[std::uniform_int_distribution<std::size_t>(0, count)(rng)] += 1;
  std::vector<LabeledSegment> out;
  std::size_t pos = gaps[0];
  for (std::size_t i = 0; i < count; ++i) {
    // Later segments repeat the primary class unless they roll a fresh one.
    const bool fresh = i > 0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < s.multi_class_rate;
    out.push_back({{pos, pos + lengths[i]}, fresh ? class_dist(rng) : primary});
    pos += lengths[i] + 1 + gaps[i + 1];
  }
  return out;
}

}  // namespace

SyntheticDataset synthesize(const RunConfig& config, std::uint64_t seed) {
  const SynthConfig& s = config.synth;
  const std::size_t d = config.dims.feature_dim, classes = config.dims.classes;
  if (classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
  if (s.width < 10) throw ValidationError("synthetic videos need at least 10 snippets");
  if (d == 0) throw ValidationError("feature dimension must be positive");
  if (s.min_len == 0 || s.min_len > s.max_len) throw ValidationError("synthetic segment lengths must satisfy 1 <= min <= max");
  if (3 * s.max_len + 2 > s.width) {
    throw ValidationError("three segments of up to " + std::to_string(s.max_len) + " snippets do not fit in W=" +
                          std::to_string(s.width));
  }
  if (!(s.multi_class_rate >= 0.0 && s.multi_class_rate <= 1.0))
    throw ValidationError("synth.multi_class_rate must lie in [0,1]");
  if (s.train_videos + s.test_videos == 0) throw ValidationError("synthetic dataset must contain videos");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticDataset data;
  auto& proto = data.prototypes;
  for (std::size_t c = 0; c < classes; ++c) {
    proto.rgb_class_means.push_back(random_vector(rng, d, 1.0));
    proto.flow_class_means.push_back(random_vector(rng, d, 1.0));
  }
  proto.rgb_background = random_vector(rng, d, 1.0);
  proto.flow_background = random_vector(rng, d, 1.0);

  const std::size_t total = s.train_videos + s.test_videos;
  for (std::size_t n = 0; n < total; ++n) {
    const bool train = n < s.train_videos;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%03zu", train ? "train" : "test", train ? n : n - s.train_videos);

    SyntheticVideo video;
    video.record.id = id;
    video.record.split = train ? "train" : "test";
    video.record.fps = s.fps;
    video.record.segments = plant_segments(rng, s, classes);
    std::set<std::size_t> labels;
    for (const auto& seg : video.record.segments) labels.insert(seg.label);
    video.record.labels.assign(labels.begin(), labels.end());

    std::vector<long> snippet_class(s.width, -1);
    for (const auto& seg : video.record.segments)
      for (std::size_t t = seg.segment.start; t < seg.segment.end; ++t) snippet_class[t] = static_cast<long>(seg.label);

    video.rgb = Tensor({d, s.width});
    video.flow = Tensor({d, s.width});
    std::uniform_int_distribution<std::size_t> class_dist(0, classes - 1);
    for (std::size_t t = 0; t < s.width; ++t) {
      const Tensor* rgb_mean = &proto.rgb_background;
      const Tensor* flow_mean = &proto.flow_background;
      if (snippet_class[t] >= 0) {
        rgb_mean = &proto.rgb_class_means[static_cast<std::size_t>(snippet_class[t])];
        flow_mean = &proto.flow_class_means[static_cast<std::size_t>(snippet_class[t])];
      }
      for (std::size_t k = 0; k < d; ++k) {
        video.rgb.at(k, t) = (*rgb_mean)[k] + s.noise * normal(rng);
        video.flow.at(k, t) = (*flow_mean)[k] + s.noise * normal(rng);
      }
      if (snippet_class[t] < 0 && s.distractor > 0.0 && unit(rng) < s.distractor_rate) {
        const std::size_t c = class_dist(rng);
        const bool in_rgb = unit(rng) < 0.5;
        Tensor& target = in_rgb ? video.rgb : video.flow;
        const Tensor& lure = in_rgb ? proto.rgb_class_means[c] : proto.flow_class_means[c];
        for (std::size_t k = 0; k < d; ++k)
          if (unit(rng) < 0.5) target.at(k, t) += s.distractor * lure[k];
      }
    }
    data.videos.push_back(std::move(video));
  }
  return data;
}

Manifest write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir) {
  Manifest manifest;
  for (const auto& v : data.videos) {
    VideoRecord rec = v.record;
    rec.rgb = dir / "features" / (rec.id + "_rgb.bin");
    rec.flow = dir / "features" / (rec.id + "_flow.bin");
    write_features(rec.rgb, v.rgb);
    write_features(rec.flow, v.flow);
    manifest.videos.push_back(std::move(rec));
  }
  manifest.write(dir / "manifest.jsonl");
  return manifest;
}

}  // namespace guef
