#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "guef/config.hpp"
#include "guef/error.hpp"
#include "guef/io.hpp"
#include "guef/synth.hpp"
#include "guef/training.hpp"

using namespace guef;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("guef_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RunConfig small_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.dims = {8, 3, 8, 4};
  c.synth.train_videos = 6;
  c.synth.test_videos = 2;
  c.synth.width = 32;
  c.synth.max_len = 8;
  c.iterations = 4;
  c.batch_size = 3;
  c.learning_rate = 1e-3;
  return c;
}

std::vector<VideoSample> samples_of(const SyntheticDataset& data, const std::string& split) {
  std::vector<VideoSample> out;
  for (const auto& v : data.videos)
    if (v.record.split == split) out.push_back({v.record.id, v.rgb, v.flow, v.record.labels});
  return out;
}

Tensor counting_tensor(std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.25 * static_cast<double>(i) - 1.0;
  return t;
}

}  // namespace

TEST(FeatureFile, RoundTripAndLayout) {
  const Tensor x = counting_tensor(2, 3);
  const std::string bytes = encode_features(x);
  ASSERT_EQ(bytes.size(), 44u);
  EXPECT_EQ(bytes.substr(0, 4), "GUEF");
  std::uint32_t header[4];
  std::memcpy(header, bytes.data() + 4, sizeof header);
  EXPECT_EQ(header[0], 1u);
  EXPECT_EQ(header[1], 2u);
  EXPECT_EQ(header[2], 3u);
  EXPECT_EQ(header[3], 0u);
  EXPECT_EQ(decode_features(bytes), x);

  const fs::path dir = scratch("features");
  write_features(dir / "x.bin", x);
  EXPECT_EQ(read_features(dir / "x.bin"), x);
}

TEST(FeatureFile, Corruption) {
  const std::string good = encode_features(counting_tensor(2, 3));
  auto kind_of = [](const std::string& bytes) {
    try {
      decode_features(bytes);
    } catch (const FormatError& e) {
      return e.kind();
    }
    return FormatErrorKind::kIo;
  };
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_EQ(kind_of(bad), FormatErrorKind::kBadMagic);
  bad = good;
  bad[4] = 9;
  EXPECT_EQ(kind_of(bad), FormatErrorKind::kBadVersion);
  bad = good;
  bad[16] = 1;
  EXPECT_EQ(kind_of(bad), FormatErrorKind::kBadDtype);
  EXPECT_EQ(kind_of(good.substr(0, good.size() - 1)), FormatErrorKind::kTruncated);
  EXPECT_EQ(kind_of(good.substr(0, 10)), FormatErrorKind::kTruncated);
  bad = good;
  const std::uint32_t huge = 0xFFFFFFFFu;
  std::memcpy(bad.data() + 8, &huge, 4);
  std::memcpy(bad.data() + 12, &huge, 4);
  EXPECT_EQ(kind_of(bad), FormatErrorKind::kShapeOverflow);
  bad = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + 24, &nan, 4);
  EXPECT_EQ(kind_of(bad), FormatErrorKind::kSyntax);
  EXPECT_THROW(read_features("/nonexistent/guef.bin"), FormatError);
  EXPECT_THROW(encode_features(Tensor({2, 2}, std::numeric_limits<double>::quiet_NaN())), ValidationError);
}

TEST(Checkpoint, RoundTrip) {
  const ModelDims dims{8, 3, 8, 4};
  const ModelParams p = ModelParams::init(dims, 11);
  const ModelParams back = decode_checkpoint(encode_checkpoint(p));
  EXPECT_TRUE(back == p);
  EXPECT_EQ(back.dims().hidden, 8u);
  const fs::path dir = scratch("ckpt");
  write_checkpoint(dir / "m.ckpt", p);
  EXPECT_TRUE(read_checkpoint(dir / "m.ckpt") == p);
  std::string bad = encode_checkpoint(p);
  bad[1] = 'x';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(p).substr(0, 60)), FormatError);
}

TEST(Manifest, ParseResolveAndReject) {
  std::istringstream in(
      R"({"id":"a","rgb":"f/a_rgb.bin","flow":"f/a_flow.bin","labels":[1],"segments":[{"start":2,"end":5,"label":1}],"fps":30,"split":"test"})"
      "\n\n"
      R"({"id":"b","rgb":"/abs/b_rgb.bin","flow":"f/b_flow.bin","labels":[0,2],"segments":[],"fps":25,"split":"train"})"
      "\n");
  const Manifest m = Manifest::parse(in, "/data");
  ASSERT_EQ(m.videos.size(), 2u);
  EXPECT_EQ(m.videos[0].rgb, fs::path("/data/f/a_rgb.bin"));
  EXPECT_EQ(m.videos[1].rgb, fs::path("/abs/b_rgb.bin"));
  EXPECT_EQ(m.split("test").size(), 1u);
  EXPECT_EQ(m.split("").size(), 2u);
  ASSERT_NE(m.find("b"), nullptr);
  EXPECT_EQ(m.find("b")->labels, (std::vector<std::size_t>{0, 2}));
  const auto gt = m.ground_truth("test");
  ASSERT_EQ(gt.size(), 1u);
  EXPECT_EQ(gt[0].segment, (Segment{2, 5}));

  std::istringstream dup(R"({"id":"a","rgb":"x","flow":"y","labels":[0]})"
                         "\n"
                         R"({"id":"a","rgb":"x","flow":"y","labels":[0]})");
  EXPECT_THROW(Manifest::parse(dup, "/"), ValidationError);
  std::istringstream broken("{\"id\": ");
  EXPECT_THROW(Manifest::parse(broken, "/"), FormatError);
}

TEST(Manifest, WriteReadRoundTrip) {
  const fs::path dir = scratch("manifest");
  Manifest m;
  m.videos.push_back({"v1", dir / "feat/v1_rgb.bin", dir / "feat/v1_flow.bin", {2}, {{{3, 9}, 2}}, 30.0, "test"});
  m.write(dir / "manifest.jsonl");
  const Manifest back = Manifest::read(dir / "manifest.jsonl");
  ASSERT_EQ(back.videos.size(), 1u);
  EXPECT_EQ(back.videos[0].rgb, dir / "feat/v1_rgb.bin");
  EXPECT_EQ(back.videos[0].segments[0].segment, (Segment{3, 9}));
  EXPECT_EQ(back.videos[0].fps, 30.0);
}

TEST(Proposals, ExportAndParse) {
  Manifest m;
  m.videos.push_back({"v", "r", "f", {0}, {}, 25.0, "test"});
  const std::vector<Proposal> props = {{"v", {2, 7}, 1, 0.75}};
  std::ostringstream out;
  write_proposals(out, props, &m);
  EXPECT_NE(out.str().find("\"t_start\":1.28"), std::string::npos);
  std::istringstream in(out.str());
  const auto back = read_proposals(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].segment, (Segment{2, 7}));
  EXPECT_EQ(back[0].label, 1u);
  EXPECT_EQ(back[0].score, 0.75);
}

TEST(Config, ParseAndRoundTrip) {
  std::istringstream in(
      "# desk run\n"
      "seed = 7\n"
      "learning_rate = 1e-3   # faster\n"
      "iterations=600\n"
      "thresholds = 0.2, 0.4\n"
      "use_hmha = false\n"
      "synth.noise = 0.25\n");
  const RunConfig c = RunConfig::parse(in);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.iterations, 600u);
  EXPECT_EQ(c.thresholds, (std::vector<double>{0.2, 0.4}));
  EXPECT_FALSE(c.use_hmha);
  EXPECT_EQ(c.synth.noise, 0.25);
  std::istringstream again(c.to_text());
  EXPECT_EQ(RunConfig::parse(again).to_text(), c.to_text());

  std::istringstream unknown("sed = 7\n");
  EXPECT_THROW(RunConfig::parse(unknown), ValidationError);
  std::istringstream bad_value("iterations = many\n");
  EXPECT_THROW(RunConfig::parse(bad_value), ValidationError);
  RunConfig no_seed;
  EXPECT_THROW(no_seed.validate(), ValidationError);
}

TEST(Synth, DeterministicPerSeed) {
  const RunConfig c = small_config(3);
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  write_dataset(synthesize(c, 3), a);
  write_dataset(synthesize(c, 3), b);
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  EXPECT_EQ(slurp(a / "features/train_000_rgb.bin"), slurp(b / "features/train_000_rgb.bin"));
  EXPECT_EQ(slurp(a / "features/test_001_flow.bin"), slurp(b / "features/test_001_flow.bin"));
  EXPECT_NE(synthesize(c, 4).videos[0].rgb, synthesize(c, 3).videos[0].rgb);
}

TEST(Synth, PlantedSegmentsAreValid) {
  RunConfig c = small_config(5);
  c.synth.multi_class_rate = 0.5;
  const auto data = synthesize(c, 5);
  ASSERT_EQ(data.videos.size(), 8u);
  for (const auto& v : data.videos) {
    const auto& segs = v.record.segments;
    ASSERT_GE(segs.size(), 1u);
    ASSERT_LE(segs.size(), 3u);
    std::set<std::size_t> labels;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      EXPECT_LT(segs[i].segment.start, segs[i].segment.end);
      EXPECT_LE(segs[i].segment.end, c.synth.width);
      EXPECT_GE(segs[i].segment.length(), c.synth.min_len);
      EXPECT_LE(segs[i].segment.length(), c.synth.max_len);
      if (i > 0) EXPECT_GT(segs[i].segment.start, segs[i - 1].segment.end);
      labels.insert(segs[i].label);
    }
    EXPECT_EQ(v.record.labels, std::vector<std::size_t>(labels.begin(), labels.end()));
    EXPECT_EQ(v.rgb.shape(), (Tensor::Shape{8, 32}));
  }
  c.synth.max_len = 20;
  EXPECT_THROW(synthesize(c, 5), ValidationError);
}

TEST(Synth, NoiselessDataIsSeparableByNearestMean) {
  RunConfig c = small_config(8);
  c.synth.noise = 0.0;
  c.synth.distractor = 0.0;
  const auto data = synthesize(c, 8);
  const auto& p = data.prototypes;
  std::size_t correct = 0, total = 0;
  for (const auto& v : data.videos) {
    std::vector<long> truth(c.synth.width, -1);
    for (const auto& s : v.record.segments)
      for (std::size_t t = s.segment.start; t < s.segment.end; ++t) truth[t] = static_cast<long>(s.label);
    for (std::size_t t = 0; t < c.synth.width; ++t) {
      auto dist = [&](const Tensor& rgb_mean, const Tensor& flow_mean) {
        double d = 0.0;
        for (std::size_t k = 0; k < rgb_mean.size(); ++k) {
          d += std::pow(v.rgb.at(k, t) - rgb_mean[k], 2);
          d += std::pow(v.flow.at(k, t) - flow_mean[k], 2);
        }
        return d;
      };
      long best = -1;
      double best_d = dist(p.rgb_background, p.flow_background);
      for (std::size_t cls = 0; cls < p.rgb_class_means.size(); ++cls) {
        const double d = dist(p.rgb_class_means[cls], p.flow_class_means[cls]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<long>(cls);
        }
      }
      correct += best == truth[t] ? 1 : 0;
      ++total;
    }
  }
  EXPECT_EQ(correct, total);
}

TEST(Training, VideoLabel) {
  EXPECT_EQ(video_label({1}, 3), Tensor::row({0.0, 1.0, 0.0, 0.0}));
  EXPECT_EQ(video_label({0, 2}, 3), Tensor::row({0.5, 0.0, 0.5, 0.0}));
  EXPECT_THROW(video_label({}, 3), ValidationError);
  EXPECT_THROW(video_label({3}, 3), ValidationError);
  EXPECT_EQ(epochs_for(10, 4, 8), 5u);
  EXPECT_EQ(epochs_for(0, 4, 8), 1u);
}

TEST(Training, ZeroIterationsKeepsInitialization) {
  RunConfig c = small_config(12);
  c.iterations = 0;
  const auto data = synthesize(c, 12);
  const TrainResult r = train(c, samples_of(data, "train"));
  EXPECT_TRUE(r.params == ModelParams::init(c.dims, 12));
  EXPECT_TRUE(r.log.empty());
}

TEST(Training, LossLogIsDeterministic) {
  const RunConfig c = small_config(13);
  const auto data = synthesize(c, 13);
  const auto set = samples_of(data, "train");
  std::ostringstream a, b;
  const TrainResult ra = train(c, set, {&a, {}});
  const TrainResult rb = train(c, set, {&b, {}});
  EXPECT_EQ(a.str(), b.str());
  EXPECT_TRUE(ra.params == rb.params);
  ASSERT_EQ(ra.log.size(), 4u);
  EXPECT_EQ(ra.log[0].rfind("iter=1 epoch=1 cla=", 0), 0u);
}

TEST(Training, ZeroWeightsReduceToClassificationLoss) {
  RunConfig c = small_config(14);
  c.lambda1 = 0.0;
  c.lambda2 = 0.0;
  const auto data = synthesize(c, 14);
  const ModelParams params = ModelParams::init(c.dims, 14);
  for (const auto& v : samples_of(data, "train")) {
    Tape tape;
    const auto p = params.bind(tape);
    const VideoLoss loss = video_loss(p, c.dims, tape.constant(v.flow), tape.constant(v.rgb), v.labels, 1, 2, c);
    EXPECT_EQ(loss.total.value().item(), loss.cla.value().item());
    EXPECT_GT(loss.uef.value().item(), 0.0);
  }
}

TEST(Training, AblationSwitchesChangeTheObjective) {
  RunConfig c = small_config(15);
  const auto data = synthesize(c, 15);
  const auto v = samples_of(data, "train").front();
  const ModelParams params = ModelParams::init(c.dims, 15);
  auto losses = [&](const RunConfig& cfg) {
    Tape tape;
    const auto p = params.bind(tape);
    const VideoLoss l = video_loss(p, cfg.dims, tape.constant(v.flow), tape.constant(v.rgb), v.labels, 1, 3, cfg);
    return std::array<double, 3>{l.cla.value().item(), l.uef.value().item(), l.hge.value().item()};
  };
  const auto full = losses(c);
  RunConfig no_guef = c;
  no_guef.use_guef = false;
  const auto ng = losses(no_guef);
  EXPECT_EQ(ng[0], full[0]);
  EXPECT_EQ(ng[2], 0.0);
  EXPECT_GT(full[2], 0.0);
  RunConfig no_hmha = c;
  no_hmha.use_hmha = false;
  EXPECT_NE(losses(no_hmha)[0], full[0]);
}

TEST(Training, RejectsBadInput) {
  RunConfig c = small_config(16);
  EXPECT_THROW(train(c, {}), ValidationError);
  const auto data = synthesize(c, 16);
  auto set = samples_of(data, "train");
  set[0].rgb = Tensor({5, 32});
  EXPECT_THROW(train(c, set), ValidationError);
}

TEST(Training, CheckpointMatchesResult) {
  RunConfig c = small_config(17);
  c.checkpoint_every = 2;
  const auto data = synthesize(c, 17);
  const fs::path dir = scratch("train_ckpt");
  const TrainResult r = train(c, samples_of(data, "train"), {nullptr, dir / "m.ckpt"});
  EXPECT_TRUE(read_checkpoint(dir / "m.ckpt") == r.params);
}

TEST(Inference, ProducesSortedProposalsAndPredictions) {
  const RunConfig c = small_config(18);
  const auto data = synthesize(c, 18);
  const auto test = samples_of(data, "test");
  const InferenceResult r = infer(ModelParams::init(c.dims, 18), c, test);
  ASSERT_EQ(r.predictions.size(), test.size());
  for (std::size_t i = 1; i < r.proposals.size(); ++i) EXPECT_GE(r.proposals[i - 1].score, r.proposals[i].score);
  for (const auto& pr : r.predictions) {
    EXPECT_EQ(pr.probs.size(), 4u);
    double s = 0.0;
    for (double x : pr.probs) s += x;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  std::vector<VideoPrediction> perfect;
  for (const auto& v : test) perfect.push_back({v.id, {}, v.labels});
  EXPECT_EQ(video_accuracy(perfect, test), 1.0);
}

TEST(Training, DefaultSetLossDecreasesOver500Iterations) {
  RunConfig c;
  c.seed = 7;
  c.iterations = 500;
  const auto data = synthesize(c, 7);
  const TrainResult r = train(c, samples_of(data, "train"));
  auto total_of = [](const std::string& line) { return std::stod(line.substr(line.find("total=") + 6)); };
  EXPECT_LT(total_of(r.log.back()), total_of(r.log.front()));
}
