#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "guef/autograd.hpp"
#include "guef/config.hpp"
#include "guef/io.hpp"
#include "guef/localization.hpp"
#include "guef/model.hpp"
#include "guef/objectives.hpp"

namespace guef {

struct VideoSample {
  std::string id;
  Tensor rgb;
  Tensor flow;
  std::vector<std::size_t> labels;
};

/// Loads both streams of every video in `split` ("" = all) and checks them against dims.
std::vector<VideoSample> load_samples(const Manifest& manifest, const std::string& split, const ModelDims& dims);

/// Multi-hot over T actions normalized to sum 1, background entry 0: 1 x (T+1).
Tensor video_label(const std::vector<std::size_t>& labels, std::size_t classes);

struct VideoLoss {
  Var cla, uef, hge, total;
  std::vector<BeliefMass> fused;
};

/// Builds the full per-video objective on `tape`.
VideoLoss video_loss(const ParamVars& p, const ModelDims& dims, const Var& flow, const Var& rgb,
                     const std::vector<std::size_t>& labels, std::size_t epoch, std::size_t total_epochs,
                     const RunConfig& config);

/// Adaptive-moment optimizer (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  Adam(const ModelParams& like, double learning_rate);
  void step(ModelParams& params, const std::vector<Tensor>& grads);

 private:
  double lr_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainHooks {
  std::ostream* log = nullptr;             // one line per iteration
  std::filesystem::path checkpoint;        // written every checkpoint_every iterations and at the end
};

struct TrainResult {
  ModelParams params;
  std::vector<std::string> log;
  std::size_t total_epochs = 1;
};

/// Epochs needed to run `iterations` batches of `batch_size` over `videos` samples (at least 1).
std::size_t epochs_for(std::size_t iterations, std::size_t batch_size, std::size_t videos);

TrainResult train(const RunConfig& config, const std::vector<VideoSample>& train_set, const TrainHooks& hooks = {});

struct VideoPrediction {
  std::string id;
  std::vector<double> probs;  // T+1
  std::vector<std::size_t> predicted;
};

struct InferenceResult {
  std::vector<Proposal> proposals;
  std::vector<VideoPrediction> predictions;
};

InferenceResult infer(const ModelParams& params, const RunConfig& config, const std::vector<VideoSample>& videos);

/// Fraction of videos whose predicted class set equals the labelled set.
double video_accuracy(const std::vector<VideoPrediction>& predictions, const std::vector<VideoSample>& videos);

}  // namespace guef
