#include "guef/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "guef/error.hpp"

namespace guef {

std::vector<VideoSample> load_samples(const Manifest& manifest, const std::string& split, const ModelDims& dims) {
  std::vector<VideoSample> out;
  for (const VideoRecord* v : manifest.split(split)) {
    VideoSample s{v->id, read_features(v->rgb), read_features(v->flow), v->labels};
    if (s.rgb.shape() != s.flow.shape()) {
      throw ValidationError("video '" + v->id + "': rgb " + shape_string(s.rgb.shape()) + " and flow " +
                            shape_string(s.flow.shape()) + " disagree");
    }
    if (s.rgb.rows() != dims.feature_dim) {
      throw ValidationError("video '" + v->id + "' has " + std::to_string(s.rgb.rows()) +
                            "-dimensional features, model expects " + std::to_string(dims.feature_dim));
    }
    for (std::size_t c : s.labels)
      if (c >= dims.classes) throw ValidationError("video '" + v->id + "' has label " + std::to_string(c) + " >= T");
    out.push_back(std::move(s));
  }
  return out;
}

Tensor video_label(const std::vector<std::size_t>& labels, std::size_t classes) {
  Tensor p({1, classes + 1}, 0.0);
  if (labels.empty()) throw ValidationError("training video has no labels");
  for (std::size_t c : labels) {
    if (c >= classes) {
      throw ValidationError("label " + std::to_string(c) + " outside [0," + std::to_string(classes) + ")");
    }
    p[c] = 1.0;
  }
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) total += p[c];
  for (std::size_t c = 0; c < classes; ++c) p[c] /= total;
  return p;
}

VideoLoss video_loss(const ParamVars& p, const ModelDims& dims, const Var& flow, const Var& rgb,
                     const std::vector<std::size_t>& labels, std::size_t epoch, std::size_t total_epochs,
                     const RunConfig& config) {
  Tape& tape = flow.tape();
  const ForwardGraph g = forward_graph(p, dims, flow, rgb, ModelOptions{config.use_hmha});
  const std::size_t width = flow.cols();
  const Tensor label = video_label(labels, dims.classes);

  VideoLoss out;
  const auto& attention = g.attention.value().values();
  Var p_hat = topk_aggregate(g.cas, attention, topk_count(width, config.topk_ratio));
  out.cla = classification_loss(p_hat, label);

  LossConfig lc{config.lambda1, config.lambda2, config.delta, total_epochs, config.topk_ratio};
  if (config.use_guef) {
    out.fused = fuse_snippet_evidence(g.evidence.value(), g.reweighted.value());
    std::vector<double> thetas;
    thetas.reserve(out.fused.size());
    for (const auto& m : out.fused) thetas.push_back(m.theta);
    out.uef = uef_loss(g.attention, g.cas, thetas, epoch, total_epochs, config.delta, true);
    Tensor actions({1, dims.classes});
    std::copy_n(label.data().begin(), dims.classes, actions.data().begin());
    out.hge = hge_loss(g.evidence, actions);
  } else {
    const std::vector<double> thetas(width, 0.5);
    out.uef = uef_loss(g.attention, g.cas, thetas, epoch, total_epochs, config.delta, false);
    out.hge = tape.constant(Tensor::scalar(0.0));
  }
  out.total = total_loss(out.cla, out.uef, out.hge, lc);
  return out;
}

Adam::Adam(const ModelParams& like, double learning_rate) : lr_(learning_rate) {
  like.for_each([&](const char*, const Tensor& t) {
    m_.emplace_back(t.shape(), 0.0);
    v_.emplace_back(t.shape(), 0.0);
  });
}

void Adam::step(ModelParams& params, const std::vector<Tensor>& grads) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  std::size_t i = 0;
  params.for_each([&](const char*, Tensor& w) {
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
    ++i;
  });
}

std::size_t epochs_for(std::size_t iterations, std::size_t batch_size, std::size_t videos) {
  if (videos == 0) return 1;
  return std::max<std::size_t>(1, (iterations * batch_size + videos - 1) / videos);
}

namespace {

// Keeps `cap` snippet columns chosen uniformly at random, preserving temporal order.
Tensor subsample(const Tensor& x, const std::vector<std::size_t>& cols) {
  Tensor out({x.rows(), cols.size()});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) out.at(r, c) = x.at(r, cols[c]);
  return out;
}

std::string format_log(std::size_t iter, std::size_t epoch, double cla, double uef, double hge, double total) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "iter=%zu epoch=%zu cla=%.17g uef=%.17g hge=%.17g total=%.17g", iter, epoch, cla, uef,
                hge, total);
  return buf;
}

}  // namespace

TrainResult train(const RunConfig& config, const std::vector<VideoSample>& train_set, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  const std::uint64_t seed = config.require_seed();
  const ModelDims& dims = config.dims;

  TrainResult result;
  result.params = ModelParams::init(dims, seed);
  result.total_epochs = epochs_for(config.iterations, config.batch_size, train_set.size());
  Adam adam(result.params, config.learning_rate);
  std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0, consumed = 0;

  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    const std::size_t epoch = std::min(result.total_epochs, consumed / train_set.size() + 1);
    std::vector<Tensor> grads;
    result.params.for_each([&](const char*, const Tensor& t) { grads.emplace_back(t.shape(), 0.0); });
    double cla = 0.0, uef = 0.0, hge = 0.0, total = 0.0;

    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const VideoSample& video = train_set[order[cursor++]];
      ++consumed;
      Tensor rgb = video.rgb, flow = video.flow;
      if (rgb.cols() > config.max_snippets) {
        std::vector<std::size_t> all(rgb.cols()), keep;
        std::iota(all.begin(), all.end(), 0);
        std::sample(all.begin(), all.end(), std::back_inserter(keep), config.max_snippets, rng);
        rgb = subsample(rgb, keep);
        flow = subsample(flow, keep);
      }
      try {
        Tape tape;
        const ParamVars p = result.params.bind(tape);
        const VideoLoss loss = video_loss(p, dims, tape.constant(flow), tape.constant(rgb), video.labels, epoch,
                                          result.total_epochs, config);
        const double value = loss.total.value().item();
        if (!std::isfinite(value)) throw NonFiniteValueError("non-finite total loss");
        tape.backward(loss.total);
        std::size_t i = 0;
        p.for_each([&](const char*, const Var& v) {
          const Tensor& g = tape.grad(v);
          if (g.size() == grads[i].size())
            for (std::size_t k = 0; k < g.size(); ++k) grads[i][k] += g[k];
          ++i;
        });
        cla += loss.cla.value().item();
        uef += loss.uef.value().item();
        hge += loss.hge.value().item();
        total += value;
      } catch (const NonFiniteValueError& err) {
        throw NonFiniteLossError("iteration " + std::to_string(iter) + ", video '" + video.id + "': " + err.what());
      }
    }
    const double inv = 1.0 / static_cast<double>(config.batch_size);
    for (auto& g : grads)
      for (double& v : g.data()) v *= inv;
    adam.step(result.params, grads);

    std::string line = format_log(iter, epoch, cla * inv, uef * inv, hge * inv, total * inv);
    if (hooks.log) *hooks.log << line << '\n';
    result.log.push_back(std::move(line));
    if (config.checkpoint_every && iter % config.checkpoint_every == 0 && !hooks.checkpoint.empty()) {
      write_checkpoint(hooks.checkpoint, result.params);
    }
  }
  if (!hooks.checkpoint.empty()) write_checkpoint(hooks.checkpoint, result.params);
  return result;
}

InferenceResult infer(const ModelParams& params, const RunConfig& config, const std::vector<VideoSample>& videos) {
  const ModelDims& dims = params.dims();
  ProposalConfig pc{config.thresholds, config.class_gate, 0.25};
  InferenceResult result;
  for (const VideoSample& v : videos) {
    if (v.rgb.rows() != dims.feature_dim) {
      throw ValidationError("checkpoint expects " + std::to_string(dims.feature_dim) + "-dimensional features, video '" +
                            v.id + "' has " + std::to_string(v.rgb.rows()));
    }
    const ForwardOutput out = forward(params, v.flow, v.rgb, ModelOptions{config.use_hmha});
    Tape tape;
    Var p_hat = topk_aggregate(tape.constant(out.cas), out.attention, topk_count(v.rgb.cols(), config.topk_ratio));
    VideoPrediction pred{v.id, p_hat.value().values(), {}};
    pred.predicted = predicted_classes(pred.probs, dims.classes, config.class_gate);
    auto proposals = nms(generate_proposals(v.id, out.attention, out.cas, pred.probs, pc), config.nms_iou);
    result.proposals.insert(result.proposals.end(), proposals.begin(), proposals.end());
    result.predictions.push_back(std::move(pred));
  }
  std::stable_sort(result.proposals.begin(), result.proposals.end(),
                   [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  return result;
}

double video_accuracy(const std::vector<VideoPrediction>& predictions, const std::vector<VideoSample>& videos) {
  if (videos.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < videos.size() && i < predictions.size(); ++i) {
    std::vector<std::size_t> truth = videos[i].labels;
    std::sort(truth.begin(), truth.end());
    if (predictions[i].predicted == truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(videos.size());
}

}  // namespace guef
