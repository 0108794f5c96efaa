#include "guef/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "guef/error.hpp"

namespace guef {

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ValidationError("loss weights must be non-negative");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ValidationError("schedule amplitude must lie in [0,1]");
  if (total_epochs < 1) throw ValidationError("total epochs must be at least 1");
  if (!(topk_ratio > 0.0 && topk_ratio <= 1.0)) throw ValidationError("top-k ratio must lie in (0,1]");
}

std::size_t topk_count(std::size_t width, double ratio) {
  const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(width) * ratio));
  return std::max<std::size_t>(1, k);
}

Var topk_aggregate(Var cas, std::span<const double> attention, std::size_t k) {
  const std::size_t w = cas.rows();
  if (attention.size() != w) {
    throw ValidationError("topk_aggregate: attention length " + std::to_string(attention.size()) +
                          " does not match " + std::to_string(w) + " snippets");
  }
  if (k < 1 || k > w) {
    throw ValidationError("topk_aggregate: L=" + std::to_string(k) + " outside [1," + std::to_string(w) + "]");
  }
  const auto chosen = topk_indices(attention, k);
  return softmax_rows(col_mean(gather_rows(cas, chosen)));
}

Var classification_loss(Var p_hat, const Tensor& label) {
  if (p_hat.value().size() != label.size()) {
    throw ValidationError("classification_loss: prediction " + shape_string(p_hat.shape()) + " vs label " +
                          shape_string(label.shape()));
  }
  Var target = p_hat.tape().constant(label.reshaped(p_hat.shape()));
  return scale(sum(target * log_floor(p_hat, 1e-12)), -1.0);
}

double schedule_weight(std::size_t epoch, std::size_t total_epochs, std::size_t rank, std::size_t width,
                       double delta) {
  if (total_epochs < 1 || epoch < 1 || epoch > total_epochs) {
    throw ValidationError("schedule_weight: epoch " + std::to_string(epoch) + " outside [1," +
                          std::to_string(total_epochs) + "]");
  }
  if (width < 1 || rank < 1 || rank > width) {
    throw ValidationError("schedule_weight: rank " + std::to_string(rank) + " outside [1," + std::to_string(width) +
                          "]");
  }
  const double progress = 2.0 * static_cast<double>(epoch) / static_cast<double>(total_epochs) - 1.0;
  const double position = 2.0 * static_cast<double>(rank) / static_cast<double>(width) - 1.0;
  return delta * std::tanh(progress * position) + 1.0;
}

std::vector<std::size_t> uncertainty_ranks(std::span<const double> thetas) {
  std::vector<std::size_t> order(thetas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return thetas[a] > thetas[b]; });
  std::vector<std::size_t> ranks(thetas.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) ranks[order[pos]] = pos + 1;
  return ranks;
}

Var uef_loss(Var attention, Var cas, std::span<const double> thetas, std::size_t epoch, std::size_t total_epochs,
             double delta, bool scheduled) {
  const std::size_t w = cas.rows();
  if (attention.value().size() != w || thetas.size() != w) {
    throw ValidationError("uef_loss: attention " + shape_string(attention.shape()) + ", " +
                          std::to_string(thetas.size()) + " thetas and CAS " + shape_string(cas.shape()) +
                          " disagree on W");
  }
  std::vector<double> weights(w, 1.0);
  if (scheduled) {
    const auto ranks = uncertainty_ranks(thetas);
    for (std::size_t t = 0; t < w; ++t) weights[t] = schedule_weight(epoch, total_epochs, ranks[t], w, delta);
  }
  Var probs = softmax_rows(cas);
  Var background = slice_cols(probs, cas.cols() - 1, cas.cols());        // W x 1
  Var a = reshape(attention, {w, 1});
  Var gap = abs(scale(a + background, -1.0) + 1.0);
  Var weighted = gap * cas.tape().constant(Tensor::column(std::move(weights)));
  return sum(weighted);
}

Var hge_loss(Var evidence, const Tensor& labels) {
  const std::size_t w = evidence.rows(), t = evidence.cols();
  if (labels.rank() != 2 || labels.cols() != t || (labels.rows() != 1 && labels.rows() != w)) {
    throw ValidationError("hge_loss: labels " + shape_string(labels.shape()) + " do not fit evidence " +
                          shape_string(evidence.shape()));
  }
  Tape& tape = evidence.tape();
  Var p = tape.constant(labels);
  Var alpha = evidence + 1.0;
  Var strength = row_sum(alpha);                                              // W x 1
  Var certainty = scale(div(tape.constant(Tensor::scalar(static_cast<double>(t))), strength), -1.0) + 1.0;
  Var ratio = p / clamp_min(evidence, 1e-12);                                 // W x T
  Var norm = row_sum(ratio);
  Var weights = ratio / clamp_min(norm, 1e-300);
  Var gap = log_floor(strength, 1e-300) - log_floor(alpha, 1e-300);           // W x T, >= 0
  return sum(certainty * row_sum(weights * gap));
}

double total_loss(const LossParts& parts, const LossConfig& config) {
  return parts.cla + config.lambda1 * parts.uef + config.lambda2 * parts.hge;
}

Var total_loss(Var cla, Var uef, Var hge, const LossConfig& config) {
  return cla + uef * config.lambda1 + hge * config.lambda2;
}

}  // namespace guef
