#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "guef/autograd.hpp"
#include "guef/tensor.hpp"

namespace guef {

struct LossConfig {
  double lambda1 = 0.8;  // complementarity loss weight
  double lambda2 = 1.0;  // evidential loss weight
  double delta = 0.7;    // schedule amplitude
  std::size_t total_epochs = 1;
  double topk_ratio = 0.125;

  void validate() const;
};

/// L = max(1, floor(W * ratio)).
std::size_t topk_count(std::size_t width, double ratio);

/// Mean of the CAS rows at the L highest-attention snippets, softmaxed over T+1 classes.
/// Returns 1 x (T+1).
Var topk_aggregate(Var cas, std::span<const double> attention, std::size_t k);

/// -sum_j p_j log(max(p_hat_j, 1e-12)).
Var classification_loss(Var p_hat, const Tensor& label);

/// delta * tanh(sigma(h) * phi(rank)) + 1 with sigma(h) = 2h/H - 1, phi(r) = 2r/W - 1.
double schedule_weight(std::size_t epoch, std::size_t total_epochs, std::size_t rank, std::size_t width,
                       double delta);

/// 1-based position of each snippet when thetas are sorted descending; ties keep index order.
std::vector<std::size_t> uncertainty_ranks(std::span<const double> thetas);

/// sum_t w_t |1 - A_t - softmax(z_t)_bg|. With scheduled = false every w_t is 1.
Var uef_loss(Var attention, Var cas, std::span<const double> thetas, std::size_t epoch, std::size_t total_epochs,
             double delta, bool scheduled = true);

/// Uncertainty-weighted Dirichlet loss over the W evidence rows. `labels` is either
/// 1 x T (shared by all snippets) or W x T.
Var hge_loss(Var evidence, const Tensor& labels);

struct LossParts {
  double cla = 0.0;
  double uef = 0.0;
  double hge = 0.0;
};

double total_loss(const LossParts& parts, const LossConfig& config);
Var total_loss(Var cla, Var uef, Var hge, const LossConfig& config);

}  // namespace guef
