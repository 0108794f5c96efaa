#include "guef/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "guef/config.hpp"
#include "guef/model.hpp"
#include "guef/objectives.hpp"
#include "guef/training.hpp"

namespace guef {

double gradient_relative_error(std::span<const Tensor> analytic, std::span<const Tensor> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    for (std::size_t k = 0; k < analytic[i].size(); ++k) {
      const double a = analytic[i][k], n = numeric[i][k];
      diff += (a - n) * (a - n);
      na += a * a;
      nn += n * n;
    }
  const double scale = std::max(std::sqrt(na), std::sqrt(nn));
  if (scale < 1e-10) return 0.0;
  return std::sqrt(diff) / scale;
}

double check_gradient(const ScalarProgram& f, std::span<const Tensor> inputs, double step) {
  const std::vector<Tensor> analytic = grad(f, inputs);
  std::vector<Tensor> numeric;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    numeric.push_back(finite_diff(
        [&](const Tensor& x) {
          const Tensor saved = probe[i];
          probe[i] = x;
          const double v = evaluate(f, probe);
          probe[i] = saved;
          return v;
        },
        probe[i], step));
  }
  return gradient_relative_error(analytic, numeric);
}

namespace {

Tensor random_tensor(std::mt19937_64& rng, Tensor::Shape shape, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = normal(rng);
  return t;
}

std::vector<std::size_t> random_labels(std::mt19937_64& rng, std::size_t classes) {
  std::vector<std::size_t> labels;
  std::bernoulli_distribution pick(0.5);
  for (std::size_t c = 0; c < classes; ++c)
    if (pick(rng)) labels.push_back(c);
  if (labels.empty()) labels.push_back(std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng));
  return labels;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t first_seed, std::size_t seeds,
                                                const GradCheckShape& shape) {
  std::vector<GradCheckResult> results{{"L_cla", 0.0}, {"L_uef", 0.0}, {"L_hge", 0.0}, {"total", 0.0}};
  const std::size_t w = shape.width, t = shape.classes;
  for (std::size_t s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(first_seed + s);
    const auto labels = random_labels(rng, t);
    const Tensor label = video_label(labels, t);
    Tensor action_label({1, t});
    std::copy_n(label.data().begin(), t, action_label.data().begin());

    const Tensor cas = random_tensor(rng, {w, t + 1}, 1.5);
    std::vector<double> attention(w);
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    for (double& a : attention) a = unit(rng);
    std::vector<double> thetas(w);
    for (double& th : thetas) th = unit(rng);
    const std::size_t total_epochs = 7;
    const std::size_t epoch = std::uniform_int_distribution<std::size_t>(1, total_epochs)(rng);
    const std::size_t k = topk_count(w, 0.125) + 1;

    const Tensor att_row = Tensor::row(attention);
    const ScalarProgram cla = [&](Tape&, std::span<const Var> in) {
      return classification_loss(topk_aggregate(in[0], attention, k), label);
    };
    const ScalarProgram uef = [&](Tape&, std::span<const Var> in) {
      return uef_loss(in[0], in[1], thetas, epoch, total_epochs, 0.7);
    };
    const ScalarProgram hge = [&](Tape&, std::span<const Var> in) {
      return hge_loss(snippet_evidence(in[0]), action_label);
    };
    const std::vector<Tensor> cas_only{cas};
    const std::vector<Tensor> att_and_cas{att_row, cas};
    results[0].max_relative_error = std::max(results[0].max_relative_error, check_gradient(cla, cas_only));
    results[1].max_relative_error = std::max(results[1].max_relative_error, check_gradient(uef, att_and_cas));
    results[2].max_relative_error = std::max(results[2].max_relative_error, check_gradient(hge, cas_only));

    RunConfig config;
    config.dims = {shape.feature_dim, t, shape.hidden, shape.heads};
    config.topk_ratio = 0.25;
    const ModelParams params = ModelParams::init(config.dims, first_seed + s);
    const Tensor flow = random_tensor(rng, {shape.feature_dim, w}, 1.0);
    const Tensor rgb = random_tensor(rng, {shape.feature_dim, w}, 1.0);
    std::vector<Tensor> flat;
    params.for_each([&](const char*, const Tensor& x) { flat.push_back(x); });
    const ScalarProgram end_to_end = [&](Tape& tape, std::span<const Var> in) {
      ParamVars p;
      std::size_t i = 0;
      p.for_each([&](const char*, Var& v) { v = in[i++]; });
      return video_loss(p, config.dims, tape.constant(flow), tape.constant(rgb), labels, epoch, total_epochs, config)
          .total;
    };
    results[3].max_relative_error = std::max(results[3].max_relative_error, check_gradient(end_to_end, flat));
  }
  return results;
}

}  // namespace guef
