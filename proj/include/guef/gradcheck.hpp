#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "guef/autograd.hpp"

namespace guef {

/// ||analytic - numeric|| / max(||analytic||, ||numeric||), over all inputs flattened.
/// Both norms below 1e-10 count as agreement.
double gradient_relative_error(std::span<const Tensor> analytic, std::span<const Tensor> numeric);

/// Compares reverse-mode gradients of `f` against central differences.
double check_gradient(const ScalarProgram& f, std::span<const Tensor> inputs, double step = 1e-5);

struct GradCheckShape {
  std::size_t width = 8;
  std::size_t classes = 3;
  std::size_t feature_dim = 6;
  std::size_t hidden = 4;
  std::size_t heads = 2;
};

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;
};

/// Checks L_cla, L_uef, L_hge and the end-to-end total loss on seeded toy inputs,
/// reporting the worst relative error over `seeds` draws per loss.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t first_seed, std::size_t seeds,
                                                const GradCheckShape& shape = {});

}  // namespace guef
