#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "guef/autograd.hpp"
#include "guef/evidence.hpp"
#include "guef/tensor.hpp"

namespace guef {

struct ModelDims {
  std::size_t feature_dim = 16;  // D, per stream
  std::size_t classes = 3;       // T, action classes (the CAS has T+1 columns)
  std::size_t hidden = 32;       // conv channels in the filter and classifier stacks
  std::size_t heads = 4;

  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

/// Every learnable weight, generic over storage so the same layout serves
/// concrete tensors and tape variables.
template <class T>
struct ParamSet {
  // Multi-head self-attention shared by both streams; tokens are snippets.
  T attn_wq, attn_bq, attn_wk, attn_bk, attn_wv, attn_bv, attn_wo, attn_bo;
  T attn_head_w, attn_head_b;  // D -> 1 scalar per snippet
  // Filtering module, shared by both streams.
  T filter1_w, filter1_b, filter2_w, filter2_b, filter3_w, filter3_b;
  // Snippet classifier producing T+1 logits.
  T cls1_w, cls1_b, cls2_w, cls2_b, cls3_w, cls3_b;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("attn.wq", self.attn_wq);
    f("attn.bq", self.attn_bq);
    f("attn.wk", self.attn_wk);
    f("attn.bk", self.attn_bk);
    f("attn.wv", self.attn_wv);
    f("attn.bv", self.attn_bv);
    f("attn.wo", self.attn_wo);
    f("attn.bo", self.attn_bo);
    f("attn.head_w", self.attn_head_w);
    f("attn.head_b", self.attn_head_b);
    f("filter.conv1.w", self.filter1_w);
    f("filter.conv1.b", self.filter1_b);
    f("filter.conv2.w", self.filter2_w);
    f("filter.conv2.b", self.filter2_b);
    f("filter.conv3.w", self.filter3_w);
    f("filter.conv3.b", self.filter3_b);
    f("cls.conv1.w", self.cls1_w);
    f("cls.conv1.b", self.cls1_b);
    f("cls.conv2.w", self.cls2_w);
    f("cls.conv2.b", self.cls2_b);
    f("cls.conv3.w", self.cls3_w);
    f("cls.conv3.b", self.cls3_b);
  }
  template <class F>
  void for_each(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, std::forward<F>(f));
  }
};

using ParamVars = ParamSet<Var>;

class ModelParams : public ParamSet<Tensor> {
 public:
  ModelParams() = default;
  /// Glorot-uniform weights, zero biases.
  static ModelParams init(const ModelDims& dims, std::uint64_t seed);
  /// All-zero weights and biases with the shapes implied by dims.
  static ModelParams zeros(const ModelDims& dims);

  const ModelDims& dims() const noexcept { return dims_; }
  void set_dims(const ModelDims& dims) { dims_ = dims; }
  /// Throws ValidationError if a tensor is non-finite or its shape disagrees with dims.
  void validate() const;
  std::size_t parameter_count() const;

  /// Registers every tensor as a leaf on the tape.
  ParamVars bind(Tape& tape) const;
  /// Registers every tensor as a constant (no gradients).
  ParamVars bind_constant(Tape& tape) const;

  bool operator==(const ModelParams& other) const;

 private:
  ModelDims dims_;
};

struct ModelOptions {
  bool use_hmha = true;  // false: skip stream attention and cross-modal gating
};

// Graph-level building blocks. Features are D x W; attention vectors are 1 x W.
Var stream_attention(Var x, const ParamVars& p, std::size_t heads);
std::pair<Var, Var> cross_gate(Var x_flow, Var x_rgb, Var a_flow, Var a_rgb);
Var filter_attention(Var x, const ParamVars& p);
std::pair<Var, Var> fuse_streams(Var x_flow, Var x_rgb, Var a_flow, Var a_rgb);
/// F: 2D x W -> CAS logits W x (T+1); the last column is background.
Var classify(Var features, const ParamVars& p);
/// Clamped exponential of the T action logits: W x T.
Var snippet_evidence(Var cas);
/// Row t scaled by attention[t].
Var reweight_evidence(Var evidence, Var attention);

struct ForwardGraph {
  Var features;    // 2D x W
  Var attention;   // 1 x W, in (0,1)
  Var cas;         // W x (T+1) logits
  Var evidence;    // W x T
  Var reweighted;  // W x T
};

ForwardGraph forward_graph(const ParamVars& p, const ModelDims& dims, Var x_flow, Var x_rgb,
                           const ModelOptions& options = {});

/// Per-snippet combination of the masses of the original and reweighted evidence rows.
std::vector<BeliefMass> fuse_snippet_evidence(const Tensor& evidence, const Tensor& reweighted);

struct ForwardOutput {
  Tensor features;
  std::vector<double> attention;
  Tensor cas;
  Tensor evidence;
  Tensor reweighted;
  std::vector<BeliefMass> fused;

  std::vector<double> fused_thetas() const;
};

/// Full value-level forward pass for one video.
ForwardOutput forward(const ModelParams& params, const Tensor& x_flow, const Tensor& x_rgb,
                      const ModelOptions& options = {});

}  // namespace guef
