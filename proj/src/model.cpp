#include "guef/model.hpp"

#include <cmath>
#include <random>
#include <string>
#include <tuple>

#include "guef/error.hpp"

namespace guef {
namespace {

struct ShapeTable {
  std::vector<std::pair<std::string, Tensor::Shape>> entries;
};

ShapeTable expected_shapes(const ModelDims& d) {
  const std::size_t D = d.feature_dim, H = d.hidden, C = d.classes + 1;
  return {{
      {"attn.wq", {D, D}},         {"attn.bq", {1, D}},           {"attn.wk", {D, D}},
      {"attn.bk", {1, D}},         {"attn.wv", {D, D}},           {"attn.bv", {1, D}},
      {"attn.wo", {D, D}},         {"attn.bo", {1, D}},           {"attn.head_w", {D, 1}},
      {"attn.head_b", {1, 1}},     {"filter.conv1.w", {H, D, 3}}, {"filter.conv1.b", {H, 1}},
      {"filter.conv2.w", {H, H, 3}}, {"filter.conv2.b", {H, 1}},  {"filter.conv3.w", {1, H, 1}},
      {"filter.conv3.b", {1, 1}},  {"cls.conv1.w", {H, 2 * D, 3}}, {"cls.conv1.b", {H, 1}},
      {"cls.conv2.w", {H, H, 3}},  {"cls.conv2.b", {H, 1}},       {"cls.conv3.w", {C, H, 1}},
      {"cls.conv3.b", {C, 1}},
  }};
}

bool is_bias(const std::string& name) { return name.back() == 'b' || name == "attn.head_b"; }

ParamVars bind_impl(const ModelParams& params, Tape& tape, bool trainable) {
  ParamVars vars;
  std::vector<Var> flat;
  params.for_each([&](const char*, const Tensor& t) { flat.push_back(trainable ? tape.leaf(t) : tape.constant(t)); });
  std::size_t i = 0;
  vars.for_each([&](const char*, Var& v) { v = flat[i++]; });
  return vars;
}

}  // namespace

void ModelDims::validate() const {
  if (feature_dim == 0 || classes == 0 || hidden == 0 || heads == 0) {
    throw ValidationError("model dimensions must all be positive");
  }
  if (feature_dim % heads != 0) {
    throw ValidationError("feature dimension " + std::to_string(feature_dim) + " is not divisible by " +
                          std::to_string(heads) + " attention heads");
  }
}

ModelParams ModelParams::zeros(const ModelDims& dims) {
  dims.validate();
  ModelParams p;
  p.dims_ = dims;
  const auto table = expected_shapes(dims);
  std::size_t i = 0;
  p.for_each([&](const char*, Tensor& t) { t = Tensor(table.entries[i++].second, 0.0); });
  return p;
}

ModelParams ModelParams::init(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = zeros(dims);
  std::mt19937_64 rng(seed);
  p.for_each([&](const char* name, Tensor& t) {
    if (is_bias(name)) return;
    double fan_in, fan_out;
    if (t.rank() == 3) {
      fan_in = static_cast<double>(t.dim(1) * t.dim(2));
      fan_out = static_cast<double>(t.dim(0) * t.dim(2));
    } else {
      fan_in = static_cast<double>(t.dim(0));
      fan_out = static_cast<double>(t.dim(1));
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.data()) v = dist(rng);
  });
  return p;
}

void ModelParams::validate() const {
  dims_.validate();
  const auto table = expected_shapes(dims_);
  std::size_t i = 0;
  for_each([&](const char* name, const Tensor& t) {
    const auto& [expected_name, shape] = table.entries[i++];
    if (t.shape() != shape) {
      throw ValidationError(std::string("parameter ") + name + " has shape " + shape_string(t.shape()) +
                            ", expected " + shape_string(shape));
    }
    if (!t.all_finite()) throw ValidationError(std::string("parameter ") + name + " is not finite");
  });
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const char*, const Tensor& t) { n += t.size(); });
  return n;
}

ParamVars ModelParams::bind(Tape& tape) const { return bind_impl(*this, tape, true); }
ParamVars ModelParams::bind_constant(Tape& tape) const { return bind_impl(*this, tape, false); }

bool ModelParams::operator==(const ModelParams& other) const {
  if (!(dims_ == other.dims_)) return false;
  std::vector<const Tensor*> mine, theirs;
  for_each([&](const char*, const Tensor& t) { mine.push_back(&t); });
  other.for_each([&](const char*, const Tensor& t) { theirs.push_back(&t); });
  for (std::size_t i = 0; i < mine.size(); ++i)
    if (!(*mine[i] == *theirs[i])) return false;
  return true;
}

Var stream_attention(Var x, const ParamVars& p, std::size_t heads) {
  const std::size_t d = x.rows();
  if (p.attn_wq.rows() != d) {
    throw ValidationError("stream_attention: features have " + std::to_string(d) + " channels, weights expect " +
                          std::to_string(p.attn_wq.rows()));
  }
  if (heads == 0 || d % heads != 0) throw ValidationError("stream_attention: channels not divisible by heads");
  const std::size_t width = x.cols();
  const std::size_t dh = d / heads;
  Var tokens = transpose(x);  // W x D
  Var q = matmul(tokens, p.attn_wq) + p.attn_bq;
  Var k = matmul(tokens, p.attn_wk) + p.attn_bk;
  Var v = matmul(tokens, p.attn_wv) + p.attn_bv;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> head_out;
  head_out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = slice_cols(v, h * dh, (h + 1) * dh);
    Var weights = softmax_rows(matmul(qh, transpose(kh)) * inv_sqrt);
    head_out.push_back(matmul(weights, vh));
  }
  Var mixed = matmul(concat_cols(head_out), p.attn_wo) + p.attn_bo;
  Var scores = matmul(mixed, p.attn_head_w) + p.attn_head_b;  // W x 1
  return reshape(scores, {1, width});
}

std::pair<Var, Var> cross_gate(Var x_flow, Var x_rgb, Var a_flow, Var a_rgb) {
  if (a_flow.shape() != a_rgb.shape() || a_flow.rows() != 1 || a_flow.cols() != x_flow.cols() ||
      x_rgb.cols() != x_flow.cols()) {
    throw ValidationError("cross_gate: attention " + shape_string(a_flow.shape()) + "/" +
                          shape_string(a_rgb.shape()) + " does not match features " + shape_string(x_flow.shape()) +
                          "/" + shape_string(x_rgb.shape()));
  }
  Var gate_flow = sigmoid(a_flow * a_rgb);
  Var gate_rgb = sigmoid(a_rgb * a_flow);
  return {x_flow * gate_flow, x_rgb * gate_rgb};
}

Var filter_attention(Var x, const ParamVars& p) {
  Var h = relu(conv1d(x, p.filter1_w, p.filter1_b, Padding::kSame));
  h = relu(conv1d(h, p.filter2_w, p.filter2_b, Padding::kSame));
  return sigmoid(conv1d(h, p.filter3_w, p.filter3_b, Padding::kSame));
}

std::pair<Var, Var> fuse_streams(Var x_flow, Var x_rgb, Var a_flow, Var a_rgb) {
  if (x_flow.shape() != x_rgb.shape() || a_flow.shape() != a_rgb.shape()) {
    throw ValidationError("fuse_streams: stream shapes differ: " + shape_string(x_flow.shape()) + " vs " +
                          shape_string(x_rgb.shape()));
  }
  return {concat_rows(x_flow, x_rgb), (a_flow + a_rgb) * 0.5};
}

Var classify(Var features, const ParamVars& p) {
  Var h = relu(conv1d(features, p.cls1_w, p.cls1_b, Padding::kSame));
  h = relu(conv1d(h, p.cls2_w, p.cls2_b, Padding::kSame));
  return transpose(conv1d(h, p.cls3_w, p.cls3_b, Padding::kSame));
}

Var snippet_evidence(Var cas) {
  if (cas.cols() < 2) throw ValidationError("snippet_evidence: CAS needs at least one action and a background column");
  return exp_clipped(slice_cols(cas, 0, cas.cols() - 1), 10.0);
}

Var reweight_evidence(Var evidence, Var attention) {
  if (attention.rows() != 1 || attention.cols() != evidence.rows()) {
    throw ValidationError("reweight_evidence: attention " + shape_string(attention.shape()) +
                          " does not cover evidence rows " + shape_string(evidence.shape()));
  }
  return evidence * transpose(attention);
}

ForwardGraph forward_graph(const ParamVars& p, const ModelDims& dims, Var x_flow, Var x_rgb,
                           const ModelOptions& options) {
  if (x_flow.shape() != x_rgb.shape()) {
    throw ValidationError("forward: flow " + shape_string(x_flow.shape()) + " and rgb " +
                          shape_string(x_rgb.shape()) + " disagree");
  }
  if (x_flow.rows() != dims.feature_dim) {
    throw ValidationError("forward: features have " + std::to_string(x_flow.rows()) + " channels, model expects " +
                          std::to_string(dims.feature_dim));
  }
  Var gated_flow = x_flow, gated_rgb = x_rgb;
  if (options.use_hmha) {
    Var a_flow = stream_attention(x_flow, p, dims.heads);
    Var a_rgb = stream_attention(x_rgb, p, dims.heads);
    std::tie(gated_flow, gated_rgb) = cross_gate(x_flow, x_rgb, a_flow, a_rgb);
  }
  Var f_flow = filter_attention(gated_flow, p);
  Var f_rgb = filter_attention(gated_rgb, p);
  auto [features, attention] = fuse_streams(gated_flow, gated_rgb, f_flow, f_rgb);
  Var cas = classify(features, p);
  Var evidence = snippet_evidence(cas);
  Var reweighted = reweight_evidence(evidence, attention);
  return {features, attention, cas, evidence, reweighted};
}

std::vector<BeliefMass> fuse_snippet_evidence(const Tensor& evidence, const Tensor& reweighted) {
  if (evidence.shape() != reweighted.shape() || evidence.rank() != 2) {
    throw ValidationError("fuse_snippet_evidence: shapes " + shape_string(evidence.shape()) + " and " +
                          shape_string(reweighted.shape()) + " differ");
  }
  const std::size_t w = evidence.rows(), t = evidence.cols();
  std::vector<BeliefMass> out;
  out.reserve(w);
  for (std::size_t s = 0; s < w; ++s) {
    const auto* r1 = evidence.data().data() + s * t;
    const auto* r2 = reweighted.data().data() + s * t;
    const BeliefMass m1 = masses_from_evidence(Evidence({r1, r1 + t}));
    const BeliefMass m2 = masses_from_evidence(Evidence({r2, r2 + t}));
    try {
      out.push_back(combine(m1, m2));
    } catch (const TotalConflictError& err) {
      throw TotalConflictError("snippet " + std::to_string(s) + ": " + err.what());
    }
  }
  return out;
}

std::vector<double> ForwardOutput::fused_thetas() const {
  std::vector<double> out;
  out.reserve(fused.size());
  for (const auto& m : fused) out.push_back(m.theta);
  return out;
}

ForwardOutput forward(const ModelParams& params, const Tensor& x_flow, const Tensor& x_rgb,
                      const ModelOptions& options) {
  Tape tape;
  const ParamVars p = params.bind_constant(tape);
  const ForwardGraph g =
      forward_graph(p, params.dims(), tape.constant(x_flow), tape.constant(x_rgb), options);
  ForwardOutput out;
  out.features = g.features.value();
  out.attention = g.attention.value().values();
  out.cas = g.cas.value();
  out.evidence = g.evidence.value();
  out.reweighted = g.reweighted.value();
  out.fused = fuse_snippet_evidence(out.evidence, out.reweighted);
  return out;
}

}  // namespace guef
