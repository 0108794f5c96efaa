#include "guef/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "guef/error.hpp"

namespace guef {

const Tensor& Var::value() const { return tape_->nodes_.at(id_).value; }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> parents, Backward fn) {
  if (!value.all_finite()) throw NonFiniteValueError("primitive produced a non-finite value");
  bool needs = false;
  for (const Var& p : parents) needs = needs || nodes_.at(p.id()).requires_grad;
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!nodes_.at(v.id()).requires_grad) return;
  Tensor& buf = grad_buffer(v.id());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Tape::accumulate(Var v, std::size_t index, double g) {
  if (!nodes_.at(v.id()).requires_grad) return;
  grad_buffer(v.id())[index] += g;
}

void Tape::backward(Var output) {
  if (output.value().size() != 1) {
    throw ValidationError("gradient requested of non-scalar output with shape " + shape_string(output.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor{};
  backward_visits_ = 0;
  if (!nodes_.at(output.id()).requires_grad) return;
  grad_buffer(output.id())[0] = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.fn || n.grad.size() == 0) continue;
    ++backward_visits_;
    n.fn(n.grad, *this);
  }
}

const Tensor& Tape::grad(Var v) const { return nodes_.at(v.id()).grad; }

namespace {

void require_rank2(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw ValidationError(std::string(op) + ": expected a matrix, got shape " + shape_string(a.shape()));
  }
}

[[noreturn]] void shape_mismatch(const char* op, const Var& a, const Var& b) {
  throw ValidationError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()));
}

struct Broadcast {
  std::size_t rows, cols;
  bool a_row1, a_col1, b_row1, b_col1;

  std::size_t a_index(std::size_t r, std::size_t c) const {
    return (a_row1 ? 0 : r) * (a_col1 ? 1 : cols) + (a_col1 ? 0 : c);
  }
  std::size_t b_index(std::size_t r, std::size_t c) const {
    return (b_row1 ? 0 : r) * (b_col1 ? 1 : cols) + (b_col1 ? 0 : c);
  }
};

Broadcast broadcast_shape(const char* op, const Var& a, const Var& b) {
  require_rank2(a, op);
  require_rank2(b, op);
  const auto ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  if ((ar != br && ar != 1 && br != 1) || (ac != bc && ac != 1 && bc != 1)) shape_mismatch(op, a, b);
  Broadcast bc_{std::max(ar, br), std::max(ac, bc), false, false, false, false};
  bc_.a_row1 = ar == 1 && bc_.rows != 1;
  bc_.a_col1 = ac == 1 && bc_.cols != 1;
  bc_.b_row1 = br == 1 && bc_.rows != 1;
  bc_.b_col1 = bc == 1 && bc_.cols != 1;
  return bc_;
}

// out = f(a, b); backward uses da = dfa(a, b) * g, db = dfb(a, b) * g.
template <class F, class DA, class DB>
Var binary(const char* op, Var a, Var b, F f, DA dfa, DB dfb) {
  const Broadcast bc = broadcast_shape(op, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({bc.rows, bc.cols});
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c) out.at(r, c) = f(av[bc.a_index(r, c)], bv[bc.b_index(r, c)]);
  return a.tape().record(std::move(out), {a, b}, [a, b, bc, dfa, dfb](const Tensor& g, Tape& tape) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool need_a = tape.requires_grad(a), need_b = tape.requires_grad(b);
    Tensor ga(av.shape(), 0.0), gb(bv.shape(), 0.0);
    for (std::size_t r = 0; r < bc.rows; ++r) {
      for (std::size_t c = 0; c < bc.cols; ++c) {
        const std::size_t ia = bc.a_index(r, c), ib = bc.b_index(r, c);
        const double gv = g.at(r, c);
        if (need_a) ga[ia] += dfa(av[ia], bv[ib]) * gv;
        if (need_b) gb[ib] += dfb(av[ia], bv[ib]) * gv;
      }
    }
    if (need_a) tape.accumulate(a, ga);
    if (need_b) tape.accumulate(b, gb);
  });
}

template <class F, class DF>
Var unary(Var a, F f, DF df) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return a.tape().record(std::move(out), {a}, [a, df](const Tensor& g, Tape& tape) {
    const Tensor& av = a.value();
    Tensor ga(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] = df(av[i]) * g[i];
    tape.accumulate(a, ga);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Var matmul(Var a, Var b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g, Tape& tape) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (tape.requires_grad(a)) {
      Tensor ga({m, k}, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] = s;
        }
      tape.accumulate(a, ga);
    }
    if (tape.requires_grad(b)) {
      Tensor gb({k, n}, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
        }
      tape.accumulate(b, gb);
    }
  });
}

Var transpose(Var a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return a.tape().record(std::move(out), {a}, [a, m, n](const Tensor& g, Tape& tape) {
    Tensor ga({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[j * m + i];
    tape.accumulate(a, ga);
  });
}

Var conv1d(Var x, Var weight, Var bias, Padding padding) {
  require_rank2(x, "conv1d");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (wv.rank() != 3 || wv.dim(1) != xv.rows()) shape_mismatch("conv1d", x, weight);
  const std::size_t c_in = xv.rows(), width = xv.cols(), c_out = wv.dim(0), k = wv.dim(2);
  if (bv.size() != c_out) shape_mismatch("conv1d", weight, bias);
  const std::size_t pad_left = padding == Padding::kSame ? (k - 1) / 2 : 0;
  if (padding == Padding::kValid && width < k) shape_mismatch("conv1d", x, weight);
  const std::size_t out_w = padding == Padding::kSame ? width : width - k + 1;

  // input position for output t, tap j: t + j - pad_left (out of range reads zero)
  Tensor out({c_out, out_w});
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t t = 0; t < out_w; ++t) {
      double s = bv[o];
      for (std::size_t i = 0; i < c_in; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad_left);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(width)) continue;
          s += wv[(o * c_in + i) * k + j] * xv[i * width + static_cast<std::size_t>(pos)];
        }
      out[o * out_w + t] = s;
    }
  return x.tape().record(
      std::move(out), {x, weight, bias},
      [x, weight, bias, c_in, c_out, k, width, out_w, pad_left](const Tensor& g, Tape& tape) {
        const Tensor& xv = x.value();
        const Tensor& wv = weight.value();
        Tensor gx(xv.shape(), 0.0), gw(wv.shape(), 0.0), gb(bias.value().shape(), 0.0);
        for (std::size_t o = 0; o < c_out; ++o)
          for (std::size_t t = 0; t < out_w; ++t) {
            const double gv = g[o * out_w + t];
            gb[o] += gv;
            for (std::size_t i = 0; i < c_in; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t pos =
                    static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad_left);
                if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(width)) continue;
                const std::size_t xi = i * width + static_cast<std::size_t>(pos);
                const std::size_t wi = (o * c_in + i) * k + j;
                gw[wi] += gv * xv[xi];
                gx[xi] += gv * wv[wi];
              }
          }
        tape.accumulate(x, gx);
        tape.accumulate(weight, gw);
        tape.accumulate(bias, gb);
      });
}

Var concat_rows(Var a, Var b) {
  require_rank2(a, "concat_rows");
  require_rank2(b, "concat_rows");
  if (a.cols() != b.cols()) shape_mismatch("concat_rows", a, b);
  std::vector<double> data(a.value().values());
  data.insert(data.end(), b.value().values().begin(), b.value().values().end());
  const std::size_t na = a.value().size();
  Tensor out({a.rows() + b.rows(), a.cols()}, std::move(data));
  return a.tape().record(std::move(out), {a, b}, [a, b, na](const Tensor& g, Tape& tape) {
    const auto all = g.values();
    tape.accumulate(a, Tensor(a.shape(), std::vector<double>(all.begin(), all.begin() + na)));
    tape.accumulate(b, Tensor(b.shape(), std::vector<double>(all.begin() + na, all.end())));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) shape_mismatch("concat_cols", parts[0], p);
    n += p.cols();
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out[r * n + offset + c] = pv[r * pv.cols() + c];
    offset += pv.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), owned, [owned, m, n](const Tensor& g, Tape& tape) {
    std::size_t offset = 0;
    for (const Var& p : owned) {
      const std::size_t pc = p.cols();
      Tensor gp({m, pc});
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < pc; ++c) gp[r * pc + c] = g[r * n + offset + c];
      tape.accumulate(p, gp);
      offset += pc;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  if (begin >= end || end > a.rows()) {
    throw ValidationError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") out of bounds for shape " + shape_string(a.shape()));
  }
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return gather_rows(a, idx);
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  if (begin >= end || end > a.cols()) {
    throw ValidationError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") out of bounds for shape " + shape_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  const Tensor& av = a.value();
  Tensor out({m, w});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = av[r * n + begin + c];
  return a.tape().record(std::move(out), {a}, [a, m, n, w, begin](const Tensor& g, Tape& tape) {
    Tensor ga({m, n}, 0.0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) ga[r * n + begin + c] = g[r * w + c];
    tape.accumulate(a, ga);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  require_rank2(a, "gather_rows");
  const std::size_t n = a.cols();
  const Tensor& av = a.value();
  Tensor out({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= a.rows()) throw ValidationError("gather_rows: index out of range for " + shape_string(a.shape()));
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = av[rows[r] * n + c];
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record(std::move(out), {a}, [a, idx, n](const Tensor& g, Tape& tape) {
    Tensor ga(a.shape(), 0.0);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < n; ++c) ga[idx[r] * n + c] += g[r * n + c];
    tape.accumulate(a, ga);
  });
}

Var reshape(Var a, Tensor::Shape shape) {
  if (shape_product(shape) != a.value().size()) {
    throw ValidationError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  return a.tape().record(a.value().reshaped(std::move(shape)), {a}, [a](const Tensor& g, Tape& tape) {
    tape.accumulate(a, g.reshaped(a.shape()));
  });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.values()) s += v;
  return a.tape().record(Tensor::scalar(s), {a}, [a](const Tensor& g, Tape& tape) {
    tape.accumulate(a, Tensor(a.shape(), g[0]));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ValidationError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  require_rank2(a, "row_sum");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({m, 1}, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r] += av[r * n + c];
  return a.tape().record(std::move(out), {a}, [a, m, n](const Tensor& g, Tape& tape) {
    Tensor ga({m, n});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] = g[r];
    tape.accumulate(a, ga);
  });
}

Var col_mean(Var a) {
  require_rank2(a, "col_mean");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({1, n}, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c] += av[r * n + c];
  for (std::size_t c = 0; c < n; ++c) out[c] /= static_cast<double>(m);
  return a.tape().record(std::move(out), {a}, [a, m, n](const Tensor& g, Tape& tape) {
    Tensor ga({m, n});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] = g[c] / static_cast<double>(m);
    tape.accumulate(a, ga);
  });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var exp_clipped(Var a, double limit) {
  return unary(a, [limit](double x) { return std::exp(std::clamp(x, -limit, limit)); },
               [limit](double x) { return (x < -limit || x > limit) ? 0.0 : std::exp(x); });
}

Var log_floor(Var a, double floor) {
  return unary(a, [floor](double x) { return std::log(std::max(x, floor)); },
               [floor](double x) { return x > floor ? 1.0 / x : 0.0; });
}

Var clamp_min(Var a, double floor) {
  return unary(a, [floor](double x) { return std::max(x, floor); },
               [floor](double x) { return x > floor ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  require_rank2(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    double mx = av[r * n];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, av[r * n + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += out[r * n + c] = std::exp(av[r * n + c] - mx);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= z;
  }
  Tensor probs = out;
  return a.tape().record(std::move(out), {a}, [a, probs = std::move(probs), m, n](const Tensor& g, Tape& tape) {
    Tensor ga({m, n});
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * probs[r * n + c];
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] = probs[r * n + c] * (g[r * n + c] - dot);
    }
    tape.accumulate(a, ga);
  });
}

std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k) {
  if (k > values.size()) {
    throw ValidationError("topk: k=" + std::to_string(k) + " exceeds length " + std::to_string(values.size()));
  }
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return values[i] > values[j]; });
  idx.resize(k);
  return idx;
}

std::vector<Tensor> grad(const ScalarProgram& f, std::span<const Tensor> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
  Var out = f(tape, vars);
  tape.backward(out);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (const Var& v : vars) {
    const Tensor& g = tape.grad(v);
    grads.push_back(g.size() == v.value().size() ? g : Tensor(v.shape(), 0.0));
  }
  return grads;
}

double evaluate(const ScalarProgram& f, std::span<const Tensor> inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ValidationError("finite_diff: step must be positive");
  Tensor g(x.shape(), 0.0);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double hi = f(probe);
    probe[i] = orig - step;
    const double lo = f(probe);
    probe[i] = orig;
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

}  // namespace guef
