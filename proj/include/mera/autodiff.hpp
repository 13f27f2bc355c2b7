#pragma once

// Reverse-mode differentiation over whole matrices. A Tape records every
// primitive executed during a forward pass; Tape::backward walks the record
// in reverse and deposits parameter gradients into a ParameterStore.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mera/errors.hpp"
#include "mera/matrix.hpp"
#include "mera/params.hpp"

namespace mera::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), {}, nullptr, false); }

  /// Leaf bound to a store entry. Repeated requests for the same name reuse
  /// one node.
  Var parameter(ParameterStore& store, const std::string& name) {
    if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return {this, it->second};
    const Matrix& v = store.value(name);
    Var var = push(v, {}, nullptr, true);
    nodes_[var.id].param_name = name;
    nodes_[var.id].store = &store;
    param_nodes_.emplace(name, var.id);
    return var;
  }

  /// Read-only binding: the value enters as a constant and receives no
  /// gradient.
  Var parameter(const ParameterStore& store, const std::string& name) { return constant(store.value(name)); }

  /// Appends a derived node; it requires a gradient when any input does.
  Var derive(Matrix value, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool rg = false;
    for (std::size_t i : inputs) rg = rg || nodes_[i].requires_grad;
    return push(std::move(value), std::move(inputs), rg ? std::move(fn) : nullptr, rg);
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient slot of a node, valid after backward().
  const Matrix& gradient(Var v) const { return nodes_[v.id].grad; }

  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    auto& d = n.grad.data();
    const auto& s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }

  /// Direct access to an input's gradient buffer, or nullptr when the input
  /// does not need one. Lets primitives scatter without temporaries.
  Matrix* grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    return n.requires_grad ? &n.grad : nullptr;
  }

  const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }

  /// Reverse accumulation from a 1×1 loss. Node gradients are recomputed
  /// from scratch on every call; parameter gradients are added into their
  /// store entries.
  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("loss belongs to a different tape");
    const Matrix& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1)
      throw ContractError("backward needs a scalar loss, got " + lv.shape());
    for (auto& n : nodes_) {
      if (n.requires_grad)
        n.grad = Matrix(n.value.rows(), n.value.cols());
      else
        n.grad = Matrix();
    }
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
    for (auto& n : nodes_) {
      if (!n.store) continue;
      Matrix& g = n.store->grad(n.param_name);
      for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] += n.grad.data()[k];
    }
  }

  // Kink bookkeeping for finite-difference validation.
  void note_branch(bool taken) {
    pattern_ = (pattern_ ^ (taken ? 0x9e3779b97f4a7c15ULL : 0x51ed270b27c1f3a5ULL)) * 0x100000001b3ULL;
  }
  void note_choice(std::size_t index) {
    pattern_ = (pattern_ ^ (index + 0x2545f4914f6cdd1dULL)) * 0x100000001b3ULL;
  }
  std::uint64_t branch_pattern() const { return pattern_; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string param_name;
    ParameterStore* store = nullptr;
  };

  Var push(Matrix value, std::vector<std::size_t> inputs, BackwardFn fn, bool rg) {
    if (!value.all_finite()) throw NumericalError("non-finite value produced on tape (" + value.shape() + ")");
    nodes_.push_back({std::move(value), Matrix(), rg, std::move(inputs), std::move(fn), {}, nullptr});
    return {this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> param_nodes_;
  std::uint64_t pattern_ = 0xcbf29ce484222325ULL;
};

inline const Matrix& Var::value() const { return tape->value(id); }

inline double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("expected a scalar node, got " + v.shape());
  return v(0, 0);
}

namespace detail {
inline void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands recorded on different tapes");
}
inline void check_same_shape(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value()))
    throw DimensionError(std::string(op) + " " + a.value().shape() + " with " + b.value().shape());
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b);
  Matrix out = mera::matmul(a.value(), b.value());
  return a.tape->derive(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.accumulate(ia, mera::matmul_nt(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, mera::matmul_tn(t.value(ia), g));
  });
}

/// a · bᵀ
inline Var matmul_nt(Var a, Var b) {
  detail::check_same_tape(a, b);
  Matrix out = mera::matmul_nt(a.value(), b.value());
  return a.tape->derive(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.accumulate(ia, mera::matmul(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, mera::matmul_tn(g, t.value(ia)));
  });
}

inline Var add(Var a, Var b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape("add", a, b);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.value().data()[i];
  return a.tape->derive(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, t.grad_of(self));
  });
}

inline Var sub(Var a, Var b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape("sub", a, b);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  return a.tape->derive(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_of(self));
    if (Matrix* gb = t.grad_buffer(ib)) {
      const Matrix& g = t.grad_of(self);
      for (std::size_t i = 0; i < g.size(); ++i) gb->data()[i] -= g.data()[i];
    }
  });
}

/// Adds a 1×c bias row to every row of a.
inline Var add_bias(Var a, Var bias) {
  detail::check_same_tape(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw DimensionError("bias " + bias.value().shape() + " for input " + a.value().shape());
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias.value()(0, c);
  return a.tape->derive(std::move(out), {a.id, bias.id}, [ia = a.id, ib = bias.id](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(ia, g);
    if (Matrix* gb = t.grad_buffer(ib)) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gb)(0, c) += g(r, c);
    }
  });
}

inline Var hadamard(Var a, Var b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape("hadamard", a, b);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return a.tape->derive(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (Matrix* ga = t.grad_buffer(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data()[i] += g.data()[i] * t.value(ib).data()[i];
    if (Matrix* gb = t.grad_buffer(ib))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data()[i] += g.data()[i] * t.value(ia).data()[i];
  });
}

/// s·a + offset, elementwise.
inline Var affine(Var a, double s, double offset = 0.0) {
  Matrix out = a.value();
  for (double& v : out.data()) v = s * v + offset;
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id, s](Tape& t, std::size_t self) {
    if (Matrix* ga = t.grad_buffer(ia)) {
      const Matrix& g = t.grad_of(self);
      for (std::size_t i = 0; i < g.size(); ++i) ga->data()[i] += s * g.data()[i];
    }
  });
}

inline Var scale(Var a, double s) { return affine(a, s, 0.0); }

/// max(0, x); the subgradient at exactly 0 is 0.
inline Var relu(Var a) {
  Matrix out = a.value();
  for (double& v : out.data()) {
    a.tape->note_branch(v > 0.0);
    if (!(v > 0.0)) v = 0.0;
  }
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    if (Matrix* ga = t.grad_buffer(ia)) {
      const Matrix& g = t.grad_of(self);
      const Matrix& x = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x.data()[i] > 0.0) ga->data()[i] += g.data()[i];
    }
  });
}

inline Var sigmoid(Var a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = mera::sigmoid(v);
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    if (Matrix* ga = t.grad_buffer(ia)) {
      const Matrix& g = t.grad_of(self);
      const Matrix& y = t.value(self);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = y.data()[i];
        ga->data()[i] += g.data()[i] * s * (1.0 - s);
      }
    }
  });
}

inline Var softmax_rows(Var a, double temperature = 1.0) {
  Matrix out = mera::softmax_rows(a.value(), temperature);
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id, temperature](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Matrix& g = t.grad_of(self);
    const Matrix& y = t.value(self);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) s += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) (*ga)(r, c) += y(r, c) * (g(r, c) - s) / temperature;
    }
  });
}

/// Input laid out as `groups` blocks of `width` columns; softmax runs across
/// the blocks independently for every (row, column-within-block).
inline Var softmax_across_blocks(Var a, std::size_t groups) {
  const Matrix& x = a.value();
  if (groups == 0 || x.cols() % groups != 0)
    throw DimensionError("cannot split " + x.shape() + " into " + std::to_string(groups) + " blocks");
  const std::size_t width = x.cols() / groups;
  Matrix out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t d = 0; d < width; ++d) {
      double mx = x(r, d);
      for (std::size_t e = 1; e < groups; ++e) mx = std::max(mx, x(r, e * width + d));
      double sum = 0.0;
      for (std::size_t e = 0; e < groups; ++e) {
        const double v = std::exp(x(r, e * width + d) - mx);
        out(r, e * width + d) = v;
        sum += v;
      }
      for (std::size_t e = 0; e < groups; ++e) out(r, e * width + d) /= sum;
    }
  }
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id, groups, width](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Matrix& g = t.grad_of(self);
    const Matrix& y = t.value(self);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      for (std::size_t d = 0; d < width; ++d) {
        double s = 0.0;
        for (std::size_t e = 0; e < groups; ++e) s += g(r, e * width + d) * y(r, e * width + d);
        for (std::size_t e = 0; e < groups; ++e) {
          const std::size_t c = e * width + d;
          (*ga)(r, c) += y(r, c) * (g(r, c) - s);
        }
      }
    }
  });
}

/// n×E → n×(E·width), each column repeated `width` times.
inline Var repeat_columns(Var a, std::size_t width) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols() * width);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t e = 0; e < x.cols(); ++e)
      for (std::size_t d = 0; d < width; ++d) out(r, e * width + d) = x(r, e);
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id, width](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Matrix& g = t.grad_of(self);
    for (std::size_t r = 0; r < ga->rows(); ++r)
      for (std::size_t e = 0; e < ga->cols(); ++e)
        for (std::size_t d = 0; d < width; ++d) (*ga)(r, e) += g(r, e * width + d);
  });
}

/// n×(E·width) → n×width, summing the E blocks.
inline Var sum_blocks(Var a, std::size_t groups) {
  const Matrix& x = a.value();
  if (groups == 0 || x.cols() % groups != 0)
    throw DimensionError("cannot split " + x.shape() + " into " + std::to_string(groups) + " blocks");
  const std::size_t width = x.cols() / groups;
  Matrix out(x.rows(), width);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t e = 0; e < groups; ++e)
      for (std::size_t d = 0; d < width; ++d) out(r, d) += x(r, e * width + d);
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id, groups, width](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Matrix& g = t.grad_of(self);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t e = 0; e < groups; ++e)
        for (std::size_t d = 0; d < width; ++d) (*ga)(r, e * width + d) += g(r, d);
  });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw EmptyInputError("concat of zero matrices");
  Tape* tape = parts[0].tape;
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape != tape) throw ContractError("operands recorded on different tapes");
    if (p.rows() != rows) throw DimensionError("concat rows " + std::to_string(rows) + " with " + p.value().shape());
    ids.push_back(p.id);
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offsets[k] + c) = v(r, c);
  }
  return tape->derive(std::move(out), ids, [ids, offsets](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Matrix* gk = t.grad_buffer(ids[k]);
      if (!gk) continue;
      for (std::size_t r = 0; r < gk->rows(); ++r)
        for (std::size_t c = 0; c < gk->cols(); ++c) (*gk)(r, c) += g(r, offsets[k] + c);
    }
  });
}

/// n×c → n×1 row sums.
inline Var sum_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, 0) += x(r, c);
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Matrix& g = t.grad_of(self);
    for (std::size_t r = 0; r < ga->rows(); ++r)
      for (std::size_t c = 0; c < ga->cols(); ++c) (*ga)(r, c) += g(r, 0);
  });
}

inline Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->derive(Matrix(1, 1, s), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    if (!ga) return;
    const double g = t.grad_of(self)(0, 0);
    for (double& v : ga->data()) v += g;
  });
}

inline Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw EmptyInputError("mean of an empty matrix");
  return scale(sum_all(a), 1.0 / n);
}

/// For every row and column s: the maximum over the other columns of that
/// row. A single-column input has no rivals and yields 0.
inline Var max_of_others(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  std::vector<std::size_t> arg(x.size(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t s = 0; s < x.cols(); ++s) {
      std::size_t best = x.cols();
      for (std::size_t o = 0; o < x.cols(); ++o) {
        if (o == s) continue;
        if (best == x.cols() || x(r, o) > x(r, best)) best = o;
      }
      arg[r * x.cols() + s] = best;
      if (best != x.cols()) {
        out(r, s) = x(r, best);
        a.tape->note_choice(best);
      }
    }
  }
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id, arg = std::move(arg)](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Matrix& g = t.grad_of(self);
    const std::size_t cols = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t s = 0; s < cols; ++s) {
        const std::size_t b = arg[r * cols + s];
        if (b != cols) (*ga)(r, b) += g(r, s);
      }
  });
}

/// Binary entropy in bits. The argument is clamped to [eps, 1 − eps] before
/// the logarithms; exact 0 and 1 map to 0.
inline Var binary_entropy_bits(Var a, double eps = 1e-12) {
  Matrix out = a.value();
  for (double& v : out.data()) {
    if (v <= 0.0 || v >= 1.0) {
      v = 0.0;
      continue;
    }
    const double c = std::clamp(v, eps, 1.0 - eps);
    v = (-c * std::log(c) - (1.0 - c) * std::log(1.0 - c)) / std::numbers::ln2;
  }
  return a.tape->derive(std::move(out), {a.id}, [ia = a.id, eps](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Matrix& g = t.grad_of(self);
    const Matrix& x = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double c = x.data()[i];
      if (c < eps || c > 1.0 - eps) continue;
      ga->data()[i] += g.data()[i] * std::log((1.0 - c) / c) / std::numbers::ln2;
    }
  });
}

/// Mean binary cross-entropy of an n×1 probability column against labels.
/// Probabilities are clamped to [eps, 1 − eps].
inline Var bce_mean(Var p, std::span<const double> labels, double eps = 1e-12) {
  const Matrix& x = p.value();
  if (x.cols() != 1 || x.rows() != labels.size())
    throw DimensionError("bce predictions " + x.shape() + " vs " + std::to_string(labels.size()) + " labels");
  if (x.rows() == 0) throw EmptyInputError("bce over zero residues");
  const double n = static_cast<double>(x.rows());
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double q = std::clamp(x(i, 0), eps, 1.0 - eps);
    s -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  std::vector<double> y(labels.begin(), labels.end());
  return p.tape->derive(Matrix(1, 1, s / n), {p.id}, [ip = p.id, y = std::move(y), eps, n](Tape& t, std::size_t self) {
    Matrix* gp = t.grad_buffer(ip);
    if (!gp) return;
    const double g = t.grad_of(self)(0, 0);
    const Matrix& x = t.value(ip);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double q = x(i, 0);
      if (q < eps || q > 1.0 - eps) continue;
      (*gp)(i, 0) += g * (-(y[i] / q) + (1.0 - y[i]) / (1.0 - q)) / n;
    }
  });
}

/// Σ_i (p_i − y_i)² over an n×1 column, divided by n when `mean` is set.
inline Var squared_error(Var p, std::span<const double> labels, bool mean) {
  const Matrix& x = p.value();
  if (x.cols() != 1 || x.rows() != labels.size())
    throw DimensionError("squared error predictions " + x.shape() + " vs " + std::to_string(labels.size()) +
                         " labels");
  const double div = mean ? static_cast<double>(x.rows()) : 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += (x(i, 0) - labels[i]) * (x(i, 0) - labels[i]);
  std::vector<double> y(labels.begin(), labels.end());
  return p.tape->derive(Matrix(1, 1, s / div), {p.id}, [ip = p.id, y = std::move(y), div](Tape& t, std::size_t self) {
    Matrix* gp = t.grad_buffer(ip);
    if (!gp) return;
    const double g = t.grad_of(self)(0, 0);
    const Matrix& x = t.value(ip);
    for (std::size_t i = 0; i < y.size(); ++i) (*gp)(i, 0) += g * 2.0 * (x(i, 0) - y[i]) / div;
  });
}

// ---------------------------------------------------------------------------
// Finite-difference validation

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&, ParameterStore&)>;

/// Compares backward() gradients with central differences, one coordinate at
/// a time. A coordinate is skipped and counted when either probe takes a
/// different ReLU or argmax branch than the unperturbed evaluation.
/// Relative error uses the denominator max(|analytic|, 1e-8).
inline GradCheckResult finite_diff_check(const LossBuilder& f, ParameterStore& params, double step = 1e-4) {
  if (!(step > 0.0)) throw ParameterError("finite-difference step must be positive");
  params.zero_grad();
  std::uint64_t base = 0;
  {
    Tape tape;
    Var loss = f(tape, params);
    base = tape.branch_pattern();
    tape.backward(loss);
  }
  GradCheckResult res;
  for (auto& e : params.entries()) {
    const Matrix analytic = e.grad;
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      const double orig = e.value.data()[k];
      auto probe = [&](double v, std::uint64_t& pattern) {
        e.value.data()[k] = v;
        Tape t;
        const double l = f(t, params).scalar();
        pattern = t.branch_pattern();
        if (!std::isfinite(l)) throw NumericalError("non-finite loss while probing '" + e.name + "'");
        return l;
      };
      std::uint64_t pp = 0, pm = 0;
      const double lp = probe(orig + step, pp);
      const double lm = probe(orig - step, pm);
      e.value.data()[k] = orig;
      if (pp != base || pm != base) {
        ++res.skipped_kinks;
        continue;
      }
      const double fd = (lp - lm) / (2.0 * step);
      const double g = analytic.data()[k];
      const double rel = std::abs(fd - g) / std::max(std::abs(g), 1e-8);
      ++res.checked;
      if (rel > res.max_relative_error) {
        res.max_relative_error = rel;
        res.worst_parameter = e.name;
        res.worst_index = k;
      }
    }
  }
  params.zero_grad();
  return res;
}

}  // namespace mera::ad
