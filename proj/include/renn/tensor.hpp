#pragma once

// Dense row-major tensors recorded on a reverse-mode differentiation tape,
// plus an adaptive-moment optimizer. Just enough machinery for the region
// energy network and the learning loop; no broadcasting beyond a row bias.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "renn/error.hpp"

namespace renn::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_dims();
  }
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_))
      throw ContractViolation("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  double item() const {
    if (data_.size() != 1) throw ContractViolation("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  void check_dims() const {
    for (auto d : shape_)
      if (d == 0) throw ContractViolation("tensor dimensions must be positive, got " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  enum class Kind { Leaf, Constant, Op };

  using ForwardFn = std::function<Tensor(const Tape&)>;
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  /// Trainable parameter. Gradients are reported for leaves in creation order.
  Var leaf(Tensor value, std::string name = "param") {
    return push(Kind::Leaf, std::move(name), {}, std::move(value), nullptr, nullptr);
  }
  /// Non-trainable input. Its value may be swapped between replays.
  Var constant(Tensor value, std::string name = "const") {
    return push(Kind::Constant, std::move(name), {}, std::move(value), nullptr, nullptr);
  }

  /// Records an op: evaluates `fwd` immediately and keeps both closures for
  /// replay and backpropagation.
  Var record(std::string op, std::vector<std::size_t> inputs, ForwardFn fwd, BackwardFn bwd) {
    Tensor v = fwd(*this);
    if (!v.all_finite()) throw NumericFault(op, "non-finite forward value");
    return push(Kind::Op, std::move(op), std::move(inputs), std::move(v), std::move(fwd), std::move(bwd));
  }

  const Tensor& value(Var v) const { return node(v).value; }
  const std::string& op_name(Var v) const { return node(v).op; }
  Kind kind(Var v) const { return node(v).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void set_value(Var v, Tensor t) {
    auto& n = node(v);
    if (n.kind == Kind::Op) throw ContractViolation("set_value on an op node");
    if (t.shape() != n.value.shape())
      throw ContractViolation("set_value shape " + shape_str(t.shape()) + " != " + shape_str(n.value.shape()));
    n.value = std::move(t);
  }
  Tensor& mutable_value(Var v) {
    auto& n = node(v);
    if (n.kind == Kind::Op) throw ContractViolation("mutable_value on an op node");
    return n.value;
  }

  std::vector<Var> leaves() const {
    std::vector<Var> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].kind == Kind::Leaf) out.push_back(Var{i});
    return out;
  }

  /// Re-evaluates every op in recording order from the current leaf and
  /// constant values.
  void replay() {
    for (auto& n : nodes_) {
      if (n.kind != Kind::Op) continue;
      n.value = n.forward(*this);
      if (!n.value.all_finite()) throw NumericFault(n.op, "non-finite forward value");
    }
  }

  /// Reverse sweep from a scalar `loss`; returns one gradient per leaf.
  std::vector<Tensor> backward(Var loss) {
    if (node(loss).value.size() != 1)
      throw ContractViolation("backward requires a scalar loss, got shape " + shape_str(node(loss).value.shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    visit_order_.clear();
    nodes_[loss.id].grad = Tensor(nodes_[loss.id].value.shape(), 1.0);
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      auto& n = nodes_[k];
      if (n.kind != Kind::Op || n.grad.empty()) continue;
      visit_order_.push_back(k);
      Tensor g = n.grad;  // backward fns may grow nodes_' grads, keep a copy
      n.backward(*this, g);
      for (auto in : n.inputs) {
        const auto& ig = nodes_[in].grad;
        if (!ig.empty() && !ig.all_finite()) throw NumericFault(n.op, "non-finite gradient");
      }
    }
    std::vector<Tensor> out;
    for (auto& n : nodes_) {
      if (n.kind != Kind::Leaf) continue;
      out.push_back(n.grad.empty() ? Tensor(n.value.shape(), 0.0) : n.grad);
    }
    return out;
  }

  struct Evaluation {
    double loss;
    std::vector<Tensor> grads;
  };

  Evaluation forward_backward(Var loss) {
    replay();
    auto grads = backward(loss);
    return {value(loss).item(), std::move(grads)};
  }

  /// Node ids of ops visited by the last backward(), in visit order.
  const std::vector<std::size_t>& last_visit_order() const noexcept { return visit_order_; }

  /// Gradient buffer of an input; allocated zero-filled on first use.
  Tensor& grad_of(std::size_t id) {
    auto& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
  }
  const Tensor& value_of(std::size_t id) const { return nodes_.at(id).value; }

 private:
  struct Node {
    Kind kind;
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    ForwardFn forward;
    BackwardFn backward;
  };

  Var push(Kind k, std::string op, std::vector<std::size_t> inputs, Tensor value, ForwardFn f, BackwardFn b) {
    for (auto in : inputs)
      if (in >= nodes_.size()) throw ContractViolation("op input refers to a future node");
    nodes_.push_back(Node{k, std::move(op), std::move(inputs), std::move(value), Tensor(), std::move(f), std::move(b)});
    return Var{nodes_.size() - 1};
  }
  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw ContractViolation("invalid tape handle");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractViolation("invalid tape handle");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
};

// ---------------------------------------------------------------------------
// Primitive ops

inline void require_same_shape(const Tape& t, Var a, Var b, const char* op) {
  if (t.value(a).shape() != t.value(b).shape())
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(t.value(a).shape()) + " vs " +
                            shape_str(t.value(b).shape()));
}

/// [m,k] x [k,n] -> [m,n]
inline Var matmul(Tape& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    throw ContractViolation("matmul: incompatible shapes " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  const std::size_t ia = a.id, ib = b.id;
  return t.record(
      "matmul", {ia, ib},
      [ia, ib](const Tape& tp) {
        const auto& A = tp.value_of(ia);
        const auto& B = tp.value_of(ib);
        const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
        Tensor C({m, n}, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &B.data()[p * n];
            double* crow = &C.data()[i * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
          }
        return C;
      },
      [ia, ib](Tape& tp, const Tensor& g) {
        const auto& A = tp.value_of(ia);
        const auto& B = tp.value_of(ib);
        const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
        auto& gA = tp.grad_of(ia);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
            gA[i * k + p] += s;
          }
        auto& gB = tp.grad_of(ib);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += av * g[i * n + j];
          }
      });
}

namespace detail {

template <class F, class DF>
Var unary(Tape& t, const char* name, Var a, F f, DF df) {
  const std::size_t ia = a.id;
  return t.record(
      name, {ia},
      [ia, f](const Tape& tp) {
        Tensor out = tp.value_of(ia);
        for (auto& v : out.data()) v = f(v);
        return out;
      },
      [ia, df](Tape& tp, const Tensor& g) {
        const auto& x = tp.value_of(ia);
        auto& gx = tp.grad_of(ia);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * df(x[i]);
      });
}

}  // namespace detail

inline Var add(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "add");
  const std::size_t ia = a.id, ib = b.id;
  return t.record(
      "add", {ia, ib},
      [ia, ib](const Tape& tp) {
        Tensor out = tp.value_of(ia);
        const auto& y = tp.value_of(ib);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
        return out;
      },
      [ia, ib](Tape& tp, const Tensor& g) {
        auto& ga = tp.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = tp.grad_of(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      });
}

/// Sum of equally shaped tensors.
inline Var add_n(Tape& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractViolation("add_n: empty input");
  std::vector<std::size_t> ids;
  for (auto x : xs) {
    require_same_shape(t, xs.front(), x, "add_n");
    ids.push_back(x.id);
  }
  return t.record(
      "add_n", ids,
      [ids](const Tape& tp) {
        Tensor out = tp.value_of(ids[0]);
        for (std::size_t k = 1; k < ids.size(); ++k) {
          const auto& y = tp.value_of(ids[k]);
          for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
        }
        return out;
      },
      [ids](Tape& tp, const Tensor& g) {
        for (auto id : ids) {
          auto& gi = tp.grad_of(id);
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
      });
}

/// [m,n] + bias[n], bias broadcast over rows.
inline Var add_bias(Tape& t, Var a, Var bias) {
  const auto& A = t.value(a);
  const auto& B = t.value(bias);
  if (A.rank() != 2 || B.rank() != 1 || B.dim(0) != A.dim(1))
    throw ContractViolation("add_bias: incompatible shapes " + shape_str(A.shape()) + " + " + shape_str(B.shape()));
  const std::size_t ia = a.id, ib = bias.id;
  return t.record(
      "add_bias", {ia, ib},
      [ia, ib](const Tape& tp) {
        Tensor out = tp.value_of(ia);
        const auto& b = tp.value_of(ib);
        const std::size_t n = b.size();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
        return out;
      },
      [ia, ib](Tape& tp, const Tensor& g) {
        auto& ga = tp.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = tp.grad_of(ib);
        const std::size_t n = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      });
}

inline Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "mul");
  const std::size_t ia = a.id, ib = b.id;
  return t.record(
      "mul", {ia, ib},
      [ia, ib](const Tape& tp) {
        Tensor out = tp.value_of(ia);
        const auto& y = tp.value_of(ib);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
        return out;
      },
      [ia, ib](Tape& tp, const Tensor& g) {
        const auto& x = tp.value_of(ia);
        const auto& y = tp.value_of(ib);
        auto& ga = tp.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        auto& gb = tp.grad_of(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      });
}

inline Var scale(Tape& t, Var a, double c) {
  return detail::unary(t, "scale", a, [c](double x) { return c * x; }, [c](double) { return c; });
}

inline Var add_scalar(Tape& t, Var a, double c) {
  return detail::unary(t, "add_scalar", a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

inline Var tanh(Tape& t, Var a) {
  return detail::unary(
      t, "tanh", a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double th = std::tanh(x);
        return 1.0 - th * th;
      });
}

inline Var exp(Tape& t, Var a) {
  return detail::unary(t, "exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

inline Var log(Tape& t, Var a) {
  return detail::unary(t, "log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

/// Elementwise (a - b)^2.
inline Var sq_diff(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "sq_diff");
  const std::size_t ia = a.id, ib = b.id;
  return t.record(
      "sq_diff", {ia, ib},
      [ia, ib](const Tape& tp) {
        Tensor out = tp.value_of(ia);
        const auto& y = tp.value_of(ib);
        for (std::size_t i = 0; i < out.size(); ++i) {
          const double d = out[i] - y[i];
          out[i] = d * d;
        }
        return out;
      },
      [ia, ib](Tape& tp, const Tensor& g) {
        const auto& x = tp.value_of(ia);
        const auto& y = tp.value_of(ib);
        auto& ga = tp.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * (x[i] - y[i]);
        auto& gb = tp.grad_of(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= 2.0 * g[i] * (x[i] - y[i]);
      });
}

/// Softmax over the last axis, max-subtracted.
inline Var softmax(Tape& t, Var a) {
  const std::size_t ia = a.id;
  const std::size_t width = t.value(a).rank() == 0 ? 1 : t.value(a).shape().back();
  return t.record(
      "softmax", {ia},
      [ia, width](const Tape& tp) {
        Tensor out = tp.value_of(ia);
        for (std::size_t r = 0; r < out.size(); r += width) {
          double mx = out[r];
          for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, out[r + j]);
          double z = 0.0;
          for (std::size_t j = 0; j < width; ++j) z += (out[r + j] = std::exp(out[r + j] - mx));
          for (std::size_t j = 0; j < width; ++j) out[r + j] /= z;
        }
        return out;
      },
      [ia, width](Tape& tp, const Tensor& g) {
        // Recompute the output; cheaper than storing an extra handle.
        Tensor y = tp.value_of(ia);
        for (std::size_t r = 0; r < y.size(); r += width) {
          double mx = y[r];
          for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, y[r + j]);
          double z = 0.0;
          for (std::size_t j = 0; j < width; ++j) z += (y[r + j] = std::exp(y[r + j] - mx));
          for (std::size_t j = 0; j < width; ++j) y[r + j] /= z;
        }
        auto& gx = tp.grad_of(ia);
        for (std::size_t r = 0; r < y.size(); r += width) {
          double dot = 0.0;
          for (std::size_t j = 0; j < width; ++j) dot += g[r + j] * y[r + j];
          for (std::size_t j = 0; j < width; ++j) gx[r + j] += y[r + j] * (g[r + j] - dot);
        }
      });
}

inline Var sum(Tape& t, Var a) {
  const std::size_t ia = a.id;
  return t.record(
      "sum", {ia},
      [ia](const Tape& tp) {
        const auto& x = tp.value_of(ia);
        return Tensor::scalar(std::accumulate(x.data().begin(), x.data().end(), 0.0));
      },
      [ia](Tape& tp, const Tensor& g) {
        auto& gx = tp.grad_of(ia);
        for (auto& v : gx.data()) v += g[0];
      });
}

inline Var mean(Tape& t, Var a) {
  const std::size_t ia = a.id;
  return t.record(
      "mean", {ia},
      [ia](const Tape& tp) {
        const auto& x = tp.value_of(ia);
        return Tensor::scalar(std::accumulate(x.data().begin(), x.data().end(), 0.0) / double(x.size()));
      },
      [ia](Tape& tp, const Tensor& g) {
        auto& gx = tp.grad_of(ia);
        const double s = g[0] / double(gx.size());
        for (auto& v : gx.data()) v += s;
      });
}

/// Σ x log x -> scalar, with 0 log 0 = 0. The derivative log x + 1 uses
/// max(x, DBL_MIN) so exact zeros stay finite.
inline Var sum_xlogx(Tape& t, Var a) {
  const std::size_t ia = a.id;
  return t.record(
      "sum_xlogx", {ia},
      [ia](const Tape& tp) {
        double s = 0.0;
        for (double v : tp.value_of(ia).data())
          if (v > 0.0) s += v * std::log(v);
        return Tensor::scalar(s);
      },
      [ia](Tape& tp, const Tensor& g) {
        const auto& x = tp.value_of(ia);
        auto& gx = tp.grad_of(ia);
        for (std::size_t i = 0; i < x.size(); ++i)
          gx[i] += g[0] * (std::log(std::max(x[i], std::numeric_limits<double>::min())) + 1.0);
      });
}

/// Inner product of two equally shaped tensors -> scalar.
inline Var dot(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "dot");
  const std::size_t ia = a.id, ib = b.id;
  return t.record(
      "dot", {ia, ib},
      [ia, ib](const Tape& tp) {
        const auto& x = tp.value_of(ia);
        const auto& y = tp.value_of(ib);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
        return Tensor::scalar(s);
      },
      [ia, ib](Tape& tp, const Tensor& g) {
        const auto& x = tp.value_of(ia);
        const auto& y = tp.value_of(ib);
        auto& ga = tp.grad_of(ia);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[0] * y[i];
        auto& gb = tp.grad_of(ib);
        for (std::size_t i = 0; i < x.size(); ++i) gb[i] += g[0] * x[i];
      });
}

/// out[i] = flat(a)[index[i]]
inline Var gather(Tape& t, Var a, std::vector<std::size_t> index) {
  const std::size_t n = t.value(a).size();
  for (auto i : index)
    if (i >= n) throw ContractViolation("gather: index out of range");
  if (index.empty()) throw ContractViolation("gather: empty index");
  const std::size_t ia = a.id;
  return t.record(
      "gather", {ia},
      [ia, index](const Tape& tp) {
        const auto& x = tp.value_of(ia);
        Tensor out({index.size()});
        for (std::size_t i = 0; i < index.size(); ++i) out[i] = x[index[i]];
        return out;
      },
      [ia, index](Tape& tp, const Tensor& g) {
        auto& gx = tp.grad_of(ia);
        for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += g[i];
      });
}

/// out[index[i]] += flat(a)[i]; out has `out_size` entries. Marginalization
/// of a dense table is a segment sum with the projection index.
inline Var segment_sum(Tape& t, Var a, std::vector<std::size_t> index, std::size_t out_size) {
  if (index.size() != t.value(a).size()) throw ContractViolation("segment_sum: index length != input size");
  for (auto i : index)
    if (i >= out_size) throw ContractViolation("segment_sum: segment id out of range");
  const std::size_t ia = a.id;
  return t.record(
      "segment_sum", {ia},
      [ia, index, out_size](const Tape& tp) {
        const auto& x = tp.value_of(ia);
        Tensor out({out_size}, 0.0);
        for (std::size_t i = 0; i < index.size(); ++i) out[index[i]] += x[i];
        return out;
      },
      [ia, index](Tape& tp, const Tensor& g) {
        auto& gx = tp.grad_of(ia);
        for (std::size_t i = 0; i < index.size(); ++i) gx[i] += g[index[i]];
      });
}

inline Var reshape(Tape& t, Var a, Shape shape) {
  if (shape_size(shape) != t.value(a).size())
    throw ContractViolation("reshape: size mismatch " + shape_str(t.value(a).shape()) + " -> " + shape_str(shape));
  const std::size_t ia = a.id;
  return t.record(
      "reshape", {ia},
      [ia, shape](const Tape& tp) { return Tensor(shape, tp.value_of(ia).data()); },
      [ia](Tape& tp, const Tensor& g) {
        auto& gx = tp.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
}

/// 1-D window [offset, offset+len) of the flattened input.
inline Var slice(Tape& t, Var a, std::size_t offset, std::size_t len) {
  if (len == 0 || offset + len > t.value(a).size()) throw ContractViolation("slice: window out of range");
  const std::size_t ia = a.id;
  return t.record(
      "slice", {ia},
      [ia, offset, len](const Tape& tp) {
        const auto& x = tp.value_of(ia);
        return Tensor({len}, std::vector<double>(x.data().begin() + long(offset), x.data().begin() + long(offset + len)));
      },
      [ia, offset](Tape& tp, const Tensor& g) {
        auto& gx = tp.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
      });
}

// ---------------------------------------------------------------------------
// Adaptive-moment optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  long steps() const noexcept { return step_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw ContractViolation("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->shape(), 0.0);
        v_.emplace_back(p->shape(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw ContractViolation("adam: parameter set changed between steps");
    for (std::size_t k = 0; k < params.size(); ++k)
      if (params[k]->shape() != grads[k].shape() || m_[k].shape() != grads[k].shape())
        throw ContractViolation("adam: shape mismatch for parameter " + std::to_string(k));
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      const auto& g = grads[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        p[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace renn::ad
