#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "viclevr/rng.hpp"

namespace viclevr::tensor {

/// Rank <= 2 dense row-major array. Vectors are 1 x n rows.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Tensor = Mat<double>;

// ---------------------------------------------------------------------------
// Forward-only kernels

/// Row-wise softmax with max subtraction.
template <typename Derived>
Mat<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

template <typename Derived>
Mat<typename Derived::Scalar> gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) {
    using std::erf;
    return Scalar(0.5) * v * (Scalar(1) + erf(v / std::sqrt(Scalar(2))));
  });
}

template <typename Derived>
Mat<typename Derived::Scalar> sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) {
    using std::exp;
    return v >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-v)) : exp(v) / (Scalar(1) + exp(v));
  });
}

/// Normalizes every row with its population variance, then applies gain and bias (1 x cols).
template <typename Derived, typename G, typename B>
Mat<typename Derived::Scalar> layer_norm(const Eigen::MatrixBase<Derived>& x,
                                         const Eigen::MatrixBase<G>& gain,
                                         const Eigen::MatrixBase<B>& bias,
                                         typename Derived::Scalar eps = 1e-5) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar var = centered.square().mean();
    using std::sqrt;
    y.row(r) = (centered / sqrt(var + eps) * gain.array() + bias.array()).matrix();
  }
  return y;
}

// ---------------------------------------------------------------------------
// Tape

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const Mat<Scalar>& value() const { return tape->value(id); }
  const Mat<Scalar>& grad() const { return tape->grad(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape: every primitive records its output and a closure that
/// pushes the output gradient into its inputs.
template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() { nodes_.reserve(1024); }

  Var<Scalar> leaf(Matrix value, std::string op = "leaf") {
    return push(std::move(value), std::move(op), nullptr);
  }

  Var<Scalar> push(Matrix value, std::string op, Backward backward) {
    if (!value.allFinite()) throw std::domain_error("non-finite value produced by " + op);
    nodes_.push_back({std::move(value), {}, std::move(op), std::move(backward)});
    return {this, nodes_.size() - 1};
  }

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  const Matrix& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.size() == 0) {
      static thread_local Matrix empty;
      empty = Matrix::Zero(n.value.rows(), n.value.cols());
      return empty;
    }
    return n.grad;
  }
  const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_.at(id);
    if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
      throw std::logic_error("gradient shape mismatch at " + n.op);
    }
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Test hook: scales the upstream gradient of every node recorded by `op`
  /// before its backward rule runs.
  void inject_backward_fault(std::string op, Scalar scale) { fault_ = Fault{std::move(op), scale}; }

  /// Seeds d(root)/d(root) = 1 for a 1 x 1 root and runs every rule in reverse order.
  void backward(const Var<Scalar>& root) {
    if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward needs a scalar");
    accumulate(root.id, Matrix::Ones(1, 1));
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      Matrix g = n.grad;
      if (fault_ && fault_->op == n.op) g *= fault_->scale;
      n.backward(*this, g);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::string op;
    Backward backward;
  };
  struct Fault {
    std::string op;
    Scalar scale;
  };
  std::vector<Node> nodes_;
  std::optional<Fault> fault_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives

namespace detail {
template <typename Scalar>
void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace detail

/// dA = dC Bᵀ, dB = Aᵀ dC.
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require<Scalar>(a.cols() == b.rows(), "matmul: inner dimensions differ");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->push(a.value() * b.value(), "matmul", [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ia, g * t.value(ib).transpose());
    t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require<Scalar>(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), "add", [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

/// Adds a 1 x n row to every row of `a`; the row gradient is the column sum.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& row) {
  detail::require<Scalar>(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  const std::size_t ia = a.id, ir = row.id;
  Mat<Scalar> out = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(out), "add_row", [ia, ir](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ia, g);
    t.accumulate(ir, g.colwise().sum());
  });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require<Scalar>(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  const std::size_t ia = a.id, ib = b.id;
  Mat<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), "mul", [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  const std::size_t ia = a.id;
  return a.tape->push(a.value() * s, "scale",
                      [ia, s](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(ia, g * s); });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  const std::size_t ia = a.id;
  Mat<Scalar> out = a.value().transpose();
  return a.tape->push(std::move(out), "transpose", [ia](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ia, g.transpose());
  });
}

/// Row-major reinterpretation of the data with a new shape.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Eigen::Index rows, Eigen::Index cols) {
  detail::require<Scalar>(rows * cols == a.rows() * a.cols(), "reshape: size mismatch");
  const std::size_t ia = a.id;
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  Mat<Scalar> out = Eigen::Map<const Mat<Scalar>>(a.value().data(), rows, cols);
  return a.tape->push(std::move(out), "reshape", [ia, r0, c0](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ia, Eigen::Map<const Mat<Scalar>>(g.data(), r0, c0));
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  detail::require<Scalar>(!parts.empty(), "concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::require<Scalar>(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id, p.rows());
    at += p.rows();
  }
  return parts.front().tape->push(std::move(out), "concat_rows",
                                  [spans](Tape<Scalar>& t, const Mat<Scalar>& g) {
                                    Eigen::Index off = 0;
                                    for (const auto& [id, n] : spans) {
                                      t.accumulate(id, g.middleRows(off, n));
                                      off += n;
                                    }
                                  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  detail::require<Scalar>(!parts.empty(), "concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::require<Scalar>(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id, p.cols());
    at += p.cols();
  }
  return parts.front().tape->push(std::move(out), "concat_cols",
                                  [spans](Tape<Scalar>& t, const Mat<Scalar>& g) {
                                    Eigen::Index off = 0;
                                    for (const auto& [id, n] : spans) {
                                      t.accumulate(id, g.middleCols(off, n));
                                      off += n;
                                    }
                                  });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Eigen::Index start, Eigen::Index n) {
  detail::require<Scalar>(start >= 0 && n > 0 && start + n <= a.cols(), "slice_cols: out of range");
  const std::size_t ia = a.id;
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Mat<Scalar> out = a.value().middleCols(start, n);
  return a.tape->push(std::move(out), "slice_cols",
                      [ia, rows, cols, start, n](Tape<Scalar>& t, const Mat<Scalar>& g) {
                        Mat<Scalar> full = Mat<Scalar>::Zero(rows, cols);
                        full.middleCols(start, n) = g;
                        t.accumulate(ia, full);
                      });
}

/// Embedding lookup: output row i is table row indices[i]; rows scatter-add back.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& table, const std::vector<std::size_t>& indices) {
  detail::require<Scalar>(!indices.empty(), "gather_rows: no indices");
  Mat<Scalar> out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    detail::require<Scalar>(indices[i] < static_cast<std::size_t>(table.rows()),
                            "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(static_cast<Eigen::Index>(indices[i]));
  }
  const std::size_t it = table.id;
  const Eigen::Index rows = table.rows(), cols = table.cols();
  return table.tape->push(std::move(out), "gather_rows",
                          [it, rows, cols, indices](Tape<Scalar>& t, const Mat<Scalar>& g) {
                            Mat<Scalar> full = Mat<Scalar>::Zero(rows, cols);
                            for (std::size_t i = 0; i < indices.size(); ++i) {
                              full.row(static_cast<Eigen::Index>(indices[i])) +=
                                  g.row(static_cast<Eigen::Index>(i));
                            }
                            t.accumulate(it, full);
                          });
}

/// Exact (erf) gelu; d/dx = Φ(x) + x φ(x).
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
  const std::size_t ia = a.id;
  return a.tape->push(gelu(a.value()), "gelu", [ia](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const Mat<Scalar> d = t.value(ia).unaryExpr([](Scalar x) {
      using std::erf;
      using std::exp;
      const Scalar cdf = Scalar(0.5) * (Scalar(1) + erf(x / std::sqrt(Scalar(2))));
      const Scalar pdf = exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * Scalar(std::numbers::pi));
      return cdf + x * pdf;
    });
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

/// Softmax along `axis` (1: within each row, 0: within each column).
/// Backward: dx = y ⊙ (dy − Σ(dy ⊙ y)) along the same axis.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& a, int axis = 1) {
  detail::require<Scalar>(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  detail::require<Scalar>(a.cols() > 0 && a.rows() > 0, "softmax: empty axis");
  const std::size_t ia = a.id;
  Mat<Scalar> y = axis == 1 ? softmax_rows(a.value()) : Mat<Scalar>(softmax_rows(a.value().transpose()).transpose());
  Tape<Scalar>* tape = a.tape;
  const std::size_t iy = tape->size();
  return tape->push(std::move(y), "softmax", [ia, iy, axis](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const Mat<Scalar>& y = t.value(iy);
    const Mat<Scalar> gy = g.cwiseProduct(y);
    Mat<Scalar> dx;
    if (axis == 1) {
      dx = gy - (y.array().colwise() * gy.rowwise().sum().array()).matrix();
    } else {
      dx = gy - (y.array().rowwise() * gy.colwise().sum().array()).matrix();
    }
    t.accumulate(ia, dx);
  });
}

/// Layer norm over the last axis, gain and bias 1 x cols.
/// Backward: dx = (dx̂ − mean(dx̂) − x̂ mean(dx̂ ⊙ x̂)) / σ with dx̂ = dy ⊙ gain.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                       Scalar eps = Scalar(1e-5)) {
  detail::require<Scalar>(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 &&
                              bias.cols() == x.cols(),
                          "layer_norm: gain/bias shape mismatch");
  detail::require<Scalar>(eps > Scalar(0), "layer_norm: eps must be positive");
  const Eigen::Index rows = x.rows();
  Mat<Scalar> xhat(rows, x.cols());
  Mat<Scalar> inv_sigma(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Scalar mean = x.value().row(r).mean();
    const auto centered = (x.value().row(r).array() - mean).eval();
    using std::sqrt;
    inv_sigma(r, 0) = Scalar(1) / sqrt(centered.square().mean() + eps);
    xhat.row(r) = (centered * inv_sigma(r, 0)).matrix();
  }
  Mat<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->push(std::move(out), "layer_norm",
                      [ix, ig, ib, xhat, inv_sigma](Tape<Scalar>& t, const Mat<Scalar>& g) {
                        const auto& gain_row = t.value(ig).row(0);
                        t.accumulate(ib, g.colwise().sum());
                        t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                        const Mat<Scalar> dxhat = (g.array().rowwise() * gain_row.array()).matrix();
                        Mat<Scalar> dx(dxhat.rows(), dxhat.cols());
                        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                          const Scalar m1 = dxhat.row(r).mean();
                          const Scalar m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                          dx.row(r) = ((dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) *
                                       inv_sigma(r, 0))
                                          .matrix();
                        }
                        t.accumulate(ix, dx);
                      });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  const std::size_t ia = a.id;
  Tape<Scalar>* tape = a.tape;
  const std::size_t iy = tape->size();
  return tape->push(sigmoid(a.value()), "sigmoid", [ia, iy](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const Mat<Scalar>& y = t.value(iy);
    t.accumulate(ia, g.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix())));
  });
}

/// Column means: 1 x cols.
template <typename Scalar>
Var<Scalar> mean_rows(const Var<Scalar>& a) {
  const std::size_t ia = a.id;
  const Eigen::Index rows = a.rows();
  Mat<Scalar> out = a.value().colwise().mean();
  return a.tape->push(std::move(out), "mean_rows", [ia, rows](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ia, g.replicate(rows, 1) / Scalar(rows));
  });
}

template <typename Scalar>
Var<Scalar> sum_all(const Var<Scalar>& a) {
  const std::size_t ia = a.id;
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), "sum_all", [ia, rows, cols](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ia, Mat<Scalar>::Constant(rows, cols, g(0, 0)));
  });
}

enum class BceReduction { sum, mean_per_question };

inline constexpr double kBceClamp = 1e-7;

/// L = −Σ [z log ẑ + (1−z) log(1−ẑ)] over rows (questions) and columns (answer
/// slots), ẑ clamped to [1e-7, 1−1e-7]. Target entries must be 0 or 1.
template <typename Scalar>
Var<Scalar> bce(const Var<Scalar>& pred, const Mat<Scalar>& target,
                BceReduction reduction = BceReduction::sum) {
  detail::require<Scalar>(pred.rows() == target.rows() && pred.cols() == target.cols(),
                          "bce: shape mismatch");
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const Scalar z = target.data()[i];
    if (z != Scalar(0) && z != Scalar(1)) throw std::invalid_argument("bce: target outside {0,1}");
  }
  const Scalar lo = Scalar(kBceClamp), hi = Scalar(1) - Scalar(kBceClamp);
  const Scalar norm = reduction == BceReduction::sum ? Scalar(1) : Scalar(1) / Scalar(pred.rows());
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    using std::log;
    const Scalar p = std::clamp(pred.value().data()[i], lo, hi);
    const Scalar z = target.data()[i];
    loss -= z * log(p) + (Scalar(1) - z) * log(Scalar(1) - p);
  }
  Mat<Scalar> out(1, 1);
  out(0, 0) = loss * norm;
  const std::size_t ip = pred.id;
  return pred.tape->push(std::move(out), "bce",
                         [ip, target, lo, hi, norm](Tape<Scalar>& t, const Mat<Scalar>& g) {
                           const Mat<Scalar>& p = t.value(ip);
                           Mat<Scalar> d(p.rows(), p.cols());
                           for (Eigen::Index i = 0; i < p.size(); ++i) {
                             const Scalar v = p.data()[i];
                             const Scalar z = target.data()[i];
                             d.data()[i] = (v < lo || v > hi)
                                               ? Scalar(0)
                                               : (v - z) / (v * (Scalar(1) - v));
                           }
                           t.accumulate(ip, d * (g(0, 0) * norm));
                         });
}

// ---------------------------------------------------------------------------
// Parameters

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;
};

/// Named parameters in registration order.
class ParamStore {
 public:
  /// Normal(0, sigma) entries drawn from `rng`, or a constant fill when sigma is 0.
  Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, SplitMix64& rng,
                 double sigma, double fill = 0.0);
  Parameter& add(const std::string& name, Tensor value);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Registers every parameter of the store as a tape leaf.
class Binding {
 public:
  Binding(Tape<double>& tape, ParamStore& store);
  Var<double> operator[](const std::string& name) const;
  /// Copies tape gradients into Parameter::grad (zero for unreached parameters).
  void collect_grads() const;

 private:
  Tape<double>* tape_;
  ParamStore* store_;
  std::map<std::string, std::size_t> ids_;
};

// ---------------------------------------------------------------------------
// Gradient checking

/// Central differences (f(x+εe_i) − f(x−εe_i)) / 2ε. Throws std::domain_error
/// when f is not finite at a probe point.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps = 1e-5);

/// |a−b| / max(1, |a|, |b|), maximized over entries.
double max_relative_error(const Tensor& a, const Tensor& b);

/// One entry of the primitive registry: draws random inputs, applies the
/// primitive and names its backward rule.
struct PrimitiveCase {
  std::string name;
  std::string backward_rule;
  std::function<std::vector<Tensor>(SplitMix64&)> make_inputs;
  std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)> apply;
};

const std::vector<PrimitiveCase>& primitive_registry();

/// Max relative error over every input of `c` for `trials` random shapes, using
/// the scalar loss Σ(out ⊙ R) with a fixed random R.
double check_primitive(const PrimitiveCase& c, SplitMix64& rng, std::size_t trials = 20,
                       double eps = 1e-5);

// ---------------------------------------------------------------------------
// Checkpoints

/// manifest.json (names, shapes, seed) plus one little-endian f64 blob per parameter.
void save_checkpoint(const ParamStore& store, std::uint64_t seed, const std::filesystem::path& dir);
ParamStore load_checkpoint(const std::filesystem::path& dir, std::uint64_t* seed = nullptr);

}  // namespace viclevr::tensor
