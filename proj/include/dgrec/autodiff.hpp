#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dgrec/rng.hpp"
#include "dgrec/tensor.hpp"

namespace dgrec {

struct AutodiffError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named learnable array. Gradients accumulate here across a whole minibatch;
// the optimizer is the only writer of `value` between batches.
template <class Real>
struct Param {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;

  Param() = default;
  Param(std::string n, Tensor<Real> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(Real(0)); }
};

template <class Real>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives
// and has not been cleared.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t idx = 0;

  bool valid() const { return tape != nullptr; }
  const Tensor<Real>& value() const;
  const Tensor<Real>& grad() const;
};

// Append-only record of one forward pass. Nodes are pushed in evaluation
// order, so the list is topologically sorted and backward() simply walks it
// in reverse. A tape supports exactly one backward per forward; clear() and
// rebuild for the next pass.
template <class Real>
class Tape {
 public:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::function<void(Tape&)> back;  // empty for constants
  };

  Tape() {
#ifndef NDEBUG
    check_finite_ = true;
#endif
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  Node& node(std::size_t i) { return nodes_[i]; }

  void set_check_finite(bool b) { check_finite_ = b; }

  void clear() {
    nodes_.clear();
    backward_run_ = false;
  }

  Var<Real> constant(Tensor<Real> v) { return push(std::move(v), {}); }

  Var<Real> zeros(std::size_t n) { return constant(Tensor<Real>::vec(n)); }

  // Leaf over a full parameter tensor; gradient flows into p.grad.
  Var<Real> use(Param<Real>& p) {
    Param<Real>* pp = &p;
    Var<Real> out = push(p.value, {});
    std::size_t oi = out.idx;
    nodes_[oi].back = [oi, pp](Tape& t) {
      if (!pp->grad.same_shape(t.nodes_[oi].grad)) {
        throw ShapeError("use: parameter '" + pp->name + "' changed shape");
      }
      pp->grad.add_in_place(t.nodes_[oi].grad);
    };
    return out;
  }

  void backward(Var<Real> loss) {
    if (loss.tape != this) throw AutodiffError("backward: foreign node");
    if (loss.value().size() != 1) {
      throw AutodiffError("backward: loss must be scalar, got shape " +
                          shape_str(loss.value().shape()));
    }
    if (backward_run_) {
      throw AutodiffError("backward: tape already differentiated; clear() it");
    }
    backward_run_ = true;
    nodes_[loss.idx].grad[0] = Real(1);
    for (std::size_t i = loss.idx + 1; i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(*this);
    }
  }

  Var<Real> push(Tensor<Real> value, std::function<void(Tape&)> back) {
    if (check_finite_ && !value.all_finite()) {
      throw AutodiffError("non-finite value produced at node " +
                          std::to_string(nodes_.size()));
    }
    Tensor<Real> grad(value.shape());
    nodes_.push_back(Node{std::move(value), std::move(grad), std::move(back)});
    return Var<Real>{this, nodes_.size() - 1};
  }

 private:
  std::vector<Node> nodes_;
  bool backward_run_ = false;
  bool check_finite_ = false;
};

template <class Real>
const Tensor<Real>& Var<Real>::value() const {
  return tape->node(idx).value;
}
template <class Real>
const Tensor<Real>& Var<Real>::grad() const {
  return tape->node(idx).grad;
}

namespace detail {

template <class Real>
Tape<Real>& same_tape(Var<Real> a, Var<Real> b, const char* op) {
  if (a.tape != b.tape) {
    throw AutodiffError(std::string(op) + ": operands on different tapes");
  }
  return *a.tape;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward operators. Each returns a new node and registers its reverse rule.
// ---------------------------------------------------------------------------

// A (r x k) times B, where B is (k x c) or a length-k vector.
template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = detail::same_tape(a, b, "matmul");
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.rank() != 2 || (bv.rank() != 2 && bv.rank() != 1) ||
      av.shape()[1] != bv.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) +
                     " and " + shape_str(bv.shape()));
  }
  std::size_t r = av.shape()[0], k = av.shape()[1];
  std::size_t c = bv.rank() == 2 ? bv.shape()[1] : 1;
  Tensor<Real> out(bv.rank() == 2 ? Shape{r, c} : Shape{r});
  const Real* ap = av.data();
  const Real* bp = bv.data();
  Real* op = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      Real x = ap[i * k + kk];
      if (x == Real(0)) continue;
      const Real* brow = bp + kk * c;
      Real* orow = op + i * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += x * brow[j];
    }
  }
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx, bi = b.idx;
  t.node(oi).back = [oi, ai, bi, r, k, c](Tape<Real>& tp) {
    const Real* g = tp.node(oi).grad.data();
    const Real* ap2 = tp.node(ai).value.data();
    const Real* bp2 = tp.node(bi).value.data();
    Real* da = tp.node(ai).grad.data();
    Real* db = tp.node(bi).grad.data();
    // dA += g . B^T ; dB += A^T . g
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        Real s = 0;
        const Real* grow = g + i * c;
        const Real* brow = bp2 + kk * c;
        for (std::size_t j = 0; j < c; ++j) s += grow[j] * brow[j];
        da[i * k + kk] += s;
      }
    }
    for (std::size_t kk = 0; kk < k; ++kk) {
      Real* dbrow = db + kk * c;
      for (std::size_t i = 0; i < r; ++i) {
        Real x = ap2[i * k + kk];
        if (x == Real(0)) continue;
        const Real* grow = g + i * c;
        for (std::size_t j = 0; j < c; ++j) dbrow[j] += x * grow[j];
      }
    }
  };
  return outv;
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = detail::same_tape(a, b, "add");
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("add: shape mismatch " + shape_str(a.value().shape()) +
                     " vs " + shape_str(b.value().shape()));
  }
  Tensor<Real> out = a.value();
  out.add_in_place(b.value());
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx, bi = b.idx;
  t.node(oi).back = [oi, ai, bi](Tape<Real>& tp) {
    tp.node(ai).grad.add_in_place(tp.node(oi).grad);
    tp.node(bi).grad.add_in_place(tp.node(oi).grad);
  };
  return outv;
}

// Sum of same-shaped terms in one node (used for batch loss accumulation).
template <class Real>
Var<Real> add_n(const std::vector<Var<Real>>& xs) {
  if (xs.empty()) throw AutodiffError("add_n: empty operand list");
  Tape<Real>& t = *xs[0].tape;
  Tensor<Real> out = xs[0].value();
  std::vector<std::size_t> idxs{xs[0].idx};
  for (std::size_t i = 1; i < xs.size(); ++i) {
    detail::same_tape(xs[0], xs[i], "add_n");
    if (!out.same_shape(xs[i].value())) {
      throw ShapeError("add_n: shape mismatch at operand " + std::to_string(i));
    }
    out.add_in_place(xs[i].value());
    idxs.push_back(xs[i].idx);
  }
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx;
  t.node(oi).back = [oi, idxs](Tape<Real>& tp) {
    for (std::size_t i : idxs) tp.node(i).grad.add_in_place(tp.node(oi).grad);
  };
  return outv;
}

template <class Real>
Var<Real> neg(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -out[i];
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < g.size(); ++i) da[i] -= g[i];
  };
  return outv;
}

template <class Real>
Var<Real> scale(Var<Real> a, Real c) {
  Tape<Real>& t = *a.tape;
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai, c](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
  };
  return outv;
}

// Concatenation of vectors.
template <class Real>
Var<Real> concat(const std::vector<Var<Real>>& xs) {
  if (xs.empty()) throw AutodiffError("concat: empty operand list");
  Tape<Real>& t = *xs[0].tape;
  std::size_t n = 0;
  std::vector<std::size_t> idxs, sizes;
  for (const auto& x : xs) {
    detail::same_tape(xs[0], x, "concat");
    if (x.value().rank() != 1) {
      throw ShapeError("concat: expected vectors, got " +
                       shape_str(x.value().shape()));
    }
    idxs.push_back(x.idx);
    sizes.push_back(x.value().size());
    n += x.value().size();
  }
  Tensor<Real> out = Tensor<Real>::vec(n);
  std::size_t off = 0;
  for (const auto& x : xs) {
    const Tensor<Real>& v = x.value();
    for (std::size_t i = 0; i < v.size(); ++i) out[off + i] = v[i];
    off += v.size();
  }
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx;
  t.node(oi).back = [oi, idxs, sizes](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    std::size_t off2 = 0;
    for (std::size_t k = 0; k < idxs.size(); ++k) {
      Tensor<Real>& d = tp.node(idxs[k]).grad;
      for (std::size_t i = 0; i < sizes[k]; ++i) d[i] += g[off2 + i];
      off2 += sizes[k];
    }
  };
  return outv;
}

template <class Real>
Var<Real> concat(Var<Real> a, Var<Real> b) {
  return concat(std::vector<Var<Real>>{a, b});
}

template <class Real>
Var<Real> slice_row(Var<Real> a, std::size_t row) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& av = a.value();
  if (av.rank() != 2) {
    throw ShapeError("slice_row: expected matrix, got " +
                     shape_str(av.shape()));
  }
  if (row >= av.shape()[0]) {
    throw AutodiffError("slice_row: row " + std::to_string(row) +
                        " out of range for " + shape_str(av.shape()));
  }
  std::size_t c = av.shape()[1];
  Tensor<Real> out = Tensor<Real>::vec(c);
  for (std::size_t j = 0; j < c; ++j) out[j] = av.at(row, j);
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai, row, c](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t j = 0; j < c; ++j) da.at(row, j) += g[j];
  };
  return outv;
}

template <class Real>
Var<Real> sigmoid(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = Real(1) / (Real(1) + std::exp(-out[i]));
  }
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    const Tensor<Real>& y = tp.node(oi).value;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * y[i] * (Real(1) - y[i]);
    }
  };
  return outv;
}

template <class Real>
Var<Real> tanh(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    const Tensor<Real>& y = tp.node(oi).value;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * (Real(1) - y[i] * y[i]);
    }
  };
  return outv;
}

// Subgradient 0 at exactly 0.
template <class Real>
Var<Real> relu(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = out[i] > Real(0) ? out[i] : Real(0);
  }
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    const Tensor<Real>& x = tp.node(ai).value;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > Real(0)) da[i] += g[i];
    }
  };
  return outv;
}

template <class Real>
Var<Real> elementwise_mul(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = detail::same_tape(a, b, "elementwise_mul");
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("elementwise_mul: shape mismatch " +
                     shape_str(a.value().shape()) + " vs " +
                     shape_str(b.value().shape()));
  }
  Tensor<Real> out = a.value();
  const Tensor<Real>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx, bi = b.idx;
  t.node(oi).back = [oi, ai, bi](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    const Tensor<Real>& av = tp.node(ai).value;
    const Tensor<Real>& bv2 = tp.node(bi).value;
    Tensor<Real>& da = tp.node(ai).grad;
    Tensor<Real>& db = tp.node(bi).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * bv2[i];
      db[i] += g[i] * av[i];
    }
  };
  return outv;
}

// Row-wise softmax with max subtraction. Vectors are treated as one row.
template <class Real>
Var<Real> softmax_rows(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& av = a.value();
  std::size_t r = av.rows(), c = av.cols();
  if (c == 0) throw ShapeError("softmax_rows: empty input");
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const Real* x = av.data() + i * c;
    Real* y = out.data() + i * c;
    Real m = x[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
    Real z = 0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - m);
      z += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai, r, c](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    const Tensor<Real>& y = tp.node(oi).value;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < r; ++i) {
      const Real* grow = g.data() + i * c;
      const Real* yrow = y.data() + i * c;
      Real dotgy = 0;
      for (std::size_t j = 0; j < c; ++j) dotgy += grow[j] * yrow[j];
      Real* drow = da.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) {
        drow[j] += yrow[j] * (grow[j] - dotgy);
      }
    }
  };
  return outv;
}

template <class Real>
Var<Real> log(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    const Tensor<Real>& x = tp.node(ai).value;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / x[i];
  };
  return outv;
}

// Numerically stable log softmax over a vector.
template <class Real>
Var<Real> log_softmax(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& av = a.value();
  if (av.rank() != 1 || av.size() == 0) {
    throw ShapeError("log_softmax: expected non-empty vector, got " +
                     shape_str(av.shape()));
  }
  std::size_t n = av.size();
  Real m = av[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, av[i]);
  Real z = 0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(av[i] - m);
  Real lse = m + std::log(z);
  Tensor<Real> out = Tensor<Real>::vec(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - lse;
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai, n](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    const Tensor<Real>& y = tp.node(oi).value;
    Tensor<Real>& da = tp.node(ai).grad;
    Real gsum = 0;
    for (std::size_t i = 0; i < n; ++i) gsum += g[i];
    for (std::size_t i = 0; i < n; ++i) {
      da[i] += g[i] - std::exp(y[i]) * gsum;
    }
  };
  return outv;
}

template <class Real>
Var<Real> embedding_lookup(Tape<Real>& t, Param<Real>& table, std::size_t row) {
  if (table.value.rank() != 2) {
    throw ShapeError("embedding_lookup: '" + table.name +
                     "' is not a matrix: " + shape_str(table.value.shape()));
  }
  if (row >= table.value.shape()[0]) {
    throw AutodiffError("embedding_lookup: row " + std::to_string(row) +
                        " out of range for '" + table.name + "' " +
                        shape_str(table.value.shape()));
  }
  std::size_t c = table.value.shape()[1];
  Tensor<Real> out = Tensor<Real>::vec(c);
  for (std::size_t j = 0; j < c; ++j) out[j] = table.value.at(row, j);
  Param<Real>* tp_ = &table;
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx;
  t.node(oi).back = [oi, tp_, row, c](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    for (std::size_t j = 0; j < c; ++j) tp_->grad.at(row, j) += g[j];
  };
  return outv;
}

// Inverted dropout: retained entries are scaled by 1/(1-rate) during
// training; evaluation is the identity (returns the input node unchanged).
template <class Real>
Var<Real> dropout(Var<Real> a, Real rate, CounterRng& rng, bool train) {
  if (!train || rate <= Real(0)) return a;
  if (rate >= Real(1)) throw AutodiffError("dropout: rate must be < 1");
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& av = a.value();
  std::vector<Real> mask(av.size());
  Real keep_scale = Real(1) / (Real(1) - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.next_double() >= static_cast<double>(rate) ? keep_scale
                                                             : Real(0);
  }
  Tensor<Real> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai, mask](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * mask[i];
  };
  return outv;
}

// Sum_i weights[i] * vectors[i]; weights is a length-m vector node.
template <class Real>
Var<Real> weighted_sum(Var<Real> weights,
                       const std::vector<Var<Real>>& vectors) {
  Tape<Real>& t = *weights.tape;
  const Tensor<Real>& wv = weights.value();
  if (wv.rank() != 1 || wv.size() != vectors.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(vectors.size()) +
                     " vectors vs weights " + shape_str(wv.shape()));
  }
  if (vectors.empty()) throw AutodiffError("weighted_sum: no vectors");
  std::size_t d = vectors[0].value().size();
  std::vector<std::size_t> idxs;
  for (const auto& v : vectors) {
    detail::same_tape(weights, v, "weighted_sum");
    if (v.value().rank() != 1 || v.value().size() != d) {
      throw ShapeError("weighted_sum: vector shape mismatch " +
                       shape_str(v.value().shape()));
    }
    idxs.push_back(v.idx);
  }
  Tensor<Real> out = Tensor<Real>::vec(d);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const Tensor<Real>& v = vectors[i].value();
    Real w = wv[i];
    for (std::size_t j = 0; j < d; ++j) out[j] += w * v[j];
  }
  Var<Real> outv = t.push(std::move(out), {});
  std::size_t oi = outv.idx, wi = weights.idx;
  t.node(oi).back = [oi, wi, idxs, d](Tape<Real>& tp) {
    const Tensor<Real>& g = tp.node(oi).grad;
    const Tensor<Real>& w = tp.node(wi).value;
    Tensor<Real>& dw = tp.node(wi).grad;
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      const Tensor<Real>& v = tp.node(idxs[i]).value;
      Tensor<Real>& dv = tp.node(idxs[i]).grad;
      Real s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        s += g[j] * v[j];
        dv[j] += w[i] * g[j];
      }
      dw[i] += s;
    }
  };
  return outv;
}

template <class Real>
Var<Real> dot(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = detail::same_tape(a, b, "dot");
  if (a.value().rank() != 1 || !a.value().same_shape(b.value())) {
    throw ShapeError("dot: shape mismatch " + shape_str(a.value().shape()) +
                     " vs " + shape_str(b.value().shape()));
  }
  Real s = 0;
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  Var<Real> outv = t.push(Tensor<Real>::scalar(s), {});
  std::size_t oi = outv.idx, ai = a.idx, bi = b.idx;
  t.node(oi).back = [oi, ai, bi](Tape<Real>& tp) {
    Real g = tp.node(oi).grad[0];
    const Tensor<Real>& av2 = tp.node(ai).value;
    const Tensor<Real>& bv2 = tp.node(bi).value;
    Tensor<Real>& da = tp.node(ai).grad;
    Tensor<Real>& db = tp.node(bi).grad;
    for (std::size_t i = 0; i < av2.size(); ++i) {
      da[i] += g * bv2[i];
      db[i] += g * av2[i];
    }
  };
  return outv;
}

// Single element of a vector as a scalar node.
template <class Real>
Var<Real> pick(Var<Real> a, std::size_t i) {
  Tape<Real>& t = *a.tape;
  if (a.value().rank() != 1 || i >= a.value().size()) {
    throw AutodiffError("pick: index " + std::to_string(i) +
                        " out of range for " + shape_str(a.value().shape()));
  }
  Var<Real> outv = t.push(Tensor<Real>::scalar(a.value()[i]), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai, i](Tape<Real>& tp) {
    tp.node(ai).grad[i] += tp.node(oi).grad[0];
  };
  return outv;
}

template <class Real>
Var<Real> sum(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  Real s = 0;
  const Tensor<Real>& av = a.value();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
  Var<Real> outv = t.push(Tensor<Real>::scalar(s), {});
  std::size_t oi = outv.idx, ai = a.idx;
  t.node(oi).back = [oi, ai](Tape<Real>& tp) {
    Real g = tp.node(oi).grad[0];
    Tensor<Real>& da = tp.node(ai).grad;
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
  };
  return outv;
}

}  // namespace dgrec
