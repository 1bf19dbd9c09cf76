#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dgrec/autodiff.hpp"
#include "dgrec/tensor.hpp"

namespace dgrec {

template <class Real>
struct AdamConfig {
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);
  Real base_lr = Real(0.002);
  Real lr_decay = Real(0.98);
  std::int64_t decay_interval = 400;
};

// Adam with bias correction and a stepped geometric learning-rate decay:
// lr(step) = base_lr * lr_decay^floor(step / decay_interval).
template <class Real>
class Adam {
 public:
  explicit Adam(AdamConfig<Real> cfg = {}) : cfg_(cfg) {}

  const AdamConfig<Real>& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  Real effective_lr() const { return lr_at(step_); }

  Real lr_at(std::int64_t step) const {
    return cfg_.base_lr *
           static_cast<Real>(std::pow(static_cast<double>(cfg_.lr_decay),
                                      static_cast<double>(
                                          step / cfg_.decay_interval)));
  }

  void step(const std::vector<Param<Real>*>& params) {
    Real lr = effective_lr();
    double t = static_cast<double>(step_ + 1);
    Real c1 = Real(1) - static_cast<Real>(
                            std::pow(static_cast<double>(cfg_.beta1), t));
    Real c2 = Real(1) - static_cast<Real>(
                            std::pow(static_cast<double>(cfg_.beta2), t));
    for (Param<Real>* p : params) {
      Moments& mo = moments(*p);
      Real* m = mo.m.data();
      Real* v = mo.v.data();
      Real* w = p->value.data();
      const Real* g = p->grad.data();
      std::size_t n = p->value.size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg_.beta1 * m[i] + (Real(1) - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (Real(1) - cfg_.beta2) * g[i] * g[i];
        Real mhat = m[i] / c1;
        Real vhat = v[i] / c2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
    ++step_;
  }

  // Serialization hooks (see checkpoint.hpp).
  struct Moments {
    Tensor<Real> m, v;
  };
  const std::unordered_map<std::string, Moments>& state() const {
    return moments_;
  }
  void restore(std::unordered_map<std::string, Moments> st,
               std::int64_t step) {
    moments_ = std::move(st);
    step_ = step;
  }

 private:
  Moments& moments(const Param<Real>& p) {
    auto it = moments_.find(p.name);
    if (it == moments_.end()) {
      it = moments_
               .emplace(p.name, Moments{Tensor<Real>(p.value.shape()),
                                        Tensor<Real>(p.value.shape())})
               .first;
    }
    if (!it->second.m.same_shape(p.value)) {
      throw ShapeError("adam: moment shape " + shape_str(it->second.m.shape()) +
                       " does not match parameter '" + p.name + "' " +
                       shape_str(p.value.shape()));
    }
    return it->second;
  }

  AdamConfig<Real> cfg_;
  std::int64_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

// Glorot-style uniform init for weight matrices: U(-a, a) with
// a = sqrt(6 / (fan_in + fan_out)).
template <class Real>
void init_glorot(Tensor<Real>& w, CounterRng& rng) {
  double fan_in = static_cast<double>(w.cols());
  double fan_out = static_cast<double>(w.rows());
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<Real>(rng.next_range(-a, a));
  }
}

template <class Real>
void init_uniform(Tensor<Real>& w, CounterRng& rng, double a) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<Real>(rng.next_range(-a, a));
  }
}

}  // namespace dgrec
