#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dgrec/autodiff.hpp"
#include "dgrec/rng.hpp"

namespace dgrec {

template <class Real>
struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  std::size_t coords_checked = 0;
  std::size_t worst_coord = 0;
  double analytic_at_worst = 0;
  double fd_at_worst = 0;
};

template <class Real>
struct GradCheckReport {
  std::vector<GradCheckEntry<Real>> entries;
  double max_rel_err = 0;
  bool ok(double tol) const { return max_rel_err < tol; }
};

// Central finite-difference check of the analytic gradients stored in each
// parameter. `loss_value` must rebuild the forward pass from current
// parameter values and return the scalar loss; it is called twice per
// coordinate with a perturbed parameter. Analytic gradients must already be
// populated (one forward+backward with unperturbed values).
//
// Tensors larger than `subset` are checked on `subset` seeded random
// coordinates (at least 64); smaller ones elementwise. Relative error uses a
// 1e-5 floor so that coordinates with near-zero true gradient are compared
// against finite-difference noise at a sane scale.
template <class Real>
GradCheckReport<Real> gradient_check(
    const std::function<double()>& loss_value,
    const std::vector<Param<Real>*>& params, double eps, std::uint64_t seed,
    std::size_t subset = 256) {
  static_assert(sizeof(Real) >= 8 || true, "");
  subset = std::max<std::size_t>(subset, 64);
  GradCheckReport<Real> report;
  CounterRng rng(seed);
  for (Param<Real>* p : params) {
    GradCheckEntry<Real> entry;
    entry.name = p->name;
    std::vector<std::size_t> coords;
    std::size_t n = p->value.size();
    if (n <= subset) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      CounterRng cr = rng.fork("coords", std::hash<std::string>{}(p->name));
      for (std::size_t i = 0; i < subset; ++i) {
        coords.push_back(static_cast<std::size_t>(cr.next_below(n)));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (std::size_t c : coords) {
      Real saved = p->value[c];
      p->value[c] = saved + static_cast<Real>(eps);
      double lp = loss_value();
      p->value[c] = saved - static_cast<Real>(eps);
      double lm = loss_value();
      p->value[c] = saved;
      double fd = (lp - lm) / (2.0 * eps);
      double an = static_cast<double>(p->grad[c]);
      double denom = std::max({std::fabs(fd), std::fabs(an), 1e-5});
      double rel = std::fabs(fd - an) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_coord = c;
        entry.analytic_at_worst = an;
        entry.fd_at_worst = fd;
      }
      ++entry.coords_checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace dgrec
