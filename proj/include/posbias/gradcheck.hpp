#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace posbias::nn {

/// Central-difference gradient estimate of a scalar function, one coordinate
/// at a time: (f(x + h e_i) - f(x - h e_i)) / 2h. Independent of the tape;
/// used as the verification oracle for reverse-mode gradients.
inline std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be > 0");
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// Relative error with an absolute floor of 1, so near-zero pairs compare on
/// absolute terms: |a-b| / max(1, |a|, |b|).
inline double grad_rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_grad_rel_error(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("max_grad_rel_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, grad_rel_error(a[i], b[i]));
  return worst;
}

}  // namespace posbias::nn
