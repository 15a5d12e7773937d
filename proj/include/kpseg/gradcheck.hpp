#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kpseg/matrix.hpp"

namespace kpseg {

// One buffer the checker perturbs: the live data an `eval` call reads, and
// the analytic gradient computed for it.
struct GradCheckTarget {
  std::string name;
  double* data;
  const double* analytic_grad;
  size_t size;
};

inline GradCheckTarget grad_target(const std::string& name, Mat& value, const Mat& grad) {
  return {name, value.data(), grad.data(), static_cast<size_t>(value.size())};
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_target;
  size_t worst_index = 0;
};

// Central-difference check: perturbs every element of every target by
// +/- eps, re-evaluates the scalar, and compares (f+ - f-) / (2 eps) against
// the analytic gradient. Relative error uses max(1, |fd|, |analytic|) as the
// denominator. Buffers are restored after each probe.
inline GradCheckReport finite_diff_check(const std::function<double()>& eval,
                                         const std::vector<GradCheckTarget>& targets,
                                         double eps = 1e-6) {
  GradCheckReport report;
  for (const GradCheckTarget& t : targets) {
    for (size_t i = 0; i < t.size; ++i) {
      double saved = t.data[i];
      t.data[i] = saved + eps;
      double f_plus = eval();
      t.data[i] = saved - eps;
      double f_minus = eval();
      t.data[i] = saved;
      double fd = (f_plus - f_minus) / (2.0 * eps);
      double an = t.analytic_grad[i];
      double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_target = t.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace kpseg
