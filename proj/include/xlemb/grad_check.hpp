#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "xlemb/autograd.hpp"
#include "xlemb/tensor.hpp"

namespace xlemb {

struct GradCheckParam {
  std::string name;
  double max_rel_err = 0.0;   // worst relative error among non-tiny entries
  double max_abs_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckParam> params;
  double max_rel_err = 0.0;
  bool pass = true;

  std::string summary() const {
    std::string s;
    for (const auto& p : params) {
      s += p.name + ": " + (p.pass ? "ok" : "FAIL") +
           " max_rel_err=" + std::to_string(p.max_rel_err);
      if (!p.pass) {
        s += " worst[" + std::to_string(p.worst_index) +
             "] analytic=" + std::to_string(p.analytic_at_worst) +
             " numeric=" + std::to_string(p.numeric_at_worst);
      }
      s += "\n";
    }
    return s;
  }
};

// Central-difference verification of analytic gradients at 64-bit precision.
// f must rebuild the forward pass from the current parameter values on every
// call and return a scalar loss; it is run once under a tape for analytic
// gradients and tape-free for each probe. Entries pass on absolute error
// <= 1e-8 or relative error <= rel_tol.
inline GradCheckReport grad_check(
    const std::function<Tensor<double>()>& f,
    const std::vector<std::pair<std::string, Tensor<double>>>& params,
    double step, double rel_tol) {
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Tensor<double> loss = f();
    if (!std::isfinite(loss.item())) {
      throw NumericError("grad_check: loss is not finite at the base point");
    }
    tape.backward(loss);
    for (const auto& [name, p] : params) {
      if (!p.has_grad()) {
        throw NumericError("grad_check: parameter '" + name +
                           "' received no gradient");
      }
      analytic.push_back(p.grad());
    }
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& name = params[pi].first;
    Tensor<double> p = params[pi].second;
    GradCheckParam entry;
    entry.name = name;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.value()[i];
      p.mutable_value()[i] = saved + step;
      const double up = f().item();
      p.mutable_value()[i] = saved - step;
      const double down = f().item();
      p.mutable_value()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss probing '" + name +
                           "' at index " + std::to_string(i));
      }
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[pi][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max(std::abs(a), std::abs(numeric));
      const double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
      const bool ok = abs_err <= 1e-8 || rel_err <= rel_tol;
      const double effective = abs_err <= 1e-8 ? 0.0 : rel_err;
      if (effective >= entry.max_rel_err) {
        entry.max_rel_err = effective;
        entry.worst_index = i;
        entry.analytic_at_worst = a;
        entry.numeric_at_worst = numeric;
      }
      entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
      if (!ok) entry.pass = false;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace xlemb
