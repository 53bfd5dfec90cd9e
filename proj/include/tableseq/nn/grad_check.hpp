// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tableseq/nn/tape.hpp"

namespace tableseq::nn {

struct GradCheckEntry {
  std::string name;
  double rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol = 0.0;

  double worst() const {
    double w = 0;
    for (const auto& e : entries) w = std::max(w, e.rel_error);
    return w;
  }
  bool passed() const { return worst() <= tol; }
};

/// Builds a scalar from tape inputs that mirror `inputs` one-to-one.
using CheckFn = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

/// Central differences against reverse mode. Relative error per input is
/// ||g_auto - g_fd|| / max(||g_auto||, ||g_fd||, 1e-12).
inline GradCheckReport grad_check(const CheckFn& f, const std::vector<Field<double>>& inputs,
                                  const std::vector<std::string>& names, double h = 1e-5, double tol = 1e-5) {
  auto eval = [&](const std::vector<Field<double>>& xs) {
    Tape<double> t;
    std::vector<Var> vs;
    for (const auto& x : xs) vs.push_back(t.constant(x));
    return t.value(f(t, vs))(0, 0);
  };

  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.input(x));
  const Var out = f(tape, vars);
  tape.backward(out);

  GradCheckReport report;
  report.tol = tol;
  std::vector<Field<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Field<double> analytic = tape.gradient(vars[k]);
    Field<double> numeric(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k].data()[i];
      probe[k].data()[i] = x0 + h;
      const double fp = eval(probe);
      probe[k].data()[i] = x0 - h;
      const double fm = eval(probe);
      probe[k].data()[i] = x0;
      numeric.data()[i] = (fp - fm) / (2 * h);
    }
    GradCheckEntry e;
    e.name = k < names.size() ? names[k] : "input" + std::to_string(k);
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
    e.rel_error = (analytic - numeric).norm() / scale;
    e.max_abs_error = (analytic - numeric).cwiseAbs().maxCoeff();
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace tableseq::nn
