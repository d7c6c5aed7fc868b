// Copyright 2026 The lsttts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central finite-difference gradient checking. Meant to run with S = double;
// float does not have the headroom for eps = 1e-5.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lsttts/tensor.hpp"

namespace lsttts {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // (input index, flat coordinate) of points where the two one-sided
  // differences disagree, i.e. the function is locally non-differentiable.
  std::vector<std::pair<std::size_t, std::size_t>> excluded;

  bool ok(double tol = 1e-4) const { return max_rel_error < tol; }
};

// f rebuilds the forward pass from the current values of `inputs` and returns
// a scalar loss. Analytic grads come from one backward(); numeric grads from
// central differences per coordinate, with rel error denominator
// max(|analytic|, |numeric|, 1e-8).
template <typename S>
GradCheckReport grad_check(const std::function<TensorT<S>()>& f, std::vector<TensorT<S>> inputs,
                           S eps = S(1e-5)) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  auto loss = f();
  backward(loss);
  std::vector<std::vector<S>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs)
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<S>(t.size(), S(0)));

  const double f0 = double(loss.item());
  GradCheckReport report;
  autograd::NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& vals = inputs[ti].mutable_values();
    for (std::size_t ci = 0; ci < vals.size(); ++ci) {
      const S orig = vals[ci];
      vals[ci] = orig + eps;
      const double fp = double(f().item());
      vals[ci] = orig - eps;
      const double fm = double(f().item());
      vals[ci] = orig;
      const double numeric = (fp - fm) / (2.0 * double(eps));
      const double dplus = (fp - f0) / double(eps);
      const double dminus = (f0 - fm) / double(eps);
      // A kink shows up as disagreeing one-sided slopes; exclude, don't fail.
      const double disagree =
          std::abs(dplus - dminus) / std::max({std::abs(dplus), std::abs(dminus), 1.0});
      if (disagree > 1e-3) {
        report.excluded.emplace_back(ti, ci);
        continue;
      }
      const double a = double(analytic[ti][ci]);
      // Below this absolute difference the pair agrees to within the noise of
      // the central difference itself (cancellation is ~|f| * 1e-16 / eps, an
      // order of magnitude under the floor); structurally-zero gradients land
      // here instead of dividing FD noise by the 1e-8 denominator clamp.
      const double rel = std::abs(a - numeric) < 1e-9
                             ? 0.0
                             : std::abs(a - numeric) /
                                   std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace lsttts
