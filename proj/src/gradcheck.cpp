// Copyright 2026 The pcnr Authors
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

#include "pcnr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pcnr {

GradcheckResult gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                          double epsilon) {
  Tensor x = Tensor::from_values(point.shape(), std::vector<double>(point.values().begin(), point.values().end()),
                                 true);
  return gradcheck([&] { return f(x); }, {x}, epsilon);
}

GradcheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("gradcheck epsilon must be positive");
  GradcheckResult result;

  for (auto& leaf : leaves) leaf.zero_grad();
  Tensor root = f();
  if (root.numel() != 1) throw ShapeError("gradcheck function must return a scalar, got " + shape_str(root.shape()));
  if (!std::isfinite(root.item())) {
    result.finite = false;
    result.message = "non-finite function value at the base point";
    return result;
  }
  root.backward();

  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    const auto g = leaf.grad();
    analytic.emplace_back(g.begin(), g.end());
    analytic.back().resize(leaf.numel(), 0.0);
  }

  std::size_t flat = 0;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    auto values = leaves[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      const double saved = values[i];
      double plus = 0.0;
      double minus = 0.0;
      {
        NoGradGuard no_grad;
        values[i] = saved + epsilon;
        plus = f().item();
        values[i] = saved - epsilon;
        minus = f().item();
      }
      values[i] = saved;
      const double fd = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[t][i];
      ++result.coordinates;
      if (!std::isfinite(fd) || !std::isfinite(a)) {
        result.finite = false;
        result.worst_index = flat;
        result.message = "non-finite value at coordinate " + std::to_string(flat) + " of tensor " +
                         std::to_string(t) + (leaves[t].name().empty() ? "" : " (" + leaves[t].name() + ")");
        return result;
      }
      const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_index = flat;
      }
    }
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  return result;
}

}  // namespace pcnr
