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

// Central finite-difference verification of recorded gradients.
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pcnr/tensor.hpp"

namespace pcnr {

struct GradcheckResult {
  /// max over coordinates of |analytic - fd| / max(1, |analytic|, |fd|)
  double max_rel_error = 0.0;
  /// Flat coordinate (across all checked tensors, in order) of the worst error,
  /// or of the first non-finite value.
  std::size_t worst_index = 0;
  bool finite = true;
  std::size_t coordinates = 0;
  std::string message;

  bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

/// Checks d f / d x for a function of one tensor. `point` is copied; f must
/// return a scalar.
GradcheckResult gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                          double epsilon = 1e-5);

/// Checks the gradient of a closure with respect to leaf tensors it reads.
/// The leaves are perturbed in place and restored before returning.
/// Functions with kinks (relu, abs, max) must be evaluated away from them:
/// a central difference straddling a kink does not estimate either one-sided
/// derivative.
GradcheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                          double epsilon = 1e-5);

}  // namespace pcnr
