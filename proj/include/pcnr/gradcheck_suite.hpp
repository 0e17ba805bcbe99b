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

// Finite-difference checks over every differentiable operation, shared by
// the `gradcheck` command and the test suites.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pcnr {

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kCompositeTolerance = 1e-4;

struct GradcheckCase {
  std::string name;
  bool composite = false;
  double tolerance = kPrimitiveTolerance;
  std::size_t instances = 0;
  double max_error = 0.0;
  bool passed = true;
  std::string detail;  // first failure, if any
};

/// Runs every case over `instances` seeded random inputs.
std::vector<GradcheckCase> run_gradcheck_suite(std::size_t instances = 10, std::uint64_t seed = 0);

}  // namespace pcnr
