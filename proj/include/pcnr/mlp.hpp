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

// Fully connected layers on top of the autodiff tensors.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pcnr/rng.hpp"
#include "pcnr/tensor.hpp"

namespace pcnr {

/// A trainable tensor with a stable name (checkpoint key).
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

enum class Activation { kRelu, kSoftplus, kTanh };

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  /// Uniform(-1/sqrt(in), 1/sqrt(in)) weights and zero bias.
  Linear(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor forward(const Tensor& x) const { return affine(x, weight, bias); }
};

class Mlp {
 public:
  Mlp() = default;
  /// widths = {in, hidden..., out}; the activation follows every layer but the last.
  Mlp(const std::vector<std::size_t>& widths, Activation activation, Rng& rng, double softplus_beta = 1.0);

  Tensor forward(const Tensor& x) const;
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;

 private:
  std::vector<Linear> layers_;
  Activation activation_ = Activation::kSoftplus;
  double beta_ = 1.0;
};

}  // namespace pcnr
