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

#include "pcnr/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace pcnr {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  weight = Tensor::from_values({in, out}, std::move(w), true);
  bias = Tensor::zeros({out}, true);
}

Mlp::Mlp(const std::vector<std::size_t>& widths, Activation activation, Rng& rng, double softplus_beta)
    : activation_(activation), beta_(softplus_beta) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least an input and an output width");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers_.emplace_back(widths[i], widths[i + 1], rng);
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 == layers_.size()) break;
    switch (activation_) {
      case Activation::kRelu: h = relu(h); break;
      case Activation::kSoftplus: h = softplus(h, beta_); break;
      case Activation::kTanh: h = tanh(h); break;
    }
  }
  return h;
}

void Mlp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.push_back({prefix + ".l" + std::to_string(i) + ".weight", layers_[i].weight});
    out.push_back({prefix + ".l" + std::to_string(i) + ".bias", layers_[i].bias});
  }
}

}  // namespace pcnr
