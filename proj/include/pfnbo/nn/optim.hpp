// Copyright 2026 The pfnbo Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pfnbo/nn/params.hpp"

namespace pfnbo::nn {

/// Cosine annealing from `base` to zero over `total_steps`, after an optional
/// linear warmup.
struct CosineSchedule {
  double base = 1e-3;
  long total_steps = 1;
  long warmup_steps = 0;

  double operator()(long step) const {
    if (warmup_steps > 0 && step < warmup_steps)
      return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const double span = static_cast<double>(std::max(total_steps - warmup_steps, 1L));
    const double t = std::clamp(static_cast<double>(step - warmup_steps) / span, 0.0, 1.0);
    return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
  }
};

template <class T>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  explicit Adam(const ParamSet<T>& like) {
    for (const auto& t : like.tensors) {
      m_.tensors.push_back(Mat<T>::Zero(t.rows(), t.cols()));
      v_.tensors.push_back(Mat<T>::Zero(t.rows(), t.cols()));
    }
  }

  void step(ParamSet<T>& params, const ParamSet<T>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    const T a = static_cast<T>(lr * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T e = static_cast<T>(eps * std::sqrt(c2));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& m = m_[i];
      auto& v = v_[i];
      const auto& g = grads[i];
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
      params[i].array() -= a * m.array() / (v.array().sqrt() + e);
      if (weight_decay > 0) params[i] *= static_cast<T>(1.0 - lr * weight_decay);
    }
  }

  long steps_taken() const { return t_; }

 private:
  ParamSet<T> m_, v_;
  long t_ = 0;
};

/// Rescales gradients so their global L2 norm is at most `max_norm`; returns the pre-clip norm.
template <class T>
double clip_global_norm(ParamSet<T>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads.tensors) sq += static_cast<double>(g.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& g : grads.tensors) g *= s;
  }
  return norm;
}

}  // namespace pfnbo::nn
