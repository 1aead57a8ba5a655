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

// Scalar acquisition functionals on a Riemann distribution together with
// their derivative w.r.t. the class probabilities.

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "pfnbo/errors.hpp"
#include "pfnbo/riemann.hpp"

namespace pfnbo {

enum class AcqKind { Ei, Pi, Ucb, Mean };

inline std::string to_string(AcqKind k) {
  switch (k) {
    case AcqKind::Ei: return "ei";
    case AcqKind::Pi: return "pi";
    case AcqKind::Ucb: return "ucb";
    case AcqKind::Mean: return "mean";
  }
  return "?";
}

inline AcqKind parse_acq_kind(const std::string& s) {
  if (s == "ei") return AcqKind::Ei;
  if (s == "pi") return AcqKind::Pi;
  if (s == "ucb") return AcqKind::Ucb;
  if (s == "mean") return AcqKind::Mean;
  throw ConfigError("unknown acquisition '" + s + "'");
}

struct Acquisition {
  AcqKind kind = AcqKind::Ei;
  double f_star = 0.0;     // incumbent, EI and PI
  double quantile = 0.95;  // UCB

  /// Value at `d`; when dprobs is given it receives d value / d probs.
  double operator()(const RiemannDistribution& d, std::vector<double>* dprobs = nullptr) const {
    const auto p = d.probs();
    std::vector<double> g;
    double v = 0.0;
    switch (kind) {
      case AcqKind::Ei: g = d.class_ei(f_star); break;
      case AcqKind::Pi: g = d.class_pi(f_star); break;
      case AcqKind::Mean: g = d.class_means(); break;
      case AcqKind::Ucb: {
        v = d.icdf(quantile);
        if (dprobs) {
          // The quantile solves cdf(v) = q, so dv/dp_i = -cdf_i(v) / pdf(v).
          g = d.class_cdf(v);
          const double dens = d.pdf(v);
          for (auto& x : g) x = dens > 0.0 ? -x / dens : 0.0;
          *dprobs = std::move(g);
        }
        return v;
      }
    }
    v = std::inner_product(p.begin(), p.end(), g.begin(), 0.0);
    if (dprobs) *dprobs = std::move(g);
    return v;
  }
};

/// Chains d value / d probs through the softmax: dlogit_i = p_i (g_i - p.g).
inline std::vector<double> softmax_backward(std::span<const double> probs, const std::vector<double>& dprobs) {
  const double dot = std::inner_product(probs.begin(), probs.end(), dprobs.begin(), 0.0);
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (dprobs[i] - dot);
  return out;
}

}  // namespace pfnbo
