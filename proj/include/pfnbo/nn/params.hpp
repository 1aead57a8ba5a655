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

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pfnbo/errors.hpp"

namespace pfnbo::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <class T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Shape of the set transformer. `style_dim == 0` means no style position.
struct Architecture {
  int features = 18;    // K, feature capacity
  int embed = 128;      // model width
  int layers = 4;
  int heads = 4;
  int hidden = 256;     // feed-forward width
  int head_hidden = 128;  // decoder hidden width
  int classes = 102;    // M buckets + 2 tails
  int style_dim = 0;

  int head_dim() const { return embed / heads; }

  void validate() const {
    if (features < 1) throw ConfigError("feature capacity must be >= 1");
    if (embed < 1 || heads < 1 || embed % heads != 0) throw ConfigError("embedding must be divisible by heads");
    if (layers < 1) throw ConfigError("need at least one layer");
    if (hidden < 1 || head_hidden < 1) throw ConfigError("hidden widths must be positive");
    if (classes < 3) throw ConfigError("need at least one bucket plus two tails");
    if (style_dim < 0) throw ConfigError("style_dim must be >= 0");
  }

  bool operator==(const Architecture&) const = default;
};

/// Indices of the tensors of one transformer layer inside a ParamSet.
struct LayerSlots {
  std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct Slots {
  std::size_t enc_w, enc_b, y_placeholder;
  std::size_t style_w = 0, style_b = 0;
  std::vector<LayerSlots> layers;
  std::size_t lnf_g, lnf_b, dec_w1, dec_b1, dec_w2, dec_b2;
};

/// Named tensors in a fixed order; biases and gains are stored as 1 x n.
template <class T>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Mat<T>> tensors;

  std::size_t add(std::string name, int rows, int cols) {
    names.push_back(std::move(name));
    tensors.push_back(Mat<T>::Zero(rows, cols));
    return tensors.size() - 1;
  }

  Mat<T>& operator[](std::size_t i) { return tensors[i]; }
  const Mat<T>& operator[](std::size_t i) const { return tensors[i]; }
  std::size_t size() const { return tensors.size(); }

  void set_zero() {
    for (auto& t : tensors) t.setZero();
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    out.names = names;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }

  bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.allFinite()) return false;
    return true;
  }
};

template <class T>
Slots allocate(const Architecture& a, ParamSet<T>& p) {
  Slots s;
  const int E = a.embed;
  s.enc_w = p.add("encoder.weight", a.features + 1, E);
  s.enc_b = p.add("encoder.bias", 1, E);
  s.y_placeholder = p.add("encoder.query_placeholder", 1, E);
  if (a.style_dim > 0) {
    s.style_w = p.add("style_encoder.weight", a.style_dim, E);
    s.style_b = p.add("style_encoder.bias", 1, E);
  }
  for (int l = 0; l < a.layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    LayerSlots ls{};
    ls.ln1_g = p.add(pre + "norm1.gain", 1, E);
    ls.ln1_b = p.add(pre + "norm1.bias", 1, E);
    ls.wq = p.add(pre + "attn.wq", E, E);
    ls.bq = p.add(pre + "attn.bq", 1, E);
    ls.wk = p.add(pre + "attn.wk", E, E);
    ls.bk = p.add(pre + "attn.bk", 1, E);
    ls.wv = p.add(pre + "attn.wv", E, E);
    ls.bv = p.add(pre + "attn.bv", 1, E);
    ls.wo = p.add(pre + "attn.wo", E, E);
    ls.bo = p.add(pre + "attn.bo", 1, E);
    ls.ln2_g = p.add(pre + "norm2.gain", 1, E);
    ls.ln2_b = p.add(pre + "norm2.bias", 1, E);
    ls.w1 = p.add(pre + "ff.w1", E, a.hidden);
    ls.b1 = p.add(pre + "ff.b1", 1, a.hidden);
    ls.w2 = p.add(pre + "ff.w2", a.hidden, E);
    ls.b2 = p.add(pre + "ff.b2", 1, E);
    s.layers.push_back(ls);
  }
  s.lnf_g = p.add("final_norm.gain", 1, E);
  s.lnf_b = p.add("final_norm.bias", 1, E);
  s.dec_w1 = p.add("decoder.w1", E, a.head_hidden);
  s.dec_b1 = p.add("decoder.b1", 1, a.head_hidden);
  s.dec_w2 = p.add("decoder.w2", a.head_hidden, a.classes);
  s.dec_b2 = p.add("decoder.b2", 1, a.classes);
  return s;
}

/// Gaussian init scaled by fan-in; residual output projections are shrunk by
/// 1/sqrt(2 * layers) and gains start at one.
template <class T, class Rng>
void initialize(const Architecture& a, const Slots& s, ParamSet<T>& p, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  auto fill = [&](std::size_t i, double stddev) {
    for (Eigen::Index k = 0; k < p[i].size(); ++k) p[i].data()[k] = static_cast<T>(stddev * g(rng));
  };
  const double E = a.embed;
  const double resid = 1.0 / std::sqrt(2.0 * a.layers);
  fill(s.enc_w, 1.0 / std::sqrt(a.features + 1.0));
  fill(s.y_placeholder, 0.02);
  if (a.style_dim > 0) fill(s.style_w, 1.0 / std::sqrt(static_cast<double>(a.style_dim)));
  for (const auto& l : s.layers) {
    p[l.ln1_g].setOnes();
    p[l.ln2_g].setOnes();
    fill(l.wq, 1.0 / std::sqrt(E));
    fill(l.wk, 1.0 / std::sqrt(E));
    fill(l.wv, 1.0 / std::sqrt(E));
    fill(l.wo, resid / std::sqrt(E));
    fill(l.w1, 1.0 / std::sqrt(E));
    fill(l.w2, resid / std::sqrt(static_cast<double>(a.hidden)));
  }
  p[s.lnf_g].setOnes();
  fill(s.dec_w1, 1.0 / std::sqrt(E));
  fill(s.dec_w2, 0.1 / std::sqrt(static_cast<double>(a.head_hidden)));
}

}  // namespace pfnbo::nn
