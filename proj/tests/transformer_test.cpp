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

#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "pfnbo/nn/optim.hpp"
#include "pfnbo/nn/transformer.hpp"

namespace pfnbo::nn {
namespace {

Architecture tiny_arch(int style_dim) {
  Architecture a;
  a.features = 3;
  a.embed = 8;
  a.layers = 2;
  a.heads = 2;
  a.hidden = 12;
  a.head_hidden = 6;
  a.classes = 5;
  a.style_dim = style_dim;
  return a;
}

EpisodeBatch<double> random_batch(const Architecture& a, int B, int nt, int nq, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  EpisodeBatch<double> eb;
  eb.batch = B;
  eb.n_train = nt;
  eb.n_query = nq;
  eb.train_in = Mat<double>::NullaryExpr(B * nt, a.features + 1, [&] { return g(rng); });
  eb.query_in = Mat<double>::NullaryExpr(B * nq, a.features + 1, [&] { return g(rng); });
  eb.query_in.col(a.features).setZero();
  if (a.style_dim > 0) eb.style = Mat<double>::NullaryExpr(B, a.style_dim, [&] { return g(rng); });
  return eb;
}

double weighted_loss(const Transformer<double>& t, const EpisodeBatch<double>& eb, const Mat<double>& w) {
  ContextCache<double> c;
  QueryCache<double> q;
  t.forward(eb, c, q);
  return q.logits.cwiseProduct(w).sum();
}

class TransformerGrad : public ::testing::TestWithParam<int> {};

TEST_P(TransformerGrad, ParameterGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  Transformer<double> t(tiny_arch(GetParam()));
  initialize(t.arch, t.slots, t.params, rng);
  // perturb gains/biases away from their init so every path is exercised
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& p : t.params.tensors) p += Mat<double>::NullaryExpr(p.rows(), p.cols(), [&] { return g(rng); });
  const auto eb = random_batch(t.arch, 2, 4, 3, rng);
  std::normal_distribution<double> gw;
  const Mat<double> w = Mat<double>::NullaryExpr(eb.batch * eb.n_query, t.arch.classes, [&] { return gw(rng); });

  ContextCache<double> c;
  QueryCache<double> q;
  t.forward(eb, c, q);
  auto grads = t.zeros_like();
  t.backward(eb, c, q, w, grads);

  const double h = 1e-6;
  for (std::size_t i = 0; i < t.params.size(); ++i) {
    for (Eigen::Index k = 0; k < t.params[i].size(); k += 3) {
      auto tp = t;
      tp.params[i].data()[k] += h;
      const double up = weighted_loss(tp, eb, w);
      tp.params[i].data()[k] -= 2 * h;
      const double dn = weighted_loss(tp, eb, w);
      const double fd = (up - dn) / (2 * h);
      EXPECT_NEAR(grads[i].data()[k], fd, 1e-6 + 1e-5 * std::abs(fd)) << t.params.names[i] << "[" << k << "]";
    }
  }
}

INSTANTIATE_TEST_SUITE_P(StyleOnOff, TransformerGrad, ::testing::Values(0, 4));

TEST(Transformer, QueryInputGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  Transformer<double> t(tiny_arch(0));
  initialize(t.arch, t.slots, t.params, rng);
  auto eb = random_batch(t.arch, 1, 5, 1, rng);
  std::normal_distribution<double> gw;
  const Mat<double> w = Mat<double>::NullaryExpr(1, t.arch.classes, [&] { return gw(rng); });
  ContextCache<double> c;
  QueryCache<double> q;
  t.forward(eb, c, q, true);
  Mat<double> dx0;
  t.query_backward(c, q, w, nullptr, nullptr, nullptr, dx0);
  const Mat<double> dinput = dx0 * t.params[t.slots.enc_w].transpose();
  for (int j = 0; j < t.arch.features; ++j) {
    auto e2 = eb;
    const double h = 1e-6;
    e2.query_in(0, j) += h;
    const double up = weighted_loss(t, e2, w);
    e2.query_in(0, j) -= 2 * h;
    const double dn = weighted_loss(t, e2, w);
    EXPECT_NEAR(dinput(0, j), (up - dn) / (2 * h), 1e-7);
  }
}

TEST(Transformer, ExactRowsAreIndependentOfQueryCount) {
  std::mt19937_64 rng(9);
  Architecture a = tiny_arch(0);
  a.embed = 32;
  a.hidden = 64;
  Transformer<double> t(a);
  initialize(t.arch, t.slots, t.params, rng);
  auto eb = random_batch(t.arch, 1, 7, 37, rng);
  ContextCache<double> c;
  QueryCache<double> q_all, q_one;
  t.forward(eb, c, q_all, true);
  for (int i : {0, 5, 36}) {
    auto e1 = eb;
    e1.n_query = 1;
    e1.query_in = eb.query_in.row(i);
    t.forward(e1, c, q_one, true);
    for (int k = 0; k < a.classes; ++k) EXPECT_EQ(q_one.logits(0, k), q_all.logits(i, k));
  }
}

TEST(Transformer, AdamReducesSimpleLoss) {
  std::mt19937_64 rng(1);
  Transformer<double> t(tiny_arch(0));
  initialize(t.arch, t.slots, t.params, rng);
  auto eb = random_batch(t.arch, 2, 4, 3, rng);
  Adam<double> opt(t.params);
  Mat<double> w = Mat<double>::Ones(eb.batch * eb.n_query, t.arch.classes);
  const double before = weighted_loss(t, eb, w);
  for (int s = 0; s < 50; ++s) {
    ContextCache<double> c;
    QueryCache<double> q;
    t.forward(eb, c, q);
    auto grads = t.zeros_like();
    t.backward(eb, c, q, w, grads);
    opt.step(t.params, grads, 1e-2);
  }
  EXPECT_LT(weighted_loss(t, eb, w), before);
}

TEST(CosineSchedule, EndsAtZero) {
  CosineSchedule s{1e-3, 1000, 0};
  EXPECT_DOUBLE_EQ(s(0), 1e-3);
  EXPECT_NEAR(s(1000), 0.0, 1e-18);
  EXPECT_NEAR(s(500), 5e-4, 1e-12);
}

}  // namespace
}  // namespace pfnbo::nn
