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

// Set transformer with the prior-fitting attention pattern: context rows
// (optional style row followed by training pairs) attend to all context rows;
// query rows attend to context rows only. Forward and backward are written
// out by hand. Rows are positions, columns are features.
//
// `exact_rows` switches query-stream products to coefficient-wise evaluation
// so every query row is computed by the same instruction sequence regardless
// of how many queries share the call.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "pfnbo/nn/params.hpp"

namespace pfnbo::nn {

/// One batch of episodes sharing context and query sizes.
template <class T>
struct EpisodeBatch {
  int batch = 0;
  int n_train = 0;
  int n_query = 0;
  Mat<T> train_in;  // (batch*n_train) x (features+1): scaled features, then y
  Mat<T> query_in;  // (batch*n_query) x (features+1): scaled features, then 0
  Mat<T> style;     // batch x style_dim, empty when the architecture has no style
};

template <class T>
struct StreamLayerCache {
  Mat<T> x_in, xhat1, h1;
  ColVec<T> rstd1;
  Mat<T> q, k, v;
  std::vector<Mat<T>> probs;  // [episode * heads + head]
  Mat<T> o;
  Mat<T> x_mid, xhat2, h2;
  ColVec<T> rstd2;
  Mat<T> u, a;
};

template <class T>
struct ContextCache {
  int batch = 0;
  int rows = 0;  // context rows per episode
  Mat<T> x0;
  std::vector<StreamLayerCache<T>> layers;
};

template <class T>
struct QueryCache {
  int batch = 0;
  int rows = 0;
  Mat<T> x0;
  std::vector<StreamLayerCache<T>> layers;
  Mat<T> x_final, xhatf, hf, dec_u, dec_a, logits;
  ColVec<T> rstdf;
};

namespace detail {

template <class T>
inline constexpr T kLnEps = T(1e-5);

template <class T>
void affine(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b, Mat<T>& y, bool exact) {
  if (exact) {
    y.resize(x.rows(), w.cols());
    y.noalias() = x.lazyProduct(w);
  } else {
    y.noalias() = x * w;
  }
  y.rowwise() += b.row(0);
}

template <class T>
void layer_norm(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, Mat<T>& xhat, ColVec<T>& rstd, Mat<T>& out) {
  const auto n = x.rows();
  const T E = static_cast<T>(x.cols());
  xhat.resize(n, x.cols());
  out.resize(n, x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mu = x.row(i).sum() / E;
    xhat.row(i) = x.row(i).array() - mu;
    const T var = xhat.row(i).squaredNorm() / E;
    rstd(i) = T(1) / std::sqrt(var + kLnEps<T>);
    xhat.row(i) *= rstd(i);
    out.row(i) = xhat.row(i).cwiseProduct(g.row(0)) + b.row(0);
  }
}

template <class T>
void layer_norm_backward(const Mat<T>& dout, const Mat<T>& xhat, const ColVec<T>& rstd, const Mat<T>& g,
                         Mat<T>* dg, Mat<T>* db, Mat<T>& dx) {
  const auto n = dout.rows();
  const T E = static_cast<T>(dout.cols());
  if (dg) dg->row(0) += dout.cwiseProduct(xhat).colwise().sum();
  if (db) db->row(0) += dout.colwise().sum();
  dx.resize(n, dout.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVec<T> dxhat = dout.row(i).cwiseProduct(g.row(0));
    const T s1 = dxhat.sum();
    const T s2 = dxhat.dot(xhat.row(i));
    dx.row(i) = (rstd(i) / E) * (E * dxhat.array() - s1 - xhat.row(i).array() * s2);
  }
}

template <class T>
inline constexpr T kGeluC = T(0.7978845608028654);

template <class T>
void gelu(const Mat<T>& u, Mat<T>& a) {
  const auto x = u.array();
  a = (T(0.5) * x * (T(1) + (kGeluC<T> * (x + T(0.044715) * x.cube())).tanh())).matrix();
}

template <class T>
void gelu_backward(const Mat<T>& u, Mat<T>& grad) {
  const auto x = u.array();
  const auto t = (kGeluC<T> * (x + T(0.044715) * x.cube())).tanh().eval();
  grad.array() *= T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t.square()) * kGeluC<T> * (T(1) + T(3 * 0.044715) * x.square());
}

template <class T>
void softmax_rows(Mat<T>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const T mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

/// q rows of each episode attend to the `kv_rows` key/value rows of the same episode.
template <class T>
void attend(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int batch, int q_rows, int kv_rows, int heads,
            bool exact, std::vector<Mat<T>>& probs, Mat<T>& o) {
  const int dh = static_cast<int>(q.cols()) / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  probs.resize(static_cast<std::size_t>(batch * heads));
  o.resize(q.rows(), q.cols());
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto qb = q.block(b * q_rows, h * dh, q_rows, dh);
      auto kb = k.block(b * kv_rows, h * dh, kv_rows, dh);
      auto vb = v.block(b * kv_rows, h * dh, kv_rows, dh);
      Mat<T>& p = probs[static_cast<std::size_t>(b * heads + h)];
      if (exact) {
        p.resize(q_rows, kv_rows);
        p.noalias() = qb.lazyProduct(kb.transpose());
        p *= scale;
        softmax_rows(p);
        o.block(b * q_rows, h * dh, q_rows, dh).noalias() = p.lazyProduct(vb);
      } else {
        p.noalias() = (qb * kb.transpose()) * scale;
        softmax_rows(p);
        o.block(b * q_rows, h * dh, q_rows, dh).noalias() = p * vb;
      }
    }
  }
}

template <class T>
void attend_backward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, const std::vector<Mat<T>>& probs,
                     const Mat<T>& d_o, int batch, int q_rows, int kv_rows, int heads, Mat<T>& dq, Mat<T>* dk,
                     Mat<T>* dv) {
  const int dh = static_cast<int>(q.cols()) / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  dq.setZero(q.rows(), q.cols());
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& p = probs[static_cast<std::size_t>(b * heads + h)];
      auto dob = d_o.block(b * q_rows, h * dh, q_rows, dh);
      auto kb = k.block(b * kv_rows, h * dh, kv_rows, dh);
      auto vb = v.block(b * kv_rows, h * dh, kv_rows, dh);
      Mat<T> dp = dob * vb.transpose();
      if (dv) dv->block(b * kv_rows, h * dh, kv_rows, dh).noalias() += p.transpose() * dob;
      const ColVec<T> rowdot = dp.cwiseProduct(p).rowwise().sum();
      Mat<T> ds = p.cwiseProduct(dp.colwise() - rowdot) * scale;
      dq.block(b * q_rows, h * dh, q_rows, dh).noalias() = ds * kb;
      if (dk) {
        auto qb = q.block(b * q_rows, h * dh, q_rows, dh);
        dk->block(b * kv_rows, h * dh, kv_rows, dh).noalias() += ds.transpose() * qb;
      }
    }
  }
}

template <class T>
void accumulate_linear_grads(const Mat<T>& x, const Mat<T>& dy, Mat<T>& dw, Mat<T>& db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
}

}  // namespace detail

/// Parameters plus architecture. Stateless apart from weights; all passes are const.
template <class T>
struct Transformer {
  Architecture arch;
  Slots slots;
  ParamSet<T> params;

  Transformer() = default;
  explicit Transformer(const Architecture& a) : arch(a) {
    arch.validate();
    slots = allocate(arch, params);
  }

  template <class U>
  Transformer<U> cast() const {
    Transformer<U> out;
    out.arch = arch;
    out.slots = slots;
    out.params = params.template cast<U>();
    return out;
  }

  ParamSet<T> zeros_like() const {
    ParamSet<T> g;
    g.names = params.names;
    for (const auto& t : params.tensors) g.tensors.push_back(Mat<T>::Zero(t.rows(), t.cols()));
    return g;
  }

  int context_rows(int n_train) const { return n_train + (arch.style_dim > 0 ? 1 : 0); }

  /// Encodes style + training rows into the context stream input.
  void embed_context(const Mat<T>& train_in, const Mat<T>& style, int batch, int n_train, Mat<T>& x0) const {
    const auto& P = params;
    const int nc = context_rows(n_train);
    const int off = nc - n_train;
    Mat<T> enc;
    detail::affine(train_in, P[slots.enc_w], P[slots.enc_b], enc, false);
    x0.resize(static_cast<Eigen::Index>(batch) * nc, arch.embed);
    for (int b = 0; b < batch; ++b) {
      if (off) {
        x0.row(b * nc) = style.row(b) * P[slots.style_w] + P[slots.style_b].row(0);
      }
      x0.block(b * nc + off, 0, n_train, arch.embed) = enc.block(b * n_train, 0, n_train, arch.embed);
    }
  }

  void embed_queries(const Mat<T>& query_in, Mat<T>& x0, bool exact) const {
    const auto& P = params;
    detail::affine(query_in, P[slots.enc_w], P[slots.enc_b], x0, exact);
    x0.rowwise() += P[slots.y_placeholder].row(0);
  }

  /// Context stream. The last layer only needs keys and values.
  void context_forward(const Mat<T>& x0, int batch, int nc, ContextCache<T>& c) const {
    const auto& P = params;
    c.batch = batch;
    c.rows = nc;
    c.x0 = x0;
    c.layers.resize(static_cast<std::size_t>(arch.layers));
    const Mat<T>* x = &c.x0;
    for (int l = 0; l < arch.layers; ++l) {
      const auto& S = slots.layers[static_cast<std::size_t>(l)];
      auto& L = c.layers[static_cast<std::size_t>(l)];
      L.x_in = *x;
      detail::layer_norm(L.x_in, P[S.ln1_g], P[S.ln1_b], L.xhat1, L.rstd1, L.h1);
      detail::affine(L.h1, P[S.wk], P[S.bk], L.k, false);
      detail::affine(L.h1, P[S.wv], P[S.bv], L.v, false);
      if (l + 1 == arch.layers) break;
      detail::affine(L.h1, P[S.wq], P[S.bq], L.q, false);
      detail::attend(L.q, L.k, L.v, batch, nc, nc, arch.heads, false, L.probs, L.o);
      detail::affine(L.o, P[S.wo], P[S.bo], L.x_mid, false);
      L.x_mid += L.x_in;
      detail::layer_norm(L.x_mid, P[S.ln2_g], P[S.ln2_b], L.xhat2, L.rstd2, L.h2);
      detail::affine(L.h2, P[S.w1], P[S.b1], L.u, false);
      detail::gelu(L.u, L.a);
      Mat<T> ff;
      detail::affine(L.a, P[S.w2], P[S.b2], ff, false);
      c.layers[static_cast<std::size_t>(l + 1)].x_in = L.x_mid + ff;
      x = &c.layers[static_cast<std::size_t>(l + 1)].x_in;
    }
  }

  /// Query stream through all layers and the decoder; fills q.logits.
  void query_forward(const Mat<T>& x0, int batch, int nq, const ContextCache<T>& c, QueryCache<T>& q,
                     bool exact) const {
    const auto& P = params;
    q.batch = batch;
    q.rows = nq;
    q.x0 = x0;
    q.layers.resize(static_cast<std::size_t>(arch.layers));
    Mat<T> x = q.x0;
    for (int l = 0; l < arch.layers; ++l) {
      const auto& S = slots.layers[static_cast<std::size_t>(l)];
      const auto& C = c.layers[static_cast<std::size_t>(l)];
      auto& L = q.layers[static_cast<std::size_t>(l)];
      L.x_in = x;
      detail::layer_norm(L.x_in, P[S.ln1_g], P[S.ln1_b], L.xhat1, L.rstd1, L.h1);
      detail::affine(L.h1, P[S.wq], P[S.bq], L.q, exact);
      detail::attend(L.q, C.k, C.v, batch, nq, c.rows, arch.heads, exact, L.probs, L.o);
      detail::affine(L.o, P[S.wo], P[S.bo], L.x_mid, exact);
      L.x_mid += L.x_in;
      detail::layer_norm(L.x_mid, P[S.ln2_g], P[S.ln2_b], L.xhat2, L.rstd2, L.h2);
      detail::affine(L.h2, P[S.w1], P[S.b1], L.u, exact);
      detail::gelu(L.u, L.a);
      Mat<T> ff;
      detail::affine(L.a, P[S.w2], P[S.b2], ff, exact);
      x = L.x_mid + ff;
    }
    q.x_final = x;
    detail::layer_norm(q.x_final, P[slots.lnf_g], P[slots.lnf_b], q.xhatf, q.rstdf, q.hf);
    detail::affine(q.hf, P[slots.dec_w1], P[slots.dec_b1], q.dec_u, exact);
    detail::gelu(q.dec_u, q.dec_a);
    detail::affine(q.dec_a, P[slots.dec_w2], P[slots.dec_b2], q.logits, exact);
  }

  /// Backpropagates d(loss)/d(logits) through the query stream. Parameter
  /// gradients go to `grads` and context key/value gradients to dk/dv (all
  /// optional); the gradient w.r.t. the query stream input is returned in dx0.
  void query_backward(const ContextCache<T>& c, const QueryCache<T>& q, const Mat<T>& dlogits, ParamSet<T>* grads,
                      std::vector<Mat<T>>* dk, std::vector<Mat<T>>* dv, Mat<T>& dx0) const {
    const auto& P = params;
    Mat<T> dz = dlogits * P[slots.dec_w2].transpose();
    if (grads) detail::accumulate_linear_grads(q.dec_a, dlogits, (*grads)[slots.dec_w2], (*grads)[slots.dec_b2]);
    detail::gelu_backward(q.dec_u, dz);
    if (grads) detail::accumulate_linear_grads(q.hf, dz, (*grads)[slots.dec_w1], (*grads)[slots.dec_b1]);
    Mat<T> dh = dz * P[slots.dec_w1].transpose();
    Mat<T> dx;
    detail::layer_norm_backward(dh, q.xhatf, q.rstdf, P[slots.lnf_g], grads ? &(*grads)[slots.lnf_g] : nullptr,
                                grads ? &(*grads)[slots.lnf_b] : nullptr, dx);
    for (int l = arch.layers - 1; l >= 0; --l) {
      const auto& S = slots.layers[static_cast<std::size_t>(l)];
      const auto& C = c.layers[static_cast<std::size_t>(l)];
      const auto& L = q.layers[static_cast<std::size_t>(l)];
      // feed-forward
      Mat<T> da = dx * P[S.w2].transpose();
      if (grads) detail::accumulate_linear_grads(L.a, dx, (*grads)[S.w2], (*grads)[S.b2]);
      detail::gelu_backward(L.u, da);
      if (grads) detail::accumulate_linear_grads(L.h2, da, (*grads)[S.w1], (*grads)[S.b1]);
      Mat<T> dh2 = da * P[S.w1].transpose();
      Mat<T> dmid;
      detail::layer_norm_backward(dh2, L.xhat2, L.rstd2, P[S.ln2_g], grads ? &(*grads)[S.ln2_g] : nullptr,
                                  grads ? &(*grads)[S.ln2_b] : nullptr, dmid);
      dmid += dx;
      // attention
      Mat<T> d_o = dmid * P[S.wo].transpose();
      if (grads) detail::accumulate_linear_grads(L.o, dmid, (*grads)[S.wo], (*grads)[S.bo]);
      Mat<T> dq;
      detail::attend_backward(L.q, C.k, C.v, L.probs, d_o, q.batch, q.rows, c.rows, arch.heads, dq,
                              dk ? &(*dk)[static_cast<std::size_t>(l)] : nullptr,
                              dv ? &(*dv)[static_cast<std::size_t>(l)] : nullptr);
      if (grads) detail::accumulate_linear_grads(L.h1, dq, (*grads)[S.wq], (*grads)[S.bq]);
      Mat<T> dh1 = dq * P[S.wq].transpose();
      Mat<T> dxin;
      detail::layer_norm_backward(dh1, L.xhat1, L.rstd1, P[S.ln1_g], grads ? &(*grads)[S.ln1_g] : nullptr,
                                  grads ? &(*grads)[S.ln1_b] : nullptr, dxin);
      dx = dxin + dmid;
    }
    dx0 = std::move(dx);
  }

  /// Backward through the context stream given the key/value gradients
  /// contributed by the query stream.
  void context_backward(const ContextCache<T>& c, std::vector<Mat<T>>& dk, std::vector<Mat<T>>& dv,
                        ParamSet<T>& grads, Mat<T>& dx0) const {
    const auto& P = params;
    Mat<T> dx;  // gradient w.r.t. the output of layer l
    for (int l = arch.layers - 1; l >= 0; --l) {
      const auto& S = slots.layers[static_cast<std::size_t>(l)];
      const auto& L = c.layers[static_cast<std::size_t>(l)];
      auto& dK = dk[static_cast<std::size_t>(l)];
      auto& dV = dv[static_cast<std::size_t>(l)];
      Mat<T> dh1;
      Mat<T> dmid;
      if (l + 1 < arch.layers) {
        Mat<T> da = dx * P[S.w2].transpose();
        detail::accumulate_linear_grads(L.a, dx, grads[S.w2], grads[S.b2]);
        detail::gelu_backward(L.u, da);
        detail::accumulate_linear_grads(L.h2, da, grads[S.w1], grads[S.b1]);
        Mat<T> dh2 = da * P[S.w1].transpose();
        detail::layer_norm_backward(dh2, L.xhat2, L.rstd2, P[S.ln2_g], &grads[S.ln2_g], &grads[S.ln2_b], dmid);
        dmid += dx;
        Mat<T> d_o = dmid * P[S.wo].transpose();
        detail::accumulate_linear_grads(L.o, dmid, grads[S.wo], grads[S.bo]);
        Mat<T> dq;
        detail::attend_backward(L.q, L.k, L.v, L.probs, d_o, c.batch, c.rows, c.rows, arch.heads, dq, &dK, &dV);
        detail::accumulate_linear_grads(L.h1, dq, grads[S.wq], grads[S.bq]);
        dh1 = dq * P[S.wq].transpose();
      } else {
        dh1 = Mat<T>::Zero(L.h1.rows(), L.h1.cols());
      }
      detail::accumulate_linear_grads(L.h1, dK, grads[S.wk], grads[S.bk]);
      detail::accumulate_linear_grads(L.h1, dV, grads[S.wv], grads[S.bv]);
      dh1.noalias() += dK * P[S.wk].transpose();
      dh1.noalias() += dV * P[S.wv].transpose();
      Mat<T> dxin;
      detail::layer_norm_backward(dh1, L.xhat1, L.rstd1, P[S.ln1_g], &grads[S.ln1_g], &grads[S.ln1_b], dxin);
      if (l + 1 < arch.layers) dxin += dmid;
      dx = std::move(dxin);
    }
    dx0 = std::move(dx);
  }

  /// Full training pass: returns logits in q.logits after forward.
  void forward(const EpisodeBatch<T>& batch, ContextCache<T>& c, QueryCache<T>& q, bool exact = false) const {
    Mat<T> cx0, qx0;
    const int nc = context_rows(batch.n_train);
    embed_context(batch.train_in, batch.style, batch.batch, batch.n_train, cx0);
    context_forward(cx0, batch.batch, nc, c);
    embed_queries(batch.query_in, qx0, exact);
    query_forward(qx0, batch.batch, batch.n_query, c, q, exact);
  }

  /// Accumulates parameter gradients for d(loss)/d(logits) = dlogits and,
  /// when requested, the gradients w.r.t. train_in and query_in.
  void backward(const EpisodeBatch<T>& batch, const ContextCache<T>& c, const QueryCache<T>& q,
                const Mat<T>& dlogits, ParamSet<T>& grads, Mat<T>* dtrain_in = nullptr,
                Mat<T>* dquery_in = nullptr) const {
    std::vector<Mat<T>> dk(static_cast<std::size_t>(arch.layers)), dv(static_cast<std::size_t>(arch.layers));
    for (int l = 0; l < arch.layers; ++l) {
      dk[static_cast<std::size_t>(l)].setZero(c.layers[static_cast<std::size_t>(l)].k.rows(), arch.embed);
      dv[static_cast<std::size_t>(l)].setZero(c.layers[static_cast<std::size_t>(l)].v.rows(), arch.embed);
    }
    Mat<T> dq0;
    query_backward(c, q, dlogits, &grads, &dk, &dv, dq0);
    // query embedding
    grads[slots.enc_w].noalias() += batch.query_in.transpose() * dq0;
    grads[slots.enc_b].row(0) += dq0.colwise().sum();
    grads[slots.y_placeholder].row(0) += dq0.colwise().sum();
    if (dquery_in) *dquery_in = dq0 * params[slots.enc_w].transpose();

    Mat<T> dc0;
    context_backward(c, dk, dv, grads, dc0);
    const int nc = c.rows;
    const int off = nc - batch.n_train;
    Mat<T> dtrain(static_cast<Eigen::Index>(batch.batch) * batch.n_train, arch.embed);
    for (int b = 0; b < batch.batch; ++b) {
      if (off) {
        grads[slots.style_w].noalias() += batch.style.row(b).transpose() * dc0.row(b * nc);
        grads[slots.style_b].row(0) += dc0.row(b * nc);
      }
      dtrain.block(b * batch.n_train, 0, batch.n_train, arch.embed) = dc0.block(b * nc + off, 0, batch.n_train, arch.embed);
    }
    grads[slots.enc_w].noalias() += batch.train_in.transpose() * dtrain;
    grads[slots.enc_b].row(0) += dtrain.colwise().sum();
    if (dtrain_in) *dtrain_in = dtrain * params[slots.enc_w].transpose();
  }
};

}  // namespace pfnbo::nn
