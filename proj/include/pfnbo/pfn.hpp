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

// The prior-data fitted network: configuration, style conditioning,
// inference on a fixed training set, prior-fitting and checkpoints.
//
// Weights are trained in float. Inference runs on a double copy with
// per-row products, so a query's output does not depend on which other
// queries share the call, and on a canonically ordered context, so it does
// not depend on the order of the training set.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "pfnbo/acquisition.hpp"
#include "pfnbo/errors.hpp"
#include "pfnbo/nn/optim.hpp"
#include "pfnbo/nn/transformer.hpp"
#include "pfnbo/priors.hpp"
#include "pfnbo/riemann.hpp"

namespace pfnbo {

/// Extra input position vocabulary. `None` keeps the network style-free.
enum class StyleVocabulary { None, UserPrior, Kg };

/// Head selector encoded in the style position.
enum class StyleMode { Plain, Mean, Kg };

enum class YNormalization { None, Context };

NLOHMANN_JSON_SERIALIZE_ENUM(StyleVocabulary, {{StyleVocabulary::None, "none"},
                                               {StyleVocabulary::UserPrior, "user-prior"},
                                               {StyleVocabulary::Kg, "kg"}})
NLOHMANN_JSON_SERIALIZE_ENUM(YNormalization, {{YNormalization::None, "none"}, {YNormalization::Context, "context"}})

struct OptimConfig {
  double learning_rate = 1e-3;
  long steps = 1000;
  long warmup_steps = 0;
  double grad_clip = 1.0;
  double weight_decay = 0.0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (steps < 1) throw ConfigError("training steps must be >= 1");
    if (warmup_steps < 0) throw ConfigError("warmup steps must be >= 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OptimConfig, learning_rate, steps, warmup_steps, grad_clip, weight_decay)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BatchShape, min_train, max_train, test_points)

/// Learning rates tried when a grid search is requested.
inline const std::vector<double>& learning_rate_grid() {
  static const std::vector<double> grid{1e-3, 3e-4, 1e-4, 5e-5};
  return grid;
}

struct PfnConfig {
  int features = 18;  // K
  int embed = 128;
  int layers = 4;
  int heads = 4;
  int hidden = 256;
  int head_hidden = 128;
  int buckets = 100;  // finite buckets; the head has buckets + 2 classes
  StyleVocabulary style = StyleVocabulary::None;
  YNormalization y_normalization = YNormalization::None;
  int batch_size = 32;
  BatchShape shape{};
  int border_batches = 200;  // batches sampled to place the bucket borders
  OptimConfig optim{};

  int num_classes() const { return buckets + 2; }

  int style_dim() const {
    switch (style) {
      case StyleVocabulary::None: return 0;
      case StyleVocabulary::Kg: return 3;
      case StyleVocabulary::UserPrior: return 3 + 4 * features;
    }
    return 0;
  }

  nn::Architecture architecture() const {
    return {features, embed, layers, heads, hidden, head_hidden, num_classes(), style_dim()};
  }

  void validate() const {
    if (buckets < 2) throw ConfigError("need at least 2 buckets");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (shape.min_train < 1 || shape.max_train < shape.min_train || shape.test_points < 1)
      throw ConfigError("invalid dataset-size distribution");
    architecture().validate();
    optim.validate();
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PfnConfig, features, embed, layers, heads, hidden, head_hidden, buckets,
                                                style, y_normalization, batch_size, shape, border_batches, optim)

struct StyleInput {
  StyleMode mode = StyleMode::Plain;
  std::optional<UserPriorSpec> user_prior;
};

/// Style row: one-hot mode (plain, mean, kg) followed, for the user-prior
/// vocabulary, by (lo, hi, rho, present) per feature slot; absent slots are zero.
/// lo and hi get the same K/d scaling as the features they bound.
inline Eigen::RowVectorXd encode_style(const PfnConfig& cfg, const StyleInput& s, int dims) {
  const int sd = cfg.style_dim();
  if (sd == 0) {
    if (s.mode != StyleMode::Plain || s.user_prior) throw ConfigError("model was trained without a style position");
    return {};
  }
  if (cfg.style != StyleVocabulary::Kg && s.mode != StyleMode::Plain)
    throw ConfigError("model was trained without mean/kg modes");
  if (cfg.style != StyleVocabulary::UserPrior && s.user_prior)
    throw ConfigError("model was trained without user priors");
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(sd);
  row(static_cast<int>(s.mode)) = 1.0;
  if (s.user_prior) {
    s.user_prior->validate();
    if (static_cast<int>(s.user_prior->dims.size()) != dims) throw DomainError("user prior does not match dataset dimensionality");
    const double sc = static_cast<double>(cfg.features) / dims;
    for (int j = 0; j < dims; ++j) {
      const auto& dp = s.user_prior->dims[static_cast<std::size_t>(j)];
      if (!dp) continue;
      row.segment(3 + 4 * j, 4) << dp->interval.lo * sc, dp->interval.hi * sc, dp->rho, 1.0;
    }
  }
  return row;
}

/// One training episode before encoding. Targets are in model space.
struct TrainingEpisode {
  Eigen::MatrixXd train_x;  // n_train x d, in [0, 1]
  Eigen::VectorXd train_y;
  Eigen::MatrixXd query_x;  // n_query x d
  Eigen::VectorXd target;
  StyleInput style;
};

/// Episodes sharing n_train and n_query.
struct EpisodeData {
  std::vector<TrainingEpisode> episodes;
  int n_train() const { return episodes.empty() ? 0 : static_cast<int>(episodes.front().train_y.size()); }
  int n_query() const { return episodes.empty() ? 0 : static_cast<int>(episodes.front().target.size()); }
};

using BatchSource = std::function<EpisodeData(Rng&)>;

/// Standardizes y with the mean and std of the training part.
inline void normalize_episode(TrainingEpisode& e) {
  const double m = e.train_y.mean();
  double s = 1.0;
  if (e.train_y.size() > 1) {
    const double var = (e.train_y.array() - m).square().sum() / static_cast<double>(e.train_y.size() - 1);
    if (var > 1e-24) s = std::sqrt(var);
  }
  e.train_y = (e.train_y.array() - m) / s;
  e.target = (e.target.array() - m) / s;
}

/// Batches from a prior: the first n_train points form the context, the rest are targets.
inline BatchSource prior_source(const PriorConfig& prior_cfg, const PfnConfig& cfg) {
  auto prior = make_prior(prior_cfg);
  return [prior, prior_cfg, cfg](Rng& rng) {
    const auto tb = sample_training_batch(prior_cfg, *prior, cfg.batch_size, cfg.shape, rng);
    EpisodeData out;
    for (const auto& s : tb.samples) {
      TrainingEpisode e;
      e.train_x = s.data.x.topRows(tb.n_train);
      e.train_y = s.data.y.head(tb.n_train);
      e.query_x = s.data.x.bottomRows(tb.n_test);
      e.target = s.data.y.tail(tb.n_test);
      e.style.user_prior = s.user_prior;
      if (cfg.y_normalization == YNormalization::Context) normalize_episode(e);
      out.episodes.push_back(std::move(e));
    }
    return out;
  };
}

/// Equal-mass layout from the targets of `batches` sampled batches.
inline BucketLayout layout_from_source(const BatchSource& source, int batches, int buckets, Rng& rng) {
  std::vector<double> ys;
  for (int b = 0; b < batches; ++b) {
    const auto data = source(rng);
    for (const auto& e : data.episodes) ys.insert(ys.end(), e.target.data(), e.target.data() + e.target.size());
  }
  return build_borders(ys, static_cast<std::size_t>(buckets) + 2);
}

namespace detail {

/// Index of the class that contains y.
inline std::size_t class_of(const BucketLayout& L, double y) {
  if (y < L.lo()) return 0;
  if (y >= L.hi()) return L.num_classes() - 1;
  const auto it = std::upper_bound(L.borders.begin(), L.borders.end(), y);
  return static_cast<std::size_t>(it - L.borders.begin());
}

/// log of the within-class density at y (for unit class mass).
inline double class_log_density(const BucketLayout& L, std::size_t c, double y) {
  if (c == 0) return stats::half_normal_log_pdf(L.lo() - y, L.tail_scale_left);
  if (c + 1 == L.num_classes()) return stats::half_normal_log_pdf(y - L.hi(), L.tail_scale_right);
  return -std::log(L.width(c - 1));
}

template <class Derived>
std::vector<double> softmax(const Eigen::MatrixBase<Derived>& logits) {
  const double mx = static_cast<double>(logits.maxCoeff());
  std::vector<double> p(static_cast<std::size_t>(logits.size()));
  double z = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits(i)) - mx);
    z += p[static_cast<std::size_t>(i)];
  }
  for (auto& v : p) v /= z;
  return p;
}

/// Lexicographic (x, y) order of the training rows.
inline std::vector<Eigen::Index> canonical_order(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    return y(a) < y(b);
  });
  return idx;
}

inline double feature_scale(int capacity, int dims) { return static_cast<double>(capacity) / static_cast<double>(dims); }

template <class T>
nn::EpisodeBatch<T> encode(const PfnConfig& cfg, const EpisodeData& data) {
  nn::EpisodeBatch<T> b;
  b.batch = static_cast<int>(data.episodes.size());
  b.n_train = data.n_train();
  b.n_query = data.n_query();
  const int K = cfg.features;
  b.train_in = nn::Mat<T>::Zero(static_cast<Eigen::Index>(b.batch) * b.n_train, K + 1);
  b.query_in = nn::Mat<T>::Zero(static_cast<Eigen::Index>(b.batch) * b.n_query, K + 1);
  if (cfg.style_dim() > 0) b.style = nn::Mat<T>::Zero(b.batch, cfg.style_dim());
  for (int e = 0; e < b.batch; ++e) {
    const auto& ep = data.episodes[static_cast<std::size_t>(e)];
    const int d = static_cast<int>(ep.train_x.cols());
    if (d > K) throw CapacityError("dataset has " + std::to_string(d) + " features, capacity is " + std::to_string(K));
    if (ep.train_y.size() != b.n_train || ep.target.size() != b.n_query || ep.query_x.rows() != b.n_query)
      throw DomainError("episodes in a batch must share their sizes");
    const double sc = feature_scale(K, d);
    for (int i = 0; i < b.n_train; ++i) {
      for (int j = 0; j < d; ++j) b.train_in(e * b.n_train + i, j) = static_cast<T>(ep.train_x(i, j) * sc);
      b.train_in(e * b.n_train + i, K) = static_cast<T>(ep.train_y(i));
    }
    if (ep.style.mode != StyleMode::Mean) {
      for (int i = 0; i < b.n_query; ++i)
        for (int j = 0; j < d; ++j) b.query_in(e * b.n_query + i, j) = static_cast<T>(ep.query_x(i, j) * sc);
    }
    if (cfg.style_dim() > 0) b.style.row(e) = encode_style(cfg, ep.style, d).cast<T>();
  }
  return b;
}

/// Mean negative log density of the targets; fills d(loss)/d(logits) if asked.
template <class T>
double target_loss(const BucketLayout& L, const EpisodeData& data, const nn::Mat<T>& logits, nn::Mat<T>* dlogits) {
  const int nq = data.n_query();
  const double count = static_cast<double>(logits.rows());
  if (dlogits) dlogits->resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto& ep = data.episodes[static_cast<std::size_t>(r / nq)];
    const double y = ep.target(r % nq);
    const auto p = softmax(logits.row(r));
    const std::size_t c = class_of(L, y);
    total -= std::log(std::max(p[c], std::numeric_limits<double>::min())) + class_log_density(L, c, y);
    if (dlogits) {
      for (std::size_t k = 0; k < p.size(); ++k)
        (*dlogits)(r, static_cast<Eigen::Index>(k)) = static_cast<T>((p[k] - (k == c ? 1.0 : 0.0)) / count);
    }
  }
  return total / count;
}

}  // namespace detail

/// A network conditioned on one training set; predictions for any number of
/// queries reuse the cached context.
class Conditioned {
 public:
  Conditioned(std::shared_ptr<const nn::Transformer<double>> net, std::shared_ptr<const BucketLayout> layout,
              const PfnConfig& cfg, const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
              const StyleInput& style)
      : net_(std::move(net)), layout_(std::move(layout)), features_(cfg.features), mean_mode_(style.mode == StyleMode::Mean) {
    if (train_x.rows() < 1) throw DomainError("training set must be nonempty");
    if (train_x.rows() != train_y.size()) throw DomainError("training X/y size mismatch");
    if (!train_y.allFinite()) throw DomainError("training outputs must be finite");
    dims_ = static_cast<int>(train_x.cols());
    if (dims_ < 1) throw DomainError("training set needs at least one feature");
    if (dims_ > features_) throw CapacityError("dataset has more features than the model capacity");
    scale_ = detail::feature_scale(features_, dims_);
    const auto order = detail::canonical_order(train_x, train_y);
    const int n = static_cast<int>(train_x.rows());
    nn::Mat<double> train_in = nn::Mat<double>::Zero(n, features_ + 1);
    for (int i = 0; i < n; ++i) {
      const auto src = order[static_cast<std::size_t>(i)];
      for (int j = 0; j < dims_; ++j) train_in(i, j) = train_x(src, j) * scale_;
      train_in(i, features_) = train_y(src);
    }
    nn::Mat<double> style_row;
    if (cfg.style_dim() > 0) style_row = encode_style(cfg, style, dims_);
    else encode_style(cfg, style, dims_);
    nn::Mat<double> x0;
    net_->embed_context(train_in, style_row, 1, n, x0);
    net_->context_forward(x0, 1, net_->context_rows(n), ctx_);
  }

  int dims() const { return dims_; }
  const std::shared_ptr<const BucketLayout>& layout() const { return layout_; }

  /// Logits for each query row, evaluated in chunks.
  Eigen::MatrixXd logits(const Eigen::MatrixXd& queries) const {
    check_queries(queries);
    Eigen::MatrixXd out(queries.rows(), layout_->num_classes());
    constexpr Eigen::Index kChunk = 512;
    for (Eigen::Index s = 0; s < queries.rows(); s += kChunk) {
      const Eigen::Index m = std::min(kChunk, queries.rows() - s);
      nn::QueryCache<double> q;
      run_queries(queries.middleRows(s, m), q);
      out.middleRows(s, m) = q.logits;
    }
    return out;
  }

  std::vector<RiemannDistribution> predict(const Eigen::MatrixXd& queries) const {
    const Eigen::MatrixXd lg = logits(queries);
    std::vector<RiemannDistribution> out;
    out.reserve(static_cast<std::size_t>(lg.rows()));
    for (Eigen::Index i = 0; i < lg.rows(); ++i) out.emplace_back(layout_, detail::softmax(lg.row(i)));
    return out;
  }

  RiemannDistribution predict_one(const Eigen::RowVectorXd& x) const {
    Eigen::MatrixXd q = x;
    return std::move(predict(q).front());
  }

  std::vector<double> evaluate(const Eigen::MatrixXd& queries, const Acquisition& acq) const {
    const Eigen::MatrixXd lg = logits(queries);
    std::vector<double> out(static_cast<std::size_t>(lg.rows()));
    for (Eigen::Index i = 0; i < lg.rows(); ++i)
      out[static_cast<std::size_t>(i)] = acq(RiemannDistribution(layout_, detail::softmax(lg.row(i))));
    return out;
  }

  /// Value of a scalar functional of the predictive distribution at x and,
  /// optionally, its gradient w.r.t. the d query features (reverse mode).
  using Functional = std::function<double(const RiemannDistribution&, std::vector<double>*)>;

  double value_and_grad(const Eigen::RowVectorXd& x, const Functional& f, Eigen::RowVectorXd* grad) const {
    Eigen::MatrixXd qm = x;
    check_queries(qm);
    nn::QueryCache<double> q;
    run_queries(qm, q);
    RiemannDistribution dist(layout_, detail::softmax(q.logits.row(0)));
    std::vector<double> dprobs;
    const double v = f(dist, grad ? &dprobs : nullptr);
    if (!grad) return v;
    grad->setZero(dims_);
    if (mean_mode_) return v;
    const auto dl = softmax_backward(dist.probs(), dprobs);
    nn::Mat<double> dlogits(1, static_cast<Eigen::Index>(dl.size()));
    for (std::size_t i = 0; i < dl.size(); ++i) dlogits(0, static_cast<Eigen::Index>(i)) = dl[i];
    nn::Mat<double> dx0;
    net_->query_backward(ctx_, q, dlogits, nullptr, nullptr, nullptr, dx0);
    const nn::Mat<double> din = dx0 * net_->params[net_->slots.enc_w].transpose();
    for (int j = 0; j < dims_; ++j) (*grad)(j) = din(0, j) * scale_;
    return v;
  }

  double value_and_grad(const Eigen::RowVectorXd& x, const Acquisition& acq, Eigen::RowVectorXd* grad) const {
    return value_and_grad(x, Functional([&acq](const RiemannDistribution& d, std::vector<double>* g) { return acq(d, g); }), grad);
  }

 private:
  void check_queries(const Eigen::MatrixXd& queries) const {
    if (queries.cols() != dims_) throw DomainError("query dimensionality differs from the training set");
  }

  void run_queries(const Eigen::Ref<const Eigen::MatrixXd>& queries, nn::QueryCache<double>& q) const {
    nn::Mat<double> qin = nn::Mat<double>::Zero(queries.rows(), features_ + 1);
    if (!mean_mode_) qin.leftCols(dims_) = queries * scale_;
    nn::Mat<double> x0;
    net_->embed_queries(qin, x0, true);
    net_->query_forward(x0, 1, static_cast<int>(queries.rows()), ctx_, q, true);
  }

  std::shared_ptr<const nn::Transformer<double>> net_;
  std::shared_ptr<const BucketLayout> layout_;
  nn::ContextCache<double> ctx_;
  int features_ = 0;
  int dims_ = 0;
  double scale_ = 1.0;
  bool mean_mode_ = false;
};

class PfnModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  PfnModel(PfnConfig cfg, BucketLayout layout, Rng& rng)
      : cfg_(std::move(cfg)), layout_(std::make_shared<const BucketLayout>(std::move(layout))) {
    cfg_.validate();
    check_layout();
    net_ = nn::Transformer<float>(cfg_.architecture());
    std::mt19937_64 init_rng(rng());
    nn::initialize(net_.arch, net_.slots, net_.params, init_rng);
    sync();
  }

  const PfnConfig& config() const { return cfg_; }
  const std::shared_ptr<const BucketLayout>& layout() const { return layout_; }
  long steps() const { return steps_; }
  void add_steps(long n) { steps_ += n; }

  nn::Transformer<float>& net() { return net_; }
  const nn::Transformer<float>& net() const { return net_; }
  const std::shared_ptr<const nn::Transformer<double>>& inference_net() const { return inference_; }

  /// Refreshes the double-precision inference copy after the weights change.
  void sync() { inference_ = std::make_shared<const nn::Transformer<double>>(net_.cast<double>()); }

  Conditioned condition(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y, const StyleInput& style = {}) const {
    return Conditioned(inference_, layout_, cfg_, train_x, train_y, style);
  }

  Conditioned condition(const Dataset& train, const StyleInput& style = {}) const {
    return condition(train.x, train.y, style);
  }

  std::vector<RiemannDistribution> forward(const Dataset& train, const Eigen::MatrixXd& queries,
                                           const StyleInput& style = {}) const {
    return condition(train, style).predict(queries);
  }

  /// Mean negative log-likelihood of the batch targets under the double network.
  double loss(const EpisodeData& data) const {
    const auto b = detail::encode<double>(cfg_, data);
    nn::ContextCache<double> c;
    nn::QueryCache<double> q;
    inference_->forward(b, c, q, true);
    return detail::target_loss(*layout_, data, q.logits, static_cast<nn::Mat<double>*>(nullptr));
  }

  void save(const std::string& path) const;
  static PfnModel load(const std::string& path);

 private:
  PfnModel() = default;

  void check_layout() const {
    layout_->validate();
    if (static_cast<int>(layout_->num_classes()) != cfg_.num_classes())
      throw ConfigError("bucket layout does not match the configured bucket count");
  }

  PfnConfig cfg_;
  std::shared_ptr<const BucketLayout> layout_;
  nn::Transformer<float> net_;
  std::shared_ptr<const nn::Transformer<double>> inference_;
  long steps_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct TrainHooks {
  std::function<void(long step, double loss, double lr)> on_step;
  long checkpoint_every = 0;
  std::function<void(const PfnModel&, long step)> on_checkpoint;
};

struct TrainReport {
  std::vector<double> losses;  // per step
  double final_lr = 0.0;
};

/// One optimizer run over `optim.steps` batches with cosine-annealed Adam.
inline TrainReport train(PfnModel& model, const BatchSource& source, const OptimConfig& optim, Rng& rng,
                         const TrainHooks& hooks = {}) {
  optim.validate();
  auto& net = model.net();
  nn::Adam<float> adam(net.params);
  adam.weight_decay = optim.weight_decay;
  const nn::CosineSchedule schedule{optim.learning_rate, optim.steps, optim.warmup_steps};
  TrainReport report;
  auto grads = net.zeros_like();
  for (long step = 0; step < optim.steps; ++step) {
    const EpisodeData data = source(rng);
    const auto b = detail::encode<float>(model.config(), data);
    nn::ContextCache<float> c;
    nn::QueryCache<float> q;
    net.forward(b, c, q, false);
    nn::Mat<float> dlogits;
    const double loss = detail::target_loss(*model.layout(), data, q.logits, &dlogits);
    grads.set_zero();
    net.backward(b, c, q, dlogits, grads);
    const double gnorm = nn::clip_global_norm(grads, optim.grad_clip);
    if (!std::isfinite(loss) || !std::isfinite(gnorm)) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": loss=" << loss << " grad_norm=" << gnorm
          << " lr=" << schedule(step);
      throw DivergenceError(msg.str());
    }
    const double lr = schedule(step);
    adam.step(net.params, grads, lr);
    model.add_steps(1);
    report.losses.push_back(loss);
    report.final_lr = lr;
    if (hooks.on_step) hooks.on_step(step, loss, lr);
    if (hooks.checkpoint_every > 0 && hooks.on_checkpoint && (step + 1) % hooks.checkpoint_every == 0) {
      model.sync();
      hooks.on_checkpoint(model, step + 1);
    }
  }
  if (!net.params.all_finite()) throw DivergenceError("non-finite weights after training");
  model.sync();
  return report;
}

/// Builds the bucket layout from the source, initializes and trains a model.
inline PfnModel train_new(const PfnConfig& cfg, const BatchSource& source, Rng& rng, const TrainHooks& hooks = {},
                          TrainReport* report = nullptr) {
  cfg.validate();
  auto layout = layout_from_source(source, cfg.border_batches, cfg.buckets, rng);
  PfnModel model(cfg, std::move(layout), rng);
  auto r = train(model, source, cfg.optim, rng, hooks);
  if (report) *report = std::move(r);
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints: little-endian
//   "PFN4BO\0" | u32 version | u32 len, config JSON | u64 n, f64 borders[n] |
//   f64 tail_left | f64 tail_right | u64 steps | u32 count |
//   count x (u32 len, name | u32 rows | u32 cols | f32 data[rows*cols])

namespace detail {

inline constexpr char kMagic[7] = {'P', 'F', 'N', '4', 'B', 'O', '\0'};

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& os) : os_(os) {}
  void raw(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

 private:
  void le(std::uint64_t v, int bytes) {
    char b[8];
    for (int i = 0; i < bytes; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    raw(b, static_cast<std::size_t>(bytes));
  }
  std::ostream& os_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& is) : is_(is) {}
  void raw(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw CheckpointError("checkpoint is truncated");
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t max_len) {
    const auto n = u32();
    if (n > max_len) throw CheckpointError("checkpoint string length out of range");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

 private:
  std::uint64_t le(int bytes) {
    unsigned char b[8];
    raw(b, static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::istream& is_;
};

}  // namespace detail

inline void PfnModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
  detail::ByteWriter w(os);
  w.raw(detail::kMagic, sizeof(detail::kMagic));
  w.u32(kFormatVersion);
  w.str(nlohmann::json(cfg_).dump());
  w.u64(layout_->borders.size());
  for (double b : layout_->borders) w.f64(b);
  w.f64(layout_->tail_scale_left);
  w.f64(layout_->tail_scale_right);
  w.u64(static_cast<std::uint64_t>(steps_));
  const auto& P = net_.params;
  w.u32(static_cast<std::uint32_t>(P.size()));
  for (std::size_t i = 0; i < P.size(); ++i) {
    w.str(P.names[i]);
    w.u32(static_cast<std::uint32_t>(P[i].rows()));
    w.u32(static_cast<std::uint32_t>(P[i].cols()));
    for (Eigen::Index k = 0; k < P[i].size(); ++k) w.f32(P[i].data()[k]);
  }
  os.flush();
  if (!os) throw CheckpointError("failed writing '" + path + "'");
}

inline PfnModel PfnModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open '" + path + "'");
  detail::ByteReader r(is);
  char magic[sizeof(detail::kMagic)];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, detail::kMagic, sizeof(magic)) != 0) throw CheckpointError("not a checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kFormatVersion)
    throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " + std::to_string(kFormatVersion));
  PfnModel m;
  try {
    m.cfg_ = nlohmann::json::parse(r.str(1 << 20)).get<PfnConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint config: ") + e.what());
  }
  m.cfg_.validate();
  const auto nb = r.u64();
  if (nb > (1u << 24)) throw CheckpointError("corrupt border count");
  BucketLayout layout;
  layout.borders.resize(nb);
  for (auto& b : layout.borders) b = r.f64();
  layout.tail_scale_left = r.f64();
  layout.tail_scale_right = r.f64();
  try {
    layout.validate();
  } catch (const DegenerateLayoutError& e) {
    throw CheckpointError(std::string("corrupt bucket layout: ") + e.what());
  }
  m.layout_ = std::make_shared<const BucketLayout>(std::move(layout));
  m.check_layout();
  m.steps_ = static_cast<long>(r.u64());
  m.net_ = nn::Transformer<float>(m.cfg_.architecture());
  auto& P = m.net_.params;
  const auto count = r.u32();
  if (count != P.size()) throw CheckpointError("checkpoint tensor count does not match the architecture");
  for (std::size_t i = 0; i < P.size(); ++i) {
    const auto name = r.str(256);
    const auto rows = r.u32(), cols = r.u32();
    if (name != P.names[i] || rows != P[i].rows() || cols != P[i].cols())
      throw CheckpointError("checkpoint tensor '" + name + "' does not match the architecture");
    for (Eigen::Index k = 0; k < P[i].size(); ++k) P[i].data()[k] = r.f32();
  }
  char extra;
  if (is.read(&extra, 1); is.gcount() != 0) throw CheckpointError("trailing bytes after checkpoint");
  if (!P.all_finite()) throw CheckpointError("checkpoint contains non-finite weights");
  m.sync();
  return m;
}

}  // namespace pfnbo
