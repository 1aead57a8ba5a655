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

// Small PFN configurations shared by the tests.

#include "pfnbo/pfn.hpp"

namespace pfnbo::testing {

inline PfnConfig small_config() {
  PfnConfig cfg;
  cfg.features = 4;
  cfg.embed = 32;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.hidden = 64;
  cfg.head_hidden = 32;
  cfg.buckets = 20;
  cfg.batch_size = 8;
  cfg.shape = {1, 12, 6};
  cfg.border_batches = 20;
  return cfg;
}

inline PriorConfig small_prior() {
  PriorConfig p;
  p.max_dims = 2;
  return p;
}

inline PfnModel random_model(const PfnConfig& cfg, Rng& rng) {
  const auto src = prior_source(small_prior(), cfg);
  return PfnModel(cfg, layout_from_source(src, cfg.border_batches, cfg.buckets, rng), rng);
}

}  // namespace pfnbo::testing
