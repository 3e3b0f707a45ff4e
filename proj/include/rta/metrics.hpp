// Copyright 2026 The RTA Authors.
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

#pragma once

// Ranking metrics for a single ground-truth item, plus the validation
// hit rate the trainers use for model selection.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "rta/common.hpp"

namespace rta {

using RankedList = std::vector<ItemId>;

inline double hit_at_k(const RankedList& ranked, ItemId target, std::size_t K) {
  if (K < 1) throw Error("hit_at_k: K must be >= 1");
  for (std::size_t i = 0; i < std::min(K, ranked.size()); ++i) {
    if (ranked[i] == target) return 1.0;
  }
  return 0.0;
}

inline double ndcg_at_k(const RankedList& ranked, ItemId target, std::size_t K) {
  if (K < 1) throw Error("ndcg_at_k: K must be >= 1");
  for (std::size_t i = 0; i < std::min(K, ranked.size()); ++i) {
    if (ranked[i] == target) return 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  return 0.0;
}

// Top-K of a score row, skipping the excluded ids.
template <typename Row>
RankedList rank_excluding(const Row& scores, const std::vector<ItemId>& exclude,
                          std::size_t K) {
  std::vector<double> s(static_cast<std::size_t>(scores.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<double>(scores(static_cast<Eigen::Index>(i)));
  }
  for (ItemId e : exclude) {
    if (e >= 0 && static_cast<std::size_t>(e) < s.size()) {
      s[static_cast<std::size_t>(e)] = -std::numeric_limits<double>::infinity();
    }
  }
  RankedList top = top_k_indices(s, K + exclude.size());
  RankedList out;
  for (ItemId id : top) {
    if (std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
    out.push_back(id);
    if (out.size() == K) break;
  }
  return out;
}

// Mean HIT@K over rows of a score matrix; context items are excluded from
// the ranking and samples whose target was already mentioned are skipped.
template <typename Mat>
double validation_hit_rate(const Mat& scores, const std::vector<ItemId>& targets,
                           const std::vector<std::vector<ItemId>>& context,
                           std::size_t K = 10) {
  double hits = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const auto& ctx = context[r];
    if (std::find(ctx.begin(), ctx.end(), targets[r]) != ctx.end()) continue;
    hits += hit_at_k(rank_excluding(scores.row(static_cast<Eigen::Index>(r)), ctx, K),
                     targets[r], K);
    ++n;
  }
  return n ? hits / static_cast<double>(n) : 0.0;
}

}  // namespace rta
