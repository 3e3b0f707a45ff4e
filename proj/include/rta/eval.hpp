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

// Offline evaluation: HIT/NDCG tables with standard errors under the
// repeated-item protocol, the description-to-title probe by popularity
// bucket, and single-step vs generative retrieval latency.

#include <chrono>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rta/metrics.hpp"
#include "rta/recsys.hpp"
#include "rta/reindex.hpp"

namespace rta {

struct EvalProtocol {
  bool remove_repeated = true;
  std::vector<int> ks = {5, 10};
};

struct MetricRow {
  std::string name;  // H@K or N@K
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

struct MetricsTable {
  std::vector<MetricRow> rows;
  std::size_t dropped = 0;

  const MetricRow& at(const std::string& name) const {
    for (const auto& r : rows) {
      if (r.name == name) return r;
    }
    throw Error("metrics: no row " + name);
  }

  std::string csv() const {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed << "metric,mean,se,n\n";
    for (const auto& r : rows) out << r.name << "," << r.mean << "," << r.se << "," << r.n << "\n";
    return out.str();
  }

  nlohmann::json json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& r : rows) j[r.name] = {{"mean", r.mean}, {"se", r.se}, {"n", r.n}};
    j["dropped"] = dropped;
    return j;
  }
};

// Mean and sample_std / sqrt(n) of per-sample values (0 for n = 1).
inline std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

// scorer(i, K, exclude) returns the top-K list for sample i with the
// excluded ids left out.
using Scorer =
    std::function<RankedList(std::size_t, std::size_t, const std::vector<ItemId>&)>;

inline MetricsTable evaluate(const Scorer& scorer, const std::vector<Interaction>& split,
                             const EvalProtocol& protocol = {}) {
  if (split.empty()) throw Error("evaluate: empty split");
  if (protocol.ks.empty()) throw Error("evaluate: no cutoffs");
  std::size_t max_k = 0;
  for (int k : protocol.ks) {
    if (k < 1) throw Error("evaluate: K must be >= 1");
    max_k = std::max(max_k, static_cast<std::size_t>(k));
  }
  std::vector<std::vector<double>> hits(protocol.ks.size()), ndcgs(protocol.ks.size());
  MetricsTable table;
  static const std::vector<ItemId> kNone;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& x = split[i];
    const bool repeated =
        std::find(x.history.begin(), x.history.end(), x.target) != x.history.end();
    if (protocol.remove_repeated && repeated) {
      ++table.dropped;
      continue;
    }
    const RankedList ranked = scorer(i, max_k, protocol.remove_repeated ? x.history : kNone);
    for (std::size_t k = 0; k < protocol.ks.size(); ++k) {
      const auto K = static_cast<std::size_t>(protocol.ks[k]);
      hits[k].push_back(hit_at_k(ranked, x.target, K));
      ndcgs[k].push_back(ndcg_at_k(ranked, x.target, K));
    }
  }
  if (hits[0].empty()) {
    throw Error("evaluate: all " + std::to_string(split.size()) +
                " samples dropped (target already in context)");
  }
  for (std::size_t k = 0; k < protocol.ks.size(); ++k) {
    const std::string K = std::to_string(protocol.ks[k]);
    auto [hm, hs] = mean_and_se(hits[k]);
    auto [nm, ns] = mean_and_se(ndcgs[k]);
    table.rows.push_back({"H@" + K, hm, hs, hits[k].size()});
    table.rows.push_back({"N@" + K, nm, ns, ndcgs[k].size()});
  }
  return table;
}

// Convenience: rank rows of a full score matrix.
template <typename Mat>
MetricsTable evaluate_scores(const Mat& scores, const std::vector<Interaction>& split,
                             const EvalProtocol& protocol = {}) {
  if (static_cast<std::size_t>(scores.rows()) != split.size()) {
    throw Error("evaluate: scores/samples mismatch");
  }
  return evaluate(
      [&](std::size_t i, std::size_t K, const std::vector<ItemId>& ex) {
        return rank_excluding(scores.row(static_cast<Eigen::Index>(i)), ex, K);
      },
      split, protocol);
}

// ---------------------------------------------------------------------------
// Indexing probe: retrieve each item's title from its description.

struct ProbeBucket {
  std::string name;
  std::int64_t lo = 0;
  std::int64_t hi = -1;  // exclusive; -1 = unbounded
  std::size_t n_items = 0;
  double hit5 = 0.0;
};

inline std::vector<ProbeBucket> default_buckets() {
  return {{"cold", 0, 10}, {"warm", 10, 100}, {"popular", 100, -1}};
}

struct ProbeReport {
  std::vector<ProbeBucket> buckets;

  nlohmann::json json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& b : buckets) {
      j.push_back({{"bucket", b.name}, {"lo", b.lo}, {"hi", b.hi}, {"n_items", b.n_items},
                   {"hit5", b.hit5}});
    }
    return j;
  }
  std::string csv() const {
    std::ostringstream out;
    out << "bucket,lo,hi,n_items,hit5\n";
    for (const auto& b : buckets) {
      out << b.name << "," << b.lo << "," << (b.hi < 0 ? std::string("inf") : std::to_string(b.hi))
          << "," << b.n_items << "," << b.hit5 << "\n";
    }
    return out.str();
  }
};

// scorer(item) returns a ranked list for the item's description prompt.
// max_items > 0 probes an evenly strided subset of the catalog.
inline ProbeReport l2i_probe(const std::function<RankedList(const Item&)>& scorer,
                             const ItemCatalog& catalog,
                             std::vector<ProbeBucket> buckets = default_buckets(),
                             std::size_t max_items = 0) {
  std::vector<double> hits(buckets.size(), 0.0);
  const std::size_t stride =
      max_items == 0 ? 1 : std::max<std::size_t>(1, (catalog.size() + max_items - 1) / max_items);
  for (const Item& item : catalog.items()) {
    if (item.description.empty() || static_cast<std::size_t>(item.id) % stride != 0) continue;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      const auto& bk = buckets[b];
      if (item.platform_count < bk.lo || (bk.hi >= 0 && item.platform_count >= bk.hi)) continue;
      ++buckets[b].n_items;
      hits[b] += hit_at_k(scorer(item), item.id, 5);
      break;
    }
  }
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    buckets[b].hit5 = buckets[b].n_items ? hits[b] / static_cast<double>(buckets[b].n_items) : 0.0;
  }
  return {buckets};
}

// ---------------------------------------------------------------------------
// Latency.

struct LatencyReport {
  double single_step_ms = 0.0;
  double generative_ms = 0.0;
  double speedup = 0.0;
  std::size_t single_size = 0;
  std::size_t generative_size = 0;
  std::size_t n_contexts = 0;
  std::size_t k = 0;

  nlohmann::json json() const {
    return {{"single_step_ms", single_step_ms}, {"generative_ms", generative_ms},
            {"speedup", speedup},               {"k", k},
            {"n_contexts", n_contexts}};
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Median per-context wall clock of (a) one LM pass + scoring the item table
// + top-K and (b) constrained generation of K titles. The first `warmup`
// contexts are run but not timed.
template <typename L>
LatencyReport latency_bench(const LanguageModel<L>& lm, const ItemTable& table,
                            const ItemCatalog& catalog, const std::vector<TokenSeq>& contexts,
                            std::size_t K = 20, std::size_t warmup = 2) {
  if (contexts.size() < 20) throw Error("latency_bench: need at least 20 contexts");
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  LatencyReport r;
  r.k = K;
  r.n_contexts = contexts.size();
  std::vector<double> single, gen;
  for (std::size_t i = 0; i < warmup + contexts.size(); ++i) {
    const TokenSeq& ctx = contexts[i % contexts.size()];
    const auto t0 = clock::now();
    const auto q = lm.context_embedding(ctx);
    const auto top = top_k_indices(score_items(q, table), K);
    const auto t1 = clock::now();
    const auto titles = generate_titles(lm, catalog, ctx, K);
    const auto t2 = clock::now();
    if (i < warmup) continue;
    single.push_back(ms(t0, t1));
    gen.push_back(ms(t1, t2));
    r.single_size = top.size();
    r.generative_size = titles.size();
  }
  r.single_step_ms = median(single);
  r.generative_ms = median(gen);
  r.speedup = r.single_step_ms > 0 ? r.generative_ms / r.single_step_ms : 0.0;
  return r;
}

}  // namespace rta
