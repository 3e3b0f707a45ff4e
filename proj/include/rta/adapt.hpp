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

// The adapt step: reshape the full-catalog logit vector g of a reindexed
// LM toward a target platform, either with a diagonal affine map
// softmax(g * w + b) or by gating with a recommender,
// softmax(a g + (1 - a) g_rec) with a = sigmoid(alpha_raw). All modes train
// by maximum likelihood on platform samples with the LM frozen.

#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rta/recsys.hpp"
#include "rta/reindex.hpp"

namespace rta {

enum class BiasMode { kWOnly, kBOnly, kWAndB };
enum class AdaptMode { kBias, kGate, kCont };

inline const char* bias_mode_name(BiasMode m) {
  switch (m) {
    case BiasMode::kWOnly: return "w_only";
    case BiasMode::kBOnly: return "b_only";
    case BiasMode::kWAndB: return "w_and_b";
  }
  return "?";
}

inline BiasMode parse_bias_mode(const std::string& s) {
  for (auto m : {BiasMode::kWOnly, BiasMode::kBOnly, BiasMode::kWAndB}) {
    if (s == bias_mode_name(m)) return m;
  }
  throw Error("unknown bias mode '" + s + "' (w_only|b_only|w_and_b)");
}

inline const char* adapt_mode_name(AdaptMode m) {
  switch (m) {
    case AdaptMode::kBias: return "bias";
    case AdaptMode::kGate: return "gate";
    case AdaptMode::kCont: return "cont";
  }
  return "?";
}

inline AdaptMode parse_adapt_mode(const std::string& s) {
  for (auto m : {AdaptMode::kBias, AdaptMode::kGate, AdaptMode::kCont}) {
    if (s == adapt_mode_name(m)) return m;
  }
  throw Error("unknown adapt mode '" + s + "' (bias|gate|cont)");
}

template <typename Row>
Eigen::Matrix<typename Row::Scalar, 1, Eigen::Dynamic> softmax_row(const Row& z) {
  using S = typename Row::Scalar;
  Eigen::Matrix<S, 1, Eigen::Dynamic> p = (z.array() - z.maxCoeff()).exp().matrix();
  return p / p.sum();
}

// Diagonal W (as w) and b. A disabled component stays at its identity
// value: untrainable, w = 1 or b = 0.
template <typename T>
struct BiasParams {
  BiasMode mode = BiasMode::kWAndB;
  ad::Param<T> w;
  ad::Param<T> b;

  BiasParams() = default;
  BiasParams(int n_items, BiasMode m) : mode(m) {
    w = {"bias.w", ad::Matrix<T>::Ones(1, n_items), m != BiasMode::kBOnly, T(1)};
    b = {"bias.b", ad::Matrix<T>::Zero(1, n_items), m != BiasMode::kWOnly, T(0)};
  }
  Eigen::Index size() const { return w.value.cols(); }
};

template <typename Row, typename T>
ad::RowVector<T> apply_bias(const Row& g, const BiasParams<T>& bias) {
  if (g.size() != bias.size()) throw Error("apply_bias: size mismatch");
  const ad::RowVector<T> z =
      g.template cast<T>().cwiseProduct(bias.w.value.row(0)) + bias.b.value.row(0);
  return softmax_row(z);
}

inline double gate_alpha(double alpha_raw) { return 1.0 / (1.0 + std::exp(-alpha_raw)); }

template <typename Row>
Eigen::RowVectorXd apply_gate(const Row& g, const Row& g_rec, double alpha_raw) {
  if (g.size() != g_rec.size()) throw Error("apply_gate: size mismatch");
  const double a = gate_alpha(alpha_raw);
  const Eigen::RowVectorXd z =
      a * g.template cast<double>() + (1.0 - a) * g_rec.template cast<double>();
  return softmax_row(z);
}

// Frozen-LM inputs to adaptation: one query per platform sample.
struct AdaptData {
  ad::Matrix<float> queries;
  std::vector<ItemId> targets;
  std::vector<std::vector<ItemId>> histories;

  std::size_t size() const { return targets.size(); }
  std::vector<Interaction> interactions() const {
    std::vector<Interaction> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back({histories[i], targets[i]});
    return out;
  }
};

template <typename L>
AdaptData adapt_data(const LanguageModel<L>& lm, const std::vector<RecSample>& samples) {
  AdaptData d;
  d.queries = sample_queries(lm, samples);
  for (const auto& s : samples) {
    d.targets.push_back(s.target_item);
    d.histories.push_back(s.context_items);
  }
  return d;
}

template <typename T = float>
class Adapter {
 public:
  using Scalar = T;
  using Mat = ad::Matrix<T>;

  Adapter() = default;
  static Adapter bias(int n_items, BiasMode m) {
    Adapter a(AdaptMode::kBias, n_items);
    a.bias_ = BiasParams<T>(n_items, m);
    return a;
  }
  static Adapter gate(Recommender<T> recsys, bool tune_recsys = false) {
    Adapter a(AdaptMode::kGate, static_cast<int>(recsys.n_items()));
    a.recsys_ = std::move(recsys);
    a.tune_recsys_ = tune_recsys;
    return a;
  }
  static Adapter cont(ItemTable table) {
    Adapter a(AdaptMode::kCont, static_cast<int>(table.size()));
    a.table_ = std::move(table);
    return a;
  }

  AdaptMode mode() const { return mode_; }
  const BiasParams<T>& bias_params() const { return bias_; }
  double alpha_raw() const { return static_cast<double>(alpha_.value(0, 0)); }
  double alpha() const { return gate_alpha(alpha_raw()); }
  const std::optional<Recommender<T>>& recsys() const { return recsys_; }
  const std::optional<ItemTable>& table() const { return table_; }

  template <typename F>
  void visit(F&& f) {
    if (mode_ == AdaptMode::kBias) {
      f(bias_.w);
      f(bias_.b);
    } else if (mode_ == AdaptMode::kGate) {
      f(alpha_);
      if (tune_recsys_) recsys_->visit(f);
    }
  }

  // Base logits g for each query: the cont adapter swaps in its own table.
  ad::Matrix<float> base_logits(const ad::Matrix<float>& queries, const ItemTable& table) const {
    return score_items_batch(queries, table_ ? *table_ : table);
  }

  // Adapted logits from base logits. rec, if given, holds precomputed
  // recommender logits for the same rows.
  Mat transform(const Mat& g, const std::vector<std::vector<ItemId>>& histories,
                const Mat* rec = nullptr) const {
    if (g.cols() != n_items_) throw Error("adapter: logit width mismatch");
    switch (mode_) {
      case AdaptMode::kBias: {
        Mat z = g.array().rowwise() * bias_.w.value.row(0).array();
        return z.rowwise() + bias_.b.value.row(0);
      }
      case AdaptMode::kGate: {
        const T a = static_cast<T>(alpha());
        if (rec) return a * g + (T(1) - a) * *rec;
        return a * g + (T(1) - a) * recsys_->score_batch(histories);
      }
      case AdaptMode::kCont:
        return g;
    }
    return g;
  }

  ad::Matrix<float> scores(const ad::Matrix<float>& queries, const ItemTable& table,
                           const std::vector<std::vector<ItemId>>& histories) const {
    return transform(base_logits(queries, table).template cast<T>(), histories)
        .template cast<float>();
  }

  // MLE loss of a batch. g holds the batch's base logits; rec the frozen
  // recommender logits (ignored when the recommender is tuned).
  ad::Var<T> loss(ad::Tape<T>& tape, const Mat& g, const std::vector<Interaction>& batch,
                  const Mat* rec) const {
    std::vector<int> targets;
    for (const auto& x : batch) targets.push_back(x.target);
    if (mode_ == AdaptMode::kBias) {
      ad::Var<T> z = ad::add_row(ad::mul_row(tape.constant(g), tape.param(bias_.w)),
                                 tape.param(bias_.b));
      return ad::softmax_cross_entropy(z, targets);
    }
    if (mode_ != AdaptMode::kGate) throw Error("adapter: cont has no logit loss");
    ad::Var<T> gr;
    if (!tune_recsys_) {
      if (!rec) throw Error("adapter: missing recommender logits");
      gr = tape.constant(*rec);
    } else {
      gr = tuned_rec_logits(tape, batch);
    }
    ad::Var<T> a = ad::sigmoid(tape.param(alpha_));
    ad::Var<T> z = ad::add(gr, ad::scale_by(ad::sub(tape.constant(g), gr), a));
    return ad::softmax_cross_entropy(z, targets);
  }

  Checkpoint to_checkpoint() {
    Checkpoint c;
    c.set("kind", "adapter");
    c.set("mode", adapt_mode_name(mode_));
    c.set("n_items", std::to_string(n_items_));
    if (mode_ == AdaptMode::kBias) {
      c.set("bias_mode", bias_mode_name(bias_.mode));
      c.add_tensor("bias.w", bias_.w.value.template cast<float>());
      c.add_tensor("bias.b", bias_.b.value.template cast<float>());
    } else if (mode_ == AdaptMode::kGate) {
      c.set("tune_recsys", tune_recsys_ ? "1" : "0");
      c.add_tensor("gate.alpha", alpha_.value.template cast<float>());
      const Checkpoint r = recsys_->to_checkpoint();
      for (const auto& [k, v] : r.meta()) c.set("recsys." + k, v);
      for (const auto& [n, t] : r.tensors()) c.add_tensor("recsys/" + n, t);
    } else {
      c.add_tensor("table", table_->vectors);
    }
    return c;
  }

  static Adapter from_checkpoint(const Checkpoint& c, const std::string& origin = "adapter") {
    c.expect_kind("adapter", origin);
    const AdaptMode mode = parse_adapt_mode(c.get("mode"));
    const int n = static_cast<int>(c.get_int("n_items"));
    if (mode == AdaptMode::kBias) {
      Adapter a = bias(n, parse_bias_mode(c.get("bias_mode")));
      a.bias_.w.value = c.tensor("bias.w").template cast<T>();
      a.bias_.b.value = c.tensor("bias.b").template cast<T>();
      if (a.bias_.w.value.cols() != n || a.bias_.b.value.cols() != n) {
        throw Error(origin + ": bias shape");
      }
      return a;
    }
    if (mode == AdaptMode::kGate) {
      Checkpoint r;
      for (const auto& [k, v] : c.meta()) {
        if (k.rfind("recsys.", 0) == 0) r.set(k.substr(7), v);
      }
      for (const auto& [name, t] : c.tensors()) {
        if (name.rfind("recsys/", 0) == 0) r.add_tensor(name.substr(7), t);
      }
      Adapter a = gate(Recommender<T>::from_checkpoint(r, origin), c.get("tune_recsys") == "1");
      a.alpha_.value = c.tensor("gate.alpha").template cast<T>();
      return a;
    }
    return cont(ItemTable{c.tensor("table")});
  }

 private:
  Adapter(AdaptMode mode, int n_items) : mode_(mode), n_items_(n_items) {
    alpha_ = {"gate.alpha", Mat::Zero(1, 1)};
  }

  // Rows with an empty history cannot go through SASRec; they take its
  // popularity fallback as a constant.
  ad::Var<T> tuned_rec_logits(ad::Tape<T>& tape, const std::vector<Interaction>& batch) const {
    std::vector<int> all(static_cast<std::size_t>(n_items_));
    std::iota(all.begin(), all.end(), 0);
    if (recsys_->kind() != RecsysKind::kSASRec) {
      std::vector<const Interaction*> ptrs;
      for (const auto& x : batch) ptrs.push_back(&x);
      if (recsys_->kind() == RecsysKind::kPopularity) {
        return tape.constant(recsys_->score_batch(std::vector<std::vector<ItemId>>(batch.size())));
      }
      return recsys_->column_logits(tape, ptrs, all);
    }
    std::vector<ad::Var<T>> rows;
    for (const auto& x : batch) {
      if (x.history.empty()) {
        rows.push_back(tape.constant(Mat(recsys_->popularity_logits())));
      } else {
        rows.push_back(recsys_->column_logits(tape, {&x}, all));
      }
    }
    return ad::concat_rows(rows);
  }

  AdaptMode mode_ = AdaptMode::kBias;
  int n_items_ = 0;
  BiasParams<T> bias_;
  ad::Param<T> alpha_;
  std::optional<Recommender<T>> recsys_;
  bool tune_recsys_ = false;
  std::optional<ItemTable> table_;
};

struct AdaptConfig {
  AdaptMode mode = AdaptMode::kBias;
  BiasMode bias_mode = BiasMode::kWAndB;
  bool tune_recsys = false;
  int epochs = 30;
  int batch_size = 256;
  std::vector<double> lr_grid = {1e-2};
  std::vector<double> wd_grid = {0.0};
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  bool verbose = false;
  ReindexTrainConfig cont;  // aggregator settings for cont mode
};

// Bias or gate adapter on top of a frozen pipeline (queries + table).
// Validation HIT@10 picks the grid point and epoch; the untrained identity
// adapter is a candidate too.
template <typename T = float>
Adapter<T> train_adapter(const ItemTable& table, const AdaptData& train, const AdaptConfig& cfg,
                         const Recommender<T>* recsys = nullptr,
                         const AdaptData* valid = nullptr, FitResult* chosen = nullptr) {
  if (train.size() == 0) throw Error("train_adapter: empty dataset");
  if (cfg.mode == AdaptMode::kCont) throw Error("train_adapter: use train_cont for cont mode");
  if (cfg.mode == AdaptMode::kGate && !recsys) throw Error("train_adapter: gate needs a recommender");
  const int n_items = static_cast<int>(table.size());
  const ad::Matrix<T> g = score_items_batch(train.queries, table).template cast<T>();
  const auto interactions = train.interactions();
  const bool frozen_rec = cfg.mode == AdaptMode::kGate && !cfg.tune_recsys;
  ad::Matrix<T> rec;
  if (frozen_rec) rec = recsys->score_batch(train.histories);
  const bool has_valid = valid && valid->size() > 0;
  ad::Matrix<T> vg, vrec;
  if (has_valid) {
    vg = score_items_batch(valid->queries, table).template cast<T>();
    if (frozen_rec) vrec = recsys->score_batch(valid->histories);
  }
  auto make = [&] {
    return cfg.mode == AdaptMode::kBias ? Adapter<T>::bias(n_items, cfg.bias_mode)
                                        : Adapter<T>::gate(*recsys, cfg.tune_recsys);
  };
  auto train_one = [&](Adapter<T>& a, double lr, double wd) {
    FitConfig fc;
    fc.epochs = cfg.epochs;
    fc.batch_size = cfg.batch_size;
    fc.lr = lr;
    fc.weight_decay = wd;
    fc.clip_norm = cfg.clip_norm;
    fc.seed = cfg.seed;
    fc.label = std::string("adapt_") + adapt_mode_name(cfg.mode);
    fc.verbose = cfg.verbose;
    fc.validate_initial = true;
    std::function<double()> validate;
    if (has_valid) {
      validate = [&] {
        return validation_hit_rate(a.transform(vg, valid->histories, frozen_rec ? &vrec : nullptr),
                                   valid->targets, valid->histories, 10);
      };
    }
    return fit(a, train.size(), fc,
               [&](ad::Tape<T>& tape, const std::vector<std::size_t>& idx, Rng&) {
                 ad::Matrix<T> gb(static_cast<Eigen::Index>(idx.size()), g.cols());
                 ad::Matrix<T> rb;
                 if (frozen_rec) rb.resize(gb.rows(), gb.cols());
                 std::vector<Interaction> batch;
                 for (std::size_t k = 0; k < idx.size(); ++k) {
                   const auto r = static_cast<Eigen::Index>(idx[k]);
                   gb.row(static_cast<Eigen::Index>(k)) = g.row(r);
                   if (frozen_rec) rb.row(static_cast<Eigen::Index>(k)) = rec.row(r);
                   batch.push_back(interactions[idx[k]]);
                 }
                 return a.loss(tape, gb, batch, frozen_rec ? &rb : nullptr);
               },
               validate);
  };
  return grid_search<Adapter<T>>(cfg.lr_grid, cfg.wd_grid, make, train_one, has_valid, chosen,
                                 cfg.verbose);
}

// Cont.: keep training the aggregator contrastively on platform samples
// (LM frozen) and use the rebuilt item table.
template <typename T = float>
Adapter<T> train_cont(Aggregator<float> agg, const TitleBank<float>& bank, const AdaptData& train,
                      const AdaptConfig& cfg) {
  if (train.size() == 0) throw Error("train_adapter: empty dataset");
  std::vector<int> targets(train.targets.begin(), train.targets.end());
  ReindexTrainConfig rc = cfg.cont;
  rc.seed = cfg.seed;
  rc.verbose = cfg.verbose;
  fit_aggregator(agg, bank, train.queries, targets, rc);
  return Adapter<T>::cont(ItemTable{aggregate_all(agg, bank)});
}

// Popularity alignment between a model's top-K lists and dataset targets.
struct AlignmentReport {
  int k = 10;
  std::size_t n_contexts = 0;
  double kl = 0.0;
  std::vector<double> dataset_share;
  std::vector<double> model_share;  // unsmoothed top-K frequency share

  // Items ordered by dataset share (ties by id).
  std::vector<ItemId> top(std::size_t n) const {
    std::vector<double> s(dataset_share);
    return top_k_indices(s, n);
  }

  std::string csv(const ItemCatalog& catalog) const {
    std::ostringstream out;
    out.precision(8);
    out << "item_id,title,dataset_share,model_share\n";
    for (std::size_t i = 0; i < dataset_share.size(); ++i) {
      std::string title = catalog.item(static_cast<ItemId>(i)).title;
      std::string quoted = "\"";
      for (char ch : title) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      quoted += "\"";
      out << i << "," << quoted << "," << dataset_share[i] << "," << model_share[i] << "\n";
    }
    return out.str();
  }

  nlohmann::json json() const {
    return {{"kl", kl}, {"k", k}, {"n_contexts", n_contexts}};
  }
};

// KL(dataset || model) where the model distribution is the top-K mention
// frequency with add-one smoothing. Context items are excluded from the
// lists when histories are given.
template <typename Mat>
AlignmentReport alignment_report(const Mat& scores, const std::vector<ItemId>& targets,
                                 const std::vector<std::vector<ItemId>>& histories, int K) {
  if (K < 1) throw Error("alignment_report: K must be >= 1");
  if (static_cast<std::size_t>(scores.rows()) != targets.size()) {
    throw Error("alignment_report: scores/targets mismatch");
  }
  const auto n_items = static_cast<std::size_t>(scores.cols());
  AlignmentReport r;
  r.k = K;
  r.n_contexts = targets.size();
  std::vector<double> listed(n_items, 0.0), target_count(n_items, 0.0);
  double total_listed = 0.0;
  static const std::vector<ItemId> kNone;
  for (std::size_t row = 0; row < targets.size(); ++row) {
    const auto& ex = histories.empty() ? kNone : histories[row];
    for (ItemId id : rank_excluding(scores.row(static_cast<Eigen::Index>(row)), ex,
                                    static_cast<std::size_t>(K))) {
      listed[static_cast<std::size_t>(id)] += 1.0;
      total_listed += 1.0;
    }
    target_count.at(static_cast<std::size_t>(targets[row])) += 1.0;
  }
  const double n = static_cast<double>(targets.size());
  r.dataset_share.resize(n_items);
  r.model_share.resize(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    r.dataset_share[i] = n > 0 ? target_count[i] / n : 0.0;
    r.model_share[i] = total_listed > 0 ? listed[i] / total_listed : 0.0;
    if (r.dataset_share[i] > 0) {
      const double m = (listed[i] + 1.0) / (total_listed + static_cast<double>(n_items));
      r.kl += r.dataset_share[i] * std::log(r.dataset_share[i] / m);
    }
  }
  return r;
}

}  // namespace rta
