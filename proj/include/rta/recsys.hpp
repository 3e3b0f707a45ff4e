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

// Item-based recommenders over in-conversation histories: Popularity, FISM
// and SASRec. Each produces a logit for every catalog item.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "rta/checkpoint.hpp"
#include "rta/data.hpp"
#include "rta/metrics.hpp"
#include "rta/nn.hpp"
#include "rta/trainer.hpp"

namespace rta {

enum class RecsysKind { kPopularity, kFISM, kSASRec };

inline const char* recsys_name(RecsysKind k) {
  switch (k) {
    case RecsysKind::kPopularity: return "popularity";
    case RecsysKind::kFISM: return "fism";
    case RecsysKind::kSASRec: return "sasrec";
  }
  return "?";
}

inline RecsysKind parse_recsys(const std::string& s) {
  for (auto k : {RecsysKind::kPopularity, RecsysKind::kFISM, RecsysKind::kSASRec}) {
    if (s == recsys_name(k)) return k;
  }
  throw Error("unknown recsys '" + s + "' (popularity|fism|sasrec)");
}

struct Interaction {
  std::vector<ItemId> history;  // most recent last
  ItemId target = 0;
};

inline std::vector<Interaction> interactions_from(const std::vector<RecSample>& samples) {
  std::vector<Interaction> out;
  for (const auto& s : samples) out.push_back({s.context_items, s.target_item});
  return out;
}

struct RecsysConfig {
  RecsysKind kind = RecsysKind::kFISM;
  int dim = 64;
  int n_layers = 2;
  int n_heads = 2;
  int max_history = 50;
  int n_negatives = 100;
  int epochs = 20;
  int batch_size = 256;
  std::vector<double> lr_grid = {1e-3};
  std::vector<double> wd_grid = {0.0};
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  bool verbose = false;
};

template <typename T = float>
class Recommender {
 public:
  using Scalar = T;
  using Mat = ad::Matrix<T>;

  Recommender() = default;
  Recommender(RecsysKind kind, int n_items, const RecsysConfig& cfg)
      : kind_(kind), n_items_(n_items), dim_(cfg.dim), n_heads_(cfg.n_heads),
        max_history_(cfg.max_history), seed_(cfg.seed),
        counts_(static_cast<std::size_t>(n_items), 0.0) {
    if (n_items < 1) throw Error("recsys: empty catalog");
    Rng rng = Rng(cfg.seed).split("recsys_init");
    if (kind == RecsysKind::kFISM) {
      p_ = {"fism.P", nn::normal_matrix<T>(n_items, cfg.dim, 0.1, rng)};
      q_ = {"fism.Q", nn::normal_matrix<T>(n_items, cfg.dim, 0.1, rng)};
      bias_ = {"fism.bias", Mat::Zero(n_items, 1)};
    } else if (kind == RecsysKind::kSASRec) {
      if (cfg.max_history < 1) throw Error("recsys: max_history must be >= 1");
      emb_ = {"sasrec.items", nn::normal_matrix<T>(n_items, cfg.dim, 0.1, rng)};
      pos_ = {"sasrec.pos", nn::normal_matrix<T>(cfg.max_history, cfg.dim, 0.02, rng)};
      for (int l = 0; l < cfg.n_layers; ++l) {
        blocks_.emplace_back("sasrec.block" + std::to_string(l), cfg.dim, cfg.n_heads,
                             cfg.n_layers, rng);
      }
      ln_ = nn::LayerNorm<T>("sasrec.ln", cfg.dim);
    }
  }

  RecsysKind kind() const { return kind_; }
  std::size_t n_items() const { return static_cast<std::size_t>(n_items_); }
  const std::vector<double>& counts() const { return counts_; }

  // Target frequencies; Popularity's model and SASRec's empty-history
  // fallback.
  void set_counts(const std::vector<Interaction>& data) {
    std::fill(counts_.begin(), counts_.end(), 0.0);
    for (const auto& x : data) {
      check_id(x.target);
      counts_[static_cast<std::size_t>(x.target)] += 1.0;
    }
  }

  template <typename F>
  void visit(F&& f) {
    if (kind_ == RecsysKind::kFISM) {
      f(p_);
      f(q_);
      f(bias_);
    } else if (kind_ == RecsysKind::kSASRec) {
      f(emb_);
      f(pos_);
      for (auto& b : blocks_) b.visit(f);
      ln_.visit(f);
    }
  }

  ad::RowVector<T> popularity_logits() const {
    ad::RowVector<T> g(n_items_);
    for (int i = 0; i < n_items_; ++i) {
      g(i) = static_cast<T>(std::log(counts_[static_cast<std::size_t>(i)] + 1.0));
    }
    return g;
  }

  // One row of logits per history.
  Mat score_batch(const std::vector<std::vector<ItemId>>& histories) const {
    Mat out(static_cast<Eigen::Index>(histories.size()), n_items_);
    if (kind_ == RecsysKind::kPopularity) {
      const auto g = popularity_logits();
      for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = g;
      return out;
    }
    if (kind_ == RecsysKind::kFISM) {
      for (std::size_t r = 0; r < histories.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = fism_row(histories[r]);
      }
      return out;
    }
    // SASRec in chunks; empty histories fall back to popularity.
    std::vector<std::size_t> rows;
    std::vector<std::vector<ItemId>> hs;
    auto flush = [&] {
      if (rows.empty()) return;
      ad::Tape<T> tape(false);
      const Mat h = sasrec_hidden(tape, hs).value();
      const Mat z = h * emb_.value.transpose();
      for (std::size_t k = 0; k < rows.size(); ++k) {
        out.row(static_cast<Eigen::Index>(rows[k])) = z.row(static_cast<Eigen::Index>(k));
      }
      rows.clear();
      hs.clear();
    };
    for (std::size_t r = 0; r < histories.size(); ++r) {
      if (histories[r].empty()) {
        out.row(static_cast<Eigen::Index>(r)) = popularity_logits();
        continue;
      }
      rows.push_back(r);
      hs.push_back(histories[r]);
      if (rows.size() == 256) flush();
    }
    flush();
    return out;
  }

  ad::RowVector<T> score(const std::vector<ItemId>& history) const {
    return score_batch({history}).row(0);
  }

  // Sampled softmax: each row is scored against its own target and the
  // shared negatives (a negative equal to the target is dropped).
  ad::Var<T> loss(ad::Tape<T>& tape, const std::vector<const Interaction*>& batch,
                  const std::vector<int>& negatives) const {
    std::vector<int> columns;
    std::map<int, int> col_of;
    auto column = [&](int id) {
      auto [it, inserted] = col_of.emplace(id, static_cast<int>(columns.size()));
      if (inserted) columns.push_back(id);
      return it->second;
    };
    std::vector<int> target_col;
    for (const Interaction* x : batch) {
      check_id(x->target);
      target_col.push_back(column(x->target));
    }
    for (int n : negatives) {
      check_id(n);
      column(n);
    }
    ad::Var<T> z = column_logits(tape, batch, columns);
    Mat mask = Mat::Constant(z.rows(), z.cols(), -std::numeric_limits<T>::infinity());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      mask(r, target_col[static_cast<std::size_t>(r)]) = T(0);
      for (int n : negatives) mask(r, col_of.at(n)) = T(0);
    }
    return ad::softmax_cross_entropy(z, target_col, &mask);
  }

  // Logits of the given item columns on the tape, one row per interaction
  // (targets are ignored).
  ad::Var<T> column_logits(ad::Tape<T>& tape, const std::vector<const Interaction*>& batch,
                           const std::vector<int>& columns) const {
    if (kind_ == RecsysKind::kFISM) return fism_logits(tape, batch, columns);
    if (kind_ == RecsysKind::kSASRec) {
      std::vector<std::vector<ItemId>> hs;
      for (const Interaction* x : batch) {
        if (x->history.empty()) throw Error("sasrec: empty history in training batch");
        hs.push_back(x->history);
      }
      return ad::matmul_bt(sasrec_hidden(tape, hs), ad::gather_rows(tape.param(emb_), columns));
    }
    throw Error("recsys: popularity has no trainable logits");
  }

  Checkpoint to_checkpoint() {
    Checkpoint c;
    c.set("kind", "recsys");
    c.set("recsys", recsys_name(kind_));
    c.set("n_items", std::to_string(n_items_));
    c.set("dim", std::to_string(dim_));
    c.set("n_layers", std::to_string(blocks_.size()));
    c.set("n_heads", std::to_string(n_heads_));
    c.set("max_history", std::to_string(max_history_));
    c.set("seed", std::to_string(seed_));
    Checkpoint::Tensor counts(1, n_items_);
    for (int i = 0; i < n_items_; ++i) counts(0, i) = static_cast<float>(counts_[static_cast<std::size_t>(i)]);
    c.add_tensor("counts", counts);
    put_params(c, *this);
    return c;
  }

  static Recommender from_checkpoint(const Checkpoint& c, const std::string& origin = "recsys") {
    c.expect_kind("recsys", origin);
    RecsysConfig cfg;
    cfg.dim = static_cast<int>(c.get_int("dim"));
    cfg.n_layers = static_cast<int>(c.get_int("n_layers"));
    cfg.n_heads = static_cast<int>(c.get_int("n_heads"));
    cfg.max_history = static_cast<int>(c.get_int("max_history"));
    cfg.seed = std::stoull(c.get("seed"));
    Recommender r(parse_recsys(c.get("recsys")), static_cast<int>(c.get_int("n_items")), cfg);
    const auto& counts = c.tensor("counts");
    if (counts.cols() != r.n_items_) throw Error(origin + ": counts shape");
    for (int i = 0; i < r.n_items_; ++i) r.counts_[static_cast<std::size_t>(i)] = counts(0, i);
    get_params(c, r);
    return r;
  }

 private:
  void check_id(ItemId id) const {
    if (id < 0 || id >= n_items_) {
      throw Error("recsys: item id " + std::to_string(id) + " out of range");
    }
  }

  // Mean of P over the history, excluding every occurrence of the scored
  // item, dotted with Q[i], plus bias. An empty remainder contributes 0.
  ad::RowVector<T> fism_row(const std::vector<ItemId>& history) const {
    const Eigen::Index d = p_.value.cols();
    ad::RowVector<T> sum = ad::RowVector<T>::Zero(d);
    std::map<ItemId, int> mult;
    for (ItemId h : history) {
      check_id(h);
      sum += p_.value.row(h);
      ++mult[h];
    }
    const T n = static_cast<T>(history.size());
    ad::RowVector<T> g = bias_.value.col(0).transpose();
    if (!history.empty()) g += (sum / n) * q_.value.transpose();
    for (const auto& [h, c] : mult) {
      const T rest = n - static_cast<T>(c);
      const T dot = rest > T(0)
                        ? ((sum - static_cast<T>(c) * p_.value.row(h)) / rest).dot(q_.value.row(h))
                        : T(0);
      g(h) = dot + bias_.value(h, 0);
    }
    return g;
  }

  ad::Var<T> fism_logits(ad::Tape<T>& tape, const std::vector<const Interaction*>& batch,
                         const std::vector<int>& columns) const {
    // Append a constant 1 to user vectors and the bias to item vectors so
    // one product gives P-mean . Q + bias.
    std::vector<std::vector<std::pair<int, T>>> bags;
    std::vector<std::pair<int, int>> fix_pos;
    std::vector<std::vector<std::pair<int, T>>> fix_bags;
    std::vector<int> fix_items;
    std::map<int, int> col_of;
    for (std::size_t c = 0; c < columns.size(); ++c) col_of[columns[c]] = static_cast<int>(c);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto& hist = batch[r]->history;
      std::vector<std::pair<int, T>> bag;
      for (ItemId h : hist) {
        check_id(h);
        bag.emplace_back(h, T(1) / static_cast<T>(hist.size()));
      }
      bags.push_back(std::move(bag));
      std::set<ItemId> seen;
      for (ItemId h : hist) {
        auto it = col_of.find(h);
        if (it == col_of.end() || !seen.insert(h).second) continue;
        std::vector<std::pair<int, T>> rest;
        int n_rest = 0;
        for (ItemId o : hist) n_rest += o != h;
        for (ItemId o : hist) {
          if (o != h) rest.emplace_back(o, T(1) / static_cast<T>(n_rest));
        }
        fix_pos.emplace_back(static_cast<int>(r), it->second);
        fix_bags.push_back(std::move(rest));
        fix_items.push_back(h);
      }
    }
    const auto B = static_cast<Eigen::Index>(batch.size());
    ad::Var<T> P = tape.param(p_);
    ad::Var<T> Q = tape.param(q_);
    ad::Var<T> bias = tape.param(bias_);
    ad::Var<T> u = ad::concat_cols<T>({ad::embedding_bag(P, bags), tape.constant(Mat::Ones(B, 1))});
    ad::Var<T> items = ad::concat_cols<T>({ad::gather_rows(Q, columns), ad::gather_rows(bias, columns)});
    ad::Var<T> z = ad::matmul_bt(u, items);
    if (fix_pos.empty()) return z;
    const auto F = static_cast<Eigen::Index>(fix_pos.size());
    ad::Var<T> fu = ad::concat_cols<T>({ad::embedding_bag(P, fix_bags), tape.constant(Mat::Ones(F, 1))});
    ad::Var<T> fi = ad::concat_cols<T>({ad::gather_rows(Q, fix_items), ad::gather_rows(bias, fix_items)});
    return ad::replace_entries(z, fix_pos, ad::rowwise_dot(fu, fi));
  }

  // Final-position hidden state of each (left-truncated) history.
  ad::Var<T> sasrec_hidden(ad::Tape<T>& tape,
                           const std::vector<std::vector<ItemId>>& histories) const {
    std::vector<int> ids, pos, last;
    std::vector<ad::Segment> segments;
    for (const auto& h : histories) {
      const std::size_t keep = std::min(h.size(), static_cast<std::size_t>(max_history_));
      const int start = static_cast<int>(ids.size());
      segments.push_back({start, static_cast<int>(keep)});
      for (std::size_t k = 0; k < keep; ++k) {
        const ItemId id = h[h.size() - keep + k];
        check_id(id);
        ids.push_back(id);
        pos.push_back(static_cast<int>(k));
      }
      last.push_back(static_cast<int>(ids.size()) - 1);
    }
    ad::Var<T> x = ad::add(ad::gather_rows(tape.param(emb_), ids),
                           ad::gather_rows(tape.param(pos_), pos));
    for (const auto& b : blocks_) x = b(tape, x, segments, true);
    return ln_(tape, ad::gather_rows(x, last));
  }

  RecsysKind kind_ = RecsysKind::kPopularity;
  int n_items_ = 0;
  int dim_ = 64;
  int n_heads_ = 2;
  int max_history_ = 50;
  std::uint64_t seed_ = 0;
  std::vector<double> counts_;
  ad::Param<T> p_, q_, bias_;  // FISM
  ad::Param<T> emb_, pos_;     // SASRec
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> ln_;
};

// Trains one recommender per grid point and keeps the best by validation
// HIT@10 (remove-repeated protocol). Popularity only counts targets.
template <typename T = float>
Recommender<T> train_recsys(int n_items, const std::vector<Interaction>& train,
                            const RecsysConfig& cfg,
                            const std::vector<Interaction>* valid = nullptr,
                            FitResult* chosen = nullptr) {
  if (train.empty()) throw Error("train_recsys: empty training data");
  auto make = [&] {
    Recommender<T> r(cfg.kind, n_items, cfg);
    r.set_counts(train);
    return r;
  };
  if (cfg.kind == RecsysKind::kPopularity) return make();
  if (cfg.n_negatives < 1) throw Error("train_recsys: n_negatives must be >= 1");
  std::vector<const Interaction*> usable;
  for (const auto& x : train) {
    if (cfg.kind == RecsysKind::kSASRec && x.history.empty()) continue;
    usable.push_back(&x);
  }
  if (usable.empty()) throw Error("train_recsys: no training interaction has a history");
  std::vector<std::vector<ItemId>> valid_hist;
  std::vector<ItemId> valid_targets;
  if (valid) {
    for (const auto& x : *valid) {
      valid_hist.push_back(x.history);
      valid_targets.push_back(x.target);
    }
  }
  auto train_one = [&](Recommender<T>& model, double lr, double wd) {
    FitConfig fc;
    fc.epochs = cfg.epochs;
    fc.batch_size = cfg.batch_size;
    fc.lr = lr;
    fc.weight_decay = wd;
    fc.clip_norm = cfg.clip_norm;
    fc.seed = cfg.seed;
    fc.label = std::string(recsys_name(cfg.kind));
    fc.verbose = cfg.verbose;
    std::function<double()> validate;
    if (valid && !valid->empty()) {
      validate = [&] {
        return validation_hit_rate(model.score_batch(valid_hist), valid_targets, valid_hist, 10);
      };
    }
    return fit(model, usable.size(), fc,
               [&](ad::Tape<T>& tape, const std::vector<std::size_t>& idx, Rng& rng) {
                 std::vector<const Interaction*> batch;
                 for (std::size_t i : idx) batch.push_back(usable[i]);
                 std::vector<int> negs;
                 for (int k = 0; k < cfg.n_negatives; ++k) {
                   negs.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n_items))));
                 }
                 return model.loss(tape, batch, negs);
               },
               validate);
  };
  return grid_search<Recommender<T>>(cfg.lr_grid, cfg.wd_grid, make, train_one,
                                     valid && !valid->empty(), chosen, cfg.verbose);
}

}  // namespace rta
