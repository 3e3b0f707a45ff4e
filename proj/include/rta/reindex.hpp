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

// Reindexing: collapse each multi-token title into one item vector with a
// trainable aggregator, trained contrastively against frozen-LM context
// embeddings, so the whole catalog can be scored with one matrix product.

#include <chrono>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rta/checkpoint.hpp"
#include "rta/lm.hpp"
#include "rta/nn.hpp"

namespace rta {

enum class AggregatorKind { kEmbed, kWeighted, kTRM, kRNN };

inline const char* aggregator_name(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::kEmbed: return "embed";
    case AggregatorKind::kWeighted: return "weighted";
    case AggregatorKind::kTRM: return "trm";
    case AggregatorKind::kRNN: return "rnn";
  }
  return "?";
}

inline AggregatorKind parse_aggregator(const std::string& s) {
  for (auto k : {AggregatorKind::kEmbed, AggregatorKind::kWeighted,
                 AggregatorKind::kTRM, AggregatorKind::kRNN}) {
    if (s == aggregator_name(k)) return k;
  }
  throw Error("unknown aggregator '" + s + "' (embed|weighted|trm|rnn)");
}

enum class NegativeStrategy { kInBatch, kUniform, kMixed };

inline const char* negative_name(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::kInBatch: return "in_batch";
    case NegativeStrategy::kUniform: return "uniform";
    case NegativeStrategy::kMixed: return "mixed";
  }
  return "?";
}

inline NegativeStrategy parse_negatives(const std::string& s) {
  for (auto k : {NegativeStrategy::kInBatch, NegativeStrategy::kUniform,
                 NegativeStrategy::kMixed}) {
    if (s == negative_name(k)) return k;
  }
  throw Error("unknown negative strategy '" + s + "' (in_batch|uniform|mixed)");
}

// Uniform by default: in-batch positives follow item popularity, which
// tilts the learned scores away from the LM's own ranking.
struct NegativeSet {
  NegativeStrategy strategy = NegativeStrategy::kUniform;
  int n_negatives = 256;  // uniform draws per batch

  void validate() const {
    if (strategy != NegativeStrategy::kInBatch && n_negatives < 1) {
      throw Error("reindex: n_negatives must be >= 1 for uniform/mixed");
    }
  }
};

// -log softmax over {v_pos} + negatives, evaluated at v_pos.
template <typename Vec>
double reindex_loss(const Vec& q, const Vec& v_pos, const std::vector<Vec>& negatives) {
  const double z0 = static_cast<double>(q.dot(v_pos));
  std::vector<double> z;
  for (const auto& n : negatives) z.push_back(static_cast<double>(q.dot(n)));
  const double m = std::max(z0, z.empty() ? z0 : *std::max_element(z.begin(), z.end()));
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  // log1p keeps full precision when the positive dominates.
  if (m == z0) return std::log1p(s);
  return (m - z0) + std::log(std::exp(z0 - m) + s);
}

// Title token embeddings of every item, stacked back to back.
template <typename T>
struct TitleBank {
  ad::Matrix<T> rows;
  std::vector<int> offset;
  std::vector<int> length;

  std::size_t size() const { return offset.size(); }
  int max_length() const {
    int m = 0;
    for (int l : length) m = std::max(m, l);
    return m;
  }
};

template <typename T>
TitleBank<T> make_title_bank(const std::vector<std::vector<ad::RowVector<T>>>& titles,
                             int d) {
  TitleBank<T> bank;
  int total = 0;
  for (const auto& t : titles) {
    if (t.empty()) throw Error("reindex: empty title");
    bank.offset.push_back(total);
    bank.length.push_back(static_cast<int>(t.size()));
    total += static_cast<int>(t.size());
  }
  bank.rows.resize(total, d);
  Eigen::Index r = 0;
  for (const auto& t : titles) {
    for (const auto& row : t) bank.rows.row(r++) = row;
  }
  return bank;
}

template <typename T, typename L>
TitleBank<T> title_bank(const LanguageModel<L>& lm, const ItemCatalog& catalog) {
  std::vector<std::vector<ad::RowVector<T>>> titles;
  for (const auto& item : catalog.items()) {
    std::vector<ad::RowVector<T>> t;
    for (const auto& row : lm.embed_tokens(item.title_tokens)) {
      t.push_back(row.template cast<T>());
    }
    titles.push_back(std::move(t));
  }
  return make_title_bank<T>(titles, lm.d_model());
}

struct AggregatorConfig {
  AggregatorKind kind = AggregatorKind::kRNN;
  int d_model = 64;
  int n_items = 0;         // Embed table rows
  int max_title_len = 24;  // Weighted / TRM positions
  int rnn_hidden = 64;
  int trm_heads = 2;
  std::uint64_t seed = 0;
};

template <typename T = float>
class Aggregator {
 public:
  using Scalar = T;
  using Mat = ad::Matrix<T>;

  Aggregator() = default;
  explicit Aggregator(const AggregatorConfig& config) : config_(config) {
    const int d = config.d_model;
    if (d < 1) throw Error("aggregator: d_model must be positive");
    Rng rng = Rng(config.seed).split("aggregator_init");
    switch (config.kind) {
      case AggregatorKind::kEmbed:
        if (config.n_items < 1) throw Error("aggregator: embed needs n_items");
        table_ = {"agg.table", nn::normal_matrix<T>(config.n_items, d, 0.02, rng)};
        break;
      case AggregatorKind::kWeighted:
        if (config.max_title_len < 1) throw Error("aggregator: max_title_len < 1");
        pos_logits_ = {"agg.pos_logits", Mat::Zero(1, config.max_title_len)};
        proj_ = nn::Linear<T>("agg.proj", d, d, 0.0, rng, false);
        proj_.w.value = Mat::Identity(d, d);
        break;
      case AggregatorKind::kTRM:
        cls_ = {"agg.cls", nn::normal_matrix<T>(1, d, 0.02, rng)};
        positions_ = {"agg.pos", nn::normal_matrix<T>(config.max_title_len + 1, d, 0.01, rng)};
        block_ = nn::TransformerBlock<T>("agg.block", d, config.trm_heads, 1, rng);
        ln_ = nn::LayerNorm<T>("agg.ln", d);
        proj_ = nn::Linear<T>("agg.proj", d, d, 0.0, rng, false);
        proj_.w.value = Mat::Identity(d, d);
        break;
      case AggregatorKind::kRNN:
        if (config.rnn_hidden < 1) throw Error("aggregator: rnn_hidden < 1");
        fwd_ = nn::GRUCell<T>("agg.gru_fwd", d, config.rnn_hidden, rng);
        bwd_ = nn::GRUCell<T>("agg.gru_bwd", d, config.rnn_hidden, rng);
        proj_ = nn::Linear<T>("agg.proj", 2 * config.rnn_hidden, d,
                              1.0 / std::sqrt(2.0 * config.rnn_hidden), rng);
        break;
    }
  }

  const AggregatorConfig& config() const { return config_; }
  AggregatorKind kind() const { return config_.kind; }

  template <typename F>
  void visit(F&& f) {
    switch (config_.kind) {
      case AggregatorKind::kEmbed:
        f(table_);
        break;
      case AggregatorKind::kWeighted:
        f(pos_logits_);
        proj_.visit(f);
        break;
      case AggregatorKind::kTRM:
        f(cls_);
        f(positions_);
        block_.visit(f);
        ln_.visit(f);
        proj_.visit(f);
        break;
      case AggregatorKind::kRNN:
        fwd_.visit(f);
        bwd_.visit(f);
        proj_.visit(f);
        break;
    }
  }

  // Throws if some title cannot be aggregated by this kind.
  void check_bank(const TitleBank<T>& bank) const {
    if (bank.rows.cols() != config_.d_model && bank.size() > 0) {
      throw Error("aggregator: token embedding width mismatch");
    }
    if (config_.kind == AggregatorKind::kEmbed &&
        static_cast<int>(bank.size()) > config_.n_items) {
      throw Error("aggregator: catalog larger than the embed table");
    }
    if (config_.kind == AggregatorKind::kWeighted ||
        config_.kind == AggregatorKind::kTRM) {
      for (std::size_t i = 0; i < bank.size(); ++i) {
        if (bank.length[i] > config_.max_title_len) {
          throw Error("aggregator: title of item " + std::to_string(i) + " has " +
                      std::to_string(bank.length[i]) + " tokens, max_title_len is " +
                      std::to_string(config_.max_title_len));
        }
      }
    }
  }

  // Item vectors for ids (rows follow ids).
  ad::Var<T> forward(ad::Tape<T>& tape, const TitleBank<T>& bank,
                     const std::vector<int>& ids) const {
    if (config_.kind == AggregatorKind::kEmbed) {
      for (int id : ids) {
        if (id < 0 || id >= config_.n_items) throw Error("aggregator: item id out of range");
      }
      return ad::gather_rows(tape.param(table_), ids);
    }
    std::vector<int> lengths, token_rows;
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= bank.size()) {
        throw Error("aggregator: item id out of range");
      }
      const int len = bank.length[static_cast<std::size_t>(id)];
      lengths.push_back(len);
      for (int j = 0; j < len; ++j) {
        token_rows.push_back(bank.offset[static_cast<std::size_t>(id)] + j);
      }
    }
    switch (config_.kind) {
      case AggregatorKind::kWeighted: {
        for (int len : lengths) {
          if (len > config_.max_title_len) {
            throw Error("aggregator: title longer than max_title_len");
          }
        }
        Mat x(static_cast<Eigen::Index>(token_rows.size()), config_.d_model);
        for (std::size_t r = 0; r < token_rows.size(); ++r) {
          x.row(static_cast<Eigen::Index>(r)) = bank.rows.row(token_rows[r]);
        }
        return proj_(tape, ad::position_pool(tape.constant(std::move(x)), lengths,
                                             tape.param(pos_logits_)));
      }
      case AggregatorKind::kTRM:
        return trm(tape, bank, token_rows, lengths);
      case AggregatorKind::kRNN:
        return rnn(tape, bank, token_rows, lengths);
      default:
        break;
    }
    throw Error("aggregator: bad kind");
  }

  // One item from explicit token embeddings (Embed uses item_id only).
  ad::RowVector<T> aggregate(const std::vector<ad::RowVector<T>>& token_embeds,
                             ItemId item_id) const {
    ad::Tape<T> tape(false);
    if (config_.kind == AggregatorKind::kEmbed) {
      return forward(tape, TitleBank<T>{}, {item_id}).value().row(0);
    }
    const TitleBank<T> bank = make_title_bank<T>({token_embeds}, config_.d_model);
    check_bank(bank);
    return forward(tape, bank, {0}).value().row(0);
  }

  Checkpoint to_checkpoint() {
    Checkpoint c;
    c.set("kind", "aggregator");
    c.set("aggregator", aggregator_name(config_.kind));
    c.set("d_model", std::to_string(config_.d_model));
    c.set("n_items", std::to_string(config_.n_items));
    c.set("max_title_len", std::to_string(config_.max_title_len));
    c.set("rnn_hidden", std::to_string(config_.rnn_hidden));
    c.set("trm_heads", std::to_string(config_.trm_heads));
    c.set("seed", std::to_string(config_.seed));
    put_params(c, *this);
    return c;
  }

  static Aggregator from_checkpoint(const Checkpoint& c,
                                    const std::string& origin = "aggregator") {
    c.expect_kind("aggregator", origin);
    AggregatorConfig cfg;
    cfg.kind = parse_aggregator(c.get("aggregator"));
    cfg.d_model = static_cast<int>(c.get_int("d_model"));
    cfg.n_items = static_cast<int>(c.get_int("n_items"));
    cfg.max_title_len = static_cast<int>(c.get_int("max_title_len"));
    cfg.rnn_hidden = static_cast<int>(c.get_int("rnn_hidden"));
    cfg.trm_heads = static_cast<int>(c.get_int("trm_heads"));
    cfg.seed = std::stoull(c.get("seed"));
    Aggregator a(cfg);
    get_params(c, a);
    return a;
  }

 private:
  // [CLS] + title through one bidirectional encoder layer; CLS output.
  ad::Var<T> trm(ad::Tape<T>& tape, const TitleBank<T>& bank,
                 const std::vector<int>& token_rows,
                 const std::vector<int>& lengths) const {
    const int d = config_.d_model;
    // Rows: token rows from the bank, then one CLS row per item; gather
    // them into segment order below.
    Mat tokens(static_cast<Eigen::Index>(token_rows.size()), d);
    for (std::size_t r = 0; r < token_rows.size(); ++r) {
      tokens.row(static_cast<Eigen::Index>(r)) = bank.rows.row(token_rows[r]);
    }
    std::vector<int> order, pos, cls_rows;
    std::vector<ad::Segment> segments;
    const int n_tok = static_cast<int>(token_rows.size());
    int tok = 0;
    for (std::size_t b = 0; b < lengths.size(); ++b) {
      const int start = static_cast<int>(order.size());
      segments.push_back({start, lengths[b] + 1});
      cls_rows.push_back(start);
      order.push_back(n_tok);  // CLS row (appended below)
      pos.push_back(0);
      for (int j = 0; j < lengths[b]; ++j) {
        order.push_back(tok++);
        pos.push_back(j + 1);
      }
    }
    ad::Var<T> all = ad::concat_rows<T>({tape.constant(std::move(tokens)), tape.param(cls_)});
    ad::Var<T> x = ad::add(ad::gather_rows(all, order),
                           ad::gather_rows(tape.param(positions_), pos));
    x = block_(tape, x, segments, false);
    return proj_(tape, ln_(tape, ad::gather_rows(x, cls_rows)));
  }

  // Bidirectional GRU over left-aligned titles; masks freeze the state
  // outside each title, so the backward pass starts at its last token.
  ad::Var<T> rnn(ad::Tape<T>& tape, const TitleBank<T>& bank,
                 const std::vector<int>& token_rows,
                 const std::vector<int>& lengths) const {
    const int d = config_.d_model;
    const int h = config_.rnn_hidden;
    const Eigen::Index B = static_cast<Eigen::Index>(lengths.size());
    int max_len = 0;
    for (int len : lengths) max_len = std::max(max_len, len);
    std::vector<int> first(lengths.size());
    for (std::size_t b = 0, off = 0; b < lengths.size(); ++b) {
      first[b] = static_cast<int>(off);
      off += static_cast<std::size_t>(lengths[b]);
    }
    std::vector<ad::Var<T>> gx_f, gx_b, masks;
    for (int t = 0; t < max_len; ++t) {
      Mat x = Mat::Zero(B, d);
      Mat m = Mat::Zero(B, h);
      for (Eigen::Index b = 0; b < B; ++b) {
        if (t < lengths[static_cast<std::size_t>(b)]) {
          x.row(b) = bank.rows.row(token_rows[static_cast<std::size_t>(first[static_cast<std::size_t>(b)] + t)]);
          m.row(b).setOnes();
        }
      }
      ad::Var<T> xv = tape.constant(std::move(x));
      gx_f.push_back(fwd_.wx(tape, xv));
      gx_b.push_back(bwd_.wx(tape, xv));
      masks.push_back(tape.constant(std::move(m)));
    }
    ad::Var<T> hf = tape.constant(Mat::Zero(B, h));
    ad::Var<T> hb = tape.constant(Mat::Zero(B, h));
    for (int t = 0; t < max_len; ++t) {
      hf = fwd_.step(tape, gx_f[static_cast<std::size_t>(t)], hf, masks[static_cast<std::size_t>(t)]);
      const std::size_t r = static_cast<std::size_t>(max_len - 1 - t);
      hb = bwd_.step(tape, gx_b[r], hb, masks[r]);
    }
    return proj_(tape, ad::concat_cols<T>({hf, hb}));
  }

  AggregatorConfig config_;
  ad::Param<T> table_;       // Embed
  ad::Param<T> pos_logits_;  // Weighted
  ad::Param<T> cls_;         // TRM
  ad::Param<T> positions_;   // TRM
  nn::TransformerBlock<T> block_;
  nn::LayerNorm<T> ln_;
  nn::GRUCell<T> fwd_;
  nn::GRUCell<T> bwd_;
  nn::Linear<T> proj_;
};

// Row i is the aggregated vector of item i.
struct ItemTable {
  ad::Matrix<float> vectors;

  std::size_t size() const { return static_cast<std::size_t>(vectors.rows()); }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.set("kind", "item_table");
    c.add_tensor("vectors", vectors);
    return c;
  }
  static ItemTable from_checkpoint(const Checkpoint& c,
                                   const std::string& origin = "item_table") {
    c.expect_kind("item_table", origin);
    return {c.tensor("vectors")};
  }
};

template <typename T>
ad::Matrix<T> aggregate_all(const Aggregator<T>& agg, const TitleBank<T>& bank,
                            std::size_t chunk = 1024) {
  agg.check_bank(bank);
  ad::Matrix<T> out(static_cast<Eigen::Index>(bank.size()), agg.config().d_model);
  for (std::size_t start = 0; start < bank.size(); start += chunk) {
    std::vector<int> ids;
    for (std::size_t i = start; i < std::min(bank.size(), start + chunk); ++i) {
      ids.push_back(static_cast<int>(i));
    }
    ad::Tape<T> tape(false);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(ids.size())) =
        agg.forward(tape, bank, ids).value();
  }
  return out;
}

template <typename T, typename L>
ItemTable build_item_table(const Aggregator<T>& agg, const LanguageModel<L>& lm,
                           const ItemCatalog& catalog) {
  if (agg.config().d_model != lm.d_model()) {
    throw Error("build_item_table: aggregator and LM widths differ");
  }
  const TitleBank<T> bank = title_bank<T>(lm, catalog);
  ItemTable table{aggregate_all(agg, bank).template cast<float>()};
  if (!table.vectors.allFinite()) throw Error("build_item_table: non-finite vectors");
  return table;
}

// g_i = q . v_i for every item.
template <typename Row>
Eigen::RowVectorXf score_items(const Row& q, const ItemTable& table) {
  if (q.size() != table.vectors.cols()) throw Error("score_items: dimension mismatch");
  return q.template cast<float>() * table.vectors.transpose();
}

// Scores for many contexts at once (rows of q).
inline ad::Matrix<float> score_items_batch(const ad::Matrix<float>& q,
                                           const ItemTable& table) {
  if (q.cols() != table.vectors.cols()) throw Error("score_items: dimension mismatch");
  return q * table.vectors.transpose();
}

// One contrastive batch. Columns are the distinct items of the batch (its
// positives and, for uniform/mixed, the shared uniform draws); a repeated
// positive collapses into one column, so it is never its own negative.
template <typename T>
ad::Var<T> contrastive_batch_loss(ad::Tape<T>& tape, const Aggregator<T>& agg,
                                  const TitleBank<T>& bank, const ad::Matrix<T>& q,
                                  const std::vector<int>& targets,
                                  const std::vector<int>& uniform,
                                  NegativeStrategy strategy) {
  std::vector<int> columns;
  std::map<int, int> col_of;
  auto column = [&](int id) {
    auto [it, inserted] = col_of.emplace(id, static_cast<int>(columns.size()));
    if (inserted) columns.push_back(id);
    return it->second;
  };
  std::vector<int> target_col;
  for (int t : targets) target_col.push_back(column(t));
  if (strategy != NegativeStrategy::kInBatch) {
    for (int u : uniform) column(u);
  }
  std::set<int> uniform_set(uniform.begin(), uniform.end());
  ad::Var<T> v = agg.forward(tape, bank, columns);
  ad::Var<T> z = ad::matmul_bt(tape.constant(q), v);
  if (strategy == NegativeStrategy::kUniform) {
    // Only the own positive plus the uniform draws.
    ad::Matrix<T> mask = ad::Matrix<T>::Constant(
        z.rows(), z.cols(), -std::numeric_limits<T>::infinity());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      mask(r, target_col[static_cast<std::size_t>(r)]) = T(0);
      for (int u : uniform_set) mask(r, col_of.at(u)) = T(0);
    }
    return ad::softmax_cross_entropy(z, target_col, &mask);
  }
  return ad::softmax_cross_entropy(z, target_col);
}

struct ReindexTrainConfig {
  AggregatorKind kind = AggregatorKind::kRNN;
  NegativeSet negatives;
  int epochs = 10;
  int batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double clip_norm = 1.0;
  int max_title_len = 24;
  int rnn_hidden = 64;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct ReindexResult {
  double initial_loss = 0.0;  // first batch
  double final_loss = 0.0;    // mean over the last epoch
  long steps = 0;
};

// Context embeddings of the frozen LM for every sample.
template <typename L>
ad::Matrix<float> sample_queries(const LanguageModel<L>& lm,
                                 const std::vector<RecSample>& samples) {
  std::vector<TokenSeq> contexts;
  for (const auto& s : samples) contexts.push_back(s.context_tokens);
  return lm.context_embeddings(contexts).template cast<float>();
}

// Trains agg in place on precomputed queries. The LM is only read through
// the bank and the queries, so it cannot change.
template <typename T>
ReindexResult fit_aggregator(Aggregator<T>& agg, const TitleBank<T>& bank,
                             const ad::Matrix<T>& queries,
                             const std::vector<int>& targets,
                             const ReindexTrainConfig& cfg) {
  if (targets.empty()) throw Error("train_aggregator: no samples");
  if (queries.rows() != static_cast<Eigen::Index>(targets.size())) {
    throw Error("train_aggregator: queries/targets mismatch");
  }
  cfg.negatives.validate();
  agg.check_bank(bank);
  tune_allocator();
  auto params = nn::params_of(agg);
  nn::Adam<T> opt(params, {.lr = cfg.lr,
                           .weight_decay = cfg.weight_decay,
                           .clip_norm = cfg.clip_norm});
  Rng rng = Rng(cfg.seed).split("reindex_train");
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  ReindexResult result;
  bool first = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      ad::Matrix<T> q(static_cast<Eigen::Index>(end - start), queries.cols());
      std::vector<int> tgt;
      for (std::size_t i = start; i < end; ++i) {
        q.row(static_cast<Eigen::Index>(i - start)) = queries.row(static_cast<Eigen::Index>(order[i]));
        tgt.push_back(targets[order[i]]);
      }
      std::vector<int> uniform;
      if (cfg.negatives.strategy != NegativeStrategy::kInBatch) {
        for (int k = 0; k < cfg.negatives.n_negatives; ++k) {
          uniform.push_back(static_cast<int>(rng.below(bank.size())));
        }
      }
      ad::Tape<T> tape;
      auto loss = contrastive_batch_loss(tape, agg, bank, q, tgt, uniform,
                                         cfg.negatives.strategy);
      const double value = static_cast<double>(loss.scalar());
      if (!std::isfinite(value)) {
        throw Error("train_aggregator: non-finite loss at step " +
                    std::to_string(result.steps));
      }
      if (first) {
        result.initial_loss = value;
        first = false;
      }
      tape.backward(loss);
      opt.step(tape);
      epoch_loss += value;
      ++batches;
      ++result.steps;
    }
    result.final_loss = epoch_loss / static_cast<double>(batches);
    if (cfg.verbose) {
      const double secs = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0).count();
      std::cerr << "reindex epoch " << epoch + 1 << "/" << cfg.epochs << " loss "
                << result.final_loss << " (" << secs << " s)\n";
    }
  }
  return result;
}

template <typename T = float, typename L>
Aggregator<T> train_aggregator(const LanguageModel<L>& lm, const ItemCatalog& catalog,
                               const std::vector<RecSample>& samples,
                               const ReindexTrainConfig& cfg,
                               ReindexResult* result = nullptr) {
  AggregatorConfig ac;
  ac.kind = cfg.kind;
  ac.d_model = lm.d_model();
  ac.n_items = static_cast<int>(catalog.size());
  ac.max_title_len = cfg.max_title_len;
  ac.rnn_hidden = cfg.rnn_hidden;
  ac.seed = cfg.seed;
  Aggregator<T> agg(ac);
  const TitleBank<T> bank = title_bank<T>(lm, catalog);
  std::vector<int> targets;
  for (const auto& s : samples) targets.push_back(s.target_item);
  const ad::Matrix<T> q = sample_queries(lm, samples).template cast<T>();
  const ReindexResult r = fit_aggregator(agg, bank, q, targets, cfg);
  if (result) *result = r;
  return agg;
}

// Mean contrastive loss over held-out samples with the same negative scheme
// (fixed seed, no parameter updates).
template <typename T>
double mean_reindex_loss(const Aggregator<T>& agg, const TitleBank<T>& bank,
                         const ad::Matrix<T>& queries, const std::vector<int>& targets,
                         const NegativeSet& negatives, int batch_size,
                         std::uint64_t seed) {
  Rng rng = Rng(seed).split("reindex_eval");
  double total = 0.0;
  std::size_t n = 0;
  const std::size_t bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < targets.size(); start += bs) {
    const std::size_t end = std::min(targets.size(), start + bs);
    std::vector<int> tgt(targets.begin() + static_cast<long>(start),
                         targets.begin() + static_cast<long>(end));
    std::vector<int> uniform;
    if (negatives.strategy != NegativeStrategy::kInBatch) {
      for (int k = 0; k < negatives.n_negatives; ++k) {
        uniform.push_back(static_cast<int>(rng.below(bank.size())));
      }
    }
    ad::Tape<T> tape(false);
    auto loss = contrastive_batch_loss(
        tape, agg, bank,
        ad::Matrix<T>(queries.middleRows(static_cast<Eigen::Index>(start),
                                         static_cast<Eigen::Index>(end - start))),
        tgt, uniform, negatives.strategy);
    total += static_cast<double>(loss.scalar()) * static_cast<double>(end - start);
    n += end - start;
  }
  return total / static_cast<double>(n);
}

}  // namespace rta
