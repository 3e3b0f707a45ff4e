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

// Small decoder-only transformer: learned positions, pre-norm blocks, GELU
// MLP and an output projection tied to the token embeddings. Every input is
// prefixed with <bos> and left-truncated to the context length.

#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "rta/catalog.hpp"
#include "rta/checkpoint.hpp"
#include "rta/data.hpp"
#include "rta/nn.hpp"

namespace rta {

struct LMConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int context_len = 256;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab_size <= Vocabulary::kEoi) throw Error("lm: vocab_size too small");
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || context_len <= 1) {
      throw Error("lm: dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
      throw Error("lm: d_model must be divisible by n_heads");
    }
  }
};

enum class LossScope { kAll, kTarget };

struct LMTrainConfig {
  int epochs = 30;
  int batch_size = 256;  // sequences per step
  double lr = 1e-3;
  double weight_decay = 0.0;
  double clip_norm = 1.0;
  int warmup_steps = 100;
  double final_lr_fraction = 0.1;  // cosine decay floor
  LossScope scope = LossScope::kTarget;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct TrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  long steps = 0;
};

// One training stream: tokens plus the index of the first token whose
// prediction is scored under LossScope::kTarget.
struct LMSequence {
  TokenSeq tokens;
  std::size_t target_start = 0;
};

inline std::vector<LMSequence> lm_sequences(const std::vector<RecSample>& samples,
                                            const ItemCatalog& catalog) {
  std::vector<LMSequence> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    LMSequence seq;
    seq.target_start = completion_tokens(s, catalog, seq.tokens);
    out.push_back(std::move(seq));
  }
  return out;
}

// Learning rate at `step`: linear warmup, then cosine decay to a floor.
inline double scheduled_lr(double base, long step, long total, int warmup,
                           double floor_fraction) {
  if (warmup > 0 && step < warmup) {
    return base * static_cast<double>(step + 1) / warmup;
  }
  if (total <= warmup) return base;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  const double cosine = 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
  return base * (floor_fraction + (1.0 - floor_fraction) * cosine);
}

template <typename T = float>
class LanguageModel {
 public:
  using Scalar = T;
  using Mat = ad::Matrix<T>;

  LanguageModel() = default;
  explicit LanguageModel(const LMConfig& config) : config_(config) {
    config.validate();
    Rng rng = Rng(config.seed).split("lm_init");
    tok_emb_ = {"tok_emb", nn::normal_matrix<T>(config.vocab_size, config.d_model, 0.02, rng)};
    pos_emb_ = {"pos_emb", nn::normal_matrix<T>(config.context_len, config.d_model, 0.01, rng)};
    for (int l = 0; l < config.n_layers; ++l) {
      blocks_.emplace_back("block" + std::to_string(l), config.d_model,
                           config.n_heads, config.n_layers, rng);
    }
    ln_f_ = nn::LayerNorm<T>("ln_f", config.d_model);
  }

  const LMConfig& config() const { return config_; }
  int d_model() const { return config_.d_model; }
  const Mat& token_embeddings() const { return tok_emb_.value; }

  template <typename F>
  void visit(F&& f) {
    f(tok_emb_);
    f(pos_emb_);
    for (auto& b : blocks_) b.visit(f);
    ln_f_.visit(f);
  }

  // <bos> + tokens, keeping the last context_len tokens.
  TokenSeq prepare(const TokenSeq& tokens) const {
    TokenSeq in;
    in.reserve(tokens.size() + 1);
    in.push_back(Vocabulary::kBos);
    in.insert(in.end(), tokens.begin(), tokens.end());
    const std::size_t ctx = static_cast<std::size_t>(config_.context_len);
    if (in.size() > ctx) in.erase(in.begin(), in.end() - static_cast<std::ptrdiff_t>(ctx));
    return in;
  }

  // Final hidden states (after the last LayerNorm) of packed sequences that
  // are already prepared (each at most context_len long).
  ad::Var<T> hidden(ad::Tape<T>& tape, const std::vector<TokenSeq>& inputs) const {
    std::vector<int> ids, pos;
    std::vector<ad::Segment> segments;
    for (const auto& seq : inputs) {
      if (seq.empty() || seq.size() > static_cast<std::size_t>(config_.context_len)) {
        throw Error("lm: sequence length out of range");
      }
      segments.push_back({static_cast<int>(ids.size()), static_cast<int>(seq.size())});
      for (std::size_t i = 0; i < seq.size(); ++i) {
        check_token(seq[i]);
        ids.push_back(seq[i]);
        pos.push_back(static_cast<int>(i));
      }
    }
    ad::Var<T> x = ad::add(ad::gather_rows(tape.param(tok_emb_), ids),
                           ad::gather_rows(tape.param(pos_emb_), pos));
    for (const auto& block : blocks_) x = block(tape, x, segments, true);
    return ln_f_(tape, x);
  }

  // Tied output projection.
  ad::Var<T> logits(ad::Tape<T>& tape, ad::Var<T> h) const {
    return ad::matmul_bt(h, tape.param(tok_emb_));
  }

  // Mean next-token cross-entropy over the scored positions of a batch.
  ad::Var<T> loss(ad::Tape<T>& tape, const std::vector<const LMSequence*>& batch,
                  LossScope scope) const {
    std::vector<TokenSeq> inputs;
    std::vector<int> rows, targets;
    int offset = 0;
    for (const LMSequence* s : batch) {
      const TokenSeq full = [&] {
        TokenSeq f;
        f.push_back(Vocabulary::kBos);
        f.insert(f.end(), s->tokens.begin(), s->tokens.end());
        return f;
      }();
      // Input positions predict the next token; keep the last context_len.
      const std::size_t n_in = full.size() - 1;
      const std::size_t ctx = static_cast<std::size_t>(config_.context_len);
      const std::size_t drop = n_in > ctx ? n_in - ctx : 0;
      TokenSeq in(full.begin() + static_cast<std::ptrdiff_t>(drop),
                  full.begin() + static_cast<std::ptrdiff_t>(n_in));
      for (std::size_t p = drop; p < n_in; ++p) {
        // full[p + 1] is token index p of s->tokens.
        if (scope == LossScope::kAll || p >= s->target_start) {
          rows.push_back(offset + static_cast<int>(p - drop));
          targets.push_back(full[p + 1]);
        }
      }
      offset += static_cast<int>(in.size());
      inputs.push_back(std::move(in));
    }
    ad::Var<T> h = hidden(tape, inputs);
    ad::Var<T> z = logits(tape, ad::gather_rows(h, rows));
    return ad::softmax_cross_entropy(z, targets);
  }

  // Contextual query embeddings: the final-position hidden state of each
  // context, one row per context.
  Mat context_embeddings(const std::vector<TokenSeq>& contexts,
                         std::size_t chunk = 256) const {
    Mat out(static_cast<Eigen::Index>(contexts.size()), config_.d_model);
    for (std::size_t start = 0; start < contexts.size(); start += chunk) {
      const std::size_t end = std::min(contexts.size(), start + chunk);
      std::vector<TokenSeq> inputs;
      std::vector<int> last;
      int offset = 0;
      for (std::size_t i = start; i < end; ++i) {
        inputs.push_back(prepare(contexts[i]));
        offset += static_cast<int>(inputs.back().size());
        last.push_back(offset - 1);
      }
      ad::Tape<T> tape(false);
      ad::Var<T> h = hidden(tape, inputs);
      for (std::size_t k = 0; k < last.size(); ++k) {
        out.row(static_cast<Eigen::Index>(start + k)) = h.value().row(last[k]);
      }
    }
    return out;
  }

  ad::RowVector<T> context_embedding(const TokenSeq& context) const {
    return context_embeddings({context}).row(0);
  }

  // Log-probabilities of the next token after each prefix (rows).
  Mat next_log_probs(const std::vector<TokenSeq>& prefixes) const {
    Mat q = context_embeddings(prefixes);
    Mat z = q * tok_emb_.value.transpose();
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const T m = z.row(r).maxCoeff();
      const T lse = m + std::log((z.row(r).array() - m).exp().sum());
      z.row(r).array() -= lse;
    }
    return z;
  }

  // Rows of the token embedding table.
  std::vector<ad::RowVector<T>> embed_tokens(const TokenSeq& tokens) const {
    std::vector<ad::RowVector<T>> out;
    for (TokenId t : tokens) {
      check_token(t);
      out.push_back(tok_emb_.value.row(t));
    }
    return out;
  }

  TokenSeq greedy(const TokenSeq& prefix, int max_new, TokenId stop = -1) const {
    TokenSeq seq = prefix;
    for (int i = 0; i < max_new; ++i) {
      const Mat lp = next_log_probs({seq});
      Eigen::Index best;
      lp.row(0).maxCoeff(&best);
      seq.push_back(static_cast<TokenId>(best));
      if (static_cast<TokenId>(best) == stop) break;
    }
    return seq;
  }

  Checkpoint to_checkpoint() {
    Checkpoint c;
    c.set("kind", "lm");
    c.set("vocab_size", std::to_string(config_.vocab_size));
    c.set("d_model", std::to_string(config_.d_model));
    c.set("n_layers", std::to_string(config_.n_layers));
    c.set("n_heads", std::to_string(config_.n_heads));
    c.set("context_len", std::to_string(config_.context_len));
    c.set("seed", std::to_string(config_.seed));
    put_params(c, *this);
    return c;
  }

  static LanguageModel from_checkpoint(const Checkpoint& c,
                                       const std::string& origin = "lm") {
    c.expect_kind("lm", origin);
    LMConfig cfg;
    cfg.vocab_size = static_cast<int>(c.get_int("vocab_size"));
    cfg.d_model = static_cast<int>(c.get_int("d_model"));
    cfg.n_layers = static_cast<int>(c.get_int("n_layers"));
    cfg.n_heads = static_cast<int>(c.get_int("n_heads"));
    cfg.context_len = static_cast<int>(c.get_int("context_len"));
    cfg.seed = std::stoull(c.get("seed"));
    LanguageModel lm(cfg);
    get_params(c, lm);
    return lm;
  }

  // Hash of the serialized parameters; used to prove the LM stays frozen.
  std::uint64_t hash() {
    return fnv1a64(to_checkpoint().serialize());
  }

 private:
  void check_token(TokenId t) const {
    if (t < 0 || t >= config_.vocab_size) {
      throw Error("lm: token id " + std::to_string(t) + " out of range [0, " +
                  std::to_string(config_.vocab_size) + ")");
    }
  }

  LMConfig config_;
  ad::Param<T> tok_emb_;
  ad::Param<T> pos_emb_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> ln_f_;
};

// Next-token training over the sequences; deterministic given cfg.seed.
template <typename T>
TrainResult train_lm(LanguageModel<T>& lm, const std::vector<LMSequence>& data,
                     const LMTrainConfig& cfg) {
  if (data.empty()) throw Error("train_lm: empty corpus");
  tune_allocator();
  for (const auto& s : data) {
    for (TokenId t : s.tokens) {
      if (t < 0 || t >= lm.config().vocab_size) {
        throw Error("train_lm: token id " + std::to_string(t) + " >= vocab_size");
      }
    }
  }
  auto params = nn::params_of(lm);
  nn::Adam<T> opt(params, {.lr = cfg.lr,
                           .weight_decay = cfg.weight_decay,
                           .clip_norm = cfg.clip_norm});
  Rng rng = Rng(cfg.seed).split("lm_train");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  const long steps_per_epoch = static_cast<long>((data.size() + bs - 1) / bs);
  const long total = steps_per_epoch * cfg.epochs;
  TrainResult result;
  long step = 0;
  bool first = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const LMSequence*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        batch.push_back(&data[order[i]]);
      }
      const double lr = scheduled_lr(cfg.lr, step, total, cfg.warmup_steps,
                                     cfg.final_lr_fraction);
      opt.set_lr(lr);
      ad::Tape<T> tape;
      auto loss = lm.loss(tape, batch, cfg.scope);
      const double value = static_cast<double>(loss.scalar());
      if (!std::isfinite(value)) {
        throw Error("train_lm: non-finite loss at step " + std::to_string(step) +
                    " (lr " + std::to_string(lr) + ")");
      }
      if (first) {
        result.initial_loss = value;
        first = false;
      }
      tape.backward(loss);
      opt.step(tape);
      epoch_loss += value;
      ++batches;
      ++step;
    }
    result.final_loss = epoch_loss / static_cast<double>(batches);
    if (cfg.verbose) {
      const double secs = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0).count();
      std::cerr << "lm epoch " << epoch + 1 << "/" << cfg.epochs << " loss "
                << result.final_loss << " (" << secs << " s)\n";
    }
  }
  result.steps = step;
  return result;
}

// Constrained beam search over the catalog's title trie. Each finished
// title is scored by its token log-probabilities plus log p(<eoi>).
template <typename T>
std::vector<ItemId> generate_titles(const LanguageModel<T>& lm,
                                    const ItemCatalog& catalog,
                                    const TokenSeq& context, std::size_t K,
                                    std::size_t beam_width = 0) {
  if (K < 1) throw Error("generate_titles: K must be >= 1");
  const std::size_t want = std::min(K, catalog.size());
  std::size_t width = beam_width ? beam_width : std::max<std::size_t>(2 * K, 16);
  const TokenTrie& trie = catalog.trie();
  struct Beam {
    int node;
    double score;
    TokenSeq tokens;
  };
  for (;;) {
    std::vector<std::pair<double, ItemId>> finished;
    std::vector<Beam> beams = {{TokenTrie::root(), 0.0, {}}};
    while (!beams.empty()) {
      std::vector<TokenSeq> prefixes;
      for (const auto& b : beams) {
        TokenSeq p = context;
        p.insert(p.end(), b.tokens.begin(), b.tokens.end());
        prefixes.push_back(std::move(p));
      }
      const auto lp = lm.next_log_probs(prefixes);
      std::vector<Beam> next;
      for (std::size_t k = 0; k < beams.size(); ++k) {
        const Beam& b = beams[k];
        const auto& node = trie.node(b.node);
        const auto row = lp.row(static_cast<Eigen::Index>(k));
        if (node.item >= 0) {
          finished.emplace_back(b.score + static_cast<double>(row(Vocabulary::kEoi)),
                                node.item);
        }
        for (const auto& [tok, child] : node.children) {
          Beam nb{child, b.score + static_cast<double>(row(tok)), b.tokens};
          nb.tokens.push_back(tok);
          next.push_back(std::move(nb));
        }
      }
      std::sort(next.begin(), next.end(), [](const Beam& a, const Beam& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tokens < b.tokens;
      });
      if (next.size() > width) next.resize(width);
      std::sort(finished.begin(), finished.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      // Partial scores only decrease, so stop once no live beam can beat
      // the K-th finished item.
      if (finished.size() >= want && !next.empty() &&
          next.front().score < finished[want - 1].first) {
        next.clear();
      }
      beams = std::move(next);
    }
    if (finished.size() >= want || width >= trie.node_count()) {
      std::vector<ItemId> out;
      for (std::size_t i = 0; i < std::min(want, finished.size()); ++i) {
        out.push_back(finished[i].second);
      }
      return out;
    }
    width *= 2;
  }
}

}  // namespace rta
