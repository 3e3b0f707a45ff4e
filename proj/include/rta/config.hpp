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

// Run configuration: flat INI sections of `key = value`. Every key is bound
// to a typed field; unknown sections or keys are errors. `#` and `;` start
// comments.

#include <charconv>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "rta/adapt.hpp"
#include "rta/eval.hpp"
#include "rta/lm.hpp"
#include "rta/recsys.hpp"
#include "rta/reindex.hpp"
#include "rta/world.hpp"

namespace rta {

struct EvalConfig {
  std::string split = "random";  // random | temporal
  int last_k = 2;                // temporal: periods held out (valid + test)
  int max_samples = 0;           // 0 = whole test split
  bool remove_repeated = true;
  std::vector<int> ks = {5, 10};
  int alignment_k = 10;
  int probe_max_items = 0;  // 0 = whole catalog
  int bench_contexts = 50;
};

struct RunConfig {
  std::uint64_t seed = 0;
  WorldConfig world;
  LMConfig lm;
  LMTrainConfig lm_train;
  ReindexTrainConfig reindex;
  RecsysConfig recsys;
  AdaptConfig adapt;
  std::string gate_recsys = "sasrec";  // recommender behind LM-R+RecSys
  EvalConfig eval;

  // Stage configs share the run seed.
  void propagate_seed() {
    world.seed = seed;
    lm.seed = seed;
    lm_train.seed = seed;
    reindex.seed = seed;
    recsys.seed = seed;
    adapt.seed = seed;
  }
};

namespace config_detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw Error("not a number: '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("not a boolean: '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& v) {
  std::vector<T> out;
  std::stringstream in(v);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(parse_number<T>(trim(part)));
  if (out.empty()) throw Error("empty list");
  return out;
}

// Shortest text that parses back to the same value.
template <typename T>
std::string show(const T& v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string show_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + show(v[i]);
  return s;
}

}  // namespace config_detail

struct ConfigField {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

inline std::vector<ConfigField> config_fields(RunConfig& c) {
  namespace cd = config_detail;
  std::vector<ConfigField> f;
  auto num = [&f](const char* s, const char* k, auto* p) {
    using T = std::remove_pointer_t<decltype(p)>;
    f.push_back({s, k, [p](const std::string& v) { *p = cd::parse_number<T>(v); },
                 [p] { return cd::show(*p); }});
  };
  auto flag = [&f](const char* s, const char* k, bool* p) {
    f.push_back({s, k, [p](const std::string& v) { *p = cd::parse_bool(v); },
                 [p] { return std::string(*p ? "true" : "false"); }});
  };
  auto list = [&f](const char* s, const char* k, auto* p) {
    using T = typename std::remove_pointer_t<decltype(p)>::value_type;
    f.push_back({s, k, [p](const std::string& v) { *p = cd::parse_list<T>(v); },
                 [p] { return cd::show_list(*p); }});
  };
  auto choice = [&f](const char* s, const char* k, std::function<void(const std::string&)> set,
                     std::function<std::string()> get) { f.push_back({s, k, set, get}); };

  num("run", "seed", &c.seed);

  auto& w = c.world;
  num("world", "n_items", &w.n_items);
  num("world", "zipf_exponent_corpus", &w.zipf_exponent_corpus);
  num("world", "zipf_exponent_platform", &w.zipf_exponent_platform);
  num("world", "misalignment_delta", &w.misalignment_delta);
  num("world", "n_periods", &w.n_periods);
  num("world", "drift_rate", &w.drift_rate);
  num("world", "corpus_size", &w.corpus_size);
  num("world", "platform_size", &w.platform_size);
  num("world", "l2i_fraction", &w.l2i_fraction);
  num("world", "n_genres", &w.n_genres);
  num("world", "cluster_size", &w.cluster_size);
  num("world", "cluster_affinity", &w.cluster_affinity);
  num("world", "title_pool_ratio", &w.title_pool_ratio);

  num("lm", "d_model", &c.lm.d_model);
  num("lm", "n_layers", &c.lm.n_layers);
  num("lm", "n_heads", &c.lm.n_heads);
  num("lm", "context_len", &c.lm.context_len);
  num("lm", "epochs", &c.lm_train.epochs);
  num("lm", "batch_size", &c.lm_train.batch_size);
  num("lm", "lr", &c.lm_train.lr);
  num("lm", "weight_decay", &c.lm_train.weight_decay);
  num("lm", "warmup_steps", &c.lm_train.warmup_steps);
  choice(
      "lm", "loss_scope",
      [&c](const std::string& v) {
        if (v == "target") {
          c.lm_train.scope = LossScope::kTarget;
        } else if (v == "all") {
          c.lm_train.scope = LossScope::kAll;
        } else {
          throw Error("expected target|all");
        }
      },
      [&c] { return std::string(c.lm_train.scope == LossScope::kAll ? "all" : "target"); });

  auto& r = c.reindex;
  choice(
      "reindex", "aggregator", [&r](const std::string& v) { r.kind = parse_aggregator(v); },
      [&r] { return std::string(aggregator_name(r.kind)); });
  choice(
      "reindex", "negatives",
      [&r](const std::string& v) { r.negatives.strategy = parse_negatives(v); },
      [&r] { return std::string(negative_name(r.negatives.strategy)); });
  num("reindex", "n_negatives", &r.negatives.n_negatives);
  num("reindex", "epochs", &r.epochs);
  num("reindex", "batch_size", &r.batch_size);
  num("reindex", "lr", &r.lr);
  num("reindex", "weight_decay", &r.weight_decay);
  num("reindex", "max_title_len", &r.max_title_len);
  num("reindex", "rnn_hidden", &r.rnn_hidden);

  auto& s = c.recsys;
  num("recsys", "dim", &s.dim);
  num("recsys", "n_layers", &s.n_layers);
  num("recsys", "n_heads", &s.n_heads);
  num("recsys", "max_history", &s.max_history);
  num("recsys", "n_negatives", &s.n_negatives);
  num("recsys", "epochs", &s.epochs);
  num("recsys", "batch_size", &s.batch_size);
  list("recsys", "lr", &s.lr_grid);
  list("recsys", "weight_decay", &s.wd_grid);

  auto& a = c.adapt;
  num("adapt", "epochs", &a.epochs);
  num("adapt", "batch_size", &a.batch_size);
  list("adapt", "lr", &a.lr_grid);
  list("adapt", "weight_decay", &a.wd_grid);
  flag("adapt", "tune_recsys", &a.tune_recsys);
  choice(
      "adapt", "gate_recsys",
      [&c](const std::string& v) {
        const auto k = parse_recsys(v);
        if (k == RecsysKind::kPopularity) throw Error("expected fism|sasrec");
        c.gate_recsys = v;
      },
      [&c] { return c.gate_recsys; });
  num("adapt", "cont_epochs", &a.cont.epochs);
  num("adapt", "cont_lr", &a.cont.lr);

  auto& e = c.eval;
  choice(
      "eval", "split",
      [&e](const std::string& v) {
        if (v != "random" && v != "temporal") throw Error("expected random|temporal");
        e.split = v;
      },
      [&e] { return e.split; });
  num("eval", "last_k", &e.last_k);
  num("eval", "max_samples", &e.max_samples);
  flag("eval", "remove_repeated", &e.remove_repeated);
  list("eval", "ks", &e.ks);
  num("eval", "alignment_k", &e.alignment_k);
  num("eval", "probe_max_items", &e.probe_max_items);
  num("eval", "bench_contexts", &e.bench_contexts);
  return f;
}

// Parses `text` over the defaults. `origin` names the source in errors.
inline RunConfig parse_config(const std::string& text, const std::string& origin = "config") {
  RunConfig c;
  auto fields = config_fields(c);
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.resize(cut);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(where + "malformed section header");
      section = config_detail::trim(line.substr(1, line.size() - 2));
      const bool known = std::any_of(fields.begin(), fields.end(),
                                     [&](const ConfigField& f) { return f.section == section; });
      if (!known) throw Error(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(where + "expected key = value");
    if (section.empty()) throw Error(where + "key outside any section");
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField& f) {
      return f.section == section && f.key == key;
    });
    if (it == fields.end()) throw Error(where + "unknown key '" + section + "." + key + "'");
    try {
      it->set(value);
    } catch (const Error& err) {
      throw Error(where + section + "." + key + ": " + err.what());
    }
  }
  c.propagate_seed();
  c.world.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

// Every key with its resolved value, in binding order.
inline std::string dump_config(const RunConfig& config) {
  RunConfig copy = config;
  std::string out, section;
  for (const auto& f : config_fields(copy)) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

}  // namespace rta
