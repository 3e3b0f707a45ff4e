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

// rta_cli: runs the pipeline stage by stage inside a run directory.
//
//   <run>/data/         catalog.jsonl corpus.jsonl platform.jsonl vocab.txt
//   <run>/checkpoints/  *.rta1
//   <run>/metrics/      *.csv *.json
//   <run>/report.md
//
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rta/rta.hpp"

namespace fs = std::filesystem;
using namespace rta;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct Run {
  fs::path dir;
  fs::path data_dir;
  RunConfig cfg;

  fs::path data(const std::string& f) const { return data_dir / f; }
  fs::path ckpt(const std::string& name) const { return dir / "checkpoints" / (name + ".rta1"); }
  fs::path metric(const std::string& f) const { return dir / "metrics" / f; }
};

void log(const std::string& msg) { std::cerr << "[rta] " << msg << "\n"; }

void save_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  write_file(p, text);
  log("wrote " + p.string());
}

void save_ckpt(const fs::path& p, const Checkpoint& c) {
  fs::create_directories(p.parent_path());
  save_checkpoint(p, c);
  log("wrote " + p.string());
}

// ---------------------------------------------------------------------------
// Loading persisted inputs.

struct Data {
  std::shared_ptr<const Vocabulary> vocab;
  ItemCatalog catalog;
};

Data load_data(const Run& run) {
  Data d;
  d.vocab = std::make_shared<const Vocabulary>(
      Vocabulary::deserialize(read_file(run.data("vocab.txt"))));
  d.catalog = build_catalog(run.data("catalog.jsonl"), d.vocab);
  return d;
}

Splits<Conversation> platform_splits(const Run& run, const ItemCatalog& catalog) {
  const auto conversations = load_conversations(run.data("platform.jsonl"), catalog);
  const SplitSpec spec = run.cfg.eval.split == "temporal"
                             ? SplitSpec::temporal(run.cfg.eval.last_k)
                             : SplitSpec::random_8_1_1(run.cfg.seed);
  return split(conversations, spec);
}

struct PlatformSamples {
  std::vector<RecSample> train, valid, test;
};

PlatformSamples platform_samples(const Run& run, const ItemCatalog& catalog) {
  const auto s = platform_splits(run, catalog);
  PlatformSamples p{make_rec_samples(s.train, catalog), make_rec_samples(s.valid, catalog),
                    make_rec_samples(s.test, catalog)};
  const auto cap = static_cast<std::size_t>(run.cfg.eval.max_samples);
  if (cap > 0 && p.test.size() > cap) p.test.resize(cap);
  return p;
}

std::vector<Interaction> to_interactions(const std::vector<RecSample>& s) {
  return interactions_from(s);
}

LanguageModel<float> load_lm(const Run& run) {
  return LanguageModel<float>::from_checkpoint(load_checkpoint(run.ckpt("lm")), "lm");
}

ItemTable load_table(const Run& run) {
  const auto p = run.ckpt("item_table");
  return ItemTable::from_checkpoint(load_checkpoint(p), p.string());
}

Recommender<float> load_recsys(const Run& run, const std::string& kind) {
  const auto p = run.ckpt("recsys_" + kind);
  return Recommender<float>::from_checkpoint(load_checkpoint(p), p.string());
}

Adapter<float> load_adapter(const Run& run, const std::string& name) {
  const auto p = run.ckpt("adapter_" + name);
  return Adapter<float>::from_checkpoint(load_checkpoint(p), p.string());
}

const std::vector<std::string> kAdapters = {"bias", "bias_w", "bias_b", "gate_fism",
                                            "gate_sasrec", "cont"};
const std::vector<std::string> kPipelines = {"popularity", "fism",   "sasrec",    "generative",
                                             "base",       "bias",   "bias_w",    "bias_b",
                                             "gate_fism",  "gate_sasrec", "cont"};

std::string resolve_pipeline(const Run& run, const std::string& name) {
  if (name == "gate") return "gate_" + run.cfg.gate_recsys;
  if (std::find(kPipelines.begin(), kPipelines.end(), name) == kPipelines.end()) {
    throw UsageError("unknown pipeline '" + name + "'");
  }
  return name;
}

// ---------------------------------------------------------------------------
// Stages.

void gen_data(const Run& run, const fs::path& out) {
  const World w = gen_world(run.cfg.world);
  fs::create_directories(out);
  save_text(out / "vocab.txt", w.vocab->serialize());
  save_text(out / "catalog.jsonl", write_catalog_jsonl(w.catalog));
  save_text(out / "corpus.jsonl", write_samples_jsonl(w.corpus, *w.vocab));
  save_text(out / "platform.jsonl", write_conversations_jsonl(w.platform, *w.vocab));
}

void train_lm_stage(const Run& run) {
  const Data d = load_data(run);
  const auto corpus = load_samples(run.data("corpus.jsonl"), d.catalog);
  LMConfig lc = run.cfg.lm;
  lc.vocab_size = static_cast<int>(d.vocab->size());
  LanguageModel<float> lm(lc);
  LMTrainConfig tc = run.cfg.lm_train;
  tc.verbose = true;
  const auto r = train_lm(lm, lm_sequences(corpus, d.catalog), tc);
  save_ckpt(run.ckpt("lm"), lm.to_checkpoint());
  save_text(run.metric("lm_train.json"),
            nlohmann::json{{"initial_loss", r.initial_loss},
                           {"final_loss", r.final_loss},
                           {"steps", r.steps}}
                    .dump(2) +
                "\n");
}

void probe_stage(const Run& run) {
  const Data d = load_data(run);
  const auto lm = load_lm(run);
  const auto r = l2i_probe(
      [&](const Item& it) { return generate_titles(lm, d.catalog, l2i_prompt(it, *d.vocab), 5); },
      d.catalog, default_buckets(), static_cast<std::size_t>(run.cfg.eval.probe_max_items));
  save_text(run.metric("l2i_probe.csv"), r.csv());
  save_text(run.metric("l2i_probe.json"), r.json().dump(2) + "\n");
}

void reindex_stage(const Run& run) {
  const Data d = load_data(run);
  const auto lm = load_lm(run);
  const auto corpus = load_samples(run.data("corpus.jsonl"), d.catalog);
  ReindexTrainConfig rc = run.cfg.reindex;
  rc.verbose = true;
  ReindexResult r;
  auto agg = train_aggregator<float>(lm, d.catalog, corpus, rc, &r);
  const ItemTable table = build_item_table(agg, lm, d.catalog);
  save_ckpt(run.ckpt("aggregator"), agg.to_checkpoint());
  save_ckpt(run.ckpt("item_table"), table.to_checkpoint());
  save_text(run.metric("reindex_train.json"),
            nlohmann::json{{"aggregator", aggregator_name(rc.kind)},
                           {"initial_loss", r.initial_loss},
                           {"final_loss", r.final_loss},
                           {"steps", r.steps}}
                    .dump(2) +
                "\n");
}

void recsys_stage(const Run& run, const std::string& which) {
  const Data d = load_data(run);
  const auto p = platform_samples(run, d.catalog);
  const auto train = to_interactions(p.train);
  const auto valid = to_interactions(p.valid);
  std::vector<std::string> kinds = {which};
  if (which == "all") kinds = {"popularity", "fism", "sasrec"};
  for (const auto& k : kinds) {
    RecsysConfig rc = run.cfg.recsys;
    rc.kind = parse_recsys(k);
    rc.verbose = true;
    FitResult chosen;
    auto rec = train_recsys<float>(static_cast<int>(d.catalog.size()), train, rc, &valid, &chosen);
    save_ckpt(run.ckpt("recsys_" + k), rec.to_checkpoint());
  }
}

AdaptData samples_to_adapt(const LanguageModel<float>& lm, const std::vector<RecSample>& s) {
  return adapt_data(lm, s);
}

void write_alignment(const Run& run, const std::string& name, const ItemCatalog& catalog,
                     const ad::Matrix<float>& scores, const AdaptData& test) {
  const auto rep = alignment_report(scores, test.targets, test.histories, run.cfg.eval.alignment_k);
  save_text(run.metric("alignment_" + name + ".csv"), rep.csv(catalog));
  save_text(run.metric("alignment_" + name + ".json"), rep.json().dump(2) + "\n");
}

void adapt_stage(const Run& run, const std::string& which) {
  std::vector<std::string> names = {which};
  if (which == "all") names = kAdapters;
  if (which == "gate") names = {"gate_" + run.cfg.gate_recsys};
  for (const auto& n : names) {
    if (std::find(kAdapters.begin(), kAdapters.end(), n) == kAdapters.end()) {
      throw UsageError("unknown adapt mode '" + n + "'");
    }
  }
  const Data d = load_data(run);
  const auto lm = load_lm(run);
  const ItemTable table = load_table(run);
  const auto p = platform_samples(run, d.catalog);
  const AdaptData train = samples_to_adapt(lm, p.train);
  const AdaptData valid = samples_to_adapt(lm, p.valid);
  const AdaptData test = samples_to_adapt(lm, p.test);
  write_alignment(run, "base", d.catalog, score_items_batch(test.queries, table), test);
  for (const auto& n : names) {
    AdaptConfig ac = run.cfg.adapt;
    ac.verbose = true;
    Adapter<float> adapter;
    if (n.rfind("bias", 0) == 0) {
      ac.mode = AdaptMode::kBias;
      ac.bias_mode = n == "bias_w" ? BiasMode::kWOnly
                                   : (n == "bias_b" ? BiasMode::kBOnly : BiasMode::kWAndB);
      adapter = train_adapter<float>(table, train, ac, nullptr, &valid);
    } else if (n.rfind("gate_", 0) == 0) {
      ac.mode = AdaptMode::kGate;
      const auto rec = load_recsys(run, n.substr(5));
      adapter = train_adapter<float>(table, train, ac, &rec, &valid);
    } else {
      ac.mode = AdaptMode::kCont;
      ac.cont.kind = run.cfg.reindex.kind;
      ac.cont.negatives = run.cfg.reindex.negatives;
      ac.cont.batch_size = run.cfg.reindex.batch_size;
      ac.cont.max_title_len = run.cfg.reindex.max_title_len;
      ac.cont.rnn_hidden = run.cfg.reindex.rnn_hidden;
      const auto agg_path = run.ckpt("aggregator");
      auto agg = Aggregator<float>::from_checkpoint(load_checkpoint(agg_path), agg_path.string());
      adapter = train_cont<float>(std::move(agg), title_bank<float>(lm, d.catalog), train, ac);
    }
    save_ckpt(run.ckpt("adapter_" + n), adapter.to_checkpoint());
    write_alignment(run, n, d.catalog, adapter.scores(test.queries, table, test.histories), test);
  }
}

MetricsTable eval_pipeline(const Run& run, const std::string& name, const Data& d,
                           const std::vector<RecSample>& test) {
  const auto split = to_interactions(test);
  EvalProtocol proto{run.cfg.eval.remove_repeated, run.cfg.eval.ks};
  std::vector<std::vector<ItemId>> hist;
  for (const auto& x : split) hist.push_back(x.history);
  if (name == "popularity" || name == "fism" || name == "sasrec") {
    return evaluate_scores(load_recsys(run, name).score_batch(hist), split, proto);
  }
  const auto lm = load_lm(run);
  if (name == "generative") {
    return evaluate(
        [&](std::size_t i, std::size_t K, const std::vector<ItemId>& ex) {
          RankedList out;
          for (ItemId id : generate_titles(lm, d.catalog, test[i].context_tokens, K + ex.size())) {
            if (std::find(ex.begin(), ex.end(), id) != ex.end()) continue;
            out.push_back(id);
            if (out.size() == K) break;
          }
          return out;
        },
        split, proto);
  }
  const ItemTable table = load_table(run);
  const auto q = sample_queries(lm, test);
  if (name == "base") return evaluate_scores(score_items_batch(q, table), split, proto);
  return evaluate_scores(load_adapter(run, name).scores(q, table, hist), split, proto);
}

void eval_stage(const Run& run, const std::string& which) {
  std::vector<std::string> names;
  if (which == "all") {
    names = kPipelines;
  } else {
    names = {resolve_pipeline(run, which)};
  }
  const Data d = load_data(run);
  const auto p = platform_samples(run, d.catalog);
  for (const auto& n : names) {
    const auto t = eval_pipeline(run, n, d, p.test);
    save_text(run.metric("eval_" + n + ".csv"), t.csv());
    save_text(run.metric("eval_" + n + ".json"), t.json().dump(2) + "\n");
  }
}

void bench_stage(const Run& run) {
  const Data d = load_data(run);
  const auto lm = load_lm(run);
  const ItemTable table = load_table(run);
  const auto p = platform_samples(run, d.catalog);
  std::vector<TokenSeq> ctx;
  for (const auto& s : p.test) {
    if (ctx.size() >= static_cast<std::size_t>(run.cfg.eval.bench_contexts)) break;
    ctx.push_back(s.context_tokens);
  }
  const auto r = latency_bench(lm, table, d.catalog, ctx, 20);
  save_text(run.metric("latency.json"), r.json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Report.

struct ReportRow {
  std::string label;
  std::string pipeline;
};

const std::vector<ReportRow> kMainRows = {
    {"Popularity", "popularity"}, {"FISM", "fism"},     {"SASRec", "sasrec"},
    {"LM-generative", "generative"}, {"LM-R", "base"},  {"LM-R+Bias", "bias"},
    {"LM-R+RecSys", "gate"},      {"Cont.", "cont"}};
const std::vector<ReportRow> kAblationRows = {{"w/ gW", "bias_w"},
                                              {"w/ b", "bias_b"},
                                              {"w/ gW+b", "bias"},
                                              {"+ FISM", "gate_fism"},
                                              {"+ SASRec", "gate_sasrec"}};

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

void report_stage(const Run& run) {
  const std::vector<std::string> metrics = {"H@5", "N@5", "H@10", "N@10"};
  std::string md = "# Results\n";
  std::string csv = "table,model,metric,mean,se,n\n";
  auto table = [&](const std::string& title, const std::vector<ReportRow>& rows) {
    std::string body;
    for (const auto& r : rows) {
      const auto path = run.metric("eval_" + resolve_pipeline(run, r.pipeline) + ".json");
      if (!fs::exists(path)) continue;
      const auto j = nlohmann::json::parse(read_file(path));
      body += "| " + r.label + " |";
      for (const auto& m : metrics) {
        if (!j.contains(m)) {
          body += " - |";
          continue;
        }
        const double mean = j[m]["mean"], se = j[m]["se"];
        body += " " + fmt(mean) + " ± " + fmt(se) + " |";
        csv += title + "," + r.label + "," + m + "," + fmt(mean, 6) + "," + fmt(se, 6) + "," +
               std::to_string(j[m]["n"].get<long>()) + "\n";
      }
      body += "\n";
    }
    if (body.empty()) return;
    md += "\n## " + title + "\n\n| Model | H@5 | N@5 | H@10 | N@10 |\n|---|---|---|---|---|\n" + body;
  };
  table("Main", kMainRows);
  table("Ablation", kAblationRows);
  std::string align;
  for (const std::string n : {"base", "bias", "bias_w", "bias_b", "gate_fism", "gate_sasrec", "cont"}) {
    const auto path = run.metric("alignment_" + n + ".json");
    if (!fs::exists(path)) continue;
    const auto j = nlohmann::json::parse(read_file(path));
    align += "| " + n + " | " + fmt(j["kl"].get<double>()) + " |\n";
  }
  if (!align.empty()) {
    md += "\n## Popularity alignment (KL, top-" + std::to_string(run.cfg.eval.alignment_k) +
          ")\n\n| Pipeline | KL |\n|---|---|\n" + align;
  }
  const auto probe = run.metric("l2i_probe.json");
  if (fs::exists(probe)) {
    md += "\n## Indexing probe (HIT@5 from description)\n\n| Bucket | Items | HIT@5 |\n|---|---|---|\n";
    for (const auto& b : nlohmann::json::parse(read_file(probe))) {
      md += "| " + b["bucket"].get<std::string>() + " | " +
            std::to_string(b["n_items"].get<long>()) + " | " + fmt(b["hit5"].get<double>()) +
            " |\n";
    }
  }
  save_text(run.dir / "report.md", md);
  save_text(run.metric("report.csv"), csv);
}

// ---------------------------------------------------------------------------
// Interactive recommendation.

void recommend_stage(const Run& run, const std::string& which, std::istream& in,
                     std::ostream& out) {
  const std::string name = resolve_pipeline(run, which);
  if (name == "generative") throw UsageError("recommend: generative has no distribution");
  const Data d = load_data(run);
  std::optional<LanguageModel<float>> lm;
  std::optional<ItemTable> table;
  std::optional<Adapter<float>> adapter;
  std::optional<Recommender<float>> rec;
  if (name == "popularity" || name == "fism" || name == "sasrec") {
    rec = load_recsys(run, name);
  } else {
    lm = load_lm(run);
    table = load_table(run);
    if (name != "base") adapter = load_adapter(run, name);
  }
  const Vocabulary& vocab = *d.vocab;
  std::string line;
  out << "> " << std::flush;
  while (std::getline(in, line)) {
    if (line == "quit" || line == "exit") break;
    if (config_detail::trim(line).empty()) {
      out << "> " << std::flush;
      continue;
    }
    const TokenSeq said = vocab.encode(line);
    std::vector<ItemId> history;
    for (const auto& s : locate_item_spans(said, d.catalog)) history.push_back(s.item_id);
    TokenSeq ctx = speaker_tag(Speaker::kSeeker, vocab);
    ctx.insert(ctx.end(), said.begin(), said.end());
    const TokenSeq tag = speaker_tag(Speaker::kRecommender, vocab);
    ctx.insert(ctx.end(), tag.begin(), tag.end());
    Eigen::RowVectorXf g;
    if (rec) {
      g = rec->score_batch({history}).row(0);
    } else {
      const ad::Matrix<float> q = lm->context_embedding(ctx);
      g = adapter ? Eigen::RowVectorXf(adapter->scores(q, *table, {history}).row(0))
                  : score_items(q, *table);
    }
    const Eigen::RowVectorXd p = softmax_row(Eigen::RowVectorXd(g.cast<double>()));
    const auto top = rank_excluding(p, history, 10);
    for (std::size_t i = 0; i < top.size(); ++i) {
      out << std::setw(2) << i + 1 << ". " << d.catalog.item(top[i]).title << "  p="
          << fmt(p(top[i])) << "\n";
    }
    out << "> " << std::flush;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reindex-then-adapt pipeline"};
  app.require_subcommand(1);
  std::string config_path, run_dir = "run";
  app.add_option("--config", config_path, "INI run configuration");
  app.add_option("--run", run_dir, "run directory");

  std::string data_dir, pipeline = "base", mode = "all", kind = "all";
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic world");
  gen->add_option("--out", data_dir, "output directory (default <run>/data)");
  app.add_subcommand("train-lm", "pretrain the language model on the corpus");
  app.add_subcommand("probe-l2i", "description-to-title probe by popularity bucket");
  app.add_subcommand("reindex", "train the aggregator and build the item table");
  auto* rs = app.add_subcommand("train-recsys", "train popularity / FISM / SASRec");
  rs->add_option("--kind", kind, "popularity|fism|sasrec|all");
  auto* ad_cmd = app.add_subcommand("adapt", "train adapters");
  ad_cmd->add_option("--mode", mode, "bias|bias_w|bias_b|gate|gate_fism|gate_sasrec|cont|all");
  auto* ev = app.add_subcommand("eval", "evaluate pipelines on the test split");
  ev->add_option("--pipeline", pipeline, "pipeline name or all");
  app.add_subcommand("bench", "single-step vs generative latency");
  app.add_subcommand("report", "merge metrics into report.md");
  auto* recmd = app.add_subcommand("recommend", "read utterances from stdin, print top-10");
  recmd->add_option("--pipeline", pipeline, "pipeline name");
  for (auto* sub : app.get_subcommands({})) {
    sub->add_option("--config", config_path, "INI run configuration");
    sub->add_option("--run", run_dir, "run directory");
    if (sub != gen) sub->add_option("--data", data_dir, "dataset directory (default <run>/data)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Run run;
  run.dir = run_dir;
  run.data_dir = data_dir.empty() ? run.dir / "data" : fs::path(data_dir);
  try {
    if (!config_path.empty()) run.cfg = load_config(config_path);
    run.cfg.propagate_seed();
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
  const std::string stage = app.get_subcommands().front()->get_name();
  std::cerr << "# " << stage << " resolved config\n" << dump_config(run.cfg);

  try {
    if (stage == "gen-data") {
      gen_data(run, run.data_dir);
    } else if (stage == "train-lm") {
      train_lm_stage(run);
    } else if (stage == "probe-l2i") {
      probe_stage(run);
    } else if (stage == "reindex") {
      reindex_stage(run);
    } else if (stage == "train-recsys") {
      recsys_stage(run, kind);
    } else if (stage == "adapt") {
      adapt_stage(run, mode);
    } else if (stage == "eval") {
      eval_stage(run, pipeline);
    } else if (stage == "bench") {
      bench_stage(run);
    } else if (stage == "report") {
      report_stage(run);
    } else if (stage == "recommend") {
      recommend_stage(run, pipeline, std::cin, std::cout);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
