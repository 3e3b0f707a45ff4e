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

// Shared minibatch loop: shuffle, Adam, non-finite abort, and per-epoch
// validation that keeps the best parameters seen.

#include <chrono>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rta/nn.hpp"

namespace rta {

struct FitConfig {
  int epochs = 20;
  int batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::string label = "train";  // names the RNG stream and log lines
  // Also score the starting parameters, so training must beat them.
  bool validate_initial = false;
  bool verbose = false;
};

struct FitResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;  // mean over the last epoch
  double best_valid = -1.0;
  int best_epoch = -1;      // 0-based; -1 without validation or if the start won
  long steps = 0;
};

// batch_loss(tape, indices, rng) builds the loss of one minibatch.
// validate(), when set, returns a score to maximize; the parameters of the
// best epoch are restored at the end.
template <typename Model, typename BatchLoss>
FitResult fit(Model& model, std::size_t n, const FitConfig& cfg, BatchLoss&& batch_loss,
              const std::function<double()>& validate = nullptr) {
  using T = typename Model::Scalar;
  if (n == 0) throw Error(cfg.label + ": empty training set");
  tune_allocator();
  auto params = nn::params_of(model);
  nn::Adam<T> opt(params, {.lr = cfg.lr,
                           .weight_decay = cfg.weight_decay,
                           .clip_norm = cfg.clip_norm});
  Rng rng = Rng(cfg.seed).split(cfg.label);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  FitResult result;
  std::vector<ad::Matrix<T>> best;
  bool first = true;
  if (validate && cfg.validate_initial) {
    result.best_valid = validate();
    for (const auto* p : params) best.push_back(p->value);
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double total = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(std::min(n, start + bs)));
      ad::Tape<T> tape;
      ad::Var<T> loss = batch_loss(tape, idx, rng);
      const double value = static_cast<double>(loss.scalar());
      if (!std::isfinite(value)) {
        throw Error(cfg.label + ": non-finite loss at step " + std::to_string(result.steps) +
                    " (lr " + std::to_string(cfg.lr) + ")");
      }
      if (first) {
        result.initial_loss = value;
        first = false;
      }
      tape.backward(loss);
      opt.step(tape);
      total += value;
      ++batches;
      ++result.steps;
    }
    result.final_loss = total / static_cast<double>(batches);
    std::string extra;
    if (validate) {
      const double v = validate();
      extra = " valid " + std::to_string(v);
      if (v > result.best_valid) {
        result.best_valid = v;
        result.best_epoch = epoch;
        best.clear();
        for (const auto* p : params) best.push_back(p->value);
      }
    }
    if (cfg.verbose) {
      const double secs = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0).count();
      std::cerr << cfg.label << " epoch " << epoch + 1 << "/" << cfg.epochs << " loss "
                << result.final_loss << extra << " (" << secs << " s)\n";
    }
  }
  if (!best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  }
  return result;
}

// Trains one model per (lr, weight decay) pair and keeps the one with the
// best validation score (the first pair when there is no validation).
template <typename Model, typename Make, typename Train>
Model grid_search(const std::vector<double>& lrs, const std::vector<double>& wds,
                  Make&& make, Train&& train, bool has_validation,
                  FitResult* chosen = nullptr, bool verbose = false) {
  if (lrs.empty() || wds.empty()) throw Error("grid_search: empty grid");
  std::optional<Model> best;
  FitResult best_result;
  for (double lr : lrs) {
    for (double wd : wds) {
      Model m = make();
      const FitResult r = train(m, lr, wd);
      if (verbose) {
        std::cerr << "grid lr " << lr << " wd " << wd << " valid " << r.best_valid << "\n";
      }
      if (!best || (has_validation && r.best_valid > best_result.best_valid)) {
        best.emplace(std::move(m));
        best_result = r;
      }
      if (!has_validation) break;
    }
    if (!has_validation) break;
  }
  if (chosen) *chosen = best_result;
  return std::move(*best);
}

}  // namespace rta
