#pragma once

// Training loop: seeded batching, per-batch gradient accumulation, gradient
// clipping, sgd/adam steps, held-out perplexity tracking with early stopping,
// and a deterministic TSV training log.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "latl/checkpoint.hpp"
#include "latl/corpus.hpp"
#include "latl/error.hpp"
#include "latl/format.hpp"
#include "latl/nmt.hpp"
#include "latl/optim.hpp"

namespace latl {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";  // "sgd" | "adam"
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  int eval_every = 0;  // steps between held-out evaluations; 0 = final eval only
  int patience = 3;    // early stop after this many non-improving evaluations
  int threads = 1;     // evaluation fan-out; training itself is single-threaded

  void validate() const {
    if (epochs < 1) fail("train config: epochs must be >= 1");
    if (batch_size < 1) fail("train config: batch_size must be >= 1");
    if (!(learning_rate > 0)) fail("train config: learning_rate must be positive");
    if (!(clip_norm > 0)) fail("train config: clip_norm must be positive");
    if (eval_every < 0) fail("train config: eval_every must be >= 0");
    if (patience < 1) fail("train config: patience must be >= 1");
    if (threads < 1) fail("train config: threads must be >= 1");
    if (optimizer != "sgd" && optimizer != "adam")
      fail("train config: unknown optimizer '" + optimizer + "'");
  }
};

// Chronological records; serialized as `step<TAB>metric<TAB>value[<TAB>pair]`.
struct TrainLog {
  struct Record {
    std::uint64_t step = 0;
    std::string metric;
    double value = 0;
    std::string pair;  // empty for train_loss, "src-tgt" or "overall" for evals
  };
  std::vector<Record> records;

  void add_loss(std::uint64_t step, double value) { records.push_back({step, "train_loss", value, ""}); }
  void add_eval(std::uint64_t step, const std::string& pair, double ppl) {
    records.push_back({step, "heldout_ppl", ppl, pair});
  }

  std::string to_tsv() const {
    std::string out;
    for (const auto& r : records) {
      out += std::to_string(r.step);
      out += '\t';
      out += r.metric;
      out += '\t';
      out += format_real(r.value);
      if (!r.pair.empty()) {
        out += '\t';
        out += r.pair;
      }
      out += '\n';
    }
    return out;
  }
};

struct PairPerplexity {
  int src_lang = 0;
  int tgt_lang = 0;
  double cross_entropy_sum = 0;  // nats over all predicted tokens
  std::int64_t tokens = 0;
  double perplexity = 0;
};

struct PerplexityReport {
  std::vector<PairPerplexity> pairs;  // sorted by (src_lang, tgt_lang)
  double overall = 0;
  std::int64_t total_tokens = 0;
};

// exp(total cross-entropy / total predicted tokens), grouped by language
// pair. Reduction runs in example order regardless of thread count, so the
// result is identical for any `threads`.
template <typename Real>
PerplexityReport evaluate_perplexity(const ModelParams<Real>& params,
                                     const std::vector<ParallelExample>& examples,
                                     int threads = 1) {
  if (examples.empty()) fail("evaluate_perplexity: no examples");
  if (threads < 1) fail("evaluate_perplexity: threads must be >= 1");

  std::vector<double> ce(examples.size());
  std::vector<std::int64_t> tok(examples.size());
  const auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ex = examples[i];
      tok[i] = static_cast<std::int64_t>(ex.tgt_ids.size()) - 1;
      ce[i] = static_cast<double>(sequence_loss(params, ex).value()) * static_cast<double>(tok[i]);
    }
  };
  const std::size_t n = examples.size();
  const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (nthreads <= 1) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t)
      pool.emplace_back(worker, t * chunk, std::min(n, (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }

  std::map<std::pair<int, int>, PairPerplexity> grouped;
  PerplexityReport report;
  double total_ce = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& g = grouped[{examples[i].src_lang_index, examples[i].tgt_lang_index}];
    g.src_lang = examples[i].src_lang_index;
    g.tgt_lang = examples[i].tgt_lang_index;
    g.cross_entropy_sum += ce[i];
    g.tokens += tok[i];
    total_ce += ce[i];
    report.total_tokens += tok[i];
  }
  for (auto& [key, g] : grouped) {
    g.perplexity = std::exp(g.cross_entropy_sum / static_cast<double>(g.tokens));
    report.pairs.push_back(g);
  }
  report.overall = std::exp(total_ce / static_cast<double>(report.total_tokens));
  return report;
}

template <typename Real>
struct TrainResult {
  Checkpoint<Real> checkpoint;  // best held-out snapshot, or final state
  TrainLog log;
  bool stopped_early = false;
};

template <typename Real>
ModelParams<Real> clone_params(ModelParams<Real>& src) {
  ModelParams<Real> dst;
  dst.config = src.config;
  auto s = src.named_tensors();
  auto d = dst.named_tensors();
  for (std::size_t i = 0; i < s.size(); ++i) {
    *d[i].second = Tensor<Real>::from(s[i].second->shape(), s[i].second->values());
    d[i].second->node()->requires_grad = true;
  }
  return dst;
}

template <typename Real>
TrainResult<Real> train(ModelParams<Real>& params, const std::vector<ParallelExample>& examples,
                        const std::vector<ParallelExample>& heldout, const TrainConfig& config,
                        const Vocabulary& vocab, const LanguageInventory& inventory) {
  config.validate();
  params.config.validate();
  if (examples.empty()) fail("train: empty training set");

  const auto pair_name = [&](int s, int t) {
    return inventory.at(s).code + "-" + inventory.at(t).code;
  };

  TrainResult<Real> result;
  auto tensors = params.all_tensors();
  std::vector<Tensor<Real>> param_vec;
  for (auto* t : tensors) param_vec.push_back(*t);

  AdamState<Real> adam;
  const bool use_adam = config.optimizer == "adam";
  if (use_adam) adam.ensure(param_vec);

  struct Best {
    ModelParams<Real> params;
    std::optional<AdamState<Real>> adam;
    std::uint64_t step = 0;
    double perplexity = 0;
  };
  std::optional<Best> best;

  const auto snapshot = [&](std::uint64_t step, double ppl) {
    Best b;
    b.params = clone_params(params);
    if (use_adam) b.adam = adam;
    b.step = step;
    b.perplexity = ppl;
    best = std::move(b);
  };

  BatchStream stream(std::vector<ParallelExample>(examples), config.batch_size, config.seed);
  std::uint64_t step = 0;
  std::uint64_t evaluated_at = 0;
  bool any_eval = false;
  int bad_evals = 0;
  bool stop = false;

  // returns true when training should stop
  const auto run_eval = [&]() {
    if (heldout.empty()) return false;
    auto report = evaluate_perplexity(params, heldout, config.threads);
    for (const auto& p : report.pairs)
      result.log.add_eval(step, pair_name(p.src_lang, p.tgt_lang), p.perplexity);
    result.log.add_eval(step, "overall", report.overall);
    evaluated_at = step;
    const bool improved = !any_eval || report.overall < best->perplexity;
    any_eval = true;
    if (improved) {
      snapshot(step, report.overall);
      bad_evals = 0;
      return false;
    }
    return ++bad_evals >= config.patience;
  };

  for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    for (auto& batch : stream.next_epoch()) {
      zero_grads(param_vec);
      std::int64_t total_tokens = 0;
      for (const auto& ex : batch.examples)
        total_tokens += static_cast<std::int64_t>(ex.tgt_ids.size()) - 1;
      double ce_sum = 0;
      for (const auto& ex : batch.examples) {
        const std::int64_t tokens = static_cast<std::int64_t>(ex.tgt_ids.size()) - 1;
        const Real weight = static_cast<Real>(static_cast<double>(tokens) /
                                              static_cast<double>(total_tokens));
        GradGraph<Real> graph;
        auto loss = sequence_loss(params, ex);
        ce_sum += static_cast<double>(loss.value()) * static_cast<double>(tokens);
        graph.backward(scale(loss, weight));
      }
      clip_grad_norm(param_vec, static_cast<Real>(config.clip_norm));
      if (use_adam)
        adam_step(param_vec, adam, static_cast<Real>(config.learning_rate));
      else
        sgd_step(param_vec, static_cast<Real>(config.learning_rate));
      ++step;
      result.log.add_loss(step, ce_sum / static_cast<double>(total_tokens));

      if (config.eval_every > 0 && step % static_cast<std::uint64_t>(config.eval_every) == 0) {
        if (run_eval()) {
          stop = true;
          break;
        }
      }
    }
  }
  result.stopped_early = stop;

  if (!heldout.empty() && (!any_eval || evaluated_at != step) && !stop) run_eval();

  Checkpoint<Real>& ckpt = result.checkpoint;
  ckpt.vocab = vocab;
  ckpt.inventory = inventory;
  if (best) {
    ckpt.params = std::move(best->params);
    ckpt.adam = std::move(best->adam);
    ckpt.step = best->step;
  } else {
    ckpt.params = clone_params(params);
    if (use_adam) ckpt.adam = adam;
    ckpt.step = step;
  }
  return result;
}

}  // namespace latl
