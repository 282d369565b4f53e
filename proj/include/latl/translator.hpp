#pragma once

// Inference over a trained model: greedy and beam decoding directed by the
// target-language flag, plus a flag-switching diagnostic that measures how
// much of the output vocabulary belongs to the requested language.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "latl/corpus.hpp"
#include "latl/error.hpp"
#include "latl/nmt.hpp"

namespace latl {

struct DecodeConfig {
  int max_len = 64;
  int beam_size = 1;
  double length_norm = 0.0;  // score / len^gamma; 0 disables

  void validate() const {
    if (max_len < 1) fail("decode config: max_len must be >= 1");
    if (beam_size < 1) fail("decode config: beam_size must be >= 1");
    if (length_norm < 0) fail("decode config: length_norm must be >= 0");
  }
};

struct Translation {
  std::vector<int> ids;  // EOS-terminated unless cut off at max_len
  double score = 0;      // sum of chosen log-probs, normalized by len^gamma
  std::vector<std::vector<double>> attention;  // one row per emitted token
};

namespace detail {

// Log-softmax over the non-PAD vocabulary; PAD gets -inf so it can never be
// emitted or scored.
template <typename Real>
std::vector<double> pad_excluded_log_probs(const std::vector<Real>& logits) {
  std::vector<double> lp(logits.size(), -std::numeric_limits<double>::infinity());
  double max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != Vocabulary::kPad) max = std::max(max, static_cast<double>(logits[i]));
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != Vocabulary::kPad) z += std::exp(static_cast<double>(logits[i]) - max);
  const double log_z = max + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != Vocabulary::kPad) lp[i] = static_cast<double>(logits[i]) - log_z;
  return lp;
}

inline double normalized(double score, std::size_t len, double gamma) {
  if (gamma == 0 || len == 0) return score;
  return score / std::pow(static_cast<double>(len), gamma);
}

template <typename Real>
std::vector<double> attention_row(const Tensor<Real>& weights) {
  std::vector<double> row;
  row.reserve(weights.values().size());
  for (Real w : weights.values()) row.push_back(static_cast<double>(w));
  return row;
}

}  // namespace detail

// Argmax decoding from BOS; ties break toward the lowest token id; stops at
// EOS or after max_len emissions.
template <typename Real>
Translation greedy_decode(const ModelParams<Real>& params, const std::vector<int>& src_ids,
                          int tgt_lang_index, const DecodeConfig& config = {}) {
  config.validate();
  auto enc = encode(params, src_ids, tgt_lang_index);
  const Mask mask(src_ids.size() + 1, 1);
  auto state = init_decoder_state(params, enc);

  Translation out;
  int prev = Vocabulary::kBos;
  double score = 0;
  for (int t = 0; t < config.max_len; ++t) {
    auto step = decode_step(params, prev, state, enc.h, mask);
    const auto lp = detail::pad_excluded_log_probs(step.logits.values());
    int pick = -1;
    for (std::size_t i = 0; i < lp.size(); ++i)
      if (pick < 0 || lp[i] > lp[static_cast<std::size_t>(pick)]) pick = static_cast<int>(i);
    score += lp[static_cast<std::size_t>(pick)];
    out.ids.push_back(pick);
    out.attention.push_back(detail::attention_row(step.state.attention));
    if (pick == Vocabulary::kEos) break;
    prev = pick;
    state = step.state;
  }
  out.score = detail::normalized(score, out.ids.size(), config.length_norm);
  return out;
}

// Standard beam search over the same scoring as greedy_decode. Finished
// hypotheses accumulate in a pool and compete under length normalization;
// at most beam_size results come back, best first.
template <typename Real>
std::vector<Translation> beam_decode(const ModelParams<Real>& params,
                                     const std::vector<int>& src_ids, int tgt_lang_index,
                                     const DecodeConfig& config = {}) {
  config.validate();
  auto enc = encode(params, src_ids, tgt_lang_index);
  const Mask mask(src_ids.size() + 1, 1);

  struct Hyp {
    std::vector<int> ids;
    double score = 0;
    DecoderState<Real> state;
    int prev = Vocabulary::kBos;
    std::vector<std::vector<double>> attention;
  };

  std::vector<Hyp> live(1);
  live[0].state = init_decoder_state(params, enc);
  std::vector<Hyp> finished;

  for (int t = 0; t < config.max_len && !live.empty(); ++t) {
    struct Cand {
      double score;
      std::size_t hyp;
      int token;
    };
    std::vector<Cand> cands;
    std::vector<StepResult<Real>> steps(live.size());
    for (std::size_t hi = 0; hi < live.size(); ++hi) {
      steps[hi] = decode_step(params, live[hi].prev, live[hi].state, enc.h, mask);
      const auto lp = detail::pad_excluded_log_probs(steps[hi].logits.values());
      for (std::size_t i = 0; i < lp.size(); ++i)
        if (i != Vocabulary::kPad)
          cands.push_back({live[hi].score + lp[i], hi, static_cast<int>(i)});
    }
    // highest score first; ties toward the lowest token id, then the earlier
    // hypothesis, so beam_size=1 reproduces greedy exactly
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.hyp < b.hyp;
    });
    if (static_cast<int>(cands.size()) > config.beam_size)
      cands.resize(static_cast<std::size_t>(config.beam_size));

    std::vector<Hyp> next;
    for (const auto& c : cands) {
      Hyp h = live[c.hyp];
      h.ids.push_back(c.token);
      h.score = c.score;
      h.attention.push_back(detail::attention_row(steps[c.hyp].state.attention));
      if (c.token == Vocabulary::kEos) {
        finished.push_back(std::move(h));
      } else {
        h.prev = c.token;
        h.state = steps[c.hyp].state;
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  for (auto& h : live) finished.push_back(std::move(h));  // max_len truncations

  std::vector<Translation> out;
  for (auto& h : finished) {
    Translation tr;
    tr.ids = std::move(h.ids);
    tr.score = detail::normalized(h.score, tr.ids.size(), config.length_norm);
    tr.attention = std::move(h.attention);
    out.push_back(std::move(tr));
  }
  std::sort(out.begin(), out.end(), [](const Translation& a, const Translation& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ids < b.ids;
  });
  if (static_cast<int>(out.size()) > config.beam_size)
    out.resize(static_cast<std::size_t>(config.beam_size));
  return out;
}

struct FlagPurity {
  int lang_index = 0;
  double purity = 0;          // fraction of emitted tokens in the flag's token set
  std::int64_t tokens = 0;    // emissions counted (EOS excluded)
};

// Decodes every sentence once per flag and scores how much of the output
// lands in the flagged language's corpus vocabulary.
template <typename Real>
std::vector<FlagPurity> flag_switch_report(const ModelParams<Real>& params,
                                           const std::vector<std::vector<int>>& src_sentences,
                                           const std::vector<int>& lang_indices,
                                           const std::vector<std::unordered_set<int>>& lang_token_sets,
                                           const DecodeConfig& config = {}) {
  std::vector<FlagPurity> report;
  for (int lang : lang_indices) {
    if (lang < 0 || lang >= static_cast<int>(lang_token_sets.size()))
      fail("flag_switch_report: language index " + std::to_string(lang) + " out of range");
    const auto& token_set = lang_token_sets[static_cast<std::size_t>(lang)];
    if (token_set.empty())
      fail("flag_switch_report: language " + std::to_string(lang) + " has no corpus tokens");
    FlagPurity fp;
    fp.lang_index = lang;
    std::int64_t hits = 0;
    for (const auto& src : src_sentences) {
      auto tr = greedy_decode(params, src, lang, config);
      for (int id : tr.ids) {
        if (id == Vocabulary::kEos) continue;
        ++fp.tokens;
        if (token_set.count(id)) ++hits;
      }
    }
    fp.purity = fp.tokens == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(fp.tokens);
    report.push_back(fp);
  }
  return report;
}

// Joins decoded ids back into text, dropping the specials.
inline std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token_of(id);
  }
  return out;
}

}  // namespace latl
