#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <unordered_set>
#include <vector>

#include "latl/trainer.hpp"
#include "latl/translator.hpp"

using namespace latl;

namespace {

ModelConfig random_config() {
  ModelConfig c;
  c.vocab_size = 9;
  c.embed_dim = 5;
  c.hidden_dim = 6;
  c.lang_count = 2;
  c.attention_dim = 4;
  return c;
}

// A hand-wired first-order Markov chain: the decoder hidden state becomes a
// one-hot of the previous token, and out_w turns that into a chosen logit row.
// Encoder and attention contribute nothing (all-zero parameters).
ModelParams<double> markov_model(const std::vector<std::vector<double>>& logit_rows) {
  ModelConfig c;
  const int V = static_cast<int>(logit_rows.size());
  c.vocab_size = V;
  c.embed_dim = V;
  c.hidden_dim = V;
  c.lang_count = 1;
  c.attention_dim = 1;
  auto p = init_params<double>(c, 0);
  for (auto* t : p.all_tensors())
    for (auto& v : t->values_mut()) v = 0.0;
  for (int i = 0; i < V; ++i) p.tok_embed.values_mut()[static_cast<std::size_t>(i * V + i)] = 1.0;
  for (auto& v : p.dec.b_z.values_mut()) v = 20.0;  // update gate pinned open
  for (int i = 0; i < V; ++i)
    p.dec.w_c.values_mut()[static_cast<std::size_t>(i) * p.dec.w_c.dim(1) +
                           static_cast<std::size_t>(i)] = 20.0;  // saturated one-hot carry
  for (int prev = 0; prev < V; ++prev)
    for (int next = 0; next < V; ++next)
      p.out_w.values_mut()[static_cast<std::size_t>(next) * p.out_w.dim(1) +
                           static_cast<std::size_t>(prev)] = logit_rows[static_cast<std::size_t>(prev)][static_cast<std::size_t>(next)];
  return p;
}

// Brute-force search over every PAD-free token sequence up to max_len, scored
// exactly like the decoders. Returns the best (score, ids), ties by ids.
struct Enumerated {
  double score = -1e300;
  std::vector<int> ids;
};

template <typename Real>
void enumerate_rec(const ModelParams<Real>& params, const Tensor<Real>& h, const Mask& mask,
                   const DecoderState<Real>& state, int prev, std::vector<int>& ids, double score,
                   int max_len, Enumerated& best) {
  if (static_cast<int>(ids.size()) == max_len || (!ids.empty() && ids.back() == Vocabulary::kEos)) {
    if (score > best.score || (score == best.score && ids < best.ids)) {
      best.score = score;
      best.ids = ids;
    }
    return;
  }
  auto step = decode_step(params, prev, state, h, mask);
  const auto lp = latl::detail::pad_excluded_log_probs(step.logits.values());
  for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
    if (tok == Vocabulary::kPad) continue;
    ids.push_back(tok);
    enumerate_rec(params, h, mask, step.state, tok, ids, score + lp[static_cast<std::size_t>(tok)],
                  max_len, best);
    ids.pop_back();
  }
}

template <typename Real>
Enumerated enumerate_best(const ModelParams<Real>& params, const std::vector<int>& src,
                          int lang, int max_len) {
  auto enc = encode(params, src, lang);
  const Mask mask(src.size() + 1, 1);
  auto state = init_decoder_state(params, enc);
  Enumerated best;
  std::vector<int> ids;
  enumerate_rec(params, enc.h, mask, state, Vocabulary::kBos, ids, 0.0, max_len, best);
  return best;
}

}  // namespace

TEST_CASE("beam of width 1 reproduces greedy decoding exactly") {
  auto cfg = random_config();
  DecodeConfig dc;
  dc.max_len = 6;
  for (int seed = 0; seed < 100; ++seed) {
    auto p = init_params<float>(cfg, static_cast<std::uint64_t>(seed));
    Rng rng(static_cast<std::uint64_t>(seed) + 1000);
    std::vector<int> src;
    const std::size_t len = 3 + rng.next_index(3);
    for (std::size_t i = 0; i < len; ++i) src.push_back(4 + static_cast<int>(rng.next_index(5)));
    const int lang = static_cast<int>(rng.next_index(2));

    auto greedy = greedy_decode(p, src, lang, dc);
    dc.beam_size = 1;
    auto beam = beam_decode(p, src, lang, dc);
    REQUIRE(beam.size() == 1);
    CHECK(beam[0].ids == greedy.ids);
    CHECK(beam[0].score == Catch::Approx(greedy.score).margin(1e-9));
  }
}

TEST_CASE("decoded sequences stay inside the vocabulary and never emit PAD") {
  auto cfg = random_config();
  DecodeConfig dc;
  dc.max_len = 8;
  dc.beam_size = 3;
  for (int seed = 0; seed < 20; ++seed) {
    auto p = init_params<float>(cfg, static_cast<std::uint64_t>(seed) + 500);
    auto greedy = greedy_decode(p, {4, 5, 6}, 0, dc);
    for (int id : greedy.ids) {
      CHECK(id != Vocabulary::kPad);
      CHECK(id >= 0);
      CHECK(id < cfg.vocab_size);
    }
    for (auto results = beam_decode(p, {4, 5, 6}, 0, dc); const auto& tr : results) {
      CHECK(!tr.ids.empty());
      for (int id : tr.ids) {
        CHECK(id != Vocabulary::kPad);
        CHECK(id < cfg.vocab_size);
      }
      CHECK(std::isfinite(tr.score));
    }
  }
}

TEST_CASE("attention rows from decoding sum to one") {
  auto p = init_params<float>(random_config(), 321);
  DecodeConfig dc;
  dc.max_len = 5;
  auto tr = greedy_decode(p, {4, 5, 6, 7}, 1, dc);
  REQUIRE(!tr.attention.empty());
  for (const auto& row : tr.attention) {
    REQUIRE(row.size() == 5);  // source length + flag position
    double sum = 0;
    for (double w : row) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("max_len 1 truncates to a single token and decoding is pure") {
  auto p = init_params<float>(random_config(), 77);
  DecodeConfig dc;
  dc.max_len = 1;
  auto tr = greedy_decode(p, {4, 5}, 0, dc);
  CHECK(tr.ids.size() == 1);

  dc.max_len = 10;
  auto a = greedy_decode(p, {4, 5}, 0, dc);
  auto b = greedy_decode(p, {4, 5}, 0, dc);
  CHECK(a.ids == b.ids);
  CHECK(a.score == b.score);
}

TEST_CASE("wider beams never find a worse best raw score") {
  auto cfg = random_config();
  DecodeConfig dc;
  dc.max_len = 6;
  for (int seed = 0; seed < 20; ++seed) {
    auto p = init_params<float>(cfg, static_cast<std::uint64_t>(seed) + 900);
    dc.beam_size = 1;
    auto narrow = beam_decode(p, {5, 6, 7}, 1, dc);
    dc.beam_size = 4;
    auto wide = beam_decode(p, {5, 6, 7}, 1, dc);
    REQUIRE(!narrow.empty());
    REQUIRE(!wide.empty());
    CHECK(wide.size() <= 4);
    CHECK(wide[0].score >= narrow[0].score - 1e-12);
    for (std::size_t i = 1; i < wide.size(); ++i) CHECK(wide[i - 1].score >= wide[i].score);
  }
}

TEST_CASE("hand-set Markov chain: greedy falls into the trap, beam 2 escapes") {
  // token ids: PAD=0 UNK=1 BOS=2 EOS=3 a=4 b=5. From BOS, `a` looks slightly
  // better than `b`, but everything after `a` is mediocre while `b` leads
  // straight to a near-certain EOS.
  const std::vector<std::vector<double>> rows = {
      {0, 0, 0, 0, 0, 0},              // after PAD (unused)
      {0, 0, 0, 0, 0, 0},              // after UNK (unused)
      {0, -9, -9, -9, 2.0, 1.9},       // after BOS
      {0, 0, 0, 0, 0, 0},              // after EOS (unused)
      {0, -9, -9, 0.3, 0.0, 0.0},      // after a: EOS best of a bad lot
      {0, -9, -9, 5.0, -9, -9},        // after b: EOS nearly certain
  };
  auto p = markov_model(rows);
  DecodeConfig dc;
  dc.max_len = 2;

  auto greedy = greedy_decode(p, {4}, 0, dc);
  REQUIRE(greedy.ids.size() == 2);
  CHECK(greedy.ids[0] == 4);  // takes the bait
  CHECK(greedy.ids[1] == 3);

  dc.beam_size = 2;
  auto beam = beam_decode(p, {4}, 0, dc);
  REQUIRE(!beam.empty());
  CHECK(beam[0].ids == std::vector<int>{5, 3});
  CHECK(beam[0].score > greedy.score);

  auto best = enumerate_best(p, {4}, 0, 2);
  CHECK(beam[0].ids == best.ids);
  CHECK(beam[0].score == Catch::Approx(best.score).margin(1e-9));
}

TEST_CASE("exact logit ties resolve toward the lowest token id") {
  // an all-zero model scores every non-PAD token identically at every step
  ModelConfig cfg;
  cfg.vocab_size = 7;
  cfg.embed_dim = 3;
  cfg.hidden_dim = 3;
  cfg.lang_count = 1;
  cfg.attention_dim = 2;
  auto p = init_params<float>(cfg, 0);
  for (auto* t : p.all_tensors())
    for (auto& v : t->values_mut()) v = 0.0f;
  DecodeConfig dc;
  dc.max_len = 3;
  auto tr = greedy_decode(p, {4}, 0, dc);
  REQUIRE(!tr.ids.empty());
  for (int id : tr.ids) CHECK(id == Vocabulary::kUnk);  // id 1, the lowest non-PAD

  dc.beam_size = 1;
  auto beam = beam_decode(p, {4}, 0, dc);
  REQUIRE(beam.size() == 1);
  CHECK(beam[0].ids == tr.ids);
}

TEST_CASE("beam matches exhaustive enumeration on small random models") {
  // beam as wide as the whole candidate space is exhaustive over prefixes,
  // so it must agree with brute force
  ModelConfig cfg;
  cfg.vocab_size = 6;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 4;
  cfg.lang_count = 1;
  cfg.attention_dim = 3;
  DecodeConfig dc;
  dc.max_len = 3;
  dc.beam_size = 125;  // >= 5^3 PAD-free sequences
  for (int seed = 0; seed < 10; ++seed) {
    auto p = init_params<double>(cfg, static_cast<std::uint64_t>(seed) + 40);
    auto beam = beam_decode(p, {4, 5}, 0, dc);
    auto best = enumerate_best(p, {4, 5}, 0, 3);
    REQUIRE(!beam.empty());
    CHECK(beam[0].ids == best.ids);
    CHECK(beam[0].score == Catch::Approx(best.score).margin(1e-9));
  }
}

TEST_CASE("an overfit model reproduces its training targets under greedy decoding") {
  LanguageInventory inventory;
  inventory.add("aa", "A");
  inventory.add("bb", "B");
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"ka lo mi", "pa ro su"},
      {"lo mi ka", "ro su pa"},
      {"mi ka lo", "su pa ro"},
      {"ka mi lo", "pa su ro"},
  };
  std::vector<std::vector<std::string>> seqs;
  for (const auto& [a, b] : pairs) {
    seqs.push_back(tokenize(a));
    seqs.push_back(tokenize(b));
  }
  auto vocab = build_vocabulary(seqs, 1, 100);
  std::vector<ParallelExample> examples;
  for (const auto& [a, b] : pairs)
    examples.push_back(encode_example(a, b, "aa", "bb", vocab, inventory));

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = 8;
  mc.hidden_dim = 12;
  mc.lang_count = 2;
  mc.attention_dim = 8;
  auto p = init_params<float>(mc, 15);
  TrainConfig tc;
  tc.epochs = 250;
  tc.batch_size = 4;
  tc.learning_rate = 5e-3;
  auto r = train(p, examples, {}, tc, vocab, inventory);

  for (const auto& ex : examples) {
    auto tr = greedy_decode(p, ex.src_ids, ex.tgt_lang_index);
    const std::vector<int> want(ex.tgt_ids.begin() + 1, ex.tgt_ids.end());
    CHECK(tr.ids == want);
  }

  // the memorized model emits only corpus tokens, so its own flag scores 1.0
  std::vector<std::unordered_set<int>> token_sets(2);
  for (const auto& [a, b] : pairs) {
    for (const auto& t : tokenize(a)) token_sets[0].insert(vocab.encode(t));
    for (const auto& t : tokenize(b)) token_sets[1].insert(vocab.encode(t));
  }
  std::vector<std::vector<int>> sources;
  for (const auto& ex : examples) sources.push_back(ex.src_ids);
  auto purity = flag_switch_report(p, sources, {1}, token_sets);
  REQUIRE(purity.size() == 1);
  CHECK(purity[0].lang_index == 1);
  CHECK(purity[0].tokens > 0);
  CHECK(purity[0].purity == 1.0);
}

TEST_CASE("flag report validates token sets and stays within bounds untrained") {
  auto p = init_params<float>(random_config(), 60);
  std::vector<std::unordered_set<int>> sets(2);
  sets[0] = {4, 5};
  auto report = flag_switch_report(p, {{4, 5}, {5, 6}}, {0}, sets);
  REQUIRE(report.size() == 1);
  CHECK(report[0].purity >= 0.0);
  CHECK(report[0].purity <= 1.0);

  CHECK_THROWS_WITH(flag_switch_report(p, {{4, 5}}, {1}, sets),
                    Catch::Matchers::ContainsSubstring("no corpus tokens"));
  CHECK_THROWS(flag_switch_report(p, {{4, 5}}, {7}, sets));
}

TEST_CASE("detokenize joins tokens and drops specials") {
  auto vocab = build_vocabulary({{"den", "hund"}}, 1, 10);
  const std::vector<int> ids = {Vocabulary::kBos, vocab.encode("den"), vocab.encode("hund"),
                                Vocabulary::kEos};
  CHECK(detokenize(vocab, ids) == "den hund");
  CHECK(detokenize(vocab, {Vocabulary::kEos}).empty());
  CHECK(detokenize(vocab, {vocab.encode("den"), Vocabulary::kUnk}) == "den <unk>");
}
