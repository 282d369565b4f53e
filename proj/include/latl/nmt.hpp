#pragma once

// Encoder-decoder translation model with additive attention and a dedicated
// language-embedding table. The target language is injected as a pseudo-token
// at position 0 of the encoder input, so one set of parameters serves every
// language pair. Pure model math; the training loop lives elsewhere.

#include <string>
#include <utility>
#include <vector>

#include "latl/corpus.hpp"
#include "latl/error.hpp"
#include "latl/rng.hpp"
#include "latl/tensor.hpp"

namespace latl {

struct ModelConfig {
  int vocab_size = 0;    // V, includes the 4 specials
  int embed_dim = 0;     // d_e
  int hidden_dim = 0;    // d_h per direction
  int lang_count = 0;    // L
  int lang_embed_dim = 0;  // d_l; 0 means "same as embed_dim"
  int attention_dim = 0;   // d_a
  bool lang_projection = false;  // learned map from d_l into d_e

  int lang_dim() const { return lang_embed_dim > 0 ? lang_embed_dim : embed_dim; }

  void validate() const {
    if (vocab_size < 5) fail("model config: vocab_size must be >= 5 (4 specials + 1 token)");
    if (embed_dim < 1 || hidden_dim < 1 || lang_count < 1 || attention_dim < 1)
      fail("model config: all dimensions must be >= 1");
    if (lang_embed_dim < 0) fail("model config: lang_embed_dim must be >= 0");
    if (lang_dim() != embed_dim && !lang_projection)
      fail("model config: lang_embed_dim " + std::to_string(lang_dim()) + " != embed_dim " +
           std::to_string(embed_dim) + " requires lang_projection");
  }
};

// z = sigmoid(W_z x + U_z h + b_z); r likewise; candidate through tanh with
// the reset gate applied to the recurrent term; h' = (1-z) h + z candidate.
template <typename Real>
struct GruParams {
  Tensor<Real> w_z, w_r, w_c;  // [d_h, in]
  Tensor<Real> u_z, u_r, u_c;  // [d_h, d_h]
  Tensor<Real> b_z, b_r, b_c;  // [d_h]

  Tensor<Real> step(const Tensor<Real>& x, const Tensor<Real>& h) const {
    auto z = sigmoid(add(add(matvec(w_z, x), matvec(u_z, h)), b_z));
    auto r = sigmoid(add(add(matvec(w_r, x), matvec(u_r, h)), b_r));
    auto cand = tanh_op(add(add(matvec(w_c, x), matvec(u_c, mul(r, h))), b_c));
    auto keep = Tensor<Real>::filled(h.shape(), Real(1));
    return add(mul(sub(keep, z), h), mul(z, cand));
  }
};

template <typename Real>
struct ModelParams {
  ModelConfig config;

  Tensor<Real> tok_embed;   // [V, d_e], shared by source and target
  Tensor<Real> lang_embed;  // [L, d_l]
  Tensor<Real> lang_proj;   // [d_e, d_l] when enabled, else empty
  GruParams<Real> enc_fwd;  // input width d_e
  GruParams<Real> enc_bwd;
  GruParams<Real> dec;      // input width d_e + 2*d_h
  Tensor<Real> attn_w;      // [d_a, d_h], scores the decoder state
  Tensor<Real> attn_u;      // [2*d_h, d_a], scores encoder rows (x·A layout)
  Tensor<Real> attn_v;      // [d_a]
  Tensor<Real> out_w;       // [V, d_h + 2*d_h]
  Tensor<Real> out_b;       // [V]
  Tensor<Real> init_w;      // [d_h, d_h], seeds the decoder from the backward pass

  std::vector<std::pair<std::string, Tensor<Real>*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor<Real>*>> out;
    out.emplace_back("tok_embed", &tok_embed);
    out.emplace_back("lang_embed", &lang_embed);
    if (config.lang_projection) out.emplace_back("lang_proj", &lang_proj);
    const auto gru = [&](const std::string& prefix, GruParams<Real>& g) {
      out.emplace_back(prefix + ".w_z", &g.w_z);
      out.emplace_back(prefix + ".w_r", &g.w_r);
      out.emplace_back(prefix + ".w_c", &g.w_c);
      out.emplace_back(prefix + ".u_z", &g.u_z);
      out.emplace_back(prefix + ".u_r", &g.u_r);
      out.emplace_back(prefix + ".u_c", &g.u_c);
      out.emplace_back(prefix + ".b_z", &g.b_z);
      out.emplace_back(prefix + ".b_r", &g.b_r);
      out.emplace_back(prefix + ".b_c", &g.b_c);
    };
    gru("enc_fwd", enc_fwd);
    gru("enc_bwd", enc_bwd);
    gru("dec", dec);
    out.emplace_back("attn_w", &attn_w);
    out.emplace_back("attn_u", &attn_u);
    out.emplace_back("attn_v", &attn_v);
    out.emplace_back("out_w", &out_w);
    out.emplace_back("out_b", &out_b);
    out.emplace_back("init_w", &init_w);
    return out;
  }

  std::vector<Tensor<Real>*> all_tensors() {
    std::vector<Tensor<Real>*> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
  }
};

// Seeded initialization: matrices uniform within the symmetric fan bound,
// embedding tables uniform in [-0.1, 0.1], biases zero. Creation order is
// fixed so equal (config, seed) gives bitwise-equal tables.
template <typename Real = float>
ModelParams<Real> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);

  const auto matrix = [&](int rows, int cols) {
    const double bound = std::sqrt(6.0 / (rows + cols));
    auto t = Tensor<Real>::zeros({rows, cols});
    for (auto& v : t.values_mut()) v = static_cast<Real>(rng.uniform(-bound, bound));
    t.node()->requires_grad = true;
    return t;
  };
  const auto table = [&](int rows, int cols) {
    auto t = Tensor<Real>::zeros({rows, cols});
    for (auto& v : t.values_mut()) v = static_cast<Real>(rng.uniform(-0.1, 0.1));
    t.node()->requires_grad = true;
    return t;
  };
  const auto bias = [&](int n) {
    auto t = Tensor<Real>::zeros({n});
    t.node()->requires_grad = true;
    return t;
  };
  const auto gru = [&](int in, int hid) {
    GruParams<Real> g;
    g.w_z = matrix(hid, in);
    g.w_r = matrix(hid, in);
    g.w_c = matrix(hid, in);
    g.u_z = matrix(hid, hid);
    g.u_r = matrix(hid, hid);
    g.u_c = matrix(hid, hid);
    g.b_z = bias(hid);
    g.b_r = bias(hid);
    g.b_c = bias(hid);
    return g;
  };

  const int V = config.vocab_size, d_e = config.embed_dim, d_h = config.hidden_dim;
  const int L = config.lang_count, d_l = config.lang_dim(), d_a = config.attention_dim;

  ModelParams<Real> p;
  p.config = config;
  p.tok_embed = table(V, d_e);
  p.lang_embed = table(L, d_l);
  if (config.lang_projection) p.lang_proj = matrix(d_e, d_l);
  p.enc_fwd = gru(d_e, d_h);
  p.enc_bwd = gru(d_e, d_h);
  p.dec = gru(d_e + 2 * d_h, d_h);
  p.attn_w = matrix(d_a, d_h);
  p.attn_u = matrix(2 * d_h, d_a);
  p.attn_v = bias(d_a);
  for (auto& v : p.attn_v.values_mut())
    v = static_cast<Real>(rng.uniform(-std::sqrt(6.0 / (d_a + 1)), std::sqrt(6.0 / (d_a + 1))));
  p.out_w = matrix(V, 3 * d_h);
  p.out_b = bias(V);
  p.init_w = matrix(d_h, d_h);
  return p;
}

template <typename Real>
struct EncoderOutput {
  Tensor<Real> h;          // [T+1, 2*d_h]; row 0 is the language-flag position
  Tensor<Real> summary;    // concat(final forward, final backward) [2*d_h]
  Tensor<Real> bwd_final;  // backward state after consuming the whole input [d_h]
};

// Embeds [flag, tokens...] and runs forward and backward recurrences over the
// full flagged sequence; h_t concatenates both directions.
template <typename Real>
EncoderOutput<Real> encode(const ModelParams<Real>& params, const std::vector<int>& src_ids,
                           int tgt_lang_index) {
  if (src_ids.empty()) fail("encode: empty source");
  if (tgt_lang_index < 0 || tgt_lang_index >= params.config.lang_count)
    fail("encode: language index " + std::to_string(tgt_lang_index) + " out of range");

  std::vector<Tensor<Real>> inputs;
  auto flag = take_row(params.lang_embed, tgt_lang_index);
  if (params.config.lang_projection) flag = matvec(params.lang_proj, flag);
  inputs.push_back(flag);
  for (int id : src_ids) {
    if (id < 0 || id >= params.config.vocab_size)
      fail("encode: token id " + std::to_string(id) + " out of range");
    inputs.push_back(take_row(params.tok_embed, id));
  }

  const std::size_t n = inputs.size();
  const int d_h = params.config.hidden_dim;
  std::vector<Tensor<Real>> fwd(n), bwd(n);
  auto state = Tensor<Real>::zeros({d_h});
  for (std::size_t t = 0; t < n; ++t) {
    state = params.enc_fwd.step(inputs[t], state);
    fwd[t] = state;
  }
  state = Tensor<Real>::zeros({d_h});
  for (std::size_t t = n; t-- > 0;) {
    state = params.enc_bwd.step(inputs[t], state);
    bwd[t] = state;
  }

  std::vector<Tensor<Real>> rows;
  rows.reserve(n);
  for (std::size_t t = 0; t < n; ++t) rows.push_back(concat_last_axis(fwd[t], bwd[t]));

  EncoderOutput<Real> out;
  out.h = stack_rows(rows);
  out.summary = concat_last_axis(fwd[n - 1], bwd[0]);
  out.bwd_final = bwd[0];
  return out;
}

template <typename Real>
struct Attention {
  Tensor<Real> context;  // [2*d_h]
  Tensor<Real> weights;  // [rows of h]
};

// Additive scoring: e_j = v . tanh(W_a s + U_a h_j), masked softmax, then the
// weighted sum of encoder rows.
template <typename Real>
Attention<Real> attend(const ModelParams<Real>& params, const Tensor<Real>& decoder_hidden,
                       const Tensor<Real>& h, const Mask& src_mask) {
  auto scores_in = add(matmul(h, params.attn_u), matvec(params.attn_w, decoder_hidden));
  auto scores = matvec(tanh_op(scores_in), params.attn_v);
  Attention<Real> out;
  out.weights = row_softmax(scores, src_mask);
  out.context = vecmat(out.weights, h);
  return out;
}

template <typename Real>
struct DecoderState {
  Tensor<Real> hidden;     // [d_h]
  Tensor<Real> attention;  // weights from the latest step; empty before any step
};

template <typename Real>
DecoderState<Real> init_decoder_state(const ModelParams<Real>& params,
                                      const EncoderOutput<Real>& enc) {
  DecoderState<Real> s;
  s.hidden = tanh_op(matvec(params.init_w, enc.bwd_final));
  return s;
}

template <typename Real>
struct StepResult {
  Tensor<Real> logits;  // [V]
  DecoderState<Real> state;
};

// One decoder step: attention context from the current hidden state, GRU
// update on [previous-token embedding, context], then the output projection
// over [new hidden, context].
template <typename Real>
StepResult<Real> decode_step(const ModelParams<Real>& params, int prev_token_id,
                             const DecoderState<Real>& state, const Tensor<Real>& h,
                             const Mask& src_mask) {
  if (prev_token_id < 0 || prev_token_id >= params.config.vocab_size)
    fail("decode_step: token id " + std::to_string(prev_token_id) + " out of range");
  auto att = attend(params, state.hidden, h, src_mask);
  auto x = concat_last_axis(take_row(params.tok_embed, prev_token_id), att.context);
  StepResult<Real> out;
  out.state.hidden = params.dec.step(x, state.hidden);
  out.state.attention = att.weights;
  out.logits = add(matvec(params.out_w, concat_last_axis(out.state.hidden, att.context)),
                   params.out_b);
  return out;
}

// Teacher-forced mean token cross-entropy: the decoder consumes the gold
// prefix and predicts each next token.
template <typename Real>
Tensor<Real> sequence_loss(const ModelParams<Real>& params, const ParallelExample& example) {
  if (example.tgt_ids.size() < 2) fail("sequence_loss: target needs at least 2 tokens");
  auto enc = encode(params, example.src_ids, example.tgt_lang_index);
  Mask src_mask(example.src_ids.size() + 1, 1);

  auto state = init_decoder_state(params, enc);
  std::vector<Tensor<Real>> logits_rows;
  std::vector<int> targets;
  for (std::size_t t = 0; t + 1 < example.tgt_ids.size(); ++t) {
    auto step = decode_step(params, example.tgt_ids[t], state, enc.h, src_mask);
    logits_rows.push_back(step.logits);
    targets.push_back(example.tgt_ids[t + 1]);
    state = step.state;
  }
  Mask all(targets.size(), 1);
  return masked_cross_entropy(stack_rows(logits_rows), targets, all);
}

}  // namespace latl
