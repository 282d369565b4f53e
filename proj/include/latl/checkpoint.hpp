#pragma once

// Binary model container: magic "LATL", u32 version, u64 JSON-header length,
// a JSON header (config, vocabulary, inventory, tensor directory), then raw
// little-endian tensor payloads. Round-trips bit-exactly.

#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latl/corpus.hpp"
#include "latl/error.hpp"
#include "latl/nmt.hpp"
#include "latl/optim.hpp"

namespace latl {

template <typename Real>
struct Checkpoint {
  ModelParams<Real> params;
  Vocabulary vocab;
  LanguageInventory inventory;
  std::uint64_t step = 0;
  std::optional<AdamState<Real>> adam;  // populated when training with adam
};

namespace detail {

constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t pos) {
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i)
    x |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  return x;
}

inline std::uint64_t get_u64(const std::string& buf, std::size_t pos) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i)
    x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  return x;
}

template <typename Real>
void put_values(std::string& out, const std::vector<Real>& values) {
  for (Real v : values) {
    if constexpr (sizeof(Real) == 4)
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else
      put_u64(out, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
  }
}

template <typename Real>
void get_values(const std::string& buf, std::size_t pos, std::vector<Real>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if constexpr (sizeof(Real) == 4)
      values[i] = std::bit_cast<float>(get_u32(buf, pos + 4 * i));
    else
      values[i] = std::bit_cast<double>(get_u64(buf, pos + 8 * i));
  }
}

template <typename Real>
constexpr const char* dtype_tag() {
  return sizeof(Real) == 4 ? "f32" : "f64";
}

}  // namespace detail

template <typename Real>
void save_checkpoint(const std::string& path, Checkpoint<Real>& ckpt) {
  nlohmann::json header;
  const auto& cfg = ckpt.params.config;
  header["config"] = {{"vocab_size", cfg.vocab_size},       {"embed_dim", cfg.embed_dim},
                      {"hidden_dim", cfg.hidden_dim},       {"lang_count", cfg.lang_count},
                      {"lang_embed_dim", cfg.lang_embed_dim}, {"attention_dim", cfg.attention_dim},
                      {"lang_projection", cfg.lang_projection}};
  header["vocab"] = ckpt.vocab.tokens();
  auto inv = nlohmann::json::array();
  for (const auto& lang : ckpt.inventory.languages()) inv.push_back({lang.code, lang.family});
  header["inventory"] = inv;
  header["step"] = ckpt.step;
  if (ckpt.adam) {
    header["optimizer"] = {{"kind", "adam"},
                           {"t", ckpt.adam->t},
                           {"beta1", ckpt.adam->beta1},
                           {"beta2", ckpt.adam->beta2},
                           {"eps", ckpt.adam->eps}};
  } else {
    header["optimizer"] = {{"kind", "none"}};
  }

  // directory + payload, model tensors first, then optimizer moments
  auto directory = nlohmann::json::array();
  std::string payload;
  const auto add_tensor = [&](const std::string& name, const Shape& shape,
                              const std::vector<Real>& values) {
    directory.push_back({{"name", name},
                         {"dtype", detail::dtype_tag<Real>()},
                         {"shape", shape},
                         {"offset", payload.size()}});
    detail::put_values(payload, values);
  };
  auto named = ckpt.params.named_tensors();
  for (auto& [name, t] : named) add_tensor(name, t->shape(), t->values());
  if (ckpt.adam && !ckpt.adam->m.empty()) {
    if (ckpt.adam->m.size() != named.size())
      fail("save_checkpoint: optimizer state does not match the parameter list");
    for (std::size_t i = 0; i < named.size(); ++i)
      add_tensor("adam.m." + named[i].first, named[i].second->shape(), ckpt.adam->m[i]);
    for (std::size_t i = 0; i < named.size(); ++i)
      add_tensor("adam.v." + named[i].first, named[i].second->shape(), ckpt.adam->v[i]);
  }
  header["tensors"] = directory;

  const std::string header_text = header.dump();
  std::string blob;
  blob += "LATL";
  detail::put_u32(blob, detail::kCheckpointVersion);
  detail::put_u64(blob, header_text.size());
  blob += header_text;
  blob += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write checkpoint '" + path + "'");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) fail("cannot write checkpoint '" + path + "'");
}

template <typename Real = float>
Checkpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 16) fail("checkpoint '" + path + "': truncated header");
  if (buf.compare(0, 4, "LATL") != 0) fail("checkpoint '" + path + "': bad magic");
  const std::uint32_t version = detail::get_u32(buf, 4);
  if (version != detail::kCheckpointVersion)
    fail("checkpoint '" + path + "': unsupported version " + std::to_string(version));
  const std::uint64_t header_len = detail::get_u64(buf, 8);
  if (16 + header_len > buf.size()) fail("checkpoint '" + path + "': truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(16, header_len));
  } catch (const std::exception& e) {
    fail("checkpoint '" + path + "': malformed header: " + e.what());
  }
  const std::size_t payload_base = 16 + header_len;

  Checkpoint<Real> ckpt;
  const auto& jc = header.at("config");
  ckpt.params.config.vocab_size = jc.at("vocab_size").get<int>();
  ckpt.params.config.embed_dim = jc.at("embed_dim").get<int>();
  ckpt.params.config.hidden_dim = jc.at("hidden_dim").get<int>();
  ckpt.params.config.lang_count = jc.at("lang_count").get<int>();
  ckpt.params.config.lang_embed_dim = jc.at("lang_embed_dim").get<int>();
  ckpt.params.config.attention_dim = jc.at("attention_dim").get<int>();
  ckpt.params.config.lang_projection = jc.at("lang_projection").get<bool>();
  ckpt.params.config.validate();

  const auto vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
  if (vocab_tokens.size() < 4 || vocab_tokens[0] != "<pad>" || vocab_tokens[1] != "<unk>" ||
      vocab_tokens[2] != "<bos>" || vocab_tokens[3] != "<eos>")
    fail("checkpoint '" + path + "': vocabulary specials out of place");
  for (std::size_t i = 4; i < vocab_tokens.size(); ++i) ckpt.vocab.add_token(vocab_tokens[i]);

  for (const auto& row : header.at("inventory"))
    ckpt.inventory.add(row.at(0).get<std::string>(), row.at(1).get<std::string>());

  ckpt.step = header.at("step").get<std::uint64_t>();

  struct DirEntry {
    Shape shape;
    std::size_t offset = 0;
  };
  std::unordered_map<std::string, DirEntry> dir;
  for (const auto& e : header.at("tensors")) {
    if (e.at("dtype").get<std::string>() != detail::dtype_tag<Real>())
      fail("checkpoint '" + path + "': dtype " + e.at("dtype").get<std::string>() +
           " does not match this build's precision");
    dir[e.at("name").get<std::string>()] = {e.at("shape").get<Shape>(),
                                            e.at("offset").get<std::size_t>()};
  }

  const auto read_tensor = [&](const std::string& name) {
    auto it = dir.find(name);
    if (it == dir.end()) fail("checkpoint '" + path + "': missing tensor '" + name + "'");
    auto t = Tensor<Real>::zeros(it->second.shape);
    const std::size_t bytes = t.values().size() * sizeof(Real);
    if (payload_base + it->second.offset + bytes > buf.size())
      fail("checkpoint '" + path + "': truncated payload at tensor '" + name + "'");
    detail::get_values(buf, payload_base + it->second.offset, t.values_mut());
    t.node()->requires_grad = true;
    return t;
  };

  for (auto& [name, t] : ckpt.params.named_tensors()) *t = read_tensor(name);

  const auto& opt = header.at("optimizer");
  if (opt.at("kind").get<std::string>() == "adam") {
    AdamState<Real> state;
    state.t = opt.at("t").get<std::int64_t>();
    state.beta1 = opt.at("beta1").get<double>();
    state.beta2 = opt.at("beta2").get<double>();
    state.eps = opt.at("eps").get<double>();
    for (auto& [name, t] : ckpt.params.named_tensors())
      state.m.push_back(read_tensor("adam.m." + name).values());
    for (auto& [name, t] : ckpt.params.named_tensors())
      state.v.push_back(read_tensor("adam.v." + name).values());
    ckpt.adam = std::move(state);
  }
  return ckpt;
}

}  // namespace latl
