#pragma once

// Verse-aligned corpus handling: file loading, tokenization, vocabulary
// construction, language-flagged example encoding and batching. All values
// are immutable once built.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "latl/error.hpp"
#include "latl/format.hpp"
#include "latl/rng.hpp"
#include "latl/tensor.hpp"

namespace latl {

// ---------------------------------------------------------------------------
// Text: UTF-8 code point helpers

namespace text {

// Decodes the code point starting at s[i]; advances i. Bytes that do not form
// a valid UTF-8 sequence are passed through as single-byte code points.
inline char32_t next_codepoint(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  const unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return b0;
  }
  if (i + static_cast<std::size_t>(len) > s.size()) {
    ++i;
    return b0;
  }
  for (int k = 1; k < len; ++k) {
    if ((byte(i + static_cast<std::size_t>(k)) & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (byte(i + static_cast<std::size_t>(k)) & 0x3F);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

inline void append_codepoint(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline bool is_whitespace(char32_t cp) {
  switch (cp) {
    case 0x09:
    case 0x0A:
    case 0x0B:
    case 0x0C:
    case 0x0D:
    case 0x20:
    case 0x85:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

inline bool is_punctuation(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
           (cp >= 0x7B && cp <= 0x7E);
  }
  switch (cp) {
    case 0xA1:   // inverted exclamation
    case 0xAB:   // left guillemet
    case 0xBB:   // right guillemet
    case 0xBF:   // inverted question
    case 0x2013:
    case 0x2014:
    case 0x2018:
    case 0x2019:
    case 0x201A:
    case 0x201C:
    case 0x201D:
    case 0x201E:
    case 0x2026:
    case 0x2039:
    case 0x203A:
      return true;
    default:
      return false;
  }
}

// ASCII plus the Latin-1 letter block. Sufficient for the corpora this
// library targets; other scripts pass through unchanged.
inline char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  return cp;
}

}  // namespace text

// Deterministic, language-agnostic tokenizer: lowercases, splits on Unicode
// whitespace, then peels leading/trailing punctuation code points off each
// chunk into tokens of their own. Interior punctuation ("don't") stays put.
inline std::vector<std::string> tokenize(std::string_view input) {
  std::vector<char32_t> cps;
  std::size_t i = 0;
  while (i < input.size()) cps.push_back(text::to_lower(text::next_codepoint(input, i)));

  std::vector<std::string> tokens;
  const auto emit_range = [&](std::size_t from, std::size_t to) {
    // [from, to): one whitespace-free chunk
    std::size_t lead = from;
    while (lead < to && text::is_punctuation(cps[lead])) ++lead;
    std::size_t tail = to;
    while (tail > lead && text::is_punctuation(cps[tail - 1])) --tail;
    for (std::size_t k = from; k < lead; ++k) {
      std::string t;
      text::append_codepoint(t, cps[k]);
      tokens.push_back(std::move(t));
    }
    if (lead < tail) {
      std::string core;
      for (std::size_t k = lead; k < tail; ++k) text::append_codepoint(core, cps[k]);
      tokens.push_back(std::move(core));
    }
    for (std::size_t k = tail; k < to; ++k) {
      std::string t;
      text::append_codepoint(t, cps[k]);
      tokens.push_back(std::move(t));
    }
  };

  std::size_t start = 0;
  for (std::size_t k = 0; k <= cps.size(); ++k) {
    if (k == cps.size() || text::is_whitespace(cps[k])) {
      if (k > start) emit_range(start, k);
      start = k + 1;
    }
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Documents and inventories

struct VerseEntry {
  std::string verse_id;
  std::string raw_text;
};

// One language's side of the corpus, keyed by verse id in file order.
struct VerseDocument {
  std::string lang_code;
  std::vector<VerseEntry> entries;

  const std::string* find(const std::string& verse_id) const {
    auto it = index_.find(verse_id);
    return it == index_.end() ? nullptr : &entries[it->second].raw_text;
  }

  void add_entry(std::string verse_id, std::string raw_text) {
    if (index_.count(verse_id)) fail("verse document " + lang_code + ": duplicate verse id '" + verse_id + "'");
    index_.emplace(verse_id, entries.size());
    entries.push_back({std::move(verse_id), std::move(raw_text)});
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Lines are `verse_id<TAB>text`. Order is preserved; ids must be unique.
inline VerseDocument load_verse_file(const std::string& path, const std::string& lang_code) {
  if (lang_code.empty()) fail("load_verse_file: empty language code");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open verse file '" + path + "'");
  VerseDocument doc;
  doc.lang_code = lang_code;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      fail(path + ":" + std::to_string(lineno) + ": missing TAB separator");
    doc.add_entry(line.substr(0, tab), line.substr(tab + 1));
  }
  return doc;
}

struct LanguageInfo {
  std::string code;
  std::string family;  // may be empty: unknown family
  int index = 0;
};

class LanguageInventory {
 public:
  void add(std::string code, std::string family) {
    if (code.empty()) fail("inventory: empty language code");
    if (by_code_.count(code)) fail("inventory: duplicate language code '" + code + "'");
    const int index = static_cast<int>(languages_.size());
    by_code_.emplace(code, index);
    languages_.push_back({std::move(code), std::move(family), index});
  }

  int size() const { return static_cast<int>(languages_.size()); }
  const std::vector<LanguageInfo>& languages() const { return languages_; }
  const LanguageInfo& at(int index) const { return languages_[static_cast<std::size_t>(index)]; }

  std::optional<int> find(const std::string& code) const {
    auto it = by_code_.find(code);
    if (it == by_code_.end()) return std::nullopt;
    return it->second;
  }

  int require(const std::string& code) const {
    auto idx = find(code);
    if (!idx) fail("unknown language code '" + code + "'");
    return *idx;
  }

 private:
  std::vector<LanguageInfo> languages_;
  std::unordered_map<std::string, int> by_code_;
};

// TSV `lang_code<TAB>family`, one language per line; order defines indices.
inline LanguageInventory load_inventory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open inventory file '" + path + "'");
  LanguageInventory inv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      inv.add(line, "");
    else
      inv.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return inv;
}

struct PairingManifest {
  std::vector<std::pair<std::string, std::string>> pairs;  // (src, tgt), directed

  void validate(const LanguageInventory& inventory) const {
    for (const auto& [src, tgt] : pairs) {
      if (src == tgt) fail("manifest: pair " + src + "-" + tgt + " maps a language to itself");
      inventory.require(src);
      inventory.require(tgt);
    }
  }
};

inline PairingManifest load_manifest(const std::string& path, const LanguageInventory& inventory) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open manifest file '" + path + "'");
  PairingManifest manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(path + ":" + std::to_string(lineno) + ": missing TAB separator");
    manifest.pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  manifest.validate(inventory);
  return manifest;
}

// Hub-and-spoke pairing: hub<->X for every other inventory language.
inline PairingManifest star_manifest(const LanguageInventory& inventory, const std::string& hub) {
  inventory.require(hub);
  PairingManifest manifest;
  for (const auto& lang : inventory.languages()) {
    if (lang.code == hub) continue;
    manifest.pairs.emplace_back(hub, lang.code);
    manifest.pairs.emplace_back(lang.code, hub);
  }
  if (manifest.pairs.empty()) fail("star manifest: inventory holds only the hub language");
  return manifest;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  Vocabulary() {
    for (const char* s : {"<pad>", "<unk>", "<bos>", "<eos>"}) append(s);
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }

  int add_token(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) fail("vocabulary: duplicate token '" + token + "'");
    return append(token);
  }

  // UNK for anything unseen.
  int encode(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  std::optional<int> find(const std::string& token) const {
    auto it = token_to_id_.find(token);
    if (it == token_to_id_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= size()) fail("vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::vector<int> encode_all(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(encode(t));
    return ids;
  }

 private:
  int append(const std::string& token) {
    const int id = size();
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
    return id;
  }

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Frequency-sorted vocabulary: keep tokens with freq >= min_freq, most
// frequent first, ties lexicographic, truncated to max_size - 4 before the
// specials are prepended.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sequences, int min_freq,
                                   int max_size) {
  if (min_freq < 1) fail("build_vocabulary: min_freq must be >= 1");
  if (max_size <= 4) fail("build_vocabulary: max_size must exceed the 4 specials");
  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& seq : sequences)
    for (const auto& tok : seq) ++freq[tok];

  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(kept.size()) > max_size - 4) kept.resize(static_cast<std::size_t>(max_size - 4));

  Vocabulary vocab;
  for (const auto& [tok, n] : kept) vocab.add_token(tok);
  return vocab;
}

// ---------------------------------------------------------------------------
// Aligned examples

struct AlignedRow {
  std::string verse_id;
  std::string text_a;
  std::string text_b;
};

// Intersection of verse ids, in doc_a order.
inline std::vector<AlignedRow> align_pair(const VerseDocument& doc_a, const VerseDocument& doc_b) {
  std::vector<AlignedRow> rows;
  for (const auto& entry : doc_a.entries) {
    const std::string* other = doc_b.find(entry.verse_id);
    if (other) rows.push_back({entry.verse_id, entry.raw_text, *other});
  }
  if (rows.empty())
    fail("no aligned verses between " + doc_a.lang_code + " and " + doc_b.lang_code);
  return rows;
}

// One training example. tgt_lang_index is the flag the decoder must obey.
struct ParallelExample {
  int src_lang_index = 0;
  int tgt_lang_index = 0;
  std::vector<int> src_ids;
  std::vector<int> tgt_ids;  // BOS ... EOS
};

inline ParallelExample encode_example(const std::string& src_text, const std::string& tgt_text,
                                      const std::string& src_lang, const std::string& tgt_lang,
                                      const Vocabulary& vocab, const LanguageInventory& inventory) {
  ParallelExample ex;
  ex.src_lang_index = inventory.require(src_lang);
  ex.tgt_lang_index = inventory.require(tgt_lang);
  ex.src_ids = vocab.encode_all(tokenize(src_text));
  if (ex.src_ids.empty()) fail("encode_example: source text has no tokens");
  const auto tgt_tokens = tokenize(tgt_text);
  if (tgt_tokens.empty()) fail("encode_example: target text has no tokens");
  ex.tgt_ids.push_back(Vocabulary::kBos);
  for (const auto& t : tgt_tokens) ex.tgt_ids.push_back(vocab.encode(t));
  ex.tgt_ids.push_back(Vocabulary::kEos);
  return ex;
}

// ---------------------------------------------------------------------------
// Batching

struct Batch {
  int size = 0;
  int src_width = 0;
  int tgt_width = 0;
  std::vector<int> src_lang;            // per row
  std::vector<int> tgt_lang;            // per row
  std::vector<int> src_ids;             // row-major, PAD-padded
  std::vector<int> tgt_ids;             // row-major, PAD-padded
  Mask src_mask;                        // 1 = real token
  Mask tgt_mask;
  std::vector<ParallelExample> examples;  // unpadded originals, batch order
};

inline Batch make_batch(std::vector<ParallelExample> examples) {
  Batch b;
  b.size = static_cast<int>(examples.size());
  for (const auto& ex : examples) {
    b.src_width = std::max(b.src_width, static_cast<int>(ex.src_ids.size()));
    b.tgt_width = std::max(b.tgt_width, static_cast<int>(ex.tgt_ids.size()));
  }
  b.src_ids.assign(static_cast<std::size_t>(b.size) * b.src_width, Vocabulary::kPad);
  b.tgt_ids.assign(static_cast<std::size_t>(b.size) * b.tgt_width, Vocabulary::kPad);
  b.src_mask.assign(b.src_ids.size(), 0);
  b.tgt_mask.assign(b.tgt_ids.size(), 0);
  for (int r = 0; r < b.size; ++r) {
    const auto& ex = examples[static_cast<std::size_t>(r)];
    b.src_lang.push_back(ex.src_lang_index);
    b.tgt_lang.push_back(ex.tgt_lang_index);
    for (std::size_t c = 0; c < ex.src_ids.size(); ++c) {
      b.src_ids[static_cast<std::size_t>(r) * b.src_width + c] = ex.src_ids[c];
      b.src_mask[static_cast<std::size_t>(r) * b.src_width + c] = 1;
    }
    for (std::size_t c = 0; c < ex.tgt_ids.size(); ++c) {
      b.tgt_ids[static_cast<std::size_t>(r) * b.tgt_width + c] = ex.tgt_ids[c];
      b.tgt_mask[static_cast<std::size_t>(r) * b.tgt_width + c] = 1;
    }
  }
  b.examples = std::move(examples);
  return b;
}

// Seeded epoch stream: every epoch is a fresh permutation of the examples,
// derived from (seed, epoch) so runs with equal seeds are identical.
class BatchStream {
 public:
  BatchStream(std::vector<ParallelExample> examples, int batch_size, std::uint64_t seed)
      : examples_(std::move(examples)), batch_size_(batch_size), seed_(seed) {
    if (batch_size_ < 1) fail("batch_iterator: batch_size must be >= 1");
  }

  std::vector<Batch> next_epoch() {
    std::vector<std::size_t> order(examples_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(Rng::mix(seed_, epoch_++));
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size_)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(batch_size_));
      std::vector<ParallelExample> chunk;
      chunk.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) chunk.push_back(examples_[order[i]]);
      batches.push_back(make_batch(std::move(chunk)));
    }
    return batches;
  }

  std::uint64_t epoch() const { return epoch_; }

 private:
  std::vector<ParallelExample> examples_;
  int batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
};

}  // namespace latl
