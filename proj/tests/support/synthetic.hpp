#pragma once

// Synthetic multilingual corpus for tests: families of word-for-word parallel
// languages. Every language renders the same underlying content-id sequences.
// Family members share a stem lexicon (3-letter family prefix + 2-letter stem
// index); each member decorates its own quarter of the stems with a globally
// unique 2-letter suffix, so members of one family overlap on ~(M-2)/M of
// their surface forms while different families share nothing.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "latl/corpus.hpp"
#include "latl/error.hpp"
#include "latl/rng.hpp"

namespace latl::synth {

struct SyntheticSpec {
  int families = 3;
  int members = 4;         // languages per family
  int stems = 30;          // content word types
  int verses = 40;
  int min_words = 3;
  int max_words = 6;
  int decoration_period = 0;  // 0: = members; larger values decorate fewer stems
  bool hub = false;  // add an extra single-member "eng" language, family "hub"
  std::uint64_t seed = 1;

  int period() const { return decoration_period > 0 ? decoration_period : members; }
};

struct SyntheticCorpus {
  LanguageInventory inventory;
  std::vector<VerseDocument> docs;  // aligned with inventory order
};

namespace detail {

inline std::string base26(int value, int width) {
  std::string out(static_cast<std::size_t>(width), 'a');
  for (int i = width - 1; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<char>('a' + value % 26);
    value /= 26;
  }
  return out;
}

inline const std::vector<std::string>& family_prefixes() {
  static const std::vector<std::string> prefixes = {
      "kap", "bor", "mun", "tel", "sig", "rav", "dol", "fen", "gur", "lis", "neb", "pyt",
  };
  return prefixes;
}

}  // namespace detail

// Surface form of content word `stem` in language (family, member). A member
// index of -1 never decorates (used for the hub language).
inline std::string surface_form(const SyntheticSpec& spec, int family, int member, int stem) {
  std::string word = detail::family_prefixes().at(static_cast<std::size_t>(family)) +
                     detail::base26(stem, 2);
  if (spec.members > 1 && member >= 0 && stem % spec.period() == member)
    word += detail::base26(family * spec.members + member, 2);
  return word;
}

inline SyntheticCorpus make_corpus(const SyntheticSpec& spec) {
  if (spec.families > static_cast<int>(detail::family_prefixes().size()) - 1)
    fail("make_corpus: not enough family prefixes");
  if (spec.min_words < 1 || spec.max_words < spec.min_words)
    fail("make_corpus: bad verse length range");

  // shared content-id sequences, one per verse
  Rng rng(Rng::mix(spec.seed, 0xC0));
  std::vector<std::vector<int>> content(static_cast<std::size_t>(spec.verses));
  for (auto& verse : content) {
    const int len = spec.min_words + static_cast<int>(rng.next_index(
                                         static_cast<std::uint64_t>(spec.max_words - spec.min_words + 1)));
    for (int w = 0; w < len; ++w)
      verse.push_back(static_cast<int>(rng.next_index(static_cast<std::uint64_t>(spec.stems))));
  }

  const auto verse_id = [](int v) {
    std::string id = std::to_string(v + 1);
    return "v" + std::string(4 - std::min<std::size_t>(4, id.size()), '0') + id;
  };

  SyntheticCorpus corpus;
  const auto add_language = [&](const std::string& code, const std::string& family_name,
                                int family, int member) {
    corpus.inventory.add(code, family_name);
    VerseDocument doc;
    doc.lang_code = code;
    for (int v = 0; v < spec.verses; ++v) {
      std::string text;
      for (std::size_t w = 0; w < content[static_cast<std::size_t>(v)].size(); ++w) {
        if (w) text += ' ';
        text += surface_form(spec, family, member, content[static_cast<std::size_t>(v)][w]);
      }
      doc.add_entry(verse_id(v), text);
    }
    corpus.docs.push_back(std::move(doc));
  };

  for (int f = 0; f < spec.families; ++f) {
    const std::string family_name = "fam" + std::to_string(f);
    for (int m = 0; m < spec.members; ++m)
      add_language(detail::family_prefixes()[static_cast<std::size_t>(f)] + std::to_string(m),
                   family_name, f, m);
  }
  if (spec.hub) add_language("eng", "hub", spec.families, -1);
  return corpus;
}

// Writes one `<code>.tsv` verse file per language plus `inventory.tsv`.
inline void write_corpus(const std::string& dir, const SyntheticCorpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "inventory.tsv", std::ios::binary | std::ios::trunc);
    if (!out) fail("write_corpus: cannot write inventory");
    for (const auto& lang : corpus.inventory.languages())
      out << lang.code << '\t' << lang.family << '\n';
  }
  for (const auto& doc : corpus.docs) {
    std::ofstream out(fs::path(dir) / (doc.lang_code + ".tsv"), std::ios::binary | std::ios::trunc);
    if (!out) fail("write_corpus: cannot write verses");
    for (const auto& entry : doc.entries) out << entry.verse_id << '\t' << entry.raw_text << '\n';
  }
}

}  // namespace latl::synth
