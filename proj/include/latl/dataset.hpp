#pragma once

// On-disk layout of a prepared dataset directory: vocabulary, encoded
// examples, per-language token sets, plus canonical copies of the inventory
// and pairing manifest. Everything is TSV with '#' comment headers.

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "latl/corpus.hpp"
#include "latl/error.hpp"
#include "latl/format.hpp"

namespace latl {

struct PreparedDataset {
  Vocabulary vocab;
  LanguageInventory inventory;
  PairingManifest manifest;
  std::vector<ParallelExample> examples;
  std::vector<std::string> verse_ids;          // parallel to examples
  std::vector<std::set<std::string>> token_sets;  // per language index
};

namespace dataset_detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write '" + path.string() + "'");
  return out;
}

inline void write_header(std::ofstream& out, const std::vector<std::string>& header) {
  for (const auto& line : header) out << "# " << line << "\n";
}

inline std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

inline std::vector<int> parse_ids(std::string_view text, const std::string& context) {
  std::vector<int> ids;
  for (const auto& field : split(text, ' '))
    if (!field.empty()) ids.push_back(static_cast<int>(parse_int(field, context)));
  return ids;
}

}  // namespace dataset_detail

inline void save_dataset(const std::string& dir, const PreparedDataset& data,
                         const std::vector<std::string>& header = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);

  {
    auto out = dataset_detail::open_out(base / "vocab.tsv");
    dataset_detail::write_header(out, header);
    for (int id = 0; id < data.vocab.size(); ++id)
      out << id << '\t' << data.vocab.token_of(id) << '\n';
  }
  {
    auto out = dataset_detail::open_out(base / "inventory.tsv");
    dataset_detail::write_header(out, header);
    for (const auto& lang : data.inventory.languages())
      out << lang.code << '\t' << lang.family << '\n';
  }
  {
    auto out = dataset_detail::open_out(base / "manifest.tsv");
    dataset_detail::write_header(out, header);
    for (const auto& [src, tgt] : data.manifest.pairs) out << src << '\t' << tgt << '\n';
  }
  {
    auto out = dataset_detail::open_out(base / "examples.tsv");
    dataset_detail::write_header(out, header);
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
      const auto& ex = data.examples[i];
      out << data.inventory.at(ex.src_lang_index).code << '\t'
          << data.inventory.at(ex.tgt_lang_index).code << '\t' << data.verse_ids[i] << '\t'
          << dataset_detail::join_ids(ex.src_ids) << '\t' << dataset_detail::join_ids(ex.tgt_ids)
          << '\n';
    }
  }
  {
    auto out = dataset_detail::open_out(base / "token_sets.tsv");
    dataset_detail::write_header(out, header);
    for (int li = 0; li < data.inventory.size(); ++li)
      for (const auto& token : data.token_sets[static_cast<std::size_t>(li)])
        out << data.inventory.at(li).code << '\t' << token << '\n';
  }
}

inline PreparedDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path base(dir);
  PreparedDataset data;

  const auto read_lines = [](const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      lines.push_back(line);
    }
    return lines;
  };

  data.inventory = load_inventory((base / "inventory.tsv").string());
  data.manifest = load_manifest((base / "manifest.tsv").string(), data.inventory);

  {
    const auto lines = read_lines(base / "vocab.tsv");
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto fields = split(lines[i], '\t');
      if (fields.size() != 2) fail("vocab.tsv: malformed line " + std::to_string(i + 1));
      const int id = static_cast<int>(parse_int(fields[0], "vocab id"));
      const std::string token(fields[1]);
      if (id < 4) {
        if (data.vocab.token_of(id) != token)
          fail("vocab.tsv: special id " + std::to_string(id) + " must be " + data.vocab.token_of(id));
      } else {
        if (data.vocab.add_token(token) != id)
          fail("vocab.tsv: ids must be dense and ascending at '" + token + "'");
      }
    }
  }
  {
    const auto lines = read_lines(base / "examples.tsv");
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto fields = split(lines[i], '\t');
      if (fields.size() != 5) fail("examples.tsv: malformed line " + std::to_string(i + 1));
      ParallelExample ex;
      ex.src_lang_index = data.inventory.require(std::string(fields[0]));
      ex.tgt_lang_index = data.inventory.require(std::string(fields[1]));
      ex.src_ids = dataset_detail::parse_ids(fields[3], "examples.tsv src ids");
      ex.tgt_ids = dataset_detail::parse_ids(fields[4], "examples.tsv tgt ids");
      for (int id : ex.src_ids)
        if (id < 0 || id >= data.vocab.size()) fail("examples.tsv: token id out of range");
      for (int id : ex.tgt_ids)
        if (id < 0 || id >= data.vocab.size()) fail("examples.tsv: token id out of range");
      data.verse_ids.emplace_back(fields[2]);
      data.examples.push_back(std::move(ex));
    }
  }
  {
    data.token_sets.assign(static_cast<std::size_t>(data.inventory.size()), {});
    const auto lines = read_lines(base / "token_sets.tsv");
    for (const auto& line : lines) {
      const auto fields = split(line, '\t');
      if (fields.size() != 2) fail("token_sets.tsv: malformed line");
      data.token_sets[static_cast<std::size_t>(data.inventory.require(std::string(fields[0])))]
          .insert(std::string(fields[1]));
    }
  }
  return data;
}

// Builds the dataset from raw corpus files: one `<lang_code>.tsv` verse file
// per inventory language inside corpus_dir.
inline PreparedDataset prepare_dataset(const std::string& corpus_dir,
                                       const LanguageInventory& inventory,
                                       const PairingManifest& manifest, int min_freq,
                                       int max_vocab) {
  namespace fs = std::filesystem;
  manifest.validate(inventory);

  PreparedDataset data;
  data.inventory = inventory;
  data.manifest = manifest;

  std::vector<VerseDocument> docs;
  for (const auto& lang : inventory.languages())
    docs.push_back(load_verse_file((fs::path(corpus_dir) / (lang.code + ".tsv")).string(), lang.code));

  // one shared vocabulary across all languages
  std::vector<std::vector<std::string>> sequences;
  data.token_sets.assign(static_cast<std::size_t>(inventory.size()), {});
  for (const auto& doc : docs) {
    const auto li = static_cast<std::size_t>(inventory.require(doc.lang_code));
    for (const auto& entry : doc.entries) {
      auto tokens = tokenize(entry.raw_text);
      for (const auto& t : tokens) data.token_sets[li].insert(t);
      sequences.push_back(std::move(tokens));
    }
  }
  data.vocab = build_vocabulary(sequences, min_freq, max_vocab);

  for (const auto& [src, tgt] : manifest.pairs) {
    const auto& src_doc = docs[static_cast<std::size_t>(inventory.require(src))];
    const auto& tgt_doc = docs[static_cast<std::size_t>(inventory.require(tgt))];
    for (const auto& row : align_pair(src_doc, tgt_doc)) {
      data.examples.push_back(
          encode_example(row.text_a, row.text_b, src, tgt, data.vocab, data.inventory));
      data.verse_ids.push_back(row.verse_id);
    }
  }
  if (data.examples.empty()) fail("prepare_dataset: no examples produced");
  return data;
}

// Token sets as vocabulary ids, for the flag-switch diagnostic.
inline std::vector<std::unordered_set<int>> token_id_sets(const PreparedDataset& data) {
  std::vector<std::unordered_set<int>> out(data.token_sets.size());
  for (std::size_t li = 0; li < data.token_sets.size(); ++li)
    for (const auto& token : data.token_sets[li]) {
      if (auto id = data.vocab.find(token)) out[li].insert(*id);
    }
  return out;
}

}  // namespace latl
