// latl — multilingual translation engine with language flags, plus tooling
// for inspecting the learned language space.
//
// Subcommands: prepare, train, translate, eval,
//              langspace extract|project|cluster|plot.
// Every run echoes its effective configuration to stderr as `config:` lines
// and embeds the same key/value pairs as '#' header comments in the text
// artifacts it writes. All errors go to stderr as one line `error: ...` and
// force a nonzero exit.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "latl/checkpoint.hpp"
#include "latl/corpus.hpp"
#include "latl/dataset.hpp"
#include "latl/error.hpp"
#include "latl/format.hpp"
#include "latl/langspace.hpp"
#include "latl/nmt.hpp"
#include "latl/rng.hpp"
#include "latl/trainer.hpp"
#include "latl/translator.hpp"
#include "latl/tsne.hpp"
#include "latl/upgma.hpp"

namespace {

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

void echo_config(const ConfigEcho& kv) {
  for (const auto& [key, value] : kv) std::cerr << "config: " << key << " = " << value << "\n";
}

std::vector<std::string> header_lines(const ConfigEcho& kv) {
  std::vector<std::string> lines;
  for (const auto& [key, value] : kv) lines.push_back(key + " = " + value);
  return lines;
}

std::ofstream open_artifact(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) latl::fail("cannot write '" + path + "'");
  return out;
}

std::pair<std::string, std::string> split_pair_flag(const std::string& value) {
  const auto colon = value.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == value.size())
    latl::fail("pair flag must look like src:tgt, got '" + value + "'");
  return {value.substr(0, colon), value.substr(colon + 1)};
}

// ---------------------------------------------------------------- prepare --

struct PrepareOpts {
  std::string corpus_dir;
  std::string inventory_path;
  std::string manifest_path;
  std::string star;
  int min_freq = 1;
  int max_vocab = 50000;
  std::string out;
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_prepare(const PrepareOpts& o) {
  const ConfigEcho cfg = {{"command", "prepare"},
                          {"corpus", o.corpus_dir},
                          {"inventory", o.inventory_path},
                          {"manifest", o.manifest_path.empty() ? "-" : o.manifest_path},
                          {"star", o.star.empty() ? "-" : o.star},
                          {"min-freq", std::to_string(o.min_freq)},
                          {"max-vocab", std::to_string(o.max_vocab)},
                          {"out", o.out},
                          {"seed", std::to_string(o.seed)},
                          {"threads", std::to_string(o.threads)}};
  echo_config(cfg);
  if (o.manifest_path.empty() == o.star.empty())
    latl::fail("prepare needs exactly one of --manifest or --star");

  const auto inventory = latl::load_inventory(o.inventory_path);
  const auto manifest = o.star.empty() ? latl::load_manifest(o.manifest_path, inventory)
                                       : latl::star_manifest(inventory, o.star);
  const auto data =
      latl::prepare_dataset(o.corpus_dir, inventory, manifest, o.min_freq, o.max_vocab);
  latl::save_dataset(o.out, data, header_lines(cfg));

  std::cout << "languages\t" << data.inventory.size() << "\n"
            << "pairs\t" << data.manifest.pairs.size() << "\n"
            << "examples\t" << data.examples.size() << "\n"
            << "vocab\t" << data.vocab.size() << "\n";
}

// ------------------------------------------------------------------ train --

struct TrainOpts {
  std::string data_dir;
  std::string out;
  int embed_dim = 32;
  int hidden_dim = 64;
  int attention_dim = 32;
  int lang_dim = 0;  // 0: same as embed-dim
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";
  double clip_norm = 5.0;
  int eval_every = 0;
  int patience = 3;
  std::vector<std::string> heldout_pairs;
  double heldout_fraction = 0.0;
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_train(const TrainOpts& o) {
  ConfigEcho cfg = {{"command", "train"},
                    {"data", o.data_dir},
                    {"out", o.out},
                    {"embed-dim", std::to_string(o.embed_dim)},
                    {"hidden-dim", std::to_string(o.hidden_dim)},
                    {"attn-dim", std::to_string(o.attention_dim)},
                    {"lang-dim", std::to_string(o.lang_dim)},
                    {"epochs", std::to_string(o.epochs)},
                    {"batch-size", std::to_string(o.batch_size)},
                    {"lr", latl::format_real(o.learning_rate)},
                    {"optimizer", o.optimizer},
                    {"clip-norm", latl::format_real(o.clip_norm)},
                    {"eval-every", std::to_string(o.eval_every)},
                    {"patience", std::to_string(o.patience)},
                    {"heldout-fraction", latl::format_real(o.heldout_fraction)},
                    {"seed", std::to_string(o.seed)},
                    {"threads", std::to_string(o.threads)}};
  for (const auto& p : o.heldout_pairs) cfg.emplace_back("heldout-pair", p);
  echo_config(cfg);
  if (o.heldout_fraction < 0.0 || o.heldout_fraction >= 1.0)
    latl::fail("--heldout-fraction must lie in [0, 1)");

  const auto data = latl::load_dataset(o.data_dir);

  latl::ModelConfig mc;
  mc.vocab_size = data.vocab.size();
  mc.embed_dim = o.embed_dim;
  mc.hidden_dim = o.hidden_dim;
  mc.attention_dim = o.attention_dim;
  mc.lang_count = data.inventory.size();
  mc.lang_embed_dim = o.lang_dim;
  mc.lang_projection = mc.lang_dim() != mc.embed_dim;

  // held-out split: whole pairs first, then a deterministic fraction of the rest
  std::set<std::pair<int, int>> held_pairs;
  for (const auto& flag : o.heldout_pairs) {
    const auto [src, tgt] = split_pair_flag(flag);
    held_pairs.emplace(data.inventory.require(src), data.inventory.require(tgt));
  }
  std::vector<bool> held(data.examples.size(), false);
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto& ex = data.examples[i];
    if (held_pairs.count({ex.src_lang_index, ex.tgt_lang_index}))
      held[i] = true;
    else
      rest.push_back(i);
  }
  if (o.heldout_fraction > 0.0) {
    latl::Rng rng(latl::Rng::mix(o.seed, 0x4e1d));
    rng.shuffle(rest);
    const auto take = static_cast<std::size_t>(o.heldout_fraction * static_cast<double>(rest.size()));
    for (std::size_t i = 0; i < take; ++i) held[rest[i]] = true;
  }
  std::vector<latl::ParallelExample> train_ex, held_ex;
  for (std::size_t i = 0; i < data.examples.size(); ++i)
    (held[i] ? held_ex : train_ex).push_back(data.examples[i]);
  if (train_ex.empty()) latl::fail("held-out selection leaves no training examples");

  auto params = latl::init_params<float>(mc, o.seed);
  latl::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.learning_rate = o.learning_rate;
  tc.optimizer = o.optimizer;
  tc.clip_norm = o.clip_norm;
  tc.eval_every = o.eval_every;
  tc.patience = o.patience;
  tc.seed = o.seed;
  tc.threads = o.threads;

  auto result = latl::train(params, train_ex, held_ex, tc, data.vocab, data.inventory);

  std::filesystem::create_directories(o.out);
  const auto base = std::filesystem::path(o.out);
  latl::save_checkpoint((base / "model.latl").string(), result.checkpoint);
  {
    auto out = open_artifact((base / "train_log.tsv").string());
    for (const auto& line : header_lines(cfg)) out << "# " << line << "\n";
    out << result.log.to_tsv();
  }

  std::cout << "train_examples\t" << train_ex.size() << "\n"
            << "heldout_examples\t" << held_ex.size() << "\n"
            << "steps\t" << result.checkpoint.step << "\n"
            << "stopped_early\t" << (result.stopped_early ? "true" : "false") << "\n";
  if (!held_ex.empty()) {
    const auto report =
        latl::evaluate_perplexity(result.checkpoint.params, held_ex, o.threads);
    std::cout << "heldout_ppl\t" << latl::format_real(report.overall) << "\n";
  }
}

// -------------------------------------------------------------- translate --

struct TranslateOpts {
  std::string model_path;
  std::string input_path;  // empty: stdin
  std::string out;         // empty: stdout
  int beam = 1;
  int max_len = 64;
  double length_norm = 0.0;
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_translate(const TranslateOpts& o) {
  const ConfigEcho cfg = {{"command", "translate"},
                          {"model", o.model_path},
                          {"input", o.input_path.empty() ? "-" : o.input_path},
                          {"out", o.out.empty() ? "-" : o.out},
                          {"beam", std::to_string(o.beam)},
                          {"max-len", std::to_string(o.max_len)},
                          {"length-norm", latl::format_real(o.length_norm)},
                          {"seed", std::to_string(o.seed)},
                          {"threads", std::to_string(o.threads)}};
  echo_config(cfg);

  const auto ckpt = latl::load_checkpoint<float>(o.model_path);
  latl::DecodeConfig dc;
  dc.beam_size = o.beam;
  dc.max_len = o.max_len;
  dc.length_norm = o.length_norm;
  dc.validate();

  std::ifstream file_in;
  if (!o.input_path.empty()) {
    file_in.open(o.input_path, std::ios::binary);
    if (!file_in) latl::fail("cannot open '" + o.input_path + "'");
  }
  std::istream& in = o.input_path.empty() ? std::cin : file_in;

  std::ostringstream body;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      latl::fail("input line " + std::to_string(lineno) + ": expected `tgt_lang<TAB>text`");
    const int lang = ckpt.inventory.require(line.substr(0, tab));
    const auto src_ids = ckpt.vocab.encode_all(latl::tokenize(line.substr(tab + 1)));
    if (src_ids.empty())
      latl::fail("input line " + std::to_string(lineno) + ": no tokens in source text");
    const latl::Translation tr =
        o.beam > 1 ? latl::beam_decode(ckpt.params, src_ids, lang, dc).front()
                   : latl::greedy_decode(ckpt.params, src_ids, lang, dc);
    body << latl::detokenize(ckpt.vocab, tr.ids) << '\t' << latl::format_real(tr.score) << '\n';
  }

  if (o.out.empty()) {
    std::cout << body.str();
  } else {
    auto out = open_artifact(o.out);
    for (const auto& hl : header_lines(cfg)) out << "# " << hl << "\n";
    out << body.str();
  }
}

// ------------------------------------------------------------------- eval --

struct EvalOpts {
  std::string model_path;
  std::string data_dir;
  std::vector<std::string> pair_filters;
  std::string out;  // empty: stdout
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_eval(const EvalOpts& o) {
  ConfigEcho cfg = {{"command", "eval"},
                    {"model", o.model_path},
                    {"data", o.data_dir},
                    {"out", o.out.empty() ? "-" : o.out},
                    {"seed", std::to_string(o.seed)},
                    {"threads", std::to_string(o.threads)}};
  for (const auto& p : o.pair_filters) cfg.emplace_back("pair", p);
  echo_config(cfg);

  const auto ckpt = latl::load_checkpoint<float>(o.model_path);
  const auto data = latl::load_dataset(o.data_dir);
  if (data.vocab.tokens() != ckpt.vocab.tokens())
    latl::fail("dataset vocabulary does not match the model checkpoint");
  for (int i = 0; i < data.inventory.size(); ++i)
    if (i >= ckpt.inventory.size() || data.inventory.at(i).code != ckpt.inventory.at(i).code)
      latl::fail("dataset language inventory does not match the model checkpoint");

  std::set<std::pair<int, int>> wanted;
  for (const auto& flag : o.pair_filters) {
    const auto [src, tgt] = split_pair_flag(flag);
    wanted.emplace(data.inventory.require(src), data.inventory.require(tgt));
  }
  std::vector<latl::ParallelExample> examples;
  for (const auto& ex : data.examples)
    if (wanted.empty() || wanted.count({ex.src_lang_index, ex.tgt_lang_index}))
      examples.push_back(ex);
  if (examples.empty()) latl::fail("no examples match the requested pairs");

  const auto report = latl::evaluate_perplexity(ckpt.params, examples, o.threads);
  std::ostringstream body;
  for (const auto& row : report.pairs)
    body << data.inventory.at(row.src_lang).code << '-' << data.inventory.at(row.tgt_lang).code
         << '\t' << latl::format_real(row.perplexity) << '\t' << row.tokens << '\n';
  body << "overall\t" << latl::format_real(report.overall) << '\t' << report.total_tokens << '\n';

  if (o.out.empty()) {
    std::cout << body.str();
  } else {
    auto out = open_artifact(o.out);
    for (const auto& hl : header_lines(cfg)) out << "# " << hl << "\n";
    out << body.str();
  }
}

// -------------------------------------------------------------- langspace --

struct ExtractOpts {
  std::string model_path;
  std::string out;
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_extract(const ExtractOpts& o) {
  const ConfigEcho cfg = {{"command", "langspace extract"},
                          {"model", o.model_path},
                          {"out", o.out},
                          {"seed", std::to_string(o.seed)},
                          {"threads", std::to_string(o.threads)}};
  echo_config(cfg);
  const auto ckpt = latl::load_checkpoint<float>(o.model_path);
  const auto space = latl::extract_language_space(ckpt);
  latl::save_language_space(o.out, space, header_lines(cfg));
  std::cout << "languages\t" << space.size() << "\n"
            << "dim\t" << space.dim << "\n";
}

struct ProjectOpts {
  std::string space_path;
  std::string out;
  double perplexity = 5.0;
  int iters = 1000;
  double learning_rate = 100.0;
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_project(const ProjectOpts& o) {
  const ConfigEcho cfg = {{"command", "langspace project"},
                          {"space", o.space_path},
                          {"out", o.out},
                          {"perplexity", latl::format_real(o.perplexity)},
                          {"iters", std::to_string(o.iters)},
                          {"learning-rate", latl::format_real(o.learning_rate)},
                          {"seed", std::to_string(o.seed)},
                          {"threads", std::to_string(o.threads)}};
  echo_config(cfg);

  const auto space = latl::load_language_space(o.space_path);
  latl::TsneOptions opt;
  opt.perplexity = o.perplexity;
  opt.iters = o.iters;
  opt.learning_rate = o.learning_rate;
  opt.seed = o.seed;
  const auto proj = latl::tsne_project(space.rows, space.size(), space.dim, opt);

  auto out = open_artifact(o.out);
  for (const auto& hl : header_lines(cfg)) out << "# " << hl << "\n";
  out << "# final_kl = " << latl::format_real(proj.final_kl) << "\n";
  out << "# kl_after_exaggeration = " << latl::format_real(proj.kl_after_exaggeration) << "\n";
  for (int i = 0; i < space.size(); ++i)
    out << space.lang_codes[static_cast<std::size_t>(i)] << '\t'
        << latl::format_real(proj.y[static_cast<std::size_t>(2 * i)]) << '\t'
        << latl::format_real(proj.y[static_cast<std::size_t>(2 * i + 1)]) << '\t'
        << space.family_labels[static_cast<std::size_t>(i)] << '\n';
  std::cout << "final_kl\t" << latl::format_real(proj.final_kl) << "\n";
}

struct ClusterOpts {
  std::string space_path;
  std::string metric = "cosine";
  int k = 0;  // 0: tree only
  std::string out;  // Newick destination; empty: stdout
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_cluster(const ClusterOpts& o) {
  const ConfigEcho cfg = {{"command", "langspace cluster"},
                          {"space", o.space_path},
                          {"metric", o.metric},
                          {"k", std::to_string(o.k)},
                          {"out", o.out.empty() ? "-" : o.out},
                          {"seed", std::to_string(o.seed)},
                          {"threads", std::to_string(o.threads)}};
  echo_config(cfg);

  const auto space = latl::load_language_space(o.space_path);
  const auto dist = latl::pairwise_distances(space, o.metric);
  const auto dendro = latl::upgma_cluster(dist);
  const auto newick = latl::to_newick(dendro, space.lang_codes);

  if (o.out.empty()) {
    std::cout << newick << "\n";
  } else {
    auto out = open_artifact(o.out);
    // Newick has no '#' comments; a bracketed block carries the provenance.
    const auto lines = header_lines(cfg);
    out << "[";
    for (std::size_t i = 0; i < lines.size(); ++i) out << (i ? "; " : "") << lines[i];
    out << "]\n" << newick << "\n";
  }

  for (const auto& merge : dendro.merges)
    std::cout << "merge\t" << merge.left << '\t' << merge.right << '\t'
              << latl::format_real(merge.height) << '\n';
  if (o.k > 0) {
    const auto score = latl::cut_and_score(dendro, dist, o.k, space.family_labels);
    std::cout << "purity\t" << latl::format_real(score.purity) << "\n"
              << "silhouette\t" << latl::format_real(score.silhouette) << "\n";
    for (int i = 0; i < space.size(); ++i)
      std::cout << "cluster\t" << space.lang_codes[static_cast<std::size_t>(i)] << '\t'
                << score.assignment[static_cast<std::size_t>(i)] << '\n';
  }
}

struct PlotOpts {
  std::string proj_path;
  std::string out;  // base path: writes <out>.tsv and <out>.svg
  int top_k = 10;
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_plot(const PlotOpts& o) {
  const ConfigEcho cfg = {{"command", "langspace plot"},
                          {"proj", o.proj_path},
                          {"out", o.out},
                          {"top-k", std::to_string(o.top_k)},
                          {"seed", std::to_string(o.seed)},
                          {"threads", std::to_string(o.threads)}};
  echo_config(cfg);

  std::ifstream in(o.proj_path, std::ios::binary);
  if (!in) latl::fail("cannot open '" + o.proj_path + "'");
  latl::Projection2D proj;
  std::vector<std::string> codes, families;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = latl::split(line, '\t');
    if (fields.size() != 4)
      latl::fail(o.proj_path + ":" + std::to_string(lineno) + ": expected lang, x, y, family");
    codes.emplace_back(fields[0]);
    proj.y.push_back(latl::parse_real(fields[1], o.proj_path));
    proj.y.push_back(latl::parse_real(fields[2], o.proj_path));
    families.emplace_back(fields[3]);
  }
  if (codes.empty()) latl::fail(o.proj_path + ": no projection rows");
  proj.n = static_cast<int>(codes.size());

  latl::emit_plot(proj, codes, families, o.top_k, o.out + ".tsv", o.out + ".svg",
                  header_lines(cfg));
  std::cout << "points\t" << proj.n << "\n";
}

// ------------------------------------------------------------------- main --

void add_common(CLI::App* sub, std::uint64_t& seed, int& threads) {
  sub->add_option("--seed", seed, "random seed");
  sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multilingual translation engine with language flags"};
  app.require_subcommand(1);

  PrepareOpts prep;
  auto* prepare = app.add_subcommand("prepare", "encode a parallel corpus into a dataset");
  prepare->add_option("--corpus", prep.corpus_dir, "directory of <lang>.tsv verse files")->required();
  prepare->add_option("--inventory", prep.inventory_path, "language inventory TSV")->required();
  prepare->add_option("--manifest", prep.manifest_path, "pairing manifest TSV");
  prepare->add_option("--star", prep.star, "build an all-directions manifest around this hub");
  prepare->add_option("--min-freq", prep.min_freq, "minimum token frequency");
  prepare->add_option("--max-vocab", prep.max_vocab, "vocabulary size cap");
  prepare->add_option("--out", prep.out, "output dataset directory")->required();
  add_common(prepare, prep.seed, prep.threads);
  prepare->callback([&] { run_prepare(prep); });

  TrainOpts tr;
  auto* train = app.add_subcommand("train", "train a model on a prepared dataset");
  train->add_option("--data", tr.data_dir, "prepared dataset directory")->required();
  train->add_option("--out", tr.out, "output directory for model.latl and train_log.tsv")->required();
  train->add_option("--embed-dim", tr.embed_dim, "token embedding width");
  train->add_option("--hidden-dim", tr.hidden_dim, "recurrent state width per direction");
  train->add_option("--attn-dim", tr.attention_dim, "attention projection width");
  train->add_option("--lang-dim", tr.lang_dim, "language embedding width (0: embed-dim)");
  train->add_option("--epochs", tr.epochs, "training epochs");
  train->add_option("--batch-size", tr.batch_size, "examples per update");
  train->add_option("--lr", tr.learning_rate, "learning rate");
  train->add_option("--optimizer", tr.optimizer, "sgd or adam");
  train->add_option("--clip-norm", tr.clip_norm, "global gradient norm cap");
  train->add_option("--eval-every", tr.eval_every, "steps between held-out evaluations");
  train->add_option("--patience", tr.patience, "non-improving evaluations before stopping");
  train->add_option("--heldout-pair", tr.heldout_pairs, "withhold a src:tgt pair entirely");
  train->add_option("--heldout-fraction", tr.heldout_fraction, "fraction of remaining examples to hold out");
  add_common(train, tr.seed, tr.threads);
  train->callback([&] { run_train(tr); });

  TranslateOpts tl;
  auto* translate = app.add_subcommand("translate", "decode `tgt_lang<TAB>text` lines");
  translate->add_option("--model", tl.model_path, "model checkpoint")->required();
  translate->add_option("--input", tl.input_path, "input file (default: stdin)");
  translate->add_option("--out", tl.out, "output file (default: stdout)");
  translate->add_option("--beam", tl.beam, "beam width (1: greedy)");
  translate->add_option("--max-len", tl.max_len, "maximum emitted tokens");
  translate->add_option("--length-norm", tl.length_norm, "length normalization exponent");
  add_common(translate, tl.seed, tl.threads);
  translate->callback([&] { run_translate(tl); });

  EvalOpts ev;
  auto* eval = app.add_subcommand("eval", "report per-pair perplexity on a dataset");
  eval->add_option("--model", ev.model_path, "model checkpoint")->required();
  eval->add_option("--data", ev.data_dir, "prepared dataset directory")->required();
  eval->add_option("--pair", ev.pair_filters, "restrict to a src:tgt pair (repeatable)");
  eval->add_option("--out", ev.out, "output file (default: stdout)");
  add_common(eval, ev.seed, ev.threads);
  eval->callback([&] { run_eval(ev); });

  auto* langspace = app.add_subcommand("langspace", "language embedding analysis");
  langspace->require_subcommand(1);

  ExtractOpts ex;
  auto* extract = langspace->add_subcommand("extract", "dump the language embedding table");
  extract->add_option("--model", ex.model_path, "model checkpoint")->required();
  extract->add_option("--out", ex.out, "language space TSV")->required();
  add_common(extract, ex.seed, ex.threads);
  extract->callback([&] { run_extract(ex); });

  ProjectOpts pj;
  auto* project = langspace->add_subcommand("project", "project the space to 2D");
  project->add_option("--space", pj.space_path, "language space TSV")->required();
  project->add_option("--perplexity", pj.perplexity, "neighborhood size");
  project->add_option("--iters", pj.iters, "gradient iterations");
  project->add_option("--learning-rate", pj.learning_rate, "step size");
  project->add_option("--out", pj.out, "projection TSV")->required();
  add_common(project, pj.seed, pj.threads);
  project->callback([&] { run_project(pj); });

  ClusterOpts cl;
  auto* cluster = langspace->add_subcommand("cluster", "average-linkage tree over the space");
  cluster->add_option("--space", cl.space_path, "language space TSV")->required();
  cluster->add_option("--metric", cl.metric, "cosine or euclidean");
  cluster->add_option("--k", cl.k, "also cut into k clusters and score them");
  cluster->add_option("--out", cl.out, "Newick tree file (default: stdout)");
  add_common(cluster, cl.seed, cl.threads);
  cluster->callback([&] { run_cluster(cl); });

  PlotOpts pl;
  auto* plot = langspace->add_subcommand("plot", "render a projection as TSV + SVG");
  plot->add_option("--proj", pl.proj_path, "projection TSV from `langspace project`")->required();
  plot->add_option("--top-k", pl.top_k, "families given distinct colors");
  plot->add_option("--out", pl.out, "output base path (writes .tsv and .svg)")->required();
  add_common(plot, pl.seed, pl.threads);
  plot->callback([&] { run_plot(pl); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 1;
  } catch (const latl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
