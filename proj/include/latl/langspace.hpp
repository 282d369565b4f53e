#pragma once

// Language-space analysis: pull the language-embedding table out of a
// checkpoint, measure pairwise distances, and emit projection artifacts
// (TSV + SVG scatter) for inspection.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "latl/checkpoint.hpp"
#include "latl/error.hpp"
#include "latl/format.hpp"
#include "latl/tsne.hpp"
#include "latl/upgma.hpp"

namespace latl {

struct LanguageSpace {
  std::vector<std::string> lang_codes;
  std::vector<std::string> family_labels;
  int dim = 0;
  std::vector<double> rows;  // L x dim row-major

  int size() const { return static_cast<int>(lang_codes.size()); }
};

// Copies the language-embedding table with codes and families aligned to the
// stored inventory.
template <typename Real>
LanguageSpace extract_language_space(const Checkpoint<Real>& ckpt) {
  LanguageSpace space;
  const auto& table = ckpt.params.lang_embed;
  if (table.rank() != 2) fail("extract_language_space: malformed embedding table");
  if (table.dim(0) != ckpt.inventory.size())
    fail("extract_language_space: inventory lists " + std::to_string(ckpt.inventory.size()) +
         " languages but the embedding table has " + std::to_string(table.dim(0)) + " rows");
  space.dim = table.dim(1);
  for (const auto& lang : ckpt.inventory.languages()) {
    space.lang_codes.push_back(lang.code);
    space.family_labels.push_back(lang.family);
  }
  space.rows.reserve(table.values().size());
  for (Real v : table.values()) {
    if (!std::isfinite(static_cast<double>(v)))
      fail("extract_language_space: non-finite embedding entry");
    space.rows.push_back(static_cast<double>(v));
  }
  return space;
}

inline DistanceMatrix pairwise_distances(const LanguageSpace& space, const std::string& metric) {
  if (metric != "cosine" && metric != "euclidean")
    fail("pairwise_distances: unknown metric '" + metric + "'");
  const int L = space.size();
  const int dim = space.dim;
  DistanceMatrix out;
  out.n = L;
  out.metric = metric;
  out.d.assign(static_cast<std::size_t>(L) * static_cast<std::size_t>(L), 0.0);

  std::vector<double> norms(static_cast<std::size_t>(L), 0.0);
  if (metric == "cosine") {
    for (int i = 0; i < L; ++i) {
      double s = 0;
      for (int k = 0; k < dim; ++k) {
        const double v = space.rows[static_cast<std::size_t>(i * dim + k)];
        s += v * v;
      }
      norms[static_cast<std::size_t>(i)] = std::sqrt(s);
      if (norms[static_cast<std::size_t>(i)] == 0.0)
        fail("pairwise_distances: language " + space.lang_codes[static_cast<std::size_t>(i)] +
             " has a zero embedding, cosine undefined");
    }
  }
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j) {
      double v = 0;
      if (metric == "cosine") {
        double dot = 0;
        for (int k = 0; k < dim; ++k)
          dot += space.rows[static_cast<std::size_t>(i * dim + k)] *
                 space.rows[static_cast<std::size_t>(j * dim + k)];
        v = 1.0 - dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
      } else {
        double s = 0;
        for (int k = 0; k < dim; ++k) {
          const double diff = space.rows[static_cast<std::size_t>(i * dim + k)] -
                              space.rows[static_cast<std::size_t>(j * dim + k)];
          s += diff * diff;
        }
        v = std::sqrt(s);
      }
      out.at(i, j) = v;
      out.at(j, i) = v;
    }
  return out;
}

// TSV export `lang_code<TAB>family<TAB>v_1..v_d`; `header` lines are written
// first, prefixed with '# '.
inline void save_language_space(const std::string& path, const LanguageSpace& space,
                                const std::vector<std::string>& header = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write language space '" + path + "'");
  for (const auto& line : header) out << "# " << line << "\n";
  for (int i = 0; i < space.size(); ++i) {
    out << space.lang_codes[static_cast<std::size_t>(i)] << '\t'
        << space.family_labels[static_cast<std::size_t>(i)];
    for (int k = 0; k < space.dim; ++k)
      out << '\t' << format_real(space.rows[static_cast<std::size_t>(i * space.dim + k)]);
    out << '\n';
  }
  if (!out) fail("cannot write language space '" + path + "'");
}

inline LanguageSpace load_language_space(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open language space '" + path + "'");
  LanguageSpace space;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 3)
      fail(path + ":" + std::to_string(lineno) + ": expected lang, family and coordinates");
    const int dim = static_cast<int>(fields.size()) - 2;
    if (space.dim == 0)
      space.dim = dim;
    else if (dim != space.dim)
      fail(path + ":" + std::to_string(lineno) + ": inconsistent coordinate count");
    space.lang_codes.emplace_back(fields[0]);
    space.family_labels.emplace_back(fields[1]);
    for (int k = 0; k < dim; ++k)
      space.rows.push_back(parse_real(fields[static_cast<std::size_t>(k) + 2],
                                      path + ":" + std::to_string(lineno)));
  }
  if (space.lang_codes.empty()) fail(path + ": no language rows");
  return space;
}

namespace plot_detail {

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors;
}

// Families by descending population, ties alphabetical.
inline std::vector<std::string> families_by_frequency(const std::vector<std::string>& labels) {
  std::map<std::string, int> counts;
  for (const auto& f : labels) ++counts[f];
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (const auto& [fam, cnt] : ranked) out.push_back(fam);
  return out;
}

}  // namespace plot_detail

// Writes the projection as TSV `lang<TAB>x<TAB>y<TAB>family` plus a
// self-contained SVG scatter. Colors follow family frequency through a fixed
// 10-color palette; families beyond `top_k` turn gray. Deterministic output.
inline void emit_plot(const Projection2D& projection, const std::vector<std::string>& lang_codes,
                      const std::vector<std::string>& family_labels, int top_k,
                      const std::string& tsv_path, const std::string& svg_path,
                      const std::vector<std::string>& header = {}) {
  const int n = projection.n;
  if (static_cast<int>(lang_codes.size()) != n || static_cast<int>(family_labels.size()) != n)
    fail("emit_plot: label counts do not match the projection");
  if (top_k < 1) fail("emit_plot: top_k must be >= 1");

  {
    std::ofstream out(tsv_path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write plot TSV '" + tsv_path + "'");
    for (const auto& line : header) out << "# " << line << "\n";
    for (int i = 0; i < n; ++i)
      out << lang_codes[static_cast<std::size_t>(i)] << '\t'
          << format_real(projection.y[static_cast<std::size_t>(2 * i)]) << '\t'
          << format_real(projection.y[static_cast<std::size_t>(2 * i + 1)]) << '\t'
          << family_labels[static_cast<std::size_t>(i)] << '\n';
    if (!out) fail("cannot write plot TSV '" + tsv_path + "'");
  }

  const auto ranked = plot_detail::families_by_frequency(family_labels);
  const auto color_of = [&](const std::string& family) -> std::string {
    for (std::size_t r = 0; r < ranked.size(); ++r)
      if (ranked[r] == family)
        return r < static_cast<std::size_t>(top_k)
                   ? plot_detail::palette()[r % plot_detail::palette().size()]
                   : "#999999";
    return "#999999";
  };

  // scale coordinates into the drawing area
  const double width = 640, height = 480, margin = 48;
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  for (int i = 0; i < n; ++i) {
    const double x = projection.y[static_cast<std::size_t>(2 * i)];
    const double y = projection.y[static_cast<std::size_t>(2 * i + 1)];
    if (i == 0 || x < min_x) min_x = x;
    if (i == 0 || x > max_x) max_x = x;
    if (i == 0 || y < min_y) min_y = y;
    if (i == 0 || y > max_y) max_y = y;
  }
  const double span_x = max_x - min_x > 0 ? max_x - min_x : 1.0;
  const double span_y = max_y - min_y > 0 ? max_y - min_y : 1.0;
  const auto px = [&](double x) { return margin + (x - min_x) / span_x * (width - 2 * margin); };
  const auto py = [&](double y) { return height - margin - (y - min_y) / span_y * (height - 2 * margin); };
  const auto fmt2 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ofstream svg(svg_path, std::ios::binary | std::ios::trunc);
  if (!svg) fail("cannot write plot SVG '" + svg_path + "'");
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  for (int i = 0; i < n; ++i) {
    const double cx = px(projection.y[static_cast<std::size_t>(2 * i)]);
    const double cy = py(projection.y[static_cast<std::size_t>(2 * i + 1)]);
    svg << "<circle cx=\"" << fmt2(cx) << "\" cy=\"" << fmt2(cy) << "\" r=\"4\" fill=\""
        << color_of(family_labels[static_cast<std::size_t>(i)]) << "\"/>\n";
    svg << "<text x=\"" << fmt2(cx + 6) << "\" y=\"" << fmt2(cy + 4)
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << lang_codes[static_cast<std::size_t>(i)]
        << "</text>\n";
  }
  const std::size_t legend_n = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(top_k));
  for (std::size_t r = 0; r < legend_n; ++r) {
    const double ly = 16 + 16 * static_cast<double>(r);
    svg << "<rect x=\"8\" y=\"" << fmt2(ly - 9) << "\" width=\"10\" height=\"10\" fill=\""
        << plot_detail::palette()[r % plot_detail::palette().size()] << "\"/>\n"
        << "<text x=\"22\" y=\"" << fmt2(ly) << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << ranked[r] << "</text>\n";
  }
  svg << "</svg>\n";
  if (!svg) fail("cannot write plot SVG '" + svg_path + "'");
}

}  // namespace latl
