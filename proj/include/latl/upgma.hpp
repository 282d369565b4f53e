#pragma once

// Average-linkage (UPGMA) hierarchical clustering over a distance matrix,
// with Newick export and a k-cluster cut scored by purity and silhouette.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "latl/error.hpp"
#include "latl/format.hpp"

namespace latl {

struct DistanceMatrix {
  int n = 0;
  std::string metric;       // "cosine" | "euclidean"
  std::vector<double> d;    // n x n row-major

  double at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)]; }
  double& at(int i, int j) { return d[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)]; }
};

// Node ids: leaves are 0..leaves-1; merge k creates node leaves+k.
struct Dendrogram {
  int leaves = 0;
  struct Merge {
    int left = 0;
    int right = 0;
    double height = 0;
  };
  std::vector<Merge> merges;  // leaves-1 entries, chronological

  int root() const { return leaves + static_cast<int>(merges.size()) - 1; }
  double height_of(int node) const {
    return node < leaves ? 0.0 : merges[static_cast<std::size_t>(node - leaves)].height;
  }
};

// Iteratively merges the closest pair under the unweighted average of
// original-leaf distances; merge height is half the pair distance. Equal
// distances break toward the smallest (i, j) position pair, scanning in
// creation order, so the tree is fully deterministic.
inline Dendrogram upgma_cluster(const DistanceMatrix& dist) {
  const int L = dist.n;
  if (L < 2) fail("upgma: need at least 2 points");

  struct Cluster {
    int node = 0;
    int size = 0;
  };
  std::vector<Cluster> active;
  for (int i = 0; i < L; ++i) active.push_back({i, 1});
  // pairwise cluster distances, indexed by position in `active`
  std::vector<std::vector<double>> cd(static_cast<std::size_t>(L),
                                      std::vector<double>(static_cast<std::size_t>(L)));
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) cd[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = dist.at(i, j);

  Dendrogram out;
  out.leaves = L;
  while (active.size() > 1) {
    std::size_t bi = 0, bj = 1;
    double best = cd[0][1];
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j)
        if (cd[i][j] < best) {
          best = cd[i][j];
          bi = i;
          bj = j;
        }

    const Cluster a = active[bi], b = active[bj];
    const int new_node = L + static_cast<int>(out.merges.size());
    out.merges.push_back({a.node, b.node, best / 2.0});

    // distances from the merged cluster: size-weighted average equals the
    // plain mean over original leaves
    std::vector<double> merged_row;
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (k == bi || k == bj) continue;
      merged_row.push_back((a.size * cd[bi][k] + b.size * cd[bj][k]) /
                           static_cast<double>(a.size + b.size));
    }
    // drop bj then bi (bj > bi), append merged cluster at the end
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
    for (std::size_t i = 0; i < cd.size(); ++i) {
      cd[i].erase(cd[i].begin() + static_cast<std::ptrdiff_t>(bj));
      cd[i].erase(cd[i].begin() + static_cast<std::ptrdiff_t>(bi));
    }
    cd.erase(cd.begin() + static_cast<std::ptrdiff_t>(bj));
    cd.erase(cd.begin() + static_cast<std::ptrdiff_t>(bi));
    active.push_back({new_node, a.size + b.size});
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i].push_back(merged_row[i]);
    merged_row.push_back(0.0);
    cd.push_back(std::move(merged_row));
  }
  return out;
}

// Newick with branch lengths = parent height - child height.
inline std::string to_newick(const Dendrogram& dendro, const std::vector<std::string>& labels) {
  if (static_cast<int>(labels.size()) != dendro.leaves)
    fail("to_newick: label count does not match leaf count");
  const std::function<std::string(int)> render = [&](int node) -> std::string {
    if (node < dendro.leaves) return labels[static_cast<std::size_t>(node)];
    const auto& m = dendro.merges[static_cast<std::size_t>(node - dendro.leaves)];
    return "(" + render(m.left) + ":" + format_real(m.height - dendro.height_of(m.left)) + "," +
           render(m.right) + ":" + format_real(m.height - dendro.height_of(m.right)) + ")";
  };
  if (dendro.leaves == 1) return labels[0] + ";";
  return render(dendro.root()) + ";";
}

// Cluster assignment after removing the k-1 highest merges. Heights are
// non-decreasing in merge order (UPGMA), so those are the last k-1 merges.
// Clusters are numbered by their smallest leaf index.
inline std::vector<int> cut_dendrogram(const Dendrogram& dendro, int k) {
  const int L = dendro.leaves;
  if (k < 1 || k > L) fail("cut_dendrogram: k must lie in [1, leaf count]");
  const int kept_merges = L - k;

  std::vector<int> parent(static_cast<std::size_t>(L + kept_merges));
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  const std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  const std::function<int(int)> rep = [&](int node) {
    return node < static_cast<int>(parent.size()) ? find(node) : node;
  };
  for (int m = 0; m < kept_merges; ++m) {
    const int node = L + m;
    const auto& merge = dendro.merges[static_cast<std::size_t>(m)];
    parent[static_cast<std::size_t>(rep(merge.left))] = node;
    parent[static_cast<std::size_t>(rep(merge.right))] = node;
  }

  std::vector<int> root_of(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) root_of[static_cast<std::size_t>(i)] = find(i);
  std::vector<int> order;  // cluster roots by first appearance over leaves
  std::vector<int> assignment(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    const int r = root_of[static_cast<std::size_t>(i)];
    auto it = std::find(order.begin(), order.end(), r);
    if (it == order.end()) {
      order.push_back(r);
      it = order.end() - 1;
    }
    assignment[static_cast<std::size_t>(i)] = static_cast<int>(it - order.begin());
  }
  return assignment;
}

struct ClusterScore {
  std::vector<int> assignment;  // leaf -> cluster id
  double purity = 0;
  double silhouette = 0;
};

// Purity: fraction of leaves whose cluster's dominant family is their own.
// Silhouette: mean of (b-a)/max(a,b) over leaves, singletons scoring 0,
// measured on the given distance matrix.
inline ClusterScore cut_and_score(const Dendrogram& dendro, const DistanceMatrix& dist, int k,
                                  const std::vector<std::string>& family_labels) {
  const int L = dendro.leaves;
  if (static_cast<int>(family_labels.size()) != L)
    fail("cut_and_score: label count does not match leaf count");
  for (int i = 0; i < L; ++i)
    if (family_labels[static_cast<std::size_t>(i)].empty())
      fail("cut_and_score: leaf " + std::to_string(i) + " has no family label");
  if (dist.n != L) fail("cut_and_score: distance matrix size does not match leaf count");

  ClusterScore score;
  score.assignment = cut_dendrogram(dendro, k);
  const int clusters = 1 + *std::max_element(score.assignment.begin(), score.assignment.end());

  // purity
  double correct = 0;
  for (int c = 0; c < clusters; ++c) {
    std::vector<std::pair<std::string, int>> counts;
    for (int i = 0; i < L; ++i) {
      if (score.assignment[static_cast<std::size_t>(i)] != c) continue;
      auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& kv) {
        return kv.first == family_labels[static_cast<std::size_t>(i)];
      });
      if (it == counts.end())
        counts.emplace_back(family_labels[static_cast<std::size_t>(i)], 1);
      else
        ++it->second;
    }
    int best = 0;
    for (const auto& [fam, cnt] : counts) best = std::max(best, cnt);
    correct += best;
  }
  score.purity = correct / static_cast<double>(L);

  // silhouette
  double total = 0;
  for (int i = 0; i < L; ++i) {
    const int own = score.assignment[static_cast<std::size_t>(i)];
    int own_size = 0;
    std::vector<double> mean_to(static_cast<std::size_t>(clusters), 0.0);
    std::vector<int> size_of(static_cast<std::size_t>(clusters), 0);
    for (int j = 0; j < L; ++j) {
      const int cj = score.assignment[static_cast<std::size_t>(j)];
      ++size_of[static_cast<std::size_t>(cj)];
      if (j != i) mean_to[static_cast<std::size_t>(cj)] += dist.at(i, j);
    }
    own_size = size_of[static_cast<std::size_t>(own)];
    if (own_size <= 1 || clusters == 1) continue;  // contributes 0
    const double a = mean_to[static_cast<std::size_t>(own)] / (own_size - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < clusters; ++c) {
      if (c == own || size_of[static_cast<std::size_t>(c)] == 0) continue;
      b = std::min(b, mean_to[static_cast<std::size_t>(c)] / size_of[static_cast<std::size_t>(c)]);
    }
    const double denom = std::max(a, b);
    if (denom > 0) total += (b - a) / denom;
  }
  score.silhouette = total / static_cast<double>(L);
  return score;
}

}  // namespace latl
