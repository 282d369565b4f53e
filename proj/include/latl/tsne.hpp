#pragma once

// Exact t-SNE for small point sets. Per-point Gaussian bandwidths come from a
// binary search matching the conditional entropy to the requested perplexity;
// the embedding descends the exact KL gradient with momentum and early
// exaggeration. No tree approximations: point counts here are tiny.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "latl/error.hpp"
#include "latl/rng.hpp"

namespace latl {

struct TsneOptions {
  double perplexity = 5.0;
  int iters = 1000;
  double learning_rate = 100.0;
  std::uint64_t seed = 1;
};

struct Projection2D {
  int n = 0;
  std::vector<double> y;  // n x 2 row-major
  double final_kl = 0;
  double kl_after_exaggeration = 0;  // KL right after exaggeration lifts
  int iters = 0;
  std::uint64_t seed = 0;
};

namespace tsne_detail {

inline std::vector<double> squared_distances(const std::vector<double>& rows, int n, int dim) {
  std::vector<double> d(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double s = 0;
      for (int k = 0; k < dim; ++k) {
        const double diff = rows[static_cast<std::size_t>(i * dim + k)] -
                            rows[static_cast<std::size_t>(j * dim + k)];
        s += diff * diff;
      }
      d[static_cast<std::size_t>(i * n + j)] = s;
      d[static_cast<std::size_t>(j * n + i)] = s;
    }
  return d;
}

// Conditional p_{j|i} for one point at a given precision beta = 1/(2 sigma^2).
// Returns the Shannon entropy in nats.
inline double conditional_row(const std::vector<double>& sqd, int n, int i, double beta,
                              std::vector<double>& row) {
  double sum = 0;
  for (int j = 0; j < n; ++j) {
    row[static_cast<std::size_t>(j)] =
        j == i ? 0.0 : std::exp(-beta * sqd[static_cast<std::size_t>(i * n + j)]);
    sum += row[static_cast<std::size_t>(j)];
  }
  if (sum <= 0) sum = std::numeric_limits<double>::min();
  double entropy = 0;
  for (int j = 0; j < n; ++j) {
    row[static_cast<std::size_t>(j)] /= sum;
    const double p = row[static_cast<std::size_t>(j)];
    if (p > 0) entropy -= p * std::log(p);
  }
  return entropy;
}

// Bandwidth-calibrated conditional matrix p_{j|i}: each row's entropy hits
// log(perplexity) nats via binary search on beta.
inline std::vector<double> conditional_probabilities(const std::vector<double>& rows, int n,
                                                     int dim, double perplexity) {
  const auto sqd = squared_distances(rows, n, dim);
  const double target = std::log(perplexity);  // nats; == log2(perplexity) bits
  std::vector<double> conditional(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    double beta = 1.0, lo = -std::numeric_limits<double>::infinity(),
           hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
      const double entropy = conditional_row(sqd, n, i, beta, row);
      const double gap = entropy - target;
      if (std::abs(gap) < 1e-7) break;  // well inside the 1e-5-bit contract
      if (gap > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2 : (beta + lo) / 2;
      }
    }
    for (int j = 0; j < n; ++j)
      conditional[static_cast<std::size_t>(i * n + j)] = row[static_cast<std::size_t>(j)];
  }
  return conditional;
}

// Symmetrized joint probabilities p_ij summing to 1.
inline std::vector<double> joint_probabilities(const std::vector<double>& rows, int n, int dim,
                                               double perplexity) {
  const auto conditional = conditional_probabilities(rows, n, dim, perplexity);
  std::vector<double> p(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j)
        p[static_cast<std::size_t>(i * n + j)] =
            (conditional[static_cast<std::size_t>(i * n + j)] +
             conditional[static_cast<std::size_t>(j * n + i)]) /
            (2.0 * n);
  return p;
}

// Student-t weights w_ij = 1/(1+||y_i-y_j||^2) and their total.
inline double student_weights(const std::vector<double>& y, int n, std::vector<double>& w) {
  double total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double dx = y[static_cast<std::size_t>(2 * i)] - y[static_cast<std::size_t>(2 * j)];
      const double dy = y[static_cast<std::size_t>(2 * i + 1)] - y[static_cast<std::size_t>(2 * j + 1)];
      const double wij = 1.0 / (1.0 + dx * dx + dy * dy);
      w[static_cast<std::size_t>(i * n + j)] = wij;
      w[static_cast<std::size_t>(j * n + i)] = wij;
      total += 2 * wij;
    }
  return total;
}

inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& y, int n) {
  std::vector<double> w(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  const double total = student_weights(y, n, w);
  double kl = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double pij = p[static_cast<std::size_t>(i * n + j)];
      if (pij <= 0) continue;
      const double qij = std::max(w[static_cast<std::size_t>(i * n + j)] / total, 1e-12);
      kl += pij * std::log(pij / qij);
    }
  return kl;
}

}  // namespace tsne_detail

// rows: n x dim row-major input matrix.
inline Projection2D tsne_project(const std::vector<double>& rows, int n, int dim,
                                 const TsneOptions& opt = {}) {
  if (n < 4) fail("tsne: need at least 4 points");
  if (dim < 1) fail("tsne: input dimension must be >= 1");
  if (rows.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(dim))
    fail("tsne: matrix size does not match n x dim");
  if (!(opt.perplexity > 1.0) || !(opt.perplexity < static_cast<double>(n)))
    fail("tsne: perplexity must lie in (1, n)");
  if (opt.iters < 1) fail("tsne: iters must be >= 1");
  if (!(opt.learning_rate > 0)) fail("tsne: learning_rate must be positive");
  for (double v : rows)
    if (!std::isfinite(v)) fail("tsne: non-finite input");

  auto p = tsne_detail::joint_probabilities(rows, n, dim, opt.perplexity);

  constexpr int kExaggerationEnd = 250;
  constexpr double kExaggeration = 12.0;
  const std::size_t nn = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);

  Rng rng(opt.seed);
  std::vector<double> y(static_cast<std::size_t>(2 * n));
  for (auto& v : y) v = rng.normal(0.0, 1e-4);
  std::vector<double> velocity(y.size(), 0.0);
  std::vector<double> grad(y.size());
  std::vector<double> w(nn, 0.0);

  Projection2D out;
  out.n = n;
  out.iters = opt.iters;
  out.seed = opt.seed;
  out.kl_after_exaggeration = std::numeric_limits<double>::quiet_NaN();

  const bool exaggerate = opt.iters > kExaggerationEnd;
  if (exaggerate)
    for (auto& v : p) v *= kExaggeration;

  for (int iter = 0; iter < opt.iters; ++iter) {
    if (exaggerate && iter == kExaggerationEnd) {
      for (auto& v : p) v /= kExaggeration;
      out.kl_after_exaggeration = tsne_detail::kl_divergence(p, y, n);
    }
    const double total = tsne_detail::student_weights(y, n, w);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double wij = w[static_cast<std::size_t>(i * n + j)];
        const double mult =
            (p[static_cast<std::size_t>(i * n + j)] - wij / total) * wij;
        grad[static_cast<std::size_t>(2 * i)] +=
            4.0 * mult * (y[static_cast<std::size_t>(2 * i)] - y[static_cast<std::size_t>(2 * j)]);
        grad[static_cast<std::size_t>(2 * i + 1)] +=
            4.0 * mult *
            (y[static_cast<std::size_t>(2 * i + 1)] - y[static_cast<std::size_t>(2 * j + 1)]);
      }
    const double momentum = iter < kExaggerationEnd ? 0.5 : 0.8;
    for (std::size_t k = 0; k < y.size(); ++k) {
      velocity[k] = momentum * velocity[k] - opt.learning_rate * grad[k];
      y[k] += velocity[k];
    }
  }

  out.final_kl = tsne_detail::kl_divergence(p, y, n);
  if (!exaggerate) out.kl_after_exaggeration = out.final_kl;
  out.y = std::move(y);
  for (double v : out.y)
    if (!std::isfinite(v)) fail("tsne: diverged to non-finite coordinates");
  return out;
}

}  // namespace latl
