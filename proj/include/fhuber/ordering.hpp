#pragma once

#include "fhuber/core.hpp"
#include "fhuber/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fhuber {

/// Leaf order of an average-linkage dendrogram over the columns of X, distance 1 - |corr|.
///
/// Built with the nearest-neighbour-chain algorithm on a dense distance matrix (O(p^2) memory).
/// A merged cluster lists the leaves of the child holding the lower column index first; distance
/// ties resolve to the lower column index, so the order is deterministic.
inline std::vector<Eigen::Index> hierarchical_order(const Matrix& X)
{
  const Eigen::Index p = X.cols();
  if (p < 2) throw std::invalid_argument("hierarchical_order: need at least two columns");
  if (X.rows() < 2) throw std::invalid_argument("hierarchical_order: need at least two rows");

  Matrix Z = X.rowwise() - X.colwise().mean();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double norm = Z.col(j).norm();
    const double scale = X.col(j).cwiseAbs().maxCoeff();
    if (!(norm > 1e-12 * std::max(scale, 1e-300) * std::sqrt(static_cast<double>(X.rows()))))
      throw std::invalid_argument("hierarchical_order: column " + std::to_string(j + 1) + " has zero variance");
    Z.col(j) /= norm;
  }
  Matrix dist = Z.transpose() * Z;
  dist = (1.0 - dist.array().abs()).max(0.0).matrix();

  std::vector<std::vector<Eigen::Index>> leaves(static_cast<std::size_t>(p));
  std::vector<double> size(static_cast<std::size_t>(p), 1.0);
  std::vector<char> active(static_cast<std::size_t>(p), 1);
  for (Eigen::Index j = 0; j < p; ++j) leaves[static_cast<std::size_t>(j)] = {j};

  std::vector<Eigen::Index> chain;
  Eigen::Index remaining = p;
  while (remaining > 1) {
    if (chain.empty())
      for (Eigen::Index j = 0; j < p; ++j)
        if (active[static_cast<std::size_t>(j)]) {
          chain.push_back(j);
          break;
        }
    const Eigen::Index a = chain.back();
    const Eigen::Index prev = chain.size() >= 2 ? chain[chain.size() - 2] : -1;
    Eigen::Index b = -1;
    double best = 0.0;
    for (Eigen::Index c = 0; c < p; ++c) {
      if (c == a || !active[static_cast<std::size_t>(c)]) continue;
      if (b < 0 || dist(a, c) < best) {
        b = c;
        best = dist(a, c);
      }
    }
    if (prev >= 0 && dist(a, prev) <= best) b = prev;
    if (b != prev) {
      chain.push_back(b);
      continue;
    }
    chain.pop_back();
    chain.pop_back();
    const Eigen::Index keep = std::min(a, b), drop = std::max(a, b);
    const double sk = size[static_cast<std::size_t>(keep)], sd = size[static_cast<std::size_t>(drop)];
    for (Eigen::Index c = 0; c < p; ++c) {
      if (!active[static_cast<std::size_t>(c)] || c == keep || c == drop) continue;
      const double d = (sk * dist(keep, c) + sd * dist(drop, c)) / (sk + sd);
      dist(keep, c) = dist(c, keep) = d;
    }
    auto& kl = leaves[static_cast<std::size_t>(keep)];
    auto& dl = leaves[static_cast<std::size_t>(drop)];
    kl.insert(kl.end(), dl.begin(), dl.end());
    dl.clear();
    size[static_cast<std::size_t>(keep)] = sk + sd;
    active[static_cast<std::size_t>(drop)] = 0;
    --remaining;
  }
  for (Eigen::Index j = 0; j < p; ++j)
    if (active[static_cast<std::size_t>(j)]) return leaves[static_cast<std::size_t>(j)];
  return {};
}

inline Matrix permute_columns(const Matrix& X, const std::vector<Eigen::Index>& order)
{
  if (static_cast<Eigen::Index>(order.size()) != X.cols()) throw std::invalid_argument("permute_columns: size mismatch");
  Matrix out(X.rows(), X.cols());
  for (std::size_t k = 0; k < order.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(order[k]);
  return out;
}

/// Divides each column by its largest absolute entry so that every |x_ij| <= 1. Returns the divisors;
/// all-zero columns are left untouched (divisor 1).
inline Vector normalize_columns(Matrix& X)
{
  Vector scale(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double m = X.col(j).cwiseAbs().maxCoeff();
    scale[j] = m > 0.0 ? m : 1.0;
    X.col(j) /= scale[j];
  }
  return scale;
}

/// Row split after a seeded Fisher-Yates shuffle: the first n_train shuffled rows train.
inline std::pair<ProblemData, ProblemData> train_test_split(const ProblemData& data, Eigen::Index n_train,
                                                            std::uint64_t seed)
{
  if (n_train < 1 || n_train >= data.n())
    throw std::invalid_argument("train_test_split: need 1 <= n_train < n");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.n()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1));
    std::swap(idx[i], idx[std::min(j, i)]);
  }
  auto take = [&](std::size_t from, std::size_t to) {
    const auto rows = static_cast<Eigen::Index>(to - from);
    Matrix X(rows, data.p());
    Vector y(rows);
    for (std::size_t k = from; k < to; ++k) {
      X.row(static_cast<Eigen::Index>(k - from)) = data.X().row(idx[k]);
      y[static_cast<Eigen::Index>(k - from)] = data.y()[idx[k]];
    }
    return ProblemData(std::move(X), std::move(y));
  };
  const auto cut = static_cast<std::size_t>(n_train);
  return {take(0, cut), take(cut, idx.size())};
}

/// Default training size: the given count when known, else 70% of the rows (at least one row each side).
inline Eigen::Index default_train_size(Eigen::Index n)
{
  const auto k = static_cast<Eigen::Index>(std::llround(0.7 * static_cast<double>(n)));
  return std::clamp<Eigen::Index>(k, 1, n - 1);
}

}  // namespace fhuber
