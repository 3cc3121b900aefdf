#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "vstab/cluster.hpp"
#include "vstab/core.hpp"

namespace vstab {

namespace {

Eigen::MatrixXd plus_plus_init(const Eigen::MatrixXd& X, std::size_t k, std::mt19937_64& rng) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), X.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centroids.row(0) = X.row(pick(rng));

  std::vector<double> nearest_sq(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    nearest_sq[static_cast<std::size_t>(i)] = (X.row(i) - centroids.row(0)).squaredNorm();
  }
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(nearest_sq.begin(), nearest_sq.end(), 0.0);
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest_sq[static_cast<std::size_t>(i)];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centroids.row(static_cast<Eigen::Index>(c)) = X.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& best = nearest_sq[static_cast<std::size_t>(i)];
      best = std::min(best, (X.row(i) - X.row(chosen)).squaredNorm());
    }
  }
  return centroids;
}

// Assigns each row to its nearest centroid (lowest index on ties) and returns
// the resulting inertia.
double assign(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids,
              std::vector<std::size_t>& assignment) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_c = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (X.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        best_c = static_cast<std::size_t>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = best_c;
    inertia += best;
  }
  return inertia;
}

void update_centroids(const Eigen::MatrixXd& X, std::vector<std::size_t>& assignment,
                      Eigen::MatrixXd& centroids) {
  const auto k = static_cast<std::size_t>(centroids.rows());
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centroids.rows(), X.cols());
  std::vector<std::size_t> counts(k, 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const std::size_t c = assignment[static_cast<std::size_t>(i)];
    sums.row(static_cast<Eigen::Index>(c)) += X.row(i);
    ++counts[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    if (counts[c] > 0) {
      centroids.row(row) = sums.row(row) / static_cast<double>(counts[c]);
      continue;
    }
    // Empty cluster: move it onto the point farthest from its centroid. That
    // point's cost drops to zero, so inertia still cannot increase.
    double worst = -1.0;
    Eigen::Index worst_i = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const std::size_t a = assignment[static_cast<std::size_t>(i)];
      if (counts[a] < 2) continue;
      const double d = (X.row(i) - centroids.row(static_cast<Eigen::Index>(a))).squaredNorm();
      if (d > worst) {
        worst = d;
        worst_i = i;
      }
    }
    --counts[assignment[static_cast<std::size_t>(worst_i)]];
    assignment[static_cast<std::size_t>(worst_i)] = c;
    counts[c] = 1;
    centroids.row(row) = X.row(worst_i);
  }
}

KMeansResult lloyd(const Eigen::MatrixXd& X, std::size_t k, std::uint64_t seed,
                   std::size_t max_iters, double tol) {
  std::mt19937_64 rng(seed);
  KMeansResult result;
  result.k = k;
  result.seed = seed;
  result.centroids = plus_plus_init(X, k, rng);
  result.assignment.assign(static_cast<std::size_t>(X.rows()), 0);

  double previous = assign(X, result.centroids, result.assignment);
  result.inertia_history.push_back(previous);
  for (std::size_t it = 0; it < max_iters; ++it) {
    update_centroids(X, result.assignment, result.centroids);
    const double current = assign(X, result.centroids, result.assignment);
    result.inertia_history.push_back(current);
    result.iterations_run = it + 1;
    const bool converged = previous - current <= tol;
    previous = current;
    if (converged) break;
  }
  // Leave centroids as the means of the final assignment.
  update_centroids(X, result.assignment, result.centroids);
  result.inertia = kmeans_inertia(X, result.centroids, result.assignment);
  return result;
}

}  // namespace

double kmeans_inertia(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids,
                      const std::vector<std::size_t>& assignment) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    total += (X.row(i) -
              centroids.row(static_cast<Eigen::Index>(assignment[static_cast<std::size_t>(i)])))
                 .squaredNorm();
  }
  return total;
}

KMeansResult kmeans_fit(const Eigen::MatrixXd& X, const KMeansParams& params) {
  if (params.k < 1) throw ValidationError("k must be at least 1");
  if (static_cast<std::size_t>(X.rows()) < params.k) {
    throw ValidationError(fmt::format("k-means needs at least k={} points (got {})", params.k,
                                      X.rows()));
  }
  if (!X.allFinite()) throw ValidationError("k-means input has non-finite values");
  const std::size_t restarts = std::max<std::size_t>(params.restarts, 1);

  KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    KMeansResult run = lloyd(X, params.k, params.seed + r, params.max_iters, params.tol);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

std::vector<std::size_t> canonical_row_order(const Eigen::MatrixXd& X) {
  std::vector<std::size_t> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = X.row(static_cast<Eigen::Index>(a));
    const auto rb = X.row(static_cast<Eigen::Index>(b));
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  return order;
}

}  // namespace vstab
