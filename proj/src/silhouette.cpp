#include <algorithm>
#include <limits>

#include <fmt/core.h>

#include "vstab/cluster.hpp"
#include "vstab/core.hpp"

namespace vstab {

std::vector<double> silhouette_samples(const Eigen::MatrixXd& X,
                                       const std::vector<std::size_t>& assignment,
                                       std::size_t k) {
  if (k < 2) throw ValidationError("silhouette undefined");
  const auto n = static_cast<std::size_t>(X.rows());
  if (assignment.size() != n) throw ValidationError("assignment size mismatch");
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t c : assignment) {
    if (c >= k) throw ValidationError(fmt::format("cluster id {} out of range", c));
    ++sizes[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] == 0) throw ValidationError(fmt::format("cluster {} is empty", c));
  }

  std::vector<double> s(n, 0.0);
  std::vector<double> dist_sum(k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = assignment[i];
    if (sizes[own] == 1) continue;
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[assignment[j]] +=
          (X.row(static_cast<Eigen::Index>(i)) - X.row(static_cast<Eigen::Index>(j))).norm();
    }
    const double a = dist_sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, dist_sum[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return s;
}

std::vector<double> silhouette_per_cluster(const Eigen::MatrixXd& X,
                                           const std::vector<std::size_t>& assignment,
                                           std::size_t k) {
  const auto s = silhouette_samples(X, assignment, k);
  std::vector<double> sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    sum[assignment[i]] += s[i];
    ++count[assignment[i]];
  }
  for (std::size_t c = 0; c < k; ++c) sum[c] /= static_cast<double>(count[c]);
  return sum;
}

RoleSplit split_accidental_ood(const Eigen::MatrixXd& unstable, std::uint64_t seed,
                               std::size_t restarts) {
  if (unstable.rows() < 4) throw ValidationError("too few unstable views to split");
  bool all_same = true;
  for (Eigen::Index i = 1; i < unstable.rows() && all_same; ++i) {
    all_same = unstable.row(i) == unstable.row(0);
  }
  if (all_same) throw ValidationError("clusters collapsed");

  RoleSplit out;
  out.clustering = kmeans_fit(unstable, KMeansParams{2, seed, restarts, 100, 1e-6});
  std::vector<std::size_t> sizes(2, 0);
  for (std::size_t c : out.clustering.assignment) ++sizes[c];
  if (sizes[0] == 0 || sizes[1] == 0) throw ValidationError("clusters collapsed");

  const auto sil = silhouette_per_cluster(unstable, out.clustering.assignment, 2);
  std::size_t accidental = 0;
  if (sil[1] > sil[0]) {
    accidental = 1;
  } else if (sil[1] == sil[0] && sizes[1] < sizes[0]) {
    accidental = 1;
  }
  out.roles = ClusterRoles{accidental, 1 - accidental, sil};
  return out;
}

}  // namespace vstab
