#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace vstab {

struct KMeansParams {
  std::size_t k = 2;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
  std::size_t max_iters = 100;
  /// Stop when the inertia drop between iterations falls to or below tol.
  double tol = 1e-6;
};

struct KMeansResult {
  std::size_t k = 0;
  Eigen::MatrixXd centroids;  // k x d
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
  /// Seed of the winning restart.
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  /// Inertia after each assignment step of the winning restart.
  std::vector<double> inertia_history;
};

/// Lloyd's algorithm with k-means++ seeding. Restart r uses seed + r; the
/// lowest-inertia run wins, ties going to the lower restart index.
KMeansResult kmeans_fit(const Eigen::MatrixXd& X, const KMeansParams& params);

/// Sum of squared distances from each row to its assigned centroid.
double kmeans_inertia(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids,
                      const std::vector<std::size_t>& assignment);

/// Row indices of X in lexicographic row order (ties by original index).
std::vector<std::size_t> canonical_row_order(const Eigen::MatrixXd& X);

/// Per-point silhouette with Euclidean distance. Points in singleton clusters
/// get 0.
std::vector<double> silhouette_samples(const Eigen::MatrixXd& X,
                                       const std::vector<std::size_t>& assignment,
                                       std::size_t k);

/// Mean member silhouette for each of the k clusters.
std::vector<double> silhouette_per_cluster(const Eigen::MatrixXd& X,
                                           const std::vector<std::size_t>& assignment,
                                           std::size_t k);

struct ClusterRoles {
  std::size_t accidental_cluster = 0;
  std::size_t ood_cluster = 1;
  std::vector<double> silhouette_per_cluster;
};

struct RoleSplit {
  ClusterRoles roles;
  KMeansResult clustering;

  bool is_accidental(std::size_t row) const {
    return clustering.assignment[row] == roles.accidental_cluster;
  }
};

/// k = 2 clustering of unstable embeddings; the cluster with the higher mean
/// silhouette is accidental. Equal silhouettes go to the smaller cluster,
/// then to the lower cluster index.
RoleSplit split_accidental_ood(const Eigen::MatrixXd& unstable, std::uint64_t seed,
                               std::size_t restarts = 10);

struct PcaProjection {
  Eigen::MatrixXd components;  // q x d, orthonormal rows
  Eigen::VectorXd mean;
  Eigen::MatrixXd projected;  // N x q
  Eigen::VectorXd explained_variance;
  Eigen::VectorXd explained_variance_ratio;
};

/// Top-q principal directions of mean-centered X. Each component is signed so
/// its largest-magnitude entry is positive.
PcaProjection pca_project(const Eigen::MatrixXd& X, std::size_t q);

}  // namespace vstab
