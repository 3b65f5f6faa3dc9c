#ifndef ZIDP_CLUSTERING_HPP
#define ZIDP_CLUSTERING_HPP

// Label-free summaries of a posterior trace: co-clustering frequencies M*,
// the draw closest to M* in squared Frobenius distance, and per-cluster
// descriptive tables for that draw.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "zidp/model.hpp"
#include "zidp/sampler.hpp"

namespace zidp {

// M_ij = 1 iff labels[i] == labels[j].
Eigen::MatrixXd adjacency_matrix(std::span<const ClusterId> labels);

struct ModeMatrixOptions {
  std::size_t threads = 1;
  // 0 averages every draw; otherwise a seeded random subset of this many.
  std::size_t max_draws = 0;
  std::uint64_t seed = 1;
};

// Element-wise mean of per-draw adjacency matrices, accumulated as integer
// counts so the result does not depend on the thread count.
Eigen::MatrixXd posterior_mode_matrix(const PosteriorTrace& trace, const ModeMatrixOptions& opts = {});

// sum_ij (M_ij - mode_ij)^2 for the partition given by labels.
double partition_distance(std::span<const ClusterId> labels, const Eigen::MatrixXd& mode_matrix);

struct AdjacencySummary {
  Eigen::MatrixXd mode_matrix;
  std::size_t selected_draw = 0;
  double distance = 0.0;
  std::vector<int> hard_labels;  // 0..K-1 by first appearance
  std::size_t num_clusters = 0;
};

AdjacencySummary select_mode_partition(const PosteriorTrace& trace, Eigen::MatrixXd mode_matrix);

// Consecutive ids 0..K-1 in order of first appearance.
std::vector<int> renumber_labels(std::span<const ClusterId> labels);

// Occupied-cluster count K across draws: K -> number of draws.
std::map<std::size_t, std::size_t> cluster_count_distribution(const PosteriorTrace& trace);

struct ClusterProfile {
  int label = 0;
  std::size_t size = 0;
  double mean_outcome = 0.0;
  double prop_zero = 0.0;
  double prop_treated = 0.0;
  // Continuous and binary covariates: one mean. Categorical: one proportion per level.
  std::vector<std::vector<double>> covariates;
};

// Rows sorted by ascending mean outcome.
std::vector<ClusterProfile> cluster_profile(const Dataset& data, std::span<const int> hard_labels);

}  // namespace zidp

#endif  // ZIDP_CLUSTERING_HPP
