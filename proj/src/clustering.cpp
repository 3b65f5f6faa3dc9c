#include "zidp/clustering.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "zidp/error.hpp"
#include "zidp/random.hpp"

namespace zidp {

namespace {

// Members of each cluster, clusters in order of first appearance.
std::vector<std::vector<std::size_t>> groups_of(std::span<const ClusterId> labels) {
  std::unordered_map<ClusterId, std::size_t> index;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = index.try_emplace(labels[i], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

void accumulate(std::span<const ClusterId> labels, std::vector<std::uint32_t>& counts, std::size_t n) {
  for (const auto& g : groups_of(labels))
    for (std::size_t i : g)
      for (std::size_t j : g) ++counts[i * n + j];
}

}  // namespace

Eigen::MatrixXd adjacency_matrix(std::span<const ClusterId> labels) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
  return m;
}

Eigen::MatrixXd posterior_mode_matrix(const PosteriorTrace& trace, const ModeMatrixOptions& opts) {
  if (trace.empty()) throw Error(ErrorKind::usage, "posterior trace is empty");
  const std::size_t n = trace.n_subjects();

  std::vector<std::size_t> draws(trace.size());
  std::iota(draws.begin(), draws.end(), std::size_t{0});
  if (opts.max_draws > 0 && opts.max_draws < draws.size()) {
    Random rng(derive_seed(opts.seed, stream::relabel));
    std::vector<std::size_t> picked;
    std::sample(draws.begin(), draws.end(), std::back_inserter(picked), opts.max_draws, rng.engine());
    draws = std::move(picked);
  }

  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, draws.size()));
  std::vector<std::vector<std::uint32_t>> partial(threads);
  auto work = [&](std::size_t w) {
    partial[w].assign(n * n, 0);
    for (std::size_t k = w; k < draws.size(); k += threads) accumulate(trace.draws[draws[k]].state.labels, partial[w], n);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
  }

  for (std::size_t w = 1; w < threads; ++w)
    for (std::size_t k = 0; k < n * n; ++k) partial[0][k] += partial[w][k];
  Eigen::MatrixXd mode(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double denom = static_cast<double>(draws.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      mode(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = partial[0][i * n + j] / denom;
  return mode;
}

double partition_distance(std::span<const ClusterId> labels, const Eigen::MatrixXd& mode_matrix) {
  // sum (M - M*)^2 = sum M - 2 sum_{same cluster} M* + sum M*^2, since M is 0/1.
  double same = 0.0;
  double ones = 0.0;
  for (const auto& g : groups_of(labels)) {
    ones += static_cast<double>(g.size()) * static_cast<double>(g.size());
    for (std::size_t i : g)
      for (std::size_t j : g) same += mode_matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return ones - 2.0 * same + mode_matrix.squaredNorm();
}

std::vector<int> renumber_labels(std::span<const ClusterId> labels) {
  std::unordered_map<ClusterId, int> index;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = index.try_emplace(labels[i], static_cast<int>(index.size()));
    out[i] = it->second;
  }
  return out;
}

AdjacencySummary select_mode_partition(const PosteriorTrace& trace, Eigen::MatrixXd mode_matrix) {
  if (trace.empty()) throw Error(ErrorKind::usage, "posterior trace is empty");
  if (mode_matrix.rows() != static_cast<Eigen::Index>(trace.n_subjects()) || mode_matrix.cols() != mode_matrix.rows())
    throw Error(ErrorKind::usage, "mode matrix does not match the trace's subject count");
  AdjacencySummary out;
  out.distance = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const double d = partition_distance(trace.draws[t].state.labels, mode_matrix);
    if (d < out.distance) {
      out.distance = d;
      out.selected_draw = t;
    }
  }
  out.hard_labels = renumber_labels(trace.draws[out.selected_draw].state.labels);
  out.num_clusters = trace.draws[out.selected_draw].state.num_clusters();
  out.mode_matrix = std::move(mode_matrix);
  return out;
}

std::map<std::size_t, std::size_t> cluster_count_distribution(const PosteriorTrace& trace) {
  std::map<std::size_t, std::size_t> dist;
  for (const auto& d : trace.draws) ++dist[d.state.num_clusters()];
  return dist;
}

std::vector<ClusterProfile> cluster_profile(const Dataset& data, std::span<const int> hard_labels) {
  if (hard_labels.size() != data.size()) throw Error(ErrorKind::usage, "label count does not match the data");
  const auto& schema = data.schema();
  const int k_max = hard_labels.empty() ? 0 : *std::max_element(hard_labels.begin(), hard_labels.end()) + 1;

  std::vector<ClusterProfile> rows(static_cast<std::size_t>(k_max));
  for (int k = 0; k < k_max; ++k) {
    auto& r = rows[static_cast<std::size_t>(k)];
    r.label = k;
    r.covariates.resize(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c)
      r.covariates[c].assign(schema[c].kind == CovariateKind::categorical ? schema[c].levels : 1, 0.0);
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& r = rows[static_cast<std::size_t>(hard_labels[i])];
    ++r.size;
    r.mean_outcome += data.y(i);
    r.prop_zero += data.z(i);
    r.prop_treated += data.a(i);
    const auto l = data.l(i);
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (schema[c].kind == CovariateKind::categorical)
        r.covariates[c][static_cast<std::size_t>(l[c])] += 1.0;
      else
        r.covariates[c][0] += l[c];
    }
  }
  std::erase_if(rows, [](const ClusterProfile& r) { return r.size == 0; });
  for (auto& r : rows) {
    const double n = static_cast<double>(r.size);
    r.mean_outcome /= n;
    r.prop_zero /= n;
    r.prop_treated /= n;
    for (auto& v : r.covariates)
      for (double& x : v) x /= n;
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ClusterProfile& a, const ClusterProfile& b) { return a.mean_outcome < b.mean_outcome; });
  return rows;
}

}  // namespace zidp
