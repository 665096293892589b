#pragma once

#include "clusterpost/core.hpp"
#include "clusterpost/dataset.hpp"
#include "clusterpost/lsh.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace clusterpost {

struct Cluster {
  std::vector<PointId> member_ids;
  vec centroid;
  std::size_t count = 0;
  real radius = 0;
  /// Founding point; the only member held in the neighbor oracle.
  PointId representative_id = 0;
  /// Shared class of the members for classification data, -1 otherwise.
  int label = -1;
};

struct ClusteringResult {
  std::vector<Cluster> clusters;
  real delta = 0;
  std::size_t total_points = 0;
  /// Dimension of the space clustered in (d, or d + 1 for joint regression).
  Index dim = 0;
  /// Standard deviation sigma_y used for the (x, y / sigma_y) regression
  /// embedding; zero when the targets were not part of the clustered vector.
  real target_scale = 0;

  std::size_t num_clusters() const { return clusters.size(); }
  real ratio() const;
  real max_radius() const;
};

/// Streaming radius-bounded clustering.
///
/// Each point (in `order`, or column order when empty) queries the oracle for
/// a cluster representative within 2 * delta. Without a hit it founds a new
/// cluster. With a hit it joins that cluster unless the recomputed radius
/// would exceed delta, in which case it founds a new cluster. Every cluster of
/// the result satisfies radius <= delta, and its centroid and radius are
/// recomputed exactly from the members.
ClusteringResult cluster(const Eigen::Ref<const mat>& points, real delta, NeighborOracle& oracle,
                         std::span<const Index> order = {});

using OracleFactory = std::function<std::unique_ptr<NeighborOracle>(Index dim)>;

/// Oracle factory querying at 2 * delta.
OracleFactory oracle_factory(NeighborMode mode, real delta, LshParams lsh = LshParams{0.0, 4, 8, 1});

/// Joint regression embedding: column i is (x_i, y_i / sigma_y).
mat regression_embedding(const Dataset& ds, real& sigma_y);

/// Clusters a supervised dataset. Classification data is clustered per class
/// (each cluster carries its class); regression data is clustered in the
/// joint (x, y / sigma_y) space. Clusters are ordered by the stream position of
/// their representative, so singleton clusters preserve the stream order.
ClusteringResult cluster_dataset(const Dataset& ds, real delta, const OracleFactory& make_oracle,
                                 std::optional<std::uint64_t> shuffle_seed = std::nullopt);

real compression_ratio(std::size_t num_clusters, std::size_t num_points);
real compression_ratio(const ClusteringResult& result);

struct HistogramBin {
  real lower_edge = 0;
  std::size_t count = 0;
};

/// Log-spaced histogram of cluster sizes between the smallest and largest size.
std::vector<HistogramBin> size_histogram(std::span<const std::size_t> sizes, int num_bins);
std::vector<HistogramBin> cluster_size_histogram(const ClusteringResult& result, int num_bins);

/// Least-squares slope of ln(count) against ln(lower edge) over occupied bins.
real loglog_slope(std::span<const HistogramBin> bins);

/// Exact (cluster size, number of clusters) pairs in ascending size.
std::vector<std::pair<std::size_t, std::size_t>> size_counts(const ClusteringResult& result);

}  // namespace clusterpost
