#pragma once

#include "clusterpost/clustering.hpp"
#include "clusterpost/core.hpp"
#include "clusterpost/vb.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace clusterpost {

/// Clustering artifact, line oriented text:
///
///   # clusterpost clustering v1
///   N d c delta rho target_scale
///   n_j radius_j label_j mu_j1 ... mu_jd      (one line per cluster)
///
/// Member ids are not stored; a read-back result has empty member lists.
void write_clustering(std::ostream& out, const ClusteringResult& result);
void write_clustering(const std::filesystem::path& path, const ClusteringResult& result);
ClusteringResult read_clustering(std::istream& in);
ClusteringResult read_clustering(const std::filesystem::path& path);

/// Two-column CSV "cluster_size,count", ascending size.
void export_histogram(const ClusteringResult& result, const std::filesystem::path& path);
void export_histogram(const std::vector<std::pair<std::size_t, std::size_t>>& counts,
                      const std::filesystem::path& path);
std::vector<std::pair<std::size_t, std::size_t>> read_histogram(const std::filesystem::path& path);

/// Two CSV lines: the mean, then log_std.
void write_vb(const std::filesystem::path& path, const VbPosterior& q);
VbPosterior read_vb(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace clusterpost
