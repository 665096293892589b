#include "clusterpost/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace clusterpost {

namespace {

struct Working {
  std::vector<PointId> members;
  vec centroid;
  // Upper bound on max ||x_m - centroid|| over the members.
  real radius_bound = 0;
  PointId representative = 0;
};

real exact_radius(const Eigen::Ref<const mat>& points, const std::vector<PointId>& members,
                  const vec& centroid) {
  real r2 = 0;
  for (PointId m : members) r2 = std::max(r2, (points.col(static_cast<Index>(m)) - centroid).squaredNorm());
  return std::sqrt(r2);
}

}  // namespace

real ClusteringResult::ratio() const { return compression_ratio(clusters.size(), total_points); }

real ClusteringResult::max_radius() const {
  real r = 0;
  for (const auto& c : clusters) r = std::max(r, c.radius);
  return r;
}

ClusteringResult cluster(const Eigen::Ref<const mat>& points, real delta, NeighborOracle& oracle,
                         std::span<const Index> order) {
  if (!(delta > 0)) throw ConfigError("clustering radius delta must be positive");
  if (points.cols() == 0) throw DataError("cannot cluster an empty point set");
  if (points.rows() != oracle.dim()) throw ConfigError("oracle dimension does not match the points");
  if (!order.empty() && static_cast<Index>(order.size()) != points.cols())
    throw ConfigError("stream order must cover every point");

  const real threshold = 2 * delta;
  // Bound-based acceptance must never admit a radius the exact scan would reject.
  const real bound_limit = delta * (1 - 1e-12);
  std::vector<Working> work;

  auto found = [&](PointId i) {
    Working w;
    w.members.push_back(i);
    w.centroid = points.col(static_cast<Index>(i));
    w.representative = i;
    oracle.insert(work.size(), w.centroid);
    work.push_back(std::move(w));
  };

  const auto n = points.cols();
  for (Index s = 0; s < n; ++s) {
    const PointId i = static_cast<PointId>(order.empty() ? s : order[static_cast<std::size_t>(s)]);
    const auto x = points.col(static_cast<Index>(i));
    const auto hit = oracle.find_nearest_neighbor(x, threshold);
    if (!hit) {
      found(i);
      continue;
    }
    Working& c = work[*hit];
    const auto size = static_cast<real>(c.members.size() + 1);
    vec centroid = c.centroid + (x - c.centroid) / size;
    const real to_new = (x - centroid).norm();
    real radius = std::max(c.radius_bound + (centroid - c.centroid).norm(), to_new);
    if (radius > bound_limit) radius = std::max(exact_radius(points, c.members, centroid), to_new);
    if (radius > delta) {
      found(i);
      continue;
    }
    c.members.push_back(i);
    c.centroid = std::move(centroid);
    c.radius_bound = radius;
  }

  ClusteringResult result;
  result.delta = delta;
  result.total_points = static_cast<std::size_t>(n);
  result.dim = points.rows();
  result.clusters.reserve(work.size());
  for (auto& w : work) {
    Cluster c;
    c.count = w.members.size();
    c.centroid = vec::Zero(points.rows());
    for (PointId m : w.members) c.centroid += points.col(static_cast<Index>(m));
    c.centroid /= static_cast<real>(c.count);
    c.radius = exact_radius(points, w.members, c.centroid);
    c.representative_id = w.representative;
    c.member_ids = std::move(w.members);
    result.clusters.push_back(std::move(c));
  }
  return result;
}

OracleFactory oracle_factory(NeighborMode mode, real delta, LshParams lsh) {
  return [=](Index dim) { return make_oracle(mode, dim, 2 * delta, lsh); };
}

mat regression_embedding(const Dataset& ds, real& sigma_y) {
  const vec y = targets(ds);
  const real mean = y.mean();
  sigma_y = std::sqrt((y.array() - mean).square().mean());
  if (!(sigma_y > 0)) sigma_y = 1.0;
  mat z(ds.dim + 1, static_cast<Index>(ds.size()));
  z.topRows(ds.dim) = feature_matrix(ds);
  z.row(ds.dim) = y.transpose() / sigma_y;
  return z;
}

ClusteringResult cluster_dataset(const Dataset& ds, real delta, const OracleFactory& make_oracle,
                                 std::optional<std::uint64_t> shuffle_seed) {
  if (ds.empty()) throw DataError("cannot cluster an empty dataset");
  const auto n = static_cast<Index>(ds.size());
  std::vector<Index> stream(static_cast<std::size_t>(n));
  std::iota(stream.begin(), stream.end(), Index{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(stream.begin(), stream.end(), rng);
  }
  std::vector<Index> position(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) position[static_cast<std::size_t>(stream[static_cast<std::size_t>(s)])] = s;

  ClusteringResult result;
  result.delta = delta;
  result.total_points = ds.size();

  if (ds.mode == TaskMode::regression) {
    real sigma_y = 1;
    const mat z = regression_embedding(ds, sigma_y);
    auto oracle = make_oracle(z.rows());
    result = cluster(z, delta, *oracle, stream);
    result.target_scale = sigma_y;
  } else {
    const mat x = feature_matrix(ds);
    result.dim = x.rows();
    for (int k = 0; k < ds.num_classes(); ++k) {
      std::vector<Index> members;  // global ids of class k in stream order
      for (Index g : stream)
        if (ds.examples[static_cast<std::size_t>(g)].class_id == k) members.push_back(g);
      if (members.empty()) continue;
      mat sub(x.rows(), static_cast<Index>(members.size()));
      for (std::size_t j = 0; j < members.size(); ++j) sub.col(static_cast<Index>(j)) = x.col(members[j]);
      auto oracle = make_oracle(x.rows());
      auto part = cluster(sub, delta, *oracle);
      for (auto& c : part.clusters) {
        for (auto& id : c.member_ids) id = static_cast<PointId>(members[id]);
        c.representative_id = static_cast<PointId>(members[c.representative_id]);
        c.label = k;
        result.clusters.push_back(std::move(c));
      }
    }
  }

  std::stable_sort(result.clusters.begin(), result.clusters.end(), [&](const Cluster& a, const Cluster& b) {
    return position[a.representative_id] < position[b.representative_id];
  });
  return result;
}

real compression_ratio(std::size_t num_clusters, std::size_t num_points) {
  if (num_points == 0) throw ConfigError("compression ratio needs N > 0");
  return static_cast<real>(num_clusters) / static_cast<real>(num_points);
}

real compression_ratio(const ClusteringResult& result) {
  return compression_ratio(result.num_clusters(), result.total_points);
}

std::vector<HistogramBin> size_histogram(std::span<const std::size_t> sizes, int num_bins) {
  if (num_bins < 1) throw ConfigError("histogram needs at least one bin");
  std::vector<HistogramBin> bins(static_cast<std::size_t>(num_bins));
  if (sizes.empty()) return bins;
  const auto [lo_it, hi_it] = std::minmax_element(sizes.begin(), sizes.end());
  const real lo = static_cast<real>(*lo_it), hi = static_cast<real>(*hi_it);
  const real span = std::log(hi / lo);
  for (int b = 0; b < num_bins; ++b) bins[b].lower_edge = lo * std::exp(span * b / num_bins);
  for (std::size_t s : sizes) {
    int b = 0;
    if (span > 0) b = static_cast<int>(std::floor(num_bins * std::log(static_cast<real>(s) / lo) / span));
    bins[static_cast<std::size_t>(std::clamp(b, 0, num_bins - 1))].count++;
  }
  return bins;
}

std::vector<HistogramBin> cluster_size_histogram(const ClusteringResult& result, int num_bins) {
  std::vector<std::size_t> sizes;
  sizes.reserve(result.clusters.size());
  for (const auto& c : result.clusters) sizes.push_back(c.count);
  return size_histogram(sizes, num_bins);
}

real loglog_slope(std::span<const HistogramBin> bins) {
  std::vector<real> xs, ys;
  for (const auto& b : bins)
    if (b.count > 0 && b.lower_edge > 0) {
      xs.push_back(std::log(b.lower_edge));
      ys.push_back(std::log(static_cast<real>(b.count)));
    }
  if (xs.size() < 2) throw DataError("log-log slope needs at least two occupied bins");
  const auto m = static_cast<Index>(xs.size());
  const Eigen::Map<const vec> x(xs.data(), m), y(ys.data(), m);
  const vec xc = x.array() - x.mean();
  return xc.dot(y) / xc.squaredNorm();
}

std::vector<std::pair<std::size_t, std::size_t>> size_counts(const ClusteringResult& result) {
  std::map<std::size_t, std::size_t> counts;
  for (const auto& c : result.clusters) counts[c.count]++;
  return {counts.begin(), counts.end()};
}

}  // namespace clusterpost
