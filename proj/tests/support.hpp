#pragma once

#include "clusterpost/clustering.hpp"
#include "clusterpost/dataset.hpp"
#include "clusterpost/model.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <cstdint>
#include <random>
#include <vector>

namespace testing_support {

using namespace clusterpost;

inline vec gaussian_vec(Index n, std::mt19937_64& rng, real scale = 1.0) {
  std::normal_distribution<real> normal(0.0, scale);
  vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline vec unit_vec(Index n, std::mt19937_64& rng) {
  vec v = gaussian_vec(n, rng);
  return v / v.norm();
}

/// Dense columns of X become examples; labels are class ids or targets.
inline Dataset make_dataset(const mat& X, const vec& labels, TaskMode mode, int num_classes = 0) {
  Dataset ds;
  ds.dim = X.rows();
  ds.mode = mode;
  for (int k = 0; k < num_classes; ++k) ds.class_values.push_back(k);
  for (Index i = 0; i < X.cols(); ++i) {
    LabeledExample ex;
    ex.features.resize(X.rows());
    for (Index j = 0; j < X.rows(); ++j)
      if (X(j, i) != 0) ex.features.coeffRef(j) = X(j, i);
    if (mode == TaskMode::classification) ex.class_id = static_cast<int>(labels(i));
    else ex.target = labels(i);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

struct RegressionData {
  Dataset ds;
  vec beta;
};

/// Linear-regression data concentrated on `clusters` one-dimensional
/// filaments: centres on the sphere of radius 2, each with a random unit
/// direction, positions uniform in [-half, half] along it. y = beta^T x + noise.
inline RegressionData filament_regression(std::uint64_t seed, Index n = 2000, Index d = 5, int clusters = 20,
                                          real half = 2.0, real noise = 0.001) {
  std::mt19937_64 rng(seed);
  std::vector<vec> centres, dirs;
  for (int c = 0; c < clusters; ++c) centres.push_back(2.0 * unit_vec(d, rng));
  for (int c = 0; c < clusters; ++c) dirs.push_back(unit_vec(d, rng));
  std::uniform_int_distribution<int> pick(0, clusters - 1);
  std::uniform_real_distribution<real> along(-half, half);
  mat X(d, n);
  for (Index i = 0; i < n; ++i) {
    const int c = pick(rng);
    X.col(i) = centres[static_cast<std::size_t>(c)] + along(rng) * dirs[static_cast<std::size_t>(c)];
  }
  const vec beta = gaussian_vec(d, rng);
  const vec y = X.transpose() * beta + gaussian_vec(n, rng, noise);
  return {make_dataset(X, y, TaskMode::regression), beta};
}

/// Regression data with correlated, off-centre features.
inline RegressionData correlated_regression(std::uint64_t seed, Index n, Index d, real noise_sd = 1.0) {
  std::mt19937_64 rng(seed);
  mat mix = mat::Identity(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < i; ++j) mix(i, j) = 0.8;
  const vec offset = vec::LinSpaced(d, 1.0, -0.5);
  mat X(d, n);
  for (Index i = 0; i < n; ++i) X.col(i) = offset + mix * gaussian_vec(d, rng);
  const vec beta = gaussian_vec(d, rng);
  const vec y = X.transpose() * beta + gaussian_vec(n, rng, noise_sd);
  return {make_dataset(X, y, TaskMode::regression), beta};
}

/// Classification data in `blobs` tight Gaussian blobs (per-axis sd `spread`)
/// whose centres lie in the unit ball; each blob carries one class.
inline Dataset blob_classification(std::uint64_t seed, Index n, Index d, int classes, int blobs, real spread) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<real> unit(0.0, 1.0);
  std::vector<vec> centres;
  std::vector<int> blob_class;
  for (int b = 0; b < blobs; ++b) {
    centres.push_back(0.8 * std::pow(unit(rng), 1.0 / static_cast<real>(d)) * unit_vec(d, rng));
    blob_class.push_back(b % classes);
  }
  std::uniform_int_distribution<int> pick(0, blobs - 1);
  mat X(d, n);
  vec labels(n);
  for (Index i = 0; i < n; ++i) {
    const int b = pick(rng);
    X.col(i) = centres[static_cast<std::size_t>(b)] + gaussian_vec(d, rng, spread);
    labels(i) = blob_class[static_cast<std::size_t>(b)];
  }
  return make_dataset(X, labels, TaskMode::classification, classes);
}

/// Classification data from a planted softmax model.
inline Dataset planted_logistic(std::uint64_t seed, Index n, Index d, int classes, real scale = 3.0) {
  std::mt19937_64 rng(seed);
  const mat W = scale * mat::NullaryExpr(d, classes, [&] { return std::normal_distribution<real>()(rng); });
  mat X(d, n);
  vec labels(n);
  std::uniform_real_distribution<real> unit(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    X.col(i) = gaussian_vec(d, rng, 1.0 / std::sqrt(static_cast<real>(d)));
    vec s = W.transpose() * X.col(i);
    s = (s.array() - s.maxCoeff()).exp();
    s /= s.sum();
    real u = unit(rng);
    int k = 0;
    while (k + 1 < classes && u > s(k)) u -= s(k++);
    labels(i) = k;
  }
  return make_dataset(X, labels, TaskMode::classification, classes);
}

inline std::vector<std::size_t> zipf_sizes(std::uint64_t seed, int count, real exponent, std::size_t max_size) {
  std::vector<real> weights;
  for (std::size_t s = 1; s <= max_size; ++s) weights.push_back(std::pow(static_cast<real>(s), -exponent));
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (int i = 0; i < count; ++i) out.push_back(dist(rng) + 1);
  return out;
}

/// Central-difference gradient.
template <class F>
vec numeric_gradient(F&& f, const vec& x, real h = 1e-5) {
  vec g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    vec a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline real min_pairwise_distance(const mat& X) {
  real best = std::numeric_limits<real>::infinity();
  for (Index i = 0; i < X.cols(); ++i)
    for (Index j = i + 1; j < X.cols(); ++j) best = std::min(best, (X.col(i) - X.col(j)).norm());
  return best;
}

}  // namespace testing_support

namespace testing_support {

/// Radius, centroid and partition invariants of a clustering of the columns
/// of `points`. Returns an empty string when all hold.
inline std::string clustering_violation(const mat& points, const ClusteringResult& r) {
  const auto n = static_cast<std::size_t>(points.cols());
  std::vector<int> owner(n, -1);
  std::size_t total = 0;
  for (std::size_t j = 0; j < r.clusters.size(); ++j) {
    const Cluster& c = r.clusters[j];
    if (c.count != c.member_ids.size() || c.count == 0) return "count mismatch";
    total += c.count;
    vec mean = vec::Zero(points.rows());
    for (PointId id : c.member_ids) {
      if (id >= n) return "member id out of range";
      if (owner[id] != -1) return "point in two clusters";
      owner[id] = static_cast<int>(j);
      mean += points.col(static_cast<Index>(id));
    }
    mean /= static_cast<real>(c.count);
    const real scale = std::max<real>(1.0, mean.norm());
    if ((mean - c.centroid).norm() > 1e-10 * scale) return "centroid mismatch";
    real radius = 0;
    for (PointId id : c.member_ids) radius = std::max(radius, (points.col(static_cast<Index>(id)) - c.centroid).norm());
    if (std::abs(radius - c.radius) > 1e-10) return "radius mismatch";
    if (radius > r.delta * (1 + 1e-12)) return "radius exceeds delta";
  }
  if (total != n || r.total_points != n) return "counts do not sum to N";
  for (int o : owner)
    if (o < 0) return "point not covered";
  return {};
}

}  // namespace testing_support
