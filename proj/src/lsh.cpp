#include "clusterpost/lsh.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>

namespace clusterpost {

LshIndex::LshIndex(const LshParams& params, Index dim) : params_(params) {
  if (dim < 1) throw ConfigError("LSH index dimension must be >= 1");
  if (!(params.bucket_width > 0)) throw ConfigError("LSH bucket width must be positive");
  if (params.hashes_per_table < 1 || params.num_tables < 1)
    throw ConfigError("LSH needs at least one hash per table and one table");

  const Index rows = static_cast<Index>(params.hashes_per_table) * params.num_tables;
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<real> normal(0.0, 1.0);
  std::uniform_real_distribution<real> uniform(0.0, params.bucket_width);
  projections_.resize(rows, dim);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < dim; ++c) projections_(r, c) = normal(rng);
  offsets_.resize(rows);
  for (Index r = 0; r < rows; ++r) offsets_(r) = uniform(rng);
  tables_.resize(static_cast<std::size_t>(params.num_tables));
}

std::size_t LshIndex::KeyHash::operator()(const std::vector<std::int64_t>& key) const noexcept {
  std::size_t seed = key.size();
  for (auto v : key) seed ^= std::hash<std::int64_t>{}(v) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
  return seed;
}

std::vector<std::vector<std::int64_t>> LshIndex::all_keys(const vec& x) const {
  if (x.size() != dim()) throw ConfigError("LSH query dimension mismatch");
  const vec h = ((projections_ * x + offsets_) / params_.bucket_width).array().floor();
  const auto k = static_cast<Index>(params_.hashes_per_table);
  std::vector<std::vector<std::int64_t>> keys(tables_.size());
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    keys[t].resize(static_cast<std::size_t>(k));
    for (Index j = 0; j < k; ++j) keys[t][j] = static_cast<std::int64_t>(h(static_cast<Index>(t) * k + j));
  }
  return keys;
}

std::vector<std::int64_t> LshIndex::bucket_key(const vec& x, int table) const {
  return all_keys(x).at(static_cast<std::size_t>(table));
}

std::size_t LshIndex::table_population(int table) const {
  std::size_t n = 0;
  for (const auto& [key, ids] : tables_.at(static_cast<std::size_t>(table))) n += ids.size();
  return n;
}

void LshIndex::insert(PointId id, const vec& x) {
  if (slot_of_.count(id)) throw ConfigError("duplicate LSH point id " + std::to_string(id));
  auto keys = all_keys(x);
  for (std::size_t t = 0; t < tables_.size(); ++t) tables_[t][std::move(keys[t])].push_back(id);
  slot_of_.emplace(id, points_.size());
  ids_.push_back(id);
  points_.push_back(x);
}

std::optional<PointId> LshIndex::find_nearest_neighbor(const vec& q, real threshold) const {
  if (threshold < 0) throw ConfigError("threshold must be non-negative");
  const auto keys = all_keys(q);
  std::vector<PointId> candidates;
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    auto it = tables_[t].find(keys[t]);
    if (it != tables_[t].end()) candidates.insert(candidates.end(), it->second.begin(), it->second.end());
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::optional<PointId> best;
  real best_dist = std::numeric_limits<real>::infinity();
  for (PointId id : candidates) {
    const real dist = (points_[slot_of_.at(id)] - q).norm();
    if (dist <= threshold && dist < best_dist) {
      best = id;
      best_dist = dist;
    }
  }
  assert(!best || (points_[slot_of_.at(*best)] - q).norm() <= threshold);
  return best;
}

ExactIndex::ExactIndex(Index dim) : dim_(dim) {
  if (dim < 1) throw ConfigError("index dimension must be >= 1");
  points_.resize(dim, 16);
}

void ExactIndex::insert(PointId id, const vec& x) {
  if (x.size() != dim_) throw ConfigError("index insert dimension mismatch");
  if (slot_of_.count(id)) throw ConfigError("duplicate point id " + std::to_string(id));
  const auto n = static_cast<Index>(ids_.size());
  if (n == points_.cols()) points_.conservativeResize(Eigen::NoChange, 2 * n);
  points_.col(n) = x;
  slot_of_.emplace(id, ids_.size());
  ids_.push_back(id);
}

std::optional<PointId> ExactIndex::find_nearest_neighbor(const vec& q, real threshold) const {
  if (threshold < 0) throw ConfigError("threshold must be non-negative");
  if (q.size() != dim_) throw ConfigError("query dimension mismatch");
  const auto n = static_cast<Index>(ids_.size());
  if (n == 0) return std::nullopt;
  const vec sq = (points_.leftCols(n).colwise() - q).colwise().squaredNorm().transpose();
  std::optional<PointId> best;
  real best_sq = std::numeric_limits<real>::infinity();
  for (Index i = 0; i < n; ++i) {
    const PointId id = ids_[static_cast<std::size_t>(i)];
    if (sq(i) < best_sq || (sq(i) == best_sq && best && id < *best)) {
      best_sq = sq(i);
      best = id;
    }
  }
  if (best && std::sqrt(best_sq) <= threshold) return best;
  return std::nullopt;
}

std::optional<PointId> brute_force_nn(std::span<const vec> points, const vec& q, real threshold) {
  std::optional<PointId> best;
  real best_dist = std::numeric_limits<real>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != q.size()) throw ConfigError("brute-force query dimension mismatch");
    const real dist = (points[i] - q).norm();
    if (dist <= threshold && dist < best_dist) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

NeighborMode parse_neighbor_mode(const std::string& name) {
  if (name == "lsh") return NeighborMode::lsh;
  if (name == "exact") return NeighborMode::exact;
  throw ConfigError("neighbor mode must be lsh or exact");
}

std::unique_ptr<NeighborOracle> make_oracle(NeighborMode mode, Index dim, real threshold, LshParams lsh) {
  if (mode == NeighborMode::exact) return std::make_unique<ExactIndex>(dim);
  if (!(lsh.bucket_width > 0)) lsh.bucket_width = LshParams::kWidthPerThreshold * threshold;
  return std::make_unique<LshIndex>(lsh, dim);
}

}  // namespace clusterpost
