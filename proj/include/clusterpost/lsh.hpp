#pragma once

#include "clusterpost/core.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace clusterpost {

using PointId = std::size_t;

/// p-stable (Gaussian) LSH parameters: h(x) = floor((a.x + b) / w), K hashes
/// concatenated per table, L tables.
struct LshParams {
  real bucket_width = 1.0;
  int hashes_per_table = 4;
  int num_tables = 8;
  std::uint64_t seed = 1;

  /// Bucket width as a multiple of the query threshold when none is given.
  static constexpr real kWidthPerThreshold = 2.0;

  static LshParams for_threshold(real threshold, std::uint64_t seed = 1) {
    LshParams p;
    p.bucket_width = kWidthPerThreshold * threshold;
    p.seed = seed;
    return p;
  }
};

/// Find-nearest-neighbor oracle over a growing point set. Any id returned lies
/// within `threshold` of the query in exact Euclidean distance; an oracle may
/// miss (return nothing) when a neighbor exists.
class NeighborOracle {
 public:
  virtual ~NeighborOracle() = default;
  virtual void insert(PointId id, const vec& x) = 0;
  virtual std::optional<PointId> find_nearest_neighbor(const vec& q, real threshold) const = 0;
  virtual std::size_t size() const = 0;
  virtual Index dim() const = 0;
};

class LshIndex final : public NeighborOracle {
 public:
  LshIndex(const LshParams& params, Index dim);

  void insert(PointId id, const vec& x) override;
  std::optional<PointId> find_nearest_neighbor(const vec& q, real threshold) const override;
  std::size_t size() const override { return ids_.size(); }
  Index dim() const override { return projections_.cols(); }

  const LshParams& params() const { return params_; }
  /// (L*K) x d, rows grouped by table.
  const mat& projections() const { return projections_; }
  const vec& offsets() const { return offsets_; }
  /// Bucket key of x in table t.
  std::vector<std::int64_t> bucket_key(const vec& x, int table) const;
  /// Number of entries stored in table t (each id appears once per table).
  std::size_t table_population(int table) const;

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<std::int64_t>& key) const noexcept;
  };
  using Table = std::unordered_map<std::vector<std::int64_t>, std::vector<PointId>, KeyHash>;

  std::vector<std::vector<std::int64_t>> all_keys(const vec& x) const;

  LshParams params_;
  mat projections_;
  vec offsets_;
  std::vector<Table> tables_;
  std::unordered_map<PointId, std::size_t> slot_of_;
  std::vector<PointId> ids_;
  std::vector<vec> points_;
};

/// Brute-force reference oracle; ties go to the lowest id.
class ExactIndex final : public NeighborOracle {
 public:
  explicit ExactIndex(Index dim);

  void insert(PointId id, const vec& x) override;
  std::optional<PointId> find_nearest_neighbor(const vec& q, real threshold) const override;
  std::size_t size() const override { return ids_.size(); }
  Index dim() const override { return dim_; }

 private:
  Index dim_;
  mat points_;  // d x capacity, first size() columns used
  std::vector<PointId> ids_;
  std::unordered_map<PointId, std::size_t> slot_of_;
};

/// Exact nearest point within threshold; the id is the position in `points`.
std::optional<PointId> brute_force_nn(std::span<const vec> points, const vec& q, real threshold);

enum class NeighborMode { lsh, exact };

/// "lsh" or "exact".
NeighborMode parse_neighbor_mode(const std::string& name);

/// Builds a fresh oracle for clustering with query radius `threshold`. A
/// non-positive `lsh.bucket_width` means kWidthPerThreshold * threshold.
std::unique_ptr<NeighborOracle> make_oracle(NeighborMode mode, Index dim, real threshold,
                                            LshParams lsh = LshParams{0.0, 4, 8, 1});

}  // namespace clusterpost
