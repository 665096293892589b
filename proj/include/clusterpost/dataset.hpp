#pragma once

#include "clusterpost/core.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clusterpost {

enum class TaskMode { classification, regression };

using FeatureVector = Eigen::SparseVector<real>;

struct LabeledExample {
  FeatureVector features;
  int class_id = -1;  // dense class index, classification only
  real target = 0.0;  // regression only
};

/// Labeled examples sharing one feature dimension.
///
/// Classification labels are remapped to a dense [0, K) set in first-seen
/// order; `class_values[k]` holds the original numeric label of class k.
/// `norm_constant` is the factor R every feature vector has been divided by
/// (1 when not normalized).
struct Dataset {
  std::vector<LabeledExample> examples;
  Index dim = 0;
  TaskMode mode = TaskMode::classification;
  std::vector<real> class_values;
  real norm_constant = 1.0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  int num_classes() const { return static_cast<int>(class_values.size()); }
};

struct ParseOptions {
  TaskMode mode = TaskMode::classification;
  /// Forces the feature dimension instead of inferring max index.
  std::optional<Index> dim;
  /// Pre-seeded label map, so a test file reuses the training classes.
  std::vector<real> class_values;
};

Dataset parse_libsvm(std::istream& in, const ParseOptions& options = {});
Dataset parse_libsvm(std::string_view text, const ParseOptions& options = {});
Dataset read_libsvm(const std::filesystem::path& path, const ParseOptions& options = {});

/// Reads a train/test pair so that both share dim and the class map.
std::pair<Dataset, Dataset> read_libsvm_pair(const std::filesystem::path& train,
                                             const std::filesystem::path& test,
                                             const ParseOptions& options = {});

/// Emits LIBSVM text with 17 significant digits (lossless for doubles).
std::string to_libsvm(const Dataset& ds);

real max_norm(const Dataset& ds);

/// Divides every feature vector by R = max_i ||x_i||. Throws DataError when
/// every vector is zero. The returned norm_constant accumulates R.
Dataset normalize(const Dataset& ds);

/// Divides by a caller-supplied R (e.g. a test set scaled with train's R).
Dataset scale_features(const Dataset& ds, real R);

/// Deterministic permutation split; the train part has ceil((1-f)N) examples.
std::pair<Dataset, Dataset> split(const Dataset& ds, real test_fraction, std::uint64_t seed);

/// Dense d x N matrix, one column per example.
mat feature_matrix(const Dataset& ds);
vec targets(const Dataset& ds);
std::vector<int> class_ids(const Dataset& ds);

}  // namespace clusterpost
