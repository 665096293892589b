#include "clusterpost/model.hpp"

#include <algorithm>

namespace clusterpost {

namespace {

void check_point(Index dim, const vec& x, const vec& theta, Index num_params) {
  if (x.size() != dim || theta.size() != num_params) throw ConfigError("parameter or feature shape mismatch");
  if (!x.allFinite() || !theta.allFinite()) throw NumericalError("non-finite likelihood input");
}

int class_index(const LogisticModel& model, real label) {
  const auto k = static_cast<int>(label);
  if (k < 0 || k >= model.num_classes || static_cast<real>(k) != label)
    throw ConfigError("class label out of range");
  return k;
}

void check_weighted(Index dim, const WeightedDataset& wds, const vec& theta, Index num_params) {
  if (wds.dim() != dim || theta.size() != num_params) throw ConfigError("parameter or feature shape mismatch");
  if (wds.labels.size() != wds.size() || wds.weights.size() != wds.size())
    throw ConfigError("weighted dataset columns disagree");
}

// K x c matrix of log-softmax values.
mat log_softmax_columns(const mat& scores) {
  const Eigen::RowVectorXd top = scores.colwise().maxCoeff();
  mat shifted = scores.rowwise() - top;
  const Eigen::RowVectorXd lse = shifted.array().exp().colwise().sum().log().matrix() + top;
  return scores.rowwise() - lse;
}

}  // namespace

WeightedDataset unit_weights(const Dataset& ds) {
  WeightedDataset w;
  w.features = feature_matrix(ds);
  const auto n = static_cast<Index>(ds.size());
  w.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& ex = ds.examples[static_cast<std::size_t>(i)];
    w.labels(i) = ds.mode == TaskMode::classification ? static_cast<real>(ex.class_id) : ex.target;
  }
  w.weights = vec::Ones(n);
  return w;
}

WeightedDataset compress(const Dataset& ds, const ClusteringResult& clustering) {
  if (clustering.total_points != ds.size()) throw DataError("clustering and dataset sizes differ");
  const bool regression = ds.mode == TaskMode::regression;
  const Index expected_dim = regression ? ds.dim + 1 : ds.dim;
  if (clustering.dim != expected_dim) throw DataError("clustering and dataset dimensions differ");

  const auto c = static_cast<Index>(clustering.clusters.size());
  WeightedDataset w;
  w.features.resize(ds.dim, c);
  w.labels.resize(c);
  w.weights.resize(c);
  std::size_t total = 0;
  for (Index j = 0; j < c; ++j) {
    const Cluster& cl = clustering.clusters[static_cast<std::size_t>(j)];
    if (cl.count == 0 || cl.centroid.size() != expected_dim) throw DataError("malformed cluster record");
    if (!cl.member_ids.empty() && cl.member_ids.size() != cl.count) throw DataError("cluster count mismatch");
    total += cl.count;
    w.features.col(j) = cl.centroid.head(ds.dim);
    w.weights(j) = static_cast<real>(cl.count);
    if (!regression) {
      if (cl.label < 0 || cl.label >= ds.num_classes()) throw DataError("cluster label out of range");
      w.labels(j) = cl.label;
    } else if (!cl.member_ids.empty()) {
      real sum = 0;
      for (PointId m : cl.member_ids) sum += ds.examples.at(m).target;
      w.labels(j) = sum / static_cast<real>(cl.count);
    } else {
      w.labels(j) = cl.centroid(ds.dim) * clustering.target_scale;
    }
  }
  if (total != ds.size()) throw DataError("cluster multiplicities do not sum to N");
  return w;
}

vec class_probabilities(const LogisticModel& model, const vec& x, const vec& theta) {
  check_point(model.dim, x, theta, model.num_params());
  const Eigen::Map<const mat> W(theta.data(), model.dim, model.num_classes);
  return log_softmax_columns(W.transpose() * x).array().exp();
}

real log_likelihood(const LogisticModel& model, const vec& x, real label, const vec& theta) {
  check_point(model.dim, x, theta, model.num_params());
  const int k = class_index(model, label);
  const Eigen::Map<const mat> W(theta.data(), model.dim, model.num_classes);
  return log_softmax_columns(W.transpose() * x)(k, 0);
}

vec grad_log_likelihood(const LogisticModel& model, const vec& x, real label, const vec& theta) {
  vec residual = -class_probabilities(model, x, theta);
  residual(class_index(model, label)) += 1;
  mat G = x * residual.transpose();
  return Eigen::Map<const vec>(G.data(), G.size());
}

real log_likelihood(const LinearModel& model, const vec& x, real label, const vec& theta) {
  check_point(model.dim, x, theta, model.num_params());
  if (!std::isfinite(label)) throw NumericalError("non-finite regression target");
  const real r = label - theta.dot(x);
  const real gamma = model.noise_variance;
  return -0.5 * std::log(2 * std::numbers::pi * gamma) - 0.5 * r * r / gamma;
}

vec grad_log_likelihood(const LinearModel& model, const vec& x, real label, const vec& theta) {
  check_point(model.dim, x, theta, model.num_params());
  if (!std::isfinite(label)) throw NumericalError("non-finite regression target");
  return (label - theta.dot(x)) / model.noise_variance * x;
}

real weighted_log_likelihood(const LogisticModel& model, const WeightedDataset& wds, const vec& theta) {
  check_weighted(model.dim, wds, theta, model.num_params());
  if (wds.size() == 0) return 0;
  const Eigen::Map<const mat> W(theta.data(), model.dim, model.num_classes);
  const mat logp = log_softmax_columns(W.transpose() * wds.features);
  real total = 0;
  for (Index j = 0; j < wds.size(); ++j) total += wds.weights(j) * logp(class_index(model, wds.labels(j)), j);
  return total;
}

vec weighted_grad_log_likelihood(const LogisticModel& model, const WeightedDataset& wds, const vec& theta) {
  check_weighted(model.dim, wds, theta, model.num_params());
  if (wds.size() == 0) return vec::Zero(theta.size());
  const Eigen::Map<const mat> W(theta.data(), model.dim, model.num_classes);
  mat residual = -log_softmax_columns(W.transpose() * wds.features).array().exp().matrix();
  for (Index j = 0; j < wds.size(); ++j) residual(class_index(model, wds.labels(j)), j) += 1;
  residual *= wds.weights.asDiagonal();
  const mat G = wds.features * residual.transpose();
  return Eigen::Map<const vec>(G.data(), G.size());
}

real weighted_log_likelihood(const LinearModel& model, const WeightedDataset& wds, const vec& theta) {
  check_weighted(model.dim, wds, theta, model.num_params());
  const real gamma = model.noise_variance;
  const vec r = wds.labels - wds.features.transpose() * theta;
  return -0.5 * std::log(2 * std::numbers::pi * gamma) * wds.total_weight() -
         0.5 * wds.weights.dot(r.cwiseAbs2()) / gamma;
}

vec weighted_grad_log_likelihood(const LinearModel& model, const WeightedDataset& wds, const vec& theta) {
  check_weighted(model.dim, wds, theta, model.num_params());
  const vec r = wds.labels - wds.features.transpose() * theta;
  return wds.features * wds.weights.cwiseProduct(r) / model.noise_variance;
}

real evaluate(const LogisticModel& model, const mat& draws, const Dataset& test, PredictionRule rule) {
  if (draws.cols() == 0 || test.empty()) throw DataError("evaluation needs draws and test examples");
  if (draws.rows() != model.num_params()) throw ConfigError("draw dimension does not match the model");
  const mat X = feature_matrix(test);
  if (X.rows() != model.dim) throw DataError("test dimension does not match the model");

  mat probs;
  if (rule == PredictionRule::posterior_mean) {
    const vec mean = draws.rowwise().mean();
    const Eigen::Map<const mat> W(mean.data(), model.dim, model.num_classes);
    probs = W.transpose() * X;  // argmax of scores equals argmax of probabilities
  } else {
    probs = mat::Zero(model.num_classes, X.cols());
    for (Index s = 0; s < draws.cols(); ++s) {
      const Eigen::Map<const mat> W(draws.col(s).data(), model.dim, model.num_classes);
      probs += log_softmax_columns(W.transpose() * X).array().exp().matrix();
    }
  }
  std::size_t errors = 0;
  for (Index i = 0; i < X.cols(); ++i) {
    Index best = 0;
    probs.col(i).maxCoeff(&best);
    if (best != test.examples[static_cast<std::size_t>(i)].class_id) ++errors;
  }
  return static_cast<real>(errors) / static_cast<real>(X.cols());
}

real evaluate(const LinearModel& model, const mat& draws, const Dataset& test, PredictionRule) {
  if (draws.cols() == 0 || test.empty()) throw DataError("evaluation needs draws and test examples");
  if (draws.rows() != model.num_params()) throw ConfigError("draw dimension does not match the model");
  const mat X = feature_matrix(test);
  if (X.rows() != model.dim) throw DataError("test dimension does not match the model");
  // Predictions are linear in beta, so both rules coincide.
  const vec mean = draws.rowwise().mean();
  return (targets(test) - X.transpose() * mean).squaredNorm() / static_cast<real>(X.cols());
}

}  // namespace clusterpost
