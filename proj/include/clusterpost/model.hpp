#pragma once

#include "clusterpost/chain.hpp"
#include "clusterpost/clustering.hpp"
#include "clusterpost/core.hpp"
#include "clusterpost/dataset.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>

namespace clusterpost {

/// Pseudo-points with positive integer multiplicities. Unit weights on the raw
/// data give the exact posterior; cluster centroids weighted by cluster size
/// give the compressed one.
struct WeightedDataset {
  mat features;  // d x c
  vec labels;    // class index for classification, target for regression
  vec weights;   // positive integers stored as reals

  Index size() const { return features.cols(); }
  Index dim() const { return features.rows(); }
  real total_weight() const { return weights.sum(); }
};

WeightedDataset unit_weights(const Dataset& ds);

/// One pseudo-point per cluster: centroid features, cluster label (or the
/// mean member target for regression) and weight n_j.
WeightedDataset compress(const Dataset& ds, const ClusteringResult& clustering);

/// Multiclass softmax regression; theta is W (d x K) flattened column-major,
/// so theta.segment(k * d, d) is the weight vector of class k.
struct LogisticModel {
  Index dim = 0;
  int num_classes = 2;
  real prior_variance = 1.0;

  Index num_params() const { return dim * num_classes; }
};

/// y ~ N(beta^T x, noise_variance), beta ~ N(0, prior_variance I).
struct LinearModel {
  Index dim = 0;
  real prior_variance = 1.0;
  real noise_variance = 1.0;

  Index num_params() const { return dim; }
};

template <class Model>
concept PosteriorModel = requires(const Model& m) {
  { m.num_params() } -> std::convertible_to<Index>;
  { m.prior_variance } -> std::convertible_to<real>;
};

/// Full-normalizer log density of N(0, lambda I) over every parameter entry.
template <PosteriorModel Model>
real log_prior(const Model& model, const vec& theta) {
  if (theta.size() != model.num_params()) throw ConfigError("parameter shape mismatch");
  const real lambda = model.prior_variance;
  return -0.5 * theta.squaredNorm() / lambda -
         0.5 * static_cast<real>(theta.size()) * std::log(2 * std::numbers::pi * lambda);
}

template <PosteriorModel Model>
vec grad_log_prior(const Model& model, const vec& theta) {
  if (theta.size() != model.num_params()) throw ConfigError("parameter shape mismatch");
  return -theta / model.prior_variance;
}

real log_likelihood(const LogisticModel& model, const vec& x, real label, const vec& theta);
vec grad_log_likelihood(const LogisticModel& model, const vec& x, real label, const vec& theta);
real log_likelihood(const LinearModel& model, const vec& x, real label, const vec& theta);
vec grad_log_likelihood(const LinearModel& model, const vec& x, real label, const vec& theta);

/// Class probabilities softmax(W^T x).
vec class_probabilities(const LogisticModel& model, const vec& x, const vec& theta);

/// Sum over pseudo-points of weight * log-likelihood (vectorized).
real weighted_log_likelihood(const LogisticModel& model, const WeightedDataset& wds, const vec& theta);
vec weighted_grad_log_likelihood(const LogisticModel& model, const WeightedDataset& wds, const vec& theta);
real weighted_log_likelihood(const LinearModel& model, const WeightedDataset& wds, const vec& theta);
vec weighted_grad_log_likelihood(const LinearModel& model, const WeightedDataset& wds, const vec& theta);

/// log p(theta) + sum_j n_j log p(mu_j | theta), without the normalizer of the
/// posterior itself.
template <PosteriorModel Model>
real weighted_log_posterior(const Model& model, const WeightedDataset& wds, const vec& theta) {
  return log_prior(model, theta) + weighted_log_likelihood(model, wds, theta);
}

template <PosteriorModel Model>
vec weighted_grad_log_posterior(const Model& model, const WeightedDataset& wds, const vec& theta) {
  return grad_log_prior(model, theta) + weighted_grad_log_likelihood(model, wds, theta);
}

/// Log posterior bound to a pseudo-dataset, with exact evaluation counters.
template <PosteriorModel Model>
class WeightedPosterior {
 public:
  WeightedPosterior(Model model, const WeightedDataset& wds) : model_(std::move(model)), wds_(&wds) {
    if (wds.dim() != model_.dim) throw ConfigError("model and dataset dimensions differ");
  }

  real log_density(const vec& theta) const {
    ++density_evals_;
    return weighted_log_posterior(model_, *wds_, theta);
  }

  vec gradient(const vec& theta) const {
    ++grad_evals_;
    likelihood_terms_ += static_cast<std::uint64_t>(wds_->size());
    return weighted_grad_log_posterior(model_, *wds_, theta);
  }

  Index num_params() const { return model_.num_params(); }
  const Model& model() const { return model_; }
  const WeightedDataset& data() const { return *wds_; }

  std::uint64_t grad_evals() const { return grad_evals_; }
  std::uint64_t likelihood_terms() const { return likelihood_terms_; }
  std::uint64_t density_evals() const { return density_evals_; }
  void reset_counters() const { grad_evals_ = likelihood_terms_ = density_evals_ = 0; }

 private:
  Model model_;
  const WeightedDataset* wds_;
  mutable std::uint64_t grad_evals_ = 0;
  mutable std::uint64_t likelihood_terms_ = 0;
  mutable std::uint64_t density_evals_ = 0;
};

enum class PredictionRule {
  posterior_mean,      // plug in the chain mean
  predictive_average,  // average predictive probabilities over draws
};

/// Test error rate of the argmax class.
real evaluate(const LogisticModel& model, const mat& draws, const Dataset& test,
              PredictionRule rule = PredictionRule::posterior_mean);
/// Test mean squared error of posterior-mean predictions.
real evaluate(const LinearModel& model, const mat& draws, const Dataset& test,
              PredictionRule rule = PredictionRule::posterior_mean);

template <PosteriorModel Model>
real evaluate(const Model& model, const SampleChain& chain, const Dataset& test,
              PredictionRule rule = PredictionRule::posterior_mean) {
  return evaluate(model, chain.draws, test, rule);
}

}  // namespace clusterpost
