#pragma once

#include "clusterpost/core.hpp"
#include "clusterpost/metrics.hpp"
#include "clusterpost/model.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace clusterpost {

/// Diagonal Gaussian q(theta) = N(mean, diag(exp(2 log_std))).
struct VbPosterior {
  vec mean;
  vec log_std;

  Index num_params() const { return mean.size(); }
  vec stddev() const { return log_std.array().exp(); }
};

struct VbConfig {
  real learning_rate = 1e-3;
  /// Step decay: the rate is multiplied by decay_factor every decay_every iterations.
  real decay_factor = 0.5;
  int decay_every = 1000;
  int num_iterations = 2000;
  int mc_samples_per_step = 1;
  /// Reuse one fixed, per-dimension standardized set of base samples at every
  /// step. The objective becomes deterministic and the ascent monotone for
  /// small enough rates.
  bool common_random_numbers = false;
  std::uint64_t seed = 1;
  real initial_log_std = -2.302585092994046;  // log(0.1)

  real rate_at(int iteration) const {
    return learning_rate * std::pow(decay_factor, decay_every > 0 ? iteration / decay_every : 0);
  }
};

struct VbFit {
  VbPosterior posterior;
  std::vector<real> elbo_trace;
};

/// Closed-form entropy of the diagonal Gaussian.
inline real entropy(const VbPosterior& q) {
  return q.log_std.sum() + 0.5 * static_cast<real>(q.num_params()) * (1 + std::log(2 * std::numbers::pi));
}

inline VbPosterior initial_posterior(Index num_params, const VbConfig& config) {
  return {vec::Zero(num_params), vec::Constant(num_params, config.initial_log_std)};
}

/// Standard normal base samples, one per column.
template <class Rng>
mat draw_base_samples(Index num_params, int count, Rng& rng) {
  std::normal_distribution<real> normal;
  mat zeta(num_params, count);
  for (Index j = 0; j < zeta.cols(); ++j)
    for (Index i = 0; i < zeta.rows(); ++i) zeta(i, j) = normal(rng);
  return zeta;
}

/// Centre and scale each row of zeta to zero mean and unit variance (rows
/// with fewer than two samples are left as drawn).
inline mat standardize_rows(mat zeta) {
  if (zeta.cols() < 2) return zeta;
  const vec mean = zeta.rowwise().mean();
  zeta.colwise() -= mean;
  const vec sd = (zeta.rowwise().squaredNorm() / static_cast<real>(zeta.cols())).cwiseSqrt();
  for (Index i = 0; i < zeta.rows(); ++i)
    if (sd(i) > 0) zeta.row(i) /= sd(i);
  return zeta;
}

/// ELBO estimate with the given base samples: mean over columns of
/// log p(theta) + sum_i log p(x_i | theta) at theta = mean + std * zeta, plus
/// the closed-form entropy.
template <PosteriorModel Model>
real elbo_with_samples(const Model& model, const WeightedDataset& wds, const VbPosterior& q, const mat& zeta) {
  if (q.mean.size() != model.num_params() || q.log_std.size() != model.num_params() || zeta.rows() != q.mean.size())
    throw ConfigError("variational parameter shape mismatch");
  if (zeta.cols() < 1) throw ConfigError("at least one Monte Carlo sample is required");
  const vec sd = q.stddev();
  real total = 0;
  for (Index s = 0; s < zeta.cols(); ++s) {
    const vec theta = q.mean + sd.cwiseProduct(zeta.col(s));
    total += weighted_log_posterior(model, wds, theta);
  }
  return total / static_cast<real>(zeta.cols()) + entropy(q);
}

/// Reparameterization gradient of elbo_with_samples with respect to
/// (mean, log_std): d/dmu = g, d/dlog_std = g * std * zeta + 1.
template <PosteriorModel Model>
VbPosterior elbo_gradient(const Model& model, const WeightedDataset& wds, const VbPosterior& q, const mat& zeta) {
  if (q.mean.size() != model.num_params() || q.log_std.size() != model.num_params() || zeta.rows() != q.mean.size())
    throw ConfigError("variational parameter shape mismatch");
  if (zeta.cols() < 1) throw ConfigError("at least one Monte Carlo sample is required");
  const vec sd = q.stddev();
  VbPosterior grad{vec::Zero(q.num_params()), vec::Ones(q.num_params())};
  const real inv = 1.0 / static_cast<real>(zeta.cols());
  for (Index s = 0; s < zeta.cols(); ++s) {
    const vec theta = q.mean + sd.cwiseProduct(zeta.col(s));
    const vec g = weighted_grad_log_posterior(model, wds, theta);
    grad.mean += inv * g;
    grad.log_std += inv * g.cwiseProduct(sd).cwiseProduct(zeta.col(s));
  }
  return grad;
}

template <PosteriorModel Model, class Rng>
real elbo_estimate(const Model& model, const WeightedDataset& wds, const VbPosterior& q, int num_mc, Rng& rng) {
  if (num_mc < 1) throw ConfigError("at least one Monte Carlo sample is required");
  return elbo_with_samples(model, wds, q, draw_base_samples(q.num_params(), num_mc, rng));
}

template <PosteriorModel Model, class Rng>
real elbo_estimate(const Model& model, const Dataset& ds, const VbPosterior& q, int num_mc, Rng& rng) {
  return elbo_estimate(model, unit_weights(ds), q, num_mc, rng);
}

/// Stochastic gradient ascent on the ELBO starting from mean 0, std 0.1.
template <PosteriorModel Model>
VbFit fit_vb(const Model& model, const WeightedDataset& wds, const VbConfig& config) {
  if (wds.size() == 0) throw DataError("variational fit needs data");
  if (!(config.learning_rate > 0) || !(config.decay_factor > 0) || config.num_iterations < 0 ||
      config.mc_samples_per_step < 1)
    throw ConfigError("invalid VB configuration");
  const Index m = model.num_params();
  VbFit fit{initial_posterior(m, config), {}};
  std::mt19937_64 rng(config.seed);
  const mat fixed = config.common_random_numbers
                        ? standardize_rows(draw_base_samples(m, config.mc_samples_per_step, rng))
                        : mat();
  fit.elbo_trace.reserve(static_cast<std::size_t>(config.num_iterations));
  for (int it = 0; it < config.num_iterations; ++it) {
    const mat zeta = config.common_random_numbers ? fixed : draw_base_samples(m, config.mc_samples_per_step, rng);
    const real elbo = elbo_with_samples(model, wds, fit.posterior, zeta);
    if (!std::isfinite(elbo)) throw NumericalError("non-finite ELBO at iteration " + std::to_string(it));
    fit.elbo_trace.push_back(elbo);
    const VbPosterior g = elbo_gradient(model, wds, fit.posterior, zeta);
    const real rate = config.rate_at(it);
    fit.posterior.mean += rate * g.mean;
    fit.posterior.log_std += rate * g.log_std;
    if (!fit.posterior.mean.allFinite() || !fit.posterior.log_std.allFinite())
      throw NumericalError("non-finite variational parameters at iteration " + std::to_string(it));
  }
  return fit;
}

template <PosteriorModel Model>
VbFit fit_vb(const Model& model, const Dataset& ds, const VbConfig& config) {
  return fit_vb(model, unit_weights(ds), config);
}

inline GaussianMoments<> to_moments(const VbPosterior& q) {
  return {q.mean, q.log_std.array().exp().square().matrix().asDiagonal()};
}

/// Independent draws from q, one per column.
template <class Rng>
mat sample_vb(const VbPosterior& q, int count, Rng& rng) {
  mat draws = draw_base_samples(q.num_params(), count, rng);
  const vec sd = q.stddev();
  return (sd.asDiagonal() * draws).colwise() + q.mean;
}

}  // namespace clusterpost
