#pragma once

#include "clusterpost/chain.hpp"
#include "clusterpost/core.hpp"
#include "clusterpost/model.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace clusterpost {

struct HmcConfig {
  real step_size = 0.01;
  int num_leapfrog = 10;
  int num_samples = 1000;
  /// Negative means 10% of num_samples.
  int burn_in = -1;
  std::uint64_t seed = 1;
  /// Starting point; empty means the origin.
  vec initial;

  int effective_burn_in() const { return burn_in >= 0 ? burn_in : num_samples / 10; }
};

/// |Delta H| beyond which a proposal is rejected outright.
inline constexpr real kDivergenceThreshold = 1000.0;

class DivergedTrajectory : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Leapfrog integration of H = -log p(theta) + |p|^2 / 2: a half momentum
/// kick, `steps` drift/kick pairs, and a closing half kick. Evaluates the
/// gradient steps + 1 times.
template <class GradFn>
std::pair<vec, vec> leapfrog(vec theta, vec momentum, GradFn&& grad_log_density, real eps, int steps) {
  if (theta.size() != momentum.size()) throw ConfigError("leapfrog state shapes differ");
  if (eps < 0 || steps < 1) throw ConfigError("leapfrog needs eps >= 0 and at least one step");
  auto kick = [&](real scale) {
    const vec g = grad_log_density(theta);
    if (!g.allFinite()) throw DivergedTrajectory("non-finite gradient in leapfrog");
    momentum += scale * g;
  };
  kick(0.5 * eps);
  for (int l = 0; l < steps; ++l) {
    theta += eps * momentum;
    kick(l + 1 < steps ? eps : 0.5 * eps);
  }
  return {std::move(theta), std::move(momentum)};
}

struct HmcStep {
  vec theta;
  real log_density = 0;
  bool accepted = false;
};

/// One Metropolis-corrected HMC transition from (theta, log p(theta)).
template <class LogpFn, class GradFn, class Rng>
HmcStep hmc_step(const vec& theta, real current_logp, LogpFn&& log_density, GradFn&& grad_log_density,
                 const HmcConfig& config, Rng& rng) {
  std::normal_distribution<real> normal(0.0, 1.0);
  vec momentum(theta.size());
  for (Index i = 0; i < momentum.size(); ++i) momentum(i) = normal(rng);
  std::uniform_real_distribution<real> uniform(0.0, 1.0);
  const real u = uniform(rng);

  const real h0 = -current_logp + 0.5 * momentum.squaredNorm();
  try {
    auto [proposal, p] = leapfrog(theta, momentum, grad_log_density, config.step_size, config.num_leapfrog);
    const real logp = log_density(proposal);
    const real delta_h = (-logp + 0.5 * p.squaredNorm()) - h0;
    if (std::isfinite(delta_h) && std::abs(delta_h) <= kDivergenceThreshold && std::log(u) < -delta_h)
      return {std::move(proposal), logp, true};
  } catch (const DivergedTrajectory&) {
  }
  return {theta, current_logp, false};
}

template <class LogpFn, class GradFn, class Rng>
HmcStep hmc_step(const vec& theta, LogpFn&& log_density, GradFn&& grad_log_density, const HmcConfig& config,
                 Rng& rng) {
  return hmc_step(theta, log_density(theta), log_density, grad_log_density, config, rng);
}

/// Draws config.num_samples post burn-in samples from any object exposing
/// log_density, gradient and num_params (e.g. WeightedPosterior).
template <class Posterior>
SampleChain sample(const Posterior& posterior, const HmcConfig& config) {
  if (!(config.step_size >= 0) || config.num_leapfrog < 1 || config.num_samples < 0)
    throw ConfigError("invalid HMC configuration");
  const Index m = posterior.num_params();
  vec theta = config.initial.size() ? config.initial : vec::Zero(m);
  if (theta.size() != m) throw ConfigError("initial state has the wrong dimension");

  std::mt19937_64 rng(config.seed);
  auto logp_fn = [&](const vec& t) { return posterior.log_density(t); };
  auto grad_fn = [&](const vec& t) { return posterior.gradient(t); };

  const auto grad_before = posterior.grad_evals();
  const auto terms_before = posterior.likelihood_terms();
  const auto start = std::chrono::steady_clock::now();

  SampleChain chain;
  chain.draws.resize(m, config.num_samples);
  const int burn_in = config.effective_burn_in();
  real logp = logp_fn(theta);
  std::uint64_t accepted = 0;
  for (int it = 0; it < burn_in + config.num_samples; ++it) {
    auto step = hmc_step(theta, logp, logp_fn, grad_fn, config, rng);
    theta = std::move(step.theta);
    logp = step.log_density;
    accepted += step.accepted;
    if (it >= burn_in) chain.draws.col(it - burn_in) = theta;
  }

  chain.wall_time_seconds = std::chrono::duration<real>(std::chrono::steady_clock::now() - start).count();
  const int total = burn_in + config.num_samples;
  chain.accept_rate = total ? static_cast<real>(accepted) / total : 0.0;
  chain.grad_evals = posterior.grad_evals() - grad_before;
  chain.likelihood_terms = posterior.likelihood_terms() - terms_before;
  return chain;
}

template <PosteriorModel Model>
SampleChain sample(const Model& model, const WeightedDataset& wds, const HmcConfig& config) {
  return sample(WeightedPosterior<Model>(model, wds), config);
}

struct StepSizeChoice {
  real step_size = 0;
  real accept_rate = 0;
};

/// Coarse grid search: the largest step size whose pilot acceptance lies in
/// [lo, hi], else the one with acceptance closest to the middle of the band.
template <class Posterior>
StepSizeChoice tune_step_size(const Posterior& posterior, HmcConfig pilot, std::span<const real> grid,
                              real lo = 0.6, real hi = 0.9) {
  if (grid.empty()) throw ConfigError("step size grid is empty");
  StepSizeChoice in_band{-1, 0}, closest{grid.front(), -1};
  for (real eps : grid) {
    pilot.step_size = eps;
    const real rate = sample(posterior, pilot).accept_rate;
    if (rate >= lo && rate <= hi && eps > in_band.step_size) in_band = {eps, rate};
    if (closest.accept_rate < 0 || std::abs(rate - 0.5 * (lo + hi)) < std::abs(closest.accept_rate - 0.5 * (lo + hi)))
      closest = {eps, rate};
  }
  return in_band.step_size > 0 ? in_band : closest;
}

}  // namespace clusterpost
