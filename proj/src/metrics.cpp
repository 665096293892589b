#include "clusterpost/metrics.hpp"

#include <algorithm>
#include <random>

namespace clusterpost {

GaussianMoments<> fit_moments(const mat& draws, real jitter) {
  if (jitter < 0) throw ConfigError("jitter must be non-negative");
  if (draws.cols() < draws.rows() + 1) throw DataError("moment matching needs at least dim + 1 draws");
  GaussianMoments<> g;
  g.mean = draws.rowwise().mean();
  const mat centered = draws.colwise() - g.mean;
  g.covariance = centered * centered.transpose() / static_cast<real>(draws.cols() - 1);
  g.covariance.diagonal().array() += jitter;
  return g;
}

GaussianMoments<> fit_moments(const mat& draws) {
  auto g = fit_moments(draws, 0.0);
  g.covariance.diagonal().array() += default_jitter(g.covariance);
  return g;
}

real approx_kl(const SampleChain& p, const SampleChain& q, std::optional<real> jitter) {
  if (p.num_params() != q.num_params()) throw ConfigError("chains have different parameter dimensions");
  if (jitter) return gaussian_kl(fit_moments(p, *jitter), fit_moments(q, *jitter));
  return gaussian_kl(fit_moments(p), fit_moments(q));
}

real kl_bound(const KlBoundInputs& in) {
  if (!(in.L1 > 0 && in.L2 > 0 && in.gamma_smooth > 0 && in.N > 0) || in.delta < 0)
    throw ConfigError("KL bound inputs must be positive (delta non-negative)");
  return (2 * in.L1 * in.L2 * in.N + in.N / in.gamma_smooth) * in.delta * in.delta;
}

GaussianMoments<> analytic_linreg_posterior(const WeightedDataset& wds, real lambda, real gamma) {
  if (!(lambda > 0 && gamma > 0)) throw ConfigError("prior and noise variances must be positive");
  const Index d = wds.dim();
  mat precision = wds.features * wds.weights.asDiagonal() * wds.features.transpose() / gamma;
  precision.diagonal().array() += 1.0 / lambda;
  const vec rhs = wds.features * wds.weights.cwiseProduct(wds.labels) / gamma;
  Eigen::LLT<mat> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("posterior precision is not positive definite");
  GaussianMoments<> g;
  g.mean = llt.solve(rhs);
  g.covariance = llt.solve(mat::Identity(d, d));
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose()).eval();
  return g;
}

namespace {

struct LinearDataTerm {
  const LinearModel& model;
  real sigma_y;

  // z = (x, y / sigma_y)
  real residual(const vec& z, const vec& beta) const {
    return sigma_y * z(model.dim) - beta.dot(z.head(model.dim));
  }
  real value(const vec& z, const vec& beta) const {
    const real r = residual(z, beta);
    return -0.5 * std::log(2 * std::numbers::pi * model.noise_variance) - 0.5 * r * r / model.noise_variance;
  }
  vec grad_theta(const vec& z, const vec& beta) const {
    return residual(z, beta) / model.noise_variance * z.head(model.dim);
  }
  vec grad_data(const vec& z, const vec& beta) const {
    const real r = residual(z, beta) / model.noise_variance;
    vec g(model.dim + 1);
    g.head(model.dim) = r * beta;
    g(model.dim) = -sigma_y * r;
    return g;
  }
};

std::vector<vec> draw_high_mass(const GaussianMoments<>& g, int count, std::mt19937_64& rng) {
  const Index m = g.dim();
  const auto llt = detail::factor_covariance(g.covariance, "posterior");
  const mat L = llt.matrixL();
  // Wilson-Hilferty 99% chi-square quantile.
  const real k = static_cast<real>(m), z99 = 2.326347874;
  const real q = k * std::pow(1 - 2 / (9 * k) + z99 * std::sqrt(2 / (9 * k)), 3);
  std::normal_distribution<real> normal;
  std::vector<vec> out;
  while (static_cast<int>(out.size()) < count) {
    vec e(m);
    for (Index i = 0; i < m; ++i) e(i) = normal(rng);
    if (e.squaredNorm() <= q) out.push_back(g.mean + L * e);
  }
  return out;
}

}  // namespace

KlBoundInputs estimate_bound_constants(const LinearModel& model, const Dataset& ds, const GaussianMoments<>& posterior,
                                       std::uint64_t seed, int num_pairs, int num_thetas, real safety) {
  if (ds.size() < 2) throw DataError("bound constants need at least two data points");
  real sigma_y = 1;
  const mat z = regression_embedding(ds, sigma_y);
  const LinearDataTerm term{model, sigma_y};
  std::mt19937_64 rng(seed);
  const auto thetas = draw_high_mass(posterior, num_thetas, rng);
  std::uniform_int_distribution<Index> pick(0, z.cols() - 1);

  real l1 = 0, l2 = 0, smooth = 0;
  for (int p = 0; p < num_pairs; ++p) {
    const Index a = pick(rng), b = pick(rng);
    const vec za = z.col(a), zb = z.col(b);
    const real dist = (za - zb).norm();
    if (dist == 0) continue;
    for (const vec& beta : thetas) {
      l1 = std::max(l1, std::abs(term.value(za, beta) - term.value(zb, beta)) / dist);
      l2 = std::max(l2, (term.grad_theta(za, beta) - term.grad_theta(zb, beta)).norm() / dist);
      smooth = std::max(smooth, (term.grad_data(za, beta) - term.grad_data(zb, beta)).norm() / dist);
    }
  }
  if (!(l1 > 0 && l2 > 0 && smooth > 0)) throw NumericalError("degenerate bound-constant estimate");
  KlBoundInputs in;
  in.L1 = safety * l1;
  in.L2 = safety * l2;
  in.gamma_smooth = 1.0 / (safety * smooth);
  in.N = static_cast<real>(ds.size());
  return in;
}

BoundScalingResult verify_bound_scaling(const LinearModel& model, const Dataset& ds, const std::vector<real>& deltas,
                                        const BoundScalingOptions& options) {
  if (ds.mode != TaskMode::regression) throw ConfigError("bound scaling needs a regression dataset");
  if (deltas.size() < 3) throw ConfigError("bound scaling needs at least three deltas");
  const auto [lo, hi] = std::minmax_element(deltas.begin(), deltas.end());
  if (*hi < 4 * *lo) throw ConfigError("deltas must span at least a factor of four");
  if (options.trials < 1) throw ConfigError("at least one trial is required");

  const WeightedDataset exact_data = unit_weights(ds);
  const auto exact = analytic_linreg_posterior(exact_data, model.prior_variance, model.noise_variance);

  BoundScalingResult result;
  result.constants = estimate_bound_constants(model, ds, exact, options.seed);

  std::vector<real> xs, ys;
  for (real delta : deltas) {
    BoundScalingPoint point;
    point.delta = delta;
    bool all_singletons = true;
    for (int t = 0; t < options.trials; ++t) {
      std::optional<std::uint64_t> shuffle;
      if (options.trials > 1) shuffle = options.seed + static_cast<std::uint64_t>(t);
      LshParams lsh = options.lsh;
      lsh.seed += static_cast<std::uint64_t>(t);
      const auto clustering = cluster_dataset(ds, delta, oracle_factory(options.nn, delta, lsh), shuffle);
      all_singletons = all_singletons && clustering.num_clusters() == ds.size();
      const auto approx =
          analytic_linreg_posterior(compress(ds, clustering), model.prior_variance, model.noise_variance);
      point.kl += std::max(0.0, gaussian_kl(exact, approx)) / options.trials;
      point.mean_clusters += static_cast<real>(clustering.num_clusters()) / options.trials;
    }
    KlBoundInputs in = result.constants;
    in.delta = delta;
    point.bound = kl_bound(in);
    if (all_singletons || point.kl <= 0) {
      result.dropped_deltas.push_back(delta);
      result.warnings.push_back("delta " + std::to_string(delta) + " kept every point separate; dropped from fit");
      continue;
    }
    result.points.push_back(point);
    xs.push_back(std::log(delta));
    ys.push_back(std::log(point.kl));
  }
  if (xs.size() < 2) throw DataError("too few informative deltas for a slope fit");
  const auto n = static_cast<Index>(xs.size());
  const Eigen::Map<const vec> x(xs.data(), n), y(ys.data(), n);
  const vec xc = x.array() - x.mean();
  result.slope = xc.dot(y) / xc.squaredNorm();
  return result;
}

}  // namespace clusterpost
