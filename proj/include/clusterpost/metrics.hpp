#pragma once

#include "clusterpost/chain.hpp"
#include "clusterpost/clustering.hpp"
#include "clusterpost/core.hpp"
#include "clusterpost/model.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace clusterpost {

template <class Scalar = real>
struct GaussianMoments {
  vector<Scalar> mean;
  matrix<Scalar> covariance;

  Index dim() const { return mean.size(); }
};

/// Relative jitter 1e-8 * trace(cov) / m.
template <class Scalar>
Scalar default_jitter(const matrix<Scalar>& cov) {
  return cov.rows() ? Scalar(1e-8) * cov.trace() / Scalar(cov.rows()) : Scalar(0);
}

namespace detail {

template <class Scalar>
Eigen::LLT<matrix<Scalar>> factor_covariance(const matrix<Scalar>& cov, const char* which) {
  using std::abs;
  const Scalar scale = cov.cwiseAbs().maxCoeff();
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10) * (scale > 0 ? scale : Scalar(1)))
    throw NumericalError(std::string(which) + " covariance is not symmetric");
  Eigen::LLT<matrix<Scalar>> llt(cov);
  if (llt.info() == Eigen::Success) return llt;
  matrix<Scalar> jittered = cov;
  jittered.diagonal().array() += default_jitter(cov);
  llt.compute(jittered);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(which) + " covariance is not positive definite after jitter");
  return llt;
}

template <class Scalar>
Scalar log_det(const Eigen::LLT<matrix<Scalar>>& llt) {
  using std::log;
  return Scalar(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

/// KL(p1 || p2) between multivariate normals:
///   1/2 [ ln|S2| - ln|S1| - m + tr(S2^-1 S1) + (mu1 - mu2)^T S2^-1 (mu1 - mu2) ],
/// with log-determinants and solves taken from Cholesky factors.
template <class Scalar>
Scalar gaussian_kl(const GaussianMoments<Scalar>& p1, const GaussianMoments<Scalar>& p2) {
  const Index m = p1.dim();
  if (p2.dim() != m || p1.covariance.rows() != m || p1.covariance.cols() != m || p2.covariance.rows() != m ||
      p2.covariance.cols() != m)
    throw ConfigError("Gaussian KL dimension mismatch");
  const auto llt1 = detail::factor_covariance(p1.covariance, "first");
  const auto llt2 = detail::factor_covariance(p2.covariance, "second");

  const matrix<Scalar> L1 = llt1.matrixL();
  const matrix<Scalar> whitened = llt2.matrixL().solve(L1);
  const vector<Scalar> shift = llt2.matrixL().solve(p1.mean - p2.mean);
  return Scalar(0.5) * (detail::log_det(llt2) - detail::log_det(llt1) - Scalar(m) + whitened.squaredNorm() +
                        shift.squaredNorm());
}

/// Sample mean and unbiased covariance of the draws (one per column), plus
/// jitter * I.
GaussianMoments<> fit_moments(const mat& draws, real jitter);
/// Same with the default relative jitter.
GaussianMoments<> fit_moments(const mat& draws);
inline GaussianMoments<> fit_moments(const SampleChain& chain, real jitter) { return fit_moments(chain.draws, jitter); }
inline GaussianMoments<> fit_moments(const SampleChain& chain) { return fit_moments(chain.draws); }

/// Moment-matched Gaussian KL between two chains.
real approx_kl(const SampleChain& p, const SampleChain& q, std::optional<real> jitter = std::nullopt);

/// Constants of the smoothness and Lipschitz assumptions on the data-space
/// log-likelihood.
struct KlBoundInputs {
  real L1 = 1;            // Lipschitz constant of ln p(z | theta) in z
  real L2 = 1;            // Lipschitz constant of grad_theta ln p(z | theta) in z
  real gamma_smooth = 1;  // ln p(z | theta) is (1 / gamma_smooth)-smooth in z
  real N = 1;
  real delta = 0;
};

/// (2 L1 L2 N + N / gamma) delta^2.
real kl_bound(const KlBoundInputs& in);

/// Closed-form posterior of Bayesian linear regression on weighted data:
/// Sigma = (sum_j n_j x_j x_j^T / gamma + I / lambda)^-1,
/// mu = Sigma sum_j n_j x_j y_j / gamma.
GaussianMoments<> analytic_linreg_posterior(const WeightedDataset& wds, real lambda, real gamma);

/// Sampled-supremum estimates of L1, L2 and 1 / gamma for the linear model in
/// the joint (x, y / sigma_y) clustering space, over data pairs and parameters
/// drawn from the 99% mass region of `posterior`; multiplied by `safety`.
KlBoundInputs estimate_bound_constants(const LinearModel& model, const Dataset& ds, const GaussianMoments<>& posterior,
                                       std::uint64_t seed, int num_pairs = 2000, int num_thetas = 32,
                                       real safety = 1.5);

struct BoundScalingOptions {
  NeighborMode nn = NeighborMode::exact;
  LshParams lsh{0.0, 4, 8, 1};
  /// Independent clustering trials per delta, each over a shuffled stream;
  /// a single trial keeps the file order. KL values are averaged over trials.
  int trials = 1;
  std::uint64_t seed = 1;
};

struct BoundScalingPoint {
  real delta = 0;
  real kl = 0;
  real bound = 0;
  real mean_clusters = 0;
};

struct BoundScalingResult {
  std::vector<BoundScalingPoint> points;
  std::vector<real> dropped_deltas;  // deltas whose clustering kept every point separate
  real slope = 0;                    // least-squares slope of ln KL against ln delta
  KlBoundInputs constants;           // delta field unused
  std::vector<std::string> warnings;
};

/// Exact KL(p || p~) from the conjugate posteriors across decreasing deltas.
BoundScalingResult verify_bound_scaling(const LinearModel& model, const Dataset& ds, const std::vector<real>& deltas,
                                        const BoundScalingOptions& options = {});

}  // namespace clusterpost
