#include "doctest.h"

#include "clusterpost/metrics.hpp"
#include "quadrature.hpp"
#include "support.hpp"

#include <numbers>

using namespace clusterpost;
using testing_support::gaussian_vec;

namespace {

GaussianMoments<> normal(vec mean, mat cov) { return {std::move(mean), std::move(cov)}; }

GaussianMoments<> random_gaussian(std::mt19937_64& rng, Index m) {
  const mat A = mat::NullaryExpr(m, m, [&] { return std::normal_distribution<real>(0, 0.8)(rng); });
  return normal(gaussian_vec(m, rng), A * A.transpose() + 0.3 * mat::Identity(m, m));
}

mat gaussian_draws(const GaussianMoments<>& g, int n, std::mt19937_64& rng) {
  const mat L = g.covariance.llt().matrixL();
  mat out(g.dim(), n);
  for (int i = 0; i < n; ++i) out.col(i) = g.mean + L * gaussian_vec(g.dim(), rng);
  return out;
}

}  // namespace

TEST_CASE("Gaussian KL closed-form values") {
  const auto p = normal(vec::Zero(1), mat::Identity(1, 1));
  const auto q = normal(vec::Ones(1), mat::Identity(1, 1));
  CHECK(gaussian_kl(p, q) == doctest::Approx(0.5));
  CHECK(std::abs(gaussian_kl(p, p)) < 1e-10);

  const auto a = normal(vec::Zero(2), 2 * mat::Identity(2, 2));
  const auto b = normal(vec::Zero(2), mat::Identity(2, 2));
  CHECK(gaussian_kl(a, b) == doctest::Approx(1 - std::log(2.0)));
  CHECK(gaussian_kl(b, a) == doctest::Approx(std::log(2.0) - 0.5));
  CHECK(gaussian_kl(a, b) != doctest::Approx(gaussian_kl(b, a)));
}

TEST_CASE("Gaussian KL agrees with quadrature") {
  std::mt19937_64 rng(21);
  for (Index m : {1, 2}) {
    for (int t = 0; t < 10; ++t) {
      const auto p = random_gaussian(rng, m), q = random_gaussian(rng, m);
      CHECK(std::abs(gaussian_kl(p, q) - testing_support::quadrature_kl(p, q)) < 1e-6);
      CHECK(std::abs(gaussian_kl(p, p)) < 1e-10);
      CHECK(gaussian_kl(p, q) >= -1e-10);
    }
  }
  CHECK(testing_support::quadrature_kl(normal(vec::Zero(1), mat::Identity(1, 1)),
                                       normal(vec::Ones(1), mat::Identity(1, 1))) == doctest::Approx(0.5));
}

TEST_CASE("Gaussian KL errors") {
  const auto p = normal(vec::Zero(2), mat::Identity(2, 2));
  CHECK_THROWS_AS(gaussian_kl(p, normal(vec::Zero(3), mat::Identity(3, 3))), ConfigError);
  mat bad(2, 2);
  bad << 1, 0, 0, -1;
  CHECK_THROWS_AS(gaussian_kl(p, normal(vec::Zero(2), bad)), NumericalError);
  mat asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(gaussian_kl(p, normal(vec::Zero(2), asym)), NumericalError);
  // singular but PSD: rescued by the default jitter
  mat singular(2, 2);
  singular << 1, 1, 1, 1;
  CHECK(std::isfinite(gaussian_kl(p, normal(vec::Zero(2), singular))));
}

TEST_CASE("moment fitting") {
  SUBCASE("identical draws") {
    const mat draws = vec::Constant(2, 3.0).replicate(1, 5);
    const auto g = fit_moments(draws, 0.01);
    CHECK(g.mean == vec::Constant(2, 3.0));
    CHECK((g.covariance - 0.01 * mat::Identity(2, 2)).norm() < 1e-15);
  }
  SUBCASE("hand example") {
    mat draws(2, 4);
    draws << 0, 2, 0, 2,
             0, 0, 2, 2;
    const auto g = fit_moments(draws, 0.0);
    CHECK(g.mean == vec::Ones(2));
    CHECK((g.covariance - 4.0 / 3.0 * mat::Identity(2, 2)).norm() < 1e-12);
  }
  SUBCASE("large sample") {
    std::mt19937_64 rng(5);
    const auto truth = random_gaussian(rng, 3);
    const auto g = fit_moments(gaussian_draws(truth, 100000, rng));
    CHECK((g.mean - truth.mean).norm() < 0.02 * truth.mean.norm());
    CHECK((g.covariance - truth.covariance).norm() < 0.02 * truth.covariance.norm());
  }
  CHECK_THROWS_AS(fit_moments(mat::Zero(3, 3), 0.0), DataError);
  CHECK_THROWS_AS(fit_moments(mat::Zero(1, 3), -1.0), ConfigError);
}

TEST_CASE("approximate KL between chains") {
  std::mt19937_64 rng(6);
  const auto target = normal(vec::Zero(2), mat::Identity(2, 2));
  SampleChain a, b, c;
  a.draws = gaussian_draws(target, 50000, rng);
  b.draws = gaussian_draws(target, 50000, rng);
  c.draws = gaussian_draws(normal((vec(2) << 1, 0).finished(), mat::Identity(2, 2)), 50000, rng);
  CHECK(approx_kl(a, b) < 0.05 * 2);
  CHECK(approx_kl(a, c) == doctest::Approx(0.5).epsilon(0.05));
  SampleChain d;
  d.draws = mat::Zero(3, 10);
  CHECK_THROWS_AS(approx_kl(a, d), ConfigError);
}

TEST_CASE("KL bound") {
  KlBoundInputs in{1, 1, 1, 100, 0.1};
  CHECK(kl_bound(in) == doctest::Approx(3.0));
  in.delta = 0;
  CHECK(kl_bound(in) == 0.0);
  in.delta = 0.2;
  const real full = kl_bound(in);
  in.delta = 0.1;
  CHECK(kl_bound(in) == doctest::Approx(full / 4));

  const KlBoundInputs base{0.7, 1.3, 0.4, 50, 0.3};
  const real b0 = kl_bound(base);
  auto bumped = [&](auto field) {
    KlBoundInputs x = base;
    x.*field *= 1.1;
    return kl_bound(x);
  };
  CHECK(bumped(&KlBoundInputs::L1) > b0);
  CHECK(bumped(&KlBoundInputs::L2) > b0);
  CHECK(bumped(&KlBoundInputs::N) > b0);
  CHECK(bumped(&KlBoundInputs::delta) > b0);
  CHECK(bumped(&KlBoundInputs::gamma_smooth) < b0);
  CHECK_THROWS_AS(kl_bound({0, 1, 1, 1, 0.1}), ConfigError);
  CHECK_THROWS_AS(kl_bound({1, 1, 1, 1, -0.1}), ConfigError);
}

TEST_CASE("conjugate linear regression posterior") {
  WeightedDataset empty;
  empty.features = mat(2, 0);
  empty.labels = vec(0);
  empty.weights = vec(0);
  const auto prior = analytic_linreg_posterior(empty, 3.0, 1.0);
  CHECK(prior.mean.norm() == 0.0);
  CHECK((prior.covariance - 3.0 * mat::Identity(2, 2)).norm() < 1e-14);

  WeightedDataset one;
  one.features = mat::Ones(1, 1);
  one.labels = vec::Ones(1);
  one.weights = vec::Ones(1);
  const auto post = analytic_linreg_posterior(one, 1.0, 1.0);
  CHECK(post.mean(0) == doctest::Approx(0.5));
  CHECK(post.covariance(0, 0) == doctest::Approx(0.5));

  std::mt19937_64 rng(7);
  WeightedDataset weighted, dup;
  weighted.features = mat::NullaryExpr(3, 4, [&] { return std::normal_distribution<real>()(rng); });
  weighted.labels = gaussian_vec(4, rng);
  weighted.weights = (vec(4) << 1, 3, 2, 1).finished();
  const Index total = 7;
  dup.features.resize(3, total);
  dup.labels.resize(total);
  dup.weights = vec::Ones(total);
  for (Index j = 0, k = 0; j < 4; ++j)
    for (int r = 0; r < weighted.weights(j); ++r, ++k) {
      dup.features.col(k) = weighted.features.col(j);
      dup.labels(k) = weighted.labels(j);
    }
  const auto a = analytic_linreg_posterior(weighted, 2.0, 0.5), b = analytic_linreg_posterior(dup, 2.0, 0.5);
  CHECK((a.mean - b.mean).norm() < 1e-12);
  CHECK((a.covariance - b.covariance).norm() < 1e-12);
  CHECK(((a.covariance - a.covariance.transpose()).cwiseAbs().maxCoeff()) == 0.0);
  CHECK_THROWS_AS(analytic_linreg_posterior(one, 0.0, 1.0), ConfigError);
}

TEST_CASE("bound scaling on a small filament set") {
  const auto data = testing_support::filament_regression(3, 400);
  const LinearModel model{5, 1.0, 1e-6};
  BoundScalingOptions opt;
  opt.trials = 2;
  const auto r = verify_bound_scaling(model, data.ds, {0.4, 0.2, 0.1, 0.05}, opt);
  CHECK(r.points.size() + r.dropped_deltas.size() == 4);
  for (const auto& p : r.points) {
    CHECK(p.kl >= 0);
    CHECK(p.kl <= p.bound);
  }
  CHECK(r.slope > 0);
  CHECK_THROWS_AS(verify_bound_scaling(model, data.ds, {0.4, 0.2}), ConfigError);
  CHECK_THROWS_AS(verify_bound_scaling(model, data.ds, {0.4, 0.3, 0.2}), ConfigError);
}

TEST_CASE("bound constants for the linear model") {
  // One feature, targets independent of it, so data pairs point in every direction of the (x, y / sigma) plane.
  // The data term is -(sigma z_y - b z_x)^2 / (2 gamma); its z-Hessian has norm (b^2 + sigma^2) / gamma.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<real> u(0, 1);
  mat X(1, 200);
  vec y(200);
  for (Index i = 0; i < 200; ++i) {
    X(0, i) = u(rng);
    y(i) = u(rng);
  }
  const Dataset ds = testing_support::make_dataset(X, y, TaskMode::regression);
  const GaussianMoments<> post{vec::Ones(1), 1e-6 * mat::Identity(1, 1)};
  const real gamma = 0.5;
  const auto in = estimate_bound_constants(LinearModel{1, 1.0, gamma}, ds, post, 3);
  CHECK(in.L1 > 0);
  CHECK(in.L2 > 0);
  CHECK(in.N == 200);
  real sigma = 0;
  regression_embedding(ds, sigma);
  const real hessian_norm = (1 + sigma * sigma) / gamma;
  CHECK(1 / in.gamma_smooth <= 1.5 * hessian_norm * 1.01);
  CHECK(1 / in.gamma_smooth >= 1.5 * hessian_norm * 0.97);

  const auto plain = estimate_bound_constants(LinearModel{1, 1.0, gamma}, ds, post, 3, 2000, 32, 1.0);
  CHECK(in.L1 == doctest::Approx(1.5 * plain.L1));
  CHECK(in.L2 == doctest::Approx(1.5 * plain.L2));
  CHECK(in.gamma_smooth == doctest::Approx(plain.gamma_smooth / 1.5));
}
