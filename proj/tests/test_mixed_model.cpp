#include <doctest.h>

#include <random>

#include "genekm/error.hpp"
#include "genekm/mixed_model.hpp"
#include "oracles.hpp"

using namespace genekm;

namespace {

VarianceComponents random_components(std::mt19937_64& rng, std::size_t kernels) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  VarianceComponents vc{u(rng), 0, 0, 0};
  if (kernels > 0) vc.tau1 = u(rng);
  if (kernels > 1) vc.tau2 = u(rng);
  if (kernels > 2) vc.tau3 = u(rng);
  return vc;
}

}  // namespace

TEST_SUITE("mixed_model") {
  TEST_CASE("restricted likelihood matches the explicit-inverse formula") {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 100; ++rep) {
      const Index n = 4 + rep % 12;
      const Matrix k1 = oracle::random_psd(n, rng, 3), k2 = oracle::random_psd(n, rng, 2),
                   k3 = oracle::random_psd(n, rng);
      const Vector y = oracle::random_vector(n, rng, 2.0);
      const VarianceComponents vc = random_components(rng, 3);
      const double expected = oracle::reml_loglik(y, oracle::covariance({&k1, &k2, &k3}, vc.as_array(), n));
      CHECK(restricted_loglik(y, KernelSet(k1, k2, k3), vc) == doctest::Approx(expected).epsilon(1e-9));
    }
  }

  TEST_CASE("restricted likelihood hand values") {
    const Matrix zero = Matrix::Zero(2, 2);
    CHECK(restricted_loglik(Vector::Zero(2), KernelSet(zero), {1, 0, 0, 0}) ==
          doctest::Approx(-0.5 * std::log(2.0)));

    std::mt19937_64 rng(2);
    const Matrix k = oracle::random_psd(6, rng);
    const VarianceComponents vc{0.7, 1.3, 0, 0};
    const double at_zero = restricted_loglik(Vector::Zero(6), KernelSet(k), vc);
    CHECK(restricted_loglik(Vector::Constant(6, 4.2), KernelSet(k), vc) == doctest::Approx(at_zero));

    // V -> cV: ln|V| gains n ln c, ln(1'V^-1 1) loses ln c, the quadratic form scales by 1/c.
    const Vector y = oracle::random_vector(6, rng);
    const Matrix v = oracle::covariance({&k}, vc.as_array(), 6);
    const Matrix p = oracle::projector(v);
    const double c = 3.0;
    const double base = restricted_loglik(y, KernelSet(k), vc);
    const double scaled = restricted_loglik(y, KernelSet(k), {c * vc.sigma2, c * vc.tau1, 0, 0});
    const double predicted = base - 0.5 * 6 * std::log(c) + 0.5 * std::log(c) + 0.5 * y.dot(p * y) * (1 - 1 / c);
    CHECK(scaled == doctest::Approx(predicted).epsilon(1e-10));
  }

  TEST_CASE("score matches central finite differences") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 100; ++rep) {
      const Index n = 5 + rep % 10;
      const Matrix k1 = oracle::random_psd(n, rng, 2), k2 = oracle::random_psd(n, rng, 3),
                   k3 = oracle::random_psd(n, rng, 4);
      const KernelSet ks(k1, k2, k3);
      const Vector y = oracle::random_vector(n, rng);
      const VarianceComponents vc = random_components(rng, 3);
      const auto grad = reml_score(y, ks, vc);
      for (std::size_t i = 0; i < 4; ++i) {
        auto plus = vc.as_array(), minus = vc.as_array();
        const double h = 1e-5;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (restricted_loglik(y, ks, VarianceComponents::from_array(plus)) -
                           restricted_loglik(y, ks, VarianceComponents::from_array(minus))) /
                          (2 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-3));
      }
    }
  }

  TEST_CASE("zero kernels leave only the residual score") {
    const Matrix zero = Matrix::Zero(5, 5);
    std::mt19937_64 rng(4);
    const auto g = reml_score(oracle::random_vector(5, rng), KernelSet(zero, zero, zero), {1.2, 0.5, 0.5, 0.5});
    CHECK(g[0] != 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == 0.0);
  }

  TEST_CASE("input validation") {
    const Matrix k = Matrix::Identity(3, 3);
    CHECK_THROWS_AS(restricted_loglik(Vector::Zero(4), KernelSet(k), {1, 0, 0, 0}), ValidationError);
    CHECK_THROWS_AS(restricted_loglik(Vector::Zero(3), KernelSet(k), {1, -1, 0, 0}), ValidationError);
    CHECK_THROWS_AS(restricted_loglik(Vector::Zero(3), KernelSet(k), {1, 0, 1, 0}), ValidationError);
    CHECK_THROWS_AS(KernelSet(k, Matrix::Identity(2, 2)), ValidationError);
    CHECK_THROWS_AS(reml_fit(Vector::Ones(3), KernelSet(k), {true, true, false, false}), DegenerateTraitError);
  }

  TEST_CASE("REML fit satisfies the optimality conditions") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 100; ++rep) {
      const Index n = 30;
      const Matrix k1 = oracle::random_psd(n, rng, 4, 0.1), k2 = oracle::random_psd(n, rng, 6, 0.1);
      const VarianceComponents truth{0.5, rep % 3 == 0 ? 0.0 : 1.0, 0.8, 0.0};
      const Matrix v = oracle::covariance({&k1, &k2}, truth.as_array(), n);
      const Vector y = Eigen::LLT<Matrix>(v).matrixL() * oracle::random_vector(n, rng);
      const KernelSet ks(k1, k2);
      const NullFit fit = reml_fit(y, ks, {true, true, true, false});
      const auto g = reml_score(y, ks, fit.components);
      const auto c = fit.components.as_array();
      const double scale = y.squaredNorm() / n;
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(c[i] >= 0.0);
        if (c[i] > 0.0) {
          CHECK(std::abs(g[i] * c[i]) < 1e-5);
        } else {
          CHECK(g[i] * scale <= 1e-3);
        }
      }
      CHECK(fit.reml_loglik >= restricted_loglik(y, ks, truth) - 1e-9);
      CHECK(fit.reml_loglik == doctest::Approx(restricted_loglik(y, ks, fit.components)));
      // Local optimality against small feasible perturbations.
      for (std::size_t i = 0; i < 3; ++i) {
        for (double d : {-1e-3, 1e-3}) {
          auto p = c;
          p[i] = std::max(0.0, p[i] + d);
          if (i == 0 && p[0] == 0.0) continue;
          CHECK(restricted_loglik(y, ks, VarianceComponents::from_array(p)) <= fit.reml_loglik + 1e-9);
        }
      }
    }
  }

  TEST_CASE("REML fit keeps masked components at zero and returns V^-1") {
    std::mt19937_64 rng(6);
    const Index n = 20;
    const Matrix k1 = oracle::random_psd(n, rng), k2 = oracle::random_psd(n, rng), k3 = oracle::random_psd(n, rng);
    const Vector y = oracle::random_vector(n, rng);
    const NullFit fit = reml_fit(y, KernelSet(k1, k2, k3), kInteractionNull);
    CHECK(fit.components.tau3 == 0.0);
    const Matrix v = oracle::covariance({&k1, &k2, &k3}, fit.components.as_array(), n);
    CHECK((fit.v_inverse(n) * v - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("iteration cap raises a convergence error carrying the last iterate") {
    std::mt19937_64 rng(7);
    const Index n = 15;
    const Matrix k1 = oracle::random_psd(n, rng);
    const Vector y = k1 * oracle::random_vector(n, rng) + oracle::random_vector(n, rng, 0.3);
    RemlOptions opts;
    opts.max_iterations = 1;
    opts.gradient_tol = 1e-300;
    opts.rel_loglik_tol = 0.0;
    try {
      reml_fit(y, KernelSet(k1), {true, true, false, false}, opts);
      FAIL("expected a convergence error");
    } catch (const ConvergenceError& e) {
      CHECK(e.last_iterate().sigma2 > 0.0);
    }
  }

  TEST_CASE("BLUP agrees with the GLS closed form") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 100; ++rep) {
      const Index n = 6 + rep % 10;
      const Matrix k1 = oracle::random_psd(n, rng, -1, 0.2), k2 = oracle::random_psd(n, rng, -1, 0.2),
                   k3 = oracle::random_psd(n, rng, -1, 0.2);
      const VarianceComponents vc = random_components(rng, 3);
      const Vector y = oracle::random_vector(n, rng);
      const Matrix v = oracle::covariance({&k1, &k2, &k3}, vc.as_array(), n);
      const Matrix vi = v.inverse();
      const Vector one = Vector::Ones(n);
      const double mu = one.dot(vi * y) / one.dot(vi * one);
      const Vector r = vi * (y - mu * one);
      const BlupEstimates b = henderson_blup(y, KernelSet(k1, k2, k3), vc);
      CHECK(b.mu == doctest::Approx(mu).epsilon(1e-8));
      CHECK((b.m1 - vc.tau1 * k1 * r).norm() < 1e-8 * (1 + b.m1.norm()));
      CHECK((b.m2 - vc.tau2 * k2 * r).norm() < 1e-8 * (1 + b.m2.norm()));
      CHECK((b.m12 - vc.tau3 * k3 * r).norm() < 1e-8 * (1 + b.m12.norm()));
    }
  }

  TEST_CASE("BLUP of a constant trait") {
    std::mt19937_64 rng(9);
    const Matrix k1 = oracle::random_psd(8, rng, -1, 0.1), k2 = oracle::random_psd(8, rng, -1, 0.1);
    const BlupEstimates b = henderson_blup(Vector::Constant(8, 2.5), KernelSet(k1, k2), {1, 0.5, 0.5, 0});
    CHECK(b.mu == doctest::Approx(2.5));
    CHECK(b.m1.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(b.m2.cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("residual shrinks as the random-effect variances grow") {
    std::mt19937_64 rng(10);
    const Index n = 12;
    const Matrix k1 = oracle::random_psd(n, rng, -1, 0.1), k2 = oracle::random_psd(n, rng, -1, 0.1);
    const Vector y = oracle::random_vector(n, rng);
    double previous = std::numeric_limits<double>::infinity();
    for (double tau : {0.01, 0.1, 1.0, 10.0, 100.0}) {
      const BlupEstimates b = henderson_blup(y, KernelSet(k1, k2), {1, tau, tau, 0});
      const double res = (y.array() - b.mu - b.m1.array() - b.m2.array()).matrix().norm();
      CHECK(res < previous);
      previous = res;
    }
  }

  TEST_CASE("spline system with dominant penalties and its residual") {
    std::mt19937_64 rng(11);
    const Index n = 10;
    const Matrix k1 = oracle::random_psd(n, rng, -1, 0.1), k2 = oracle::random_psd(n, rng, -1, 0.1),
                 k3 = oracle::random_psd(n, rng, -1, 0.1);
    const Vector y = oracle::random_vector(n, rng);
    const SplineCoefficients big = ss_first_order_solve(y, KernelSet(k1, k2, k3), {1e8, 1e8, 1e8});
    CHECK(big.mu == doctest::Approx(y.mean()).epsilon(1e-6));
    CHECK(big.c1.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(big.c3.cwiseAbs().maxCoeff() < 1e-6);
    const SplineCoefficients s = ss_first_order_solve(y, KernelSet(k1, k2, k3), {0.5, 2.0, 1.0});
    CHECK(s.residual < 1e-8);
    const double inf = std::numeric_limits<double>::infinity();
    const SplineCoefficients off = ss_first_order_solve(y, KernelSet(k1, k2, k3), {0.5, 2.0, inf});
    CHECK(off.c3.isZero());
  }

  TEST_CASE("singular kernels are ridged") {
    std::mt19937_64 rng(12);
    const Matrix k = oracle::random_psd(8, rng, 2);
    const Matrix r = regularized_kernel(k);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(r).eigenvalues().minCoeff() > 0.0);
    CHECK((r - k).cwiseAbs().maxCoeff() < 1e-6);
    const Matrix full = oracle::random_psd(8, rng, -1, 1.0);
    CHECK(regularized_kernel(full) == full);
  }
}
