#include "genekm/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace genekm {

void KernelSet::check() const {
  const Index n = kernels_[0]->rows();
  for (std::size_t l = 0; l < count_; ++l) {
    if (kernels_[l]->rows() != n || kernels_[l]->cols() != n) {
      throw ValidationError("kernel matrices must all be square with the same dimension");
    }
  }
}

Matrix NullFit::v_inverse(Index n) const {
  if (v_factor) return v_factor->solve(Matrix::Identity(n, n));
  return Matrix::Identity(n, n) / components.sigma2;
}

namespace {

using Beta = std::array<double, 4>;

void check_inputs(const Vector& y, const KernelSet& kernels, const Beta& beta) {
  if (y.size() != kernels.dim()) throw ValidationError("trait length does not match kernel dimension");
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(beta[i] >= 0.0) || !std::isfinite(beta[i])) {
      throw ValidationError("variance components must be finite and non-negative");
    }
    if (i > kernels.size() && beta[i] != 0.0) {
      throw ValidationError("non-zero variance component for an absent kernel");
    }
  }
}

double sample_variance(const Vector& y) {
  const double mean = y.mean();
  return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

// Evaluates the restricted likelihood and, on request, its gradient and the
// average-information matrix at one point of the parameter space.
class RemlEvaluator {
 public:
  struct Point {
    double loglik = 0.0;
    double mu = 0.0;
    Beta gradient{};
    Eigen::Matrix4d average_info = Eigen::Matrix4d::Zero();
  };

  RemlEvaluator(const Vector& y, const KernelSet& kernels) : y_(y), kernels_(kernels), n_(y.size()) {}

  Matrix covariance(const Beta& beta) const {
    Matrix v = Matrix::Identity(n_, n_) * beta[0];
    for (std::size_t l = 0; l < kernels_.size(); ++l) {
      if (beta[l + 1] != 0.0) v.noalias() += beta[l + 1] * kernels_[l];
    }
    return v;
  }

  // Empty when V is not numerically positive definite.
  std::optional<Point> evaluate(const Beta& beta, bool derivatives) const {
    const Eigen::LLT<Matrix> llt(covariance(beta));
    if (llt.info() != Eigen::Success) return std::nullopt;
    const auto& l = llt.matrixLLT();
    double logdet = 0.0;
    for (Index i = 0; i < n_; ++i) logdet += std::log(l(i, i));
    logdet *= 2.0;

    Point pt;
    const Vector ones = Vector::Ones(n_);
    const Vector vinv_one = llt.solve(ones);
    const Vector vinv_y = llt.solve(y_);
    const double s = vinv_one.sum();
    pt.mu = vinv_y.sum() / s;
    const double quad = y_.dot(vinv_y) - pt.mu * pt.mu * s;
    pt.loglik = -0.5 * logdet - 0.5 * std::log(s) - 0.5 * quad;
    if (!std::isfinite(pt.loglik)) return std::nullopt;
    if (!derivatives) return pt;

    Matrix p = llt.solve(Matrix::Identity(n_, n_));
    p.noalias() -= (vinv_one / s) * vinv_one.transpose();
    const Vector py = vinv_y - pt.mu * vinv_one;

    // Derivative directions V_i = dV/dbeta_i applied to P y.
    const std::size_t m = kernels_.size() + 1;
    Matrix u(n_, m);
    u.col(0) = py;
    pt.gradient[0] = -0.5 * p.trace() + 0.5 * py.squaredNorm();
    for (std::size_t k = 0; k < kernels_.size(); ++k) {
      u.col(k + 1).noalias() = kernels_[k] * py;
      pt.gradient[k + 1] = -0.5 * p.cwiseProduct(kernels_[k]).sum() + 0.5 * py.dot(u.col(k + 1));
    }
    const Matrix pu = p * u;
    const Matrix ai = 0.5 * u.transpose() * pu;
    pt.average_info.topLeftCorner(m, m) = ai;
    return pt;
  }

 private:
  const Vector& y_;
  const KernelSet& kernels_;
  Index n_;
};

}  // namespace

double restricted_loglik(const Vector& y, const KernelSet& kernels, const VarianceComponents& vc) {
  const Beta beta = vc.as_array();
  check_inputs(y, kernels, beta);
  const auto pt = RemlEvaluator(y, kernels).evaluate(beta, false);
  if (!pt) throw NumericError("restricted_loglik: covariance matrix is not positive definite");
  return pt->loglik;
}

std::array<double, 4> reml_score(const Vector& y, const KernelSet& kernels, const VarianceComponents& vc) {
  const Beta beta = vc.as_array();
  check_inputs(y, kernels, beta);
  const auto pt = RemlEvaluator(y, kernels).evaluate(beta, true);
  if (!pt) throw NumericError("reml_score: covariance matrix is not positive definite");
  return pt->gradient;
}

NullFit reml_fit(const Vector& y, const KernelSet& kernels, const FreeMask& free_mask, const RemlOptions& options) {
  if (y.size() != kernels.dim()) throw ValidationError("trait length does not match kernel dimension");
  if (!free_mask[0]) throw ValidationError("reml_fit: sigma^2 must be free");
  for (std::size_t i = kernels.size() + 1; i < 4; ++i) {
    if (free_mask[i]) throw ValidationError("reml_fit: free component without a kernel");
  }
  if (y.size() < 3) throw ValidationError("reml_fit: need at least 3 observations");
  const double var_y = sample_variance(y);
  if (!(var_y > 0.0)) throw DegenerateTraitError();

  const RemlEvaluator eval(y, kernels);
  const double floor = options.boundary_snap * var_y;

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < 4; ++i) {
    if (free_mask[i]) active.push_back(i);
  }
  Beta beta{};
  beta[0] = var_y / 2.0;
  const double n_tau = static_cast<double>(active.size() - 1);
  for (std::size_t i = 1; i < 4; ++i) beta[i] = free_mask[i] ? var_y / (2.0 * n_tau) : 0.0;

  auto current = eval.evaluate(beta, true);
  if (!current) throw NumericError("reml_fit: initial covariance is not positive definite");

  int reactivations = 0;
  int iter = 0;
  for (;; ++iter) {
    if (iter >= options.max_iterations) {
      throw ConvergenceError("reml_fit: no convergence after " + std::to_string(options.max_iterations) +
                                 " iterations",
                             VarianceComponents::from_array(beta));
    }

    // Ascent on zeta = log(beta) over the active set.
    const auto m = static_cast<Index>(active.size());
    Vector g(m);
    Matrix h(m, m);
    for (Index a = 0; a < m; ++a) {
      g[a] = beta[active[a]] * current->gradient[active[a]];
      for (Index b = 0; b < m; ++b) {
        h(a, b) = beta[active[a]] * beta[active[b]] * current->average_info(active[a], active[b]);
      }
    }

    bool converged = g.cwiseAbs().maxCoeff() < options.gradient_tol;
    double decrement = 0.0;
    if (!converged) {
      Eigen::LDLT<Matrix> ldlt(h);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
        h.diagonal().array() += 1e-8 * std::max(h.trace(), 1e-300) + 1e-12;
        ldlt.compute(h);
      }
      Vector step = ldlt.solve(g);
      if (!step.allFinite() || step.dot(g) <= 0.0) step = g / std::max(h.diagonal().maxCoeff(), 1e-12);
      decrement = step.dot(g);
      const double largest = step.cwiseAbs().maxCoeff();
      if (largest > 3.0) step *= 3.0 / largest;

      std::optional<RemlEvaluator::Point> next;
      Beta trial = beta;
      double t = 1.0;
      for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
        trial = beta;
        for (Index a = 0; a < m; ++a) trial[active[a]] = beta[active[a]] * std::exp(t * step[a]);
        const auto cand = eval.evaluate(trial, false);
        if (cand && cand->loglik >= current->loglik) {
          next = cand;
          break;
        }
      }

      if (!next) {
        // No ascent available at machine precision.
        converged = true;
      } else {
        const double previous = current->loglik;
        beta = trial;
        for (std::size_t a = active.size(); a-- > 1;) {
          if (beta[active[a]] < floor) {
            beta[active[a]] = 0.0;
            active.erase(active.begin() + static_cast<std::ptrdiff_t>(a));
          }
        }
        current = eval.evaluate(beta, true);
        if (!current) throw NumericError("reml_fit: covariance lost positive definiteness");
        const double change = std::abs(current->loglik - previous);
        const double tol = options.rel_loglik_tol * std::max(1.0, std::abs(current->loglik));
        converged = change < tol && decrement < options.gradient_tol * options.gradient_tol;
      }
    }

    if (converged) {
      // Re-free pinned components whose boundary derivative points inward.
      bool reactivated = false;
      if (reactivations < 3) {
        for (std::size_t i = 1; i < 4; ++i) {
          const bool pinned = free_mask[i] && beta[i] == 0.0;
          if (pinned && current->gradient[i] * var_y > 1e-4) {
            beta[i] = 1e-3 * var_y;
            active.push_back(i);
            reactivated = true;
          }
        }
      }
      if (!reactivated) break;
      ++reactivations;
      std::sort(active.begin(), active.end());
      current = eval.evaluate(beta, true);
      if (!current) throw NumericError("reml_fit: covariance lost positive definiteness");
    }
  }

  for (std::size_t i = 1; i < 4; ++i) {
    if (beta[i] < floor) beta[i] = 0.0;
  }

  NullFit fit;
  fit.components = VarianceComponents::from_array(beta);
  fit.iterations = iter;
  const auto final_point = eval.evaluate(beta, false);
  if (!final_point) throw NumericError("reml_fit: covariance at the estimate is not positive definite");
  fit.reml_loglik = final_point->loglik;
  fit.mu_hat = final_point->mu;
  if (beta[1] != 0.0 || beta[2] != 0.0 || beta[3] != 0.0) {
    auto llt = std::make_shared<Eigen::LLT<Matrix>>(eval.covariance(beta));
    if (llt->info() != Eigen::Success) throw NumericError("reml_fit: covariance factorization failed");
    fit.v_factor = std::move(llt);
  }
  return fit;
}

Matrix regularized_kernel(const Matrix& k) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(k, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (eig.eigenvalues().minCoeff() > 1e-10 * largest) return k;
  const double ridge = 1e-8 * k.trace() / static_cast<double>(k.rows());
  Matrix out = k;
  out.diagonal().array() += ridge;
  return out;
}

namespace {

Matrix kernel_inverse(const Matrix& k) {
  const Eigen::LLT<Matrix> llt(regularized_kernel(k));
  if (llt.info() != Eigen::Success) throw NumericError("kernel is singular after regularization");
  return llt.solve(Matrix::Identity(k.rows(), k.cols()));
}

}  // namespace

BlupEstimates henderson_blup(const Vector& y, const KernelSet& kernels, const VarianceComponents& vc) {
  const Beta beta = vc.as_array();
  check_inputs(y, kernels, beta);
  if (!(vc.sigma2 > 0.0)) throw ValidationError("henderson_blup: sigma^2 must be positive");
  const Index n = y.size();

  std::vector<std::size_t> active;
  for (std::size_t l = 0; l < kernels.size(); ++l) {
    if (beta[l + 1] > 0.0) active.push_back(l);
  }
  const auto m = static_cast<Index>(active.size());
  Matrix a = Matrix::Zero(1 + n * m, 1 + n * m);
  Vector rhs(1 + n * m);
  a(0, 0) = static_cast<double>(n);
  rhs[0] = y.sum();
  for (Index bi = 0; bi < m; ++bi) {
    const Index r = 1 + bi * n;
    a.block(0, r, 1, n).setOnes();
    a.block(r, 0, n, 1).setOnes();
    rhs.segment(r, n) = y;
    for (Index bj = 0; bj < m; ++bj) a.block(r, 1 + bj * n, n, n).setIdentity();
    const std::size_t l = active[bi];
    a.block(r, r, n, n) += (vc.sigma2 / beta[l + 1]) * kernel_inverse(kernels[l]);
  }

  const Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw NumericError("henderson_blup: singular mixed-model equations");
  const Vector x = lu.solve(rhs);

  BlupEstimates out;
  out.mu = x[0];
  std::array<Vector*, 3> targets{&out.m1, &out.m2, &out.m12};
  for (auto* t : targets) *t = Vector::Zero(n);
  for (Index bi = 0; bi < m; ++bi) *targets[active[bi]] = x.segment(1 + bi * n, n);
  return out;
}

SplineCoefficients ss_first_order_solve(const Vector& y, const KernelSet& kernels,
                                        const std::array<double, 3>& lambdas) {
  if (y.size() != kernels.dim()) throw ValidationError("trait length does not match kernel dimension");
  const Index n = y.size();

  std::vector<std::size_t> active;
  std::vector<Matrix> reg;
  for (std::size_t l = 0; l < kernels.size(); ++l) {
    if (std::isnan(lambdas[l]) || lambdas[l] < 0.0) throw ValidationError("tuning parameters must be >= 0");
    if (std::isinf(lambdas[l])) continue;
    active.push_back(l);
    reg.push_back(regularized_kernel(kernels[l]));
  }

  const auto m = static_cast<Index>(active.size());
  Matrix a(1 + n * m, 1 + n * m);
  Vector rhs(1 + n * m);
  a(0, 0) = static_cast<double>(n);
  rhs[0] = y.sum();
  for (Index bi = 0; bi < m; ++bi) {
    const Index r = 1 + bi * n;
    const Matrix& ki = reg[bi];
    a.block(0, r, 1, n) = ki.colwise().sum();
    a.block(r, 0, n, 1) = ki.transpose().rowwise().sum();
    rhs.segment(r, n).noalias() = ki.transpose() * y;
    for (Index bj = 0; bj < m; ++bj) a.block(r, 1 + bj * n, n, n).noalias() = ki.transpose() * reg[bj];
    a.block(r, r, n, n) += lambdas[active[bi]] * ki;
  }

  const Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw NumericError("ss_first_order_solve: singular first-order system");
  const Vector x = lu.solve(rhs);

  SplineCoefficients out;
  out.mu = x[0];
  out.residual = (a * x - rhs).cwiseAbs().maxCoeff();
  std::array<Vector*, 3> targets{&out.c1, &out.c2, &out.c3};
  for (auto* t : targets) *t = Vector::Zero(n);
  for (Index bi = 0; bi < m; ++bi) *targets[active[bi]] = x.segment(1 + bi * n, n);
  return out;
}

}  // namespace genekm
