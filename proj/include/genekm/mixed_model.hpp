#pragma once

#include <array>
#include <memory>
#include <optional>

#include <Eigen/Cholesky>

#include "genekm/error.hpp"
#include "genekm/kernels.hpp"

namespace genekm {

// (sigma^2, tau1^2, tau2^2, tau3^2) of V = sigma^2 I + sum_l tau_l^2 K_l.
struct VarianceComponents {
  double sigma2 = 1.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double tau3 = 0.0;

  std::array<double, 4> as_array() const { return {sigma2, tau1, tau2, tau3}; }
  static VarianceComponents from_array(const std::array<double, 4>& v) { return {v[0], v[1], v[2], v[3]}; }
  double tau(std::size_t l) const { return as_array()[l + 1]; }

  bool operator==(const VarianceComponents&) const = default;
};

// Non-owning view of the (up to three) kernels K1, K2, K3 paired with
// tau1, tau2, tau3. The referenced matrices must outlive the view.
class KernelSet {
 public:
  explicit KernelSet(const Matrix& k1) : kernels_{&k1, nullptr, nullptr}, count_(1) { check(); }
  KernelSet(const Matrix& k1, const Matrix& k2) : kernels_{&k1, &k2, nullptr}, count_(2) { check(); }
  KernelSet(const Matrix& k1, const Matrix& k2, const Matrix& k3) : kernels_{&k1, &k2, &k3}, count_(3) { check(); }

  std::size_t size() const { return count_; }
  Index dim() const { return kernels_[0]->rows(); }
  const Matrix& operator[](std::size_t l) const { return *kernels_[l]; }

 private:
  void check() const;

  std::array<const Matrix*, 3> kernels_;
  std::size_t count_;
};

// Which of (sigma^2, tau1, tau2, tau3) are estimated; the rest are pinned at 0.
using FreeMask = std::array<bool, 4>;
inline constexpr FreeMask kInteractionNull{true, true, true, false};
inline constexpr FreeMask kFullModel{true, true, true, true};

// A fitted (restricted) model together with what is needed to apply V^-1.
struct NullFit {
  VarianceComponents components;
  double mu_hat = 0.0;
  double reml_loglik = 0.0;
  int iterations = 0;
  // Cholesky factor of V; empty when V = sigma^2 I.
  std::shared_ptr<const Eigen::LLT<Matrix>> v_factor;

  Matrix v_inverse(Index n) const;
};

struct BlupEstimates {
  double mu = 0.0;
  Vector m1;
  Vector m2;
  Vector m12;
};

// Solution of the penalized least-squares first-order system.
struct SplineCoefficients {
  double mu = 0.0;
  Vector c1;
  Vector c2;
  Vector c3;
  // Max-norm residual of the solved linear system.
  double residual = 0.0;
};

class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, VarianceComponents last)
      : NumericError(what), last_iterate_(last) {}
  const VarianceComponents& last_iterate() const noexcept { return last_iterate_; }

 private:
  VarianceComponents last_iterate_;
};

struct RemlOptions {
  int max_iterations = 500;
  double rel_loglik_tol = 1e-8;
  double gradient_tol = 1e-6;
  // Components below boundary_snap * var(y) are reported as exactly zero.
  double boundary_snap = 1e-8;
};

// Restricted log-likelihood with additive constants dropped:
//   -1/2 ln|V| - 1/2 ln(1' V^-1 1) - 1/2 (y - mu 1)' V^-1 (y - mu 1),
// with mu profiled out. Components beyond kernels.size() must be zero.
double restricted_loglik(const Vector& y, const KernelSet& kernels, const VarianceComponents& vc);

// Gradient of restricted_loglik with respect to (sigma^2, tau1, tau2, tau3).
// Entries for absent kernels are zero.
std::array<double, 4> reml_score(const Vector& y, const KernelSet& kernels, const VarianceComponents& vc);

// REML estimates over the non-negative orthant of the free components.
NullFit reml_fit(const Vector& y, const KernelSet& kernels, const FreeMask& free_mask,
                 const RemlOptions& options = {});

// Henderson's mixed-model equations for (mu, m1, m2, m12). Components with
// tau = 0 contribute a zero random effect. Singular kernels are ridged by
// 1e-8 tr(K)/n before inversion.
BlupEstimates henderson_blup(const Vector& y, const KernelSet& kernels, const VarianceComponents& vc);

// First-order system of the penalized criterion
//   |y - mu 1 - sum K_l C_l|^2 + sum lambda_l C_l' K_l C_l.
// An infinite lambda removes that term (C_l = 0). Kernels get the same ridge
// as henderson_blup.
SplineCoefficients ss_first_order_solve(const Vector& y, const KernelSet& kernels,
                                        const std::array<double, 3>& lambdas);

// Kernel with the singularity ridge applied, as used by the two solvers above.
Matrix regularized_kernel(const Matrix& k);

}  // namespace genekm
