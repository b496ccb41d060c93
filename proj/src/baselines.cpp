#include "genekm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "genekm/distributions.hpp"
#include "genekm/error.hpp"

namespace genekm {

namespace {

struct OlsFit {
  Index rank = 0;
  double rss = 0.0;
};

OlsFit ols(const Matrix& x, const Vector& y) {
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  qr.setThreshold(1e-10);
  OlsFit fit;
  fit.rank = qr.rank();
  const Vector beta = qr.solve(y);
  fit.rss = (y - x * beta).squaredNorm();
  return fit;
}

Matrix hstack(std::initializer_list<const Matrix*> blocks, Index rows) {
  Index cols = 0;
  for (const auto* b : blocks) cols += b->cols();
  Matrix out(rows, cols);
  Index c = 0;
  for (const auto* b : blocks) {
    out.middleCols(c, b->cols()) = *b;
    c += b->cols();
  }
  return out;
}

void require_non_constant(const Vector& v, const char* what) {
  if (v.size() < 2 || v.maxCoeff() == v.minCoeff()) {
    throw ValidationError(std::string(what) + " is constant");
  }
}

// Shared tail of the three regression baselines: overall test against the
// intercept-only model, interaction test against the main-effects model.
RegressionTestResult run_tests(const Vector& y, const Matrix& main_effects, const Matrix& interactions) {
  const Index n = y.size();
  const Matrix intercept = Matrix::Ones(n, 1);
  const Matrix reduced = hstack({&intercept, &main_effects}, n);
  const Matrix full = hstack({&intercept, &main_effects, &interactions}, n);

  const FTestResult overall = nested_f_test(y, full, intercept);
  const FTestResult inter = nested_f_test(y, full, reduced);

  RegressionTestResult r;
  r.p_overall = overall.p_value;
  r.p_interaction = inter.p_value;
  r.dof_model = overall.rank_full - 1;
  r.dof_residual = n - overall.rank_full;
  if (overall.rank_full < full.cols()) r.flags |= kRankDeficient;
  if (inter.df_numerator == 0) {
    r.flags |= kInteractionAliased;
    r.p_interaction = 1.0;
  }
  return r;
}

}  // namespace

FTestResult nested_f_test(const Vector& y, const Matrix& full, const Matrix& reduced) {
  const Index n = y.size();
  if (full.rows() != n || reduced.rows() != n) throw ValidationError("design rows do not match the trait length");
  const OlsFit f = ols(full, y);
  const OlsFit r = ols(reduced, y);

  FTestResult out;
  out.rank_full = f.rank;
  out.df_numerator = f.rank - r.rank;
  out.df_denominator = n - f.rank;
  if (out.df_denominator < 1) throw ValidationError("no residual degrees of freedom left for the F test");
  if (out.df_numerator <= 0) {
    out.df_numerator = 0;
    return out;
  }
  const double gain = std::max(r.rss - f.rss, 0.0);
  if (f.rss <= 0.0) {
    out.f = gain > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    out.p_value = gain > 0.0 ? 0.0 : 1.0;
    return out;
  }
  const auto df1 = static_cast<double>(out.df_numerator);
  const auto df2 = static_cast<double>(out.df_denominator);
  out.f = (gain / df1) / (f.rss / df2);
  out.p_value = f_sf(out.f, df1, df2);
  return out;
}

RegressionTestResult single_snp_test(const Vector& y, const Vector& s1, const Vector& s2) {
  if (s1.size() != y.size() || s2.size() != y.size()) throw ValidationError("SNP length does not match the trait");
  require_non_constant(s1, "first SNP");
  require_non_constant(s2, "second SNP");
  Matrix main(y.size(), 2);
  main << s1, s2;
  const Matrix inter = s1.cwiseProduct(s2);
  return run_tests(y, main, inter);
}

PrincipalComponents gene_pcs(const GenotypeMatrix& genotypes, double var_threshold) {
  if (!(var_threshold > 0.0 && var_threshold <= 1.0)) throw ValidationError("variance threshold must lie in (0, 1]");
  Matrix g = genotypes.as_real();
  g.rowwise() -= g.colwise().mean();
  if (g.cwiseAbs().maxCoeff() == 0.0) throw ValidationError("gene has no genotype variation");

  const Eigen::BDCSVD<Matrix> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = static_cast<double>(std::max(g.rows(), g.cols())) * 1e-12 * sv[0];
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > tol) ++rank;

  PrincipalComponents pcs;
  pcs.rank = rank;
  pcs.energy = sv.head(rank).array().square();
  const double total = pcs.energy.sum();
  Index keep = 0;
  double cumulative = 0.0;
  while (keep < rank) {
    cumulative += pcs.energy[keep++];
    if (cumulative >= var_threshold * total * (1.0 - 1e-12)) break;
  }

  pcs.loadings = svd.matrixV().leftCols(keep);
  for (Index c = 0; c < keep; ++c) {
    Index arg = 0;
    pcs.loadings.col(c).cwiseAbs().maxCoeff(&arg);
    if (pcs.loadings(arg, c) < 0.0) pcs.loadings.col(c) *= -1.0;
  }
  pcs.scores = g * pcs.loadings;
  return pcs;
}

RegressionTestResult ppca_test(const Vector& y, const GenotypeMatrix& g1, const GenotypeMatrix& g2) {
  if (g1.n_individuals() != y.size() || g2.n_individuals() != y.size())
    throw ValidationError("genotype rows do not match the trait length");
  const PrincipalComponents pc1 = gene_pcs(g1, 1.0);
  const PrincipalComponents pc2 = gene_pcs(g2, 1.0);
  const Matrix a = g1.as_real();
  const Matrix b = g2.as_real();
  const Matrix main = hstack({&a, &b}, y.size());
  const Matrix inter = pc1.scores.col(0).cwiseProduct(pc2.scores.col(0));
  return run_tests(y, main, inter);
}

RegressionTestResult fpca_test(const Vector& y, const GenotypeMatrix& g1, const GenotypeMatrix& g2,
                               double var_threshold) {
  if (g1.n_individuals() != y.size() || g2.n_individuals() != y.size())
    throw ValidationError("genotype rows do not match the trait length");
  const PrincipalComponents pc1 = gene_pcs(g1, var_threshold);
  const PrincipalComponents pc2 = gene_pcs(g2, var_threshold);
  const Index p1 = pc1.scores.cols();
  const Index p2 = pc2.scores.cols();
  const Index n = y.size();
  if (1 + p1 + p2 + p1 * p2 >= n) {
    throw ValidationError("fPCA model leaves no residual degrees of freedom; lower the variance threshold");
  }
  const Matrix main = hstack({&pc1.scores, &pc2.scores}, n);
  Matrix inter(n, p1 * p2);
  for (Index i = 0; i < p1; ++i) {
    for (Index j = 0; j < p2; ++j) inter.col(i * p2 + j) = pc1.scores.col(i).cwiseProduct(pc2.scores.col(j));
  }
  return run_tests(y, main, inter);
}

}  // namespace genekm
