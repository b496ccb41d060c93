#pragma once

#include <cstdint>

#include "genekm/kernels.hpp"

namespace genekm {

enum RegressionFlag : std::uint32_t {
  kRegressionOk = 0,
  // Some design columns were aliased and dropped from the fit.
  kRankDeficient = 1u << 0,
  // The interaction terms add no rank beyond the main effects; p_interaction = 1.
  kInteractionAliased = 1u << 1,
};

struct RegressionTestResult {
  double p_overall = 1.0;
  double p_interaction = 1.0;
  Index dof_model = 0;
  Index dof_residual = 0;
  std::uint32_t flags = kRegressionOk;
};

// Nested-model F test: `full` must contain every column of `reduced`.
// Both designs include their own intercept column if wanted.
struct FTestResult {
  double f = 0.0;
  double p_value = 1.0;
  Index df_numerator = 0;
  Index df_denominator = 0;
  Index rank_full = 0;
};
FTestResult nested_f_test(const Vector& y, const Matrix& full, const Matrix& reduced);

// OLS of y on 1, s1, s2, s1*s2 with F tests of (b1, b2, b12) = 0 and b12 = 0.
RegressionTestResult single_snp_test(const Vector& y, const Vector& s1, const Vector& s2);

struct PrincipalComponents {
  // n x P score columns (centered genotype matrix times loadings).
  Matrix scores;
  // P loading vectors, largest-magnitude entry positive.
  Matrix loadings;
  // Squared singular values of all rank-many components.
  Vector energy;
  Index rank = 0;
};

// Leading principal components of the column-centered genotypes explaining at
// least `var_threshold` of the total sum of squares (at least one).
PrincipalComponents gene_pcs(const GenotypeMatrix& genotypes, double var_threshold);

// All SNP main effects of both genes plus the product of their first PCs.
RegressionTestResult ppca_test(const Vector& y, const GenotypeMatrix& g1, const GenotypeMatrix& g2);

// PC main effects of both genes plus every pairwise PC product.
RegressionTestResult fpca_test(const Vector& y, const GenotypeMatrix& g1, const GenotypeMatrix& g2,
                               double var_threshold = 0.85);

}  // namespace genekm
