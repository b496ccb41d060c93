#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace genekm {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense n x n similarity matrix. Symmetric, PSD, unit diagonal for AM kernels.
using KernelMatrix = Eigen::MatrixXd;

using GenotypeCodes = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// n individuals x L SNPs of additive allele counts in {0,1,2}.
class GenotypeMatrix {
 public:
  GenotypeMatrix(GenotypeCodes values, std::vector<std::string> snp_ids,
                 std::vector<std::string> individual_ids);

  // Rows of integer codes; identifiers are generated as snp1.. and ind1..
  static GenotypeMatrix from_rows(const std::vector<std::vector<int>>& rows);

  Index n_individuals() const { return values_.rows(); }
  Index n_snps() const { return values_.cols(); }
  int code(Index individual, Index snp) const { return values_(individual, snp); }

  const GenotypeCodes& values() const { return values_; }
  const std::vector<std::string>& snp_ids() const { return snp_ids_; }
  const std::vector<std::string>& individual_ids() const { return individual_ids_; }

  GenotypeMatrix select_snps(std::span<const Index> columns) const;
  Matrix as_real() const { return values_.cast<double>(); }

 private:
  GenotypeCodes values_;
  std::vector<std::string> snp_ids_;
  std::vector<std::string> individual_ids_;
};

// Non-negative per-SNP weights with at least one positive entry.
class WeightVector {
 public:
  explicit WeightVector(Vector weights);

  Index size() const { return weights_.size(); }
  double operator[](Index s) const { return weights_[s]; }
  const Vector& values() const { return weights_; }

 private:
  Vector weights_;
};

// Number of identical-by-state allele pairs among the four cross comparisons
// of two genotypes. Throws ValidationError for codes outside {0,1,2}.
int am_score(int code_a, int code_b);

// Allele-matching kernel over all SNPs of `genotypes`:
//   K[i][j] = sum_s w_s AM(g_is, g_js) / (4 sum_s w_s),  K[i][i] = 1.
KernelMatrix gene_kernel(const GenotypeMatrix& genotypes,
                         const std::optional<WeightVector>& weights = std::nullopt);

// Elementwise (Schur) product of two kernels.
KernelMatrix interaction_kernel(const KernelMatrix& k1, const KernelMatrix& k2);

// w_s = 1 / MAF_s with MAF estimated from the sample. Monomorphic SNPs throw.
WeightVector inverse_maf_weights(const GenotypeMatrix& genotypes);

}  // namespace genekm
