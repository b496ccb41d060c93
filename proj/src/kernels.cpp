#include "genekm/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_set>

#include "genekm/error.hpp"

namespace genekm {

namespace {

void check_code(int code) {
  if (code < 0 || code > 2) {
    throw ValidationError("invalid genotype code " + std::to_string(code) + " (expected 0, 1 or 2)");
  }
}

}  // namespace

GenotypeMatrix::GenotypeMatrix(GenotypeCodes values, std::vector<std::string> snp_ids,
                               std::vector<std::string> individual_ids)
    : values_(std::move(values)), snp_ids_(std::move(snp_ids)), individual_ids_(std::move(individual_ids)) {
  if (values_.rows() < 2) throw ValidationError("genotype matrix needs at least 2 individuals");
  if (values_.cols() < 1) throw ValidationError("genotype matrix needs at least 1 SNP");
  if (static_cast<Index>(snp_ids_.size()) != values_.cols())
    throw ValidationError("number of SNP ids does not match genotype columns");
  if (static_cast<Index>(individual_ids_.size()) != values_.rows())
    throw ValidationError("number of individual ids does not match genotype rows");

  std::unordered_set<std::string> seen;
  for (const auto& id : snp_ids_) {
    if (!seen.insert(id).second) throw ValidationError("duplicate SNP id '" + id + "'");
  }
  for (Index j = 0; j < values_.cols(); ++j) {
    for (Index i = 0; i < values_.rows(); ++i) {
      if (values_(i, j) > 2) {
        throw ValidationError("invalid genotype code " + std::to_string(int(values_(i, j))) +
                              " for individual '" + individual_ids_[i] + "', SNP '" + snp_ids_[j] + "'");
      }
    }
  }
}

GenotypeMatrix GenotypeMatrix::from_rows(const std::vector<std::vector<int>>& rows) {
  const Index n = static_cast<Index>(rows.size());
  const Index l = n > 0 ? static_cast<Index>(rows.front().size()) : 0;
  GenotypeCodes values(n, l);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(rows[i].size()) != l) throw ValidationError("ragged genotype rows");
    for (Index s = 0; s < l; ++s) {
      check_code(rows[i][s]);
      values(i, s) = static_cast<std::uint8_t>(rows[i][s]);
    }
  }
  std::vector<std::string> snps(l), inds(n);
  for (Index s = 0; s < l; ++s) snps[s] = "snp" + std::to_string(s + 1);
  for (Index i = 0; i < n; ++i) inds[i] = "ind" + std::to_string(i + 1);
  return GenotypeMatrix(std::move(values), std::move(snps), std::move(inds));
}

GenotypeMatrix GenotypeMatrix::select_snps(std::span<const Index> columns) const {
  GenotypeCodes values(values_.rows(), static_cast<Index>(columns.size()));
  std::vector<std::string> ids;
  ids.reserve(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const Index col = columns[c];
    if (col < 0 || col >= values_.cols()) throw ValidationError("SNP column index out of range");
    values.col(static_cast<Index>(c)) = values_.col(col);
    ids.push_back(snp_ids_[col]);
  }
  return GenotypeMatrix(std::move(values), std::move(ids), individual_ids_);
}

WeightVector::WeightVector(Vector weights) : weights_(std::move(weights)) {
  if (weights_.size() == 0) throw ValidationError("empty weight vector");
  for (Index s = 0; s < weights_.size(); ++s) {
    if (!std::isfinite(weights_[s]) || weights_[s] < 0.0)
      throw ValidationError("weights must be finite and non-negative");
  }
  if (weights_.maxCoeff() <= 0.0) throw ValidationError("all weights are zero");
}

int am_score(int code_a, int code_b) {
  check_code(code_a);
  check_code(code_b);
  // Code g carries g copies of allele 'A'; the rest are 'a'.
  const std::array<char, 2> first{code_a >= 1 ? 'A' : 'a', code_a == 2 ? 'A' : 'a'};
  const std::array<char, 2> second{code_b >= 1 ? 'A' : 'a', code_b == 2 ? 'A' : 'a'};
  int matches = 0;
  for (char x : first) {
    for (char y : second) matches += (x == y) ? 1 : 0;
  }
  return matches;
}

KernelMatrix gene_kernel(const GenotypeMatrix& genotypes, const std::optional<WeightVector>& weights) {
  const Index l = genotypes.n_snps();
  if (weights && weights->size() != l) {
    throw ValidationError("weight vector has length " + std::to_string(weights->size()) + " but the gene has " +
                          std::to_string(l) + " SNPs");
  }

  // AM(a, b) = a*b + (2-a)*(2-b): the inner product of allele-count vectors.
  // Unweighted sums stay integer-valued, so the division below is exact up to
  // the final rounding.
  const Matrix ref = genotypes.as_real();
  const Matrix alt = (2.0 - ref.array()).matrix();
  KernelMatrix k(genotypes.n_individuals(), genotypes.n_individuals());
  if (weights) {
    const auto w = weights->values().asDiagonal();
    k.noalias() = (ref * w) * ref.transpose();
    k.noalias() += (alt * w) * alt.transpose();
    k /= 4.0 * weights->values().sum();
  } else {
    k.noalias() = ref * ref.transpose();
    k.noalias() += alt * alt.transpose();
    k /= 4.0 * static_cast<double>(l);
  }
  k.diagonal().setOnes();
  // Symmetrize exactly; the products above are symmetric only up to rounding.
  k.triangularView<Eigen::StrictlyLower>() = k.transpose();
  return k;
}

KernelMatrix interaction_kernel(const KernelMatrix& k1, const KernelMatrix& k2) {
  if (k1.rows() != k2.rows() || k1.cols() != k2.cols()) {
    throw ValidationError("interaction kernel: dimension mismatch");
  }
  return k1.cwiseProduct(k2);
}

WeightVector inverse_maf_weights(const GenotypeMatrix& genotypes) {
  const double n = static_cast<double>(genotypes.n_individuals());
  Vector w(genotypes.n_snps());
  for (Index s = 0; s < genotypes.n_snps(); ++s) {
    const double p = genotypes.values().col(s).cast<double>().sum() / (2.0 * n);
    const double maf = std::min(p, 1.0 - p);
    if (maf <= 0.0) {
      throw ValidationError("SNP '" + genotypes.snp_ids()[s] + "' is monomorphic; inverse-MAF weight undefined");
    }
    w[s] = 1.0 / maf;
  }
  return WeightVector(std::move(w));
}

}  // namespace genekm
