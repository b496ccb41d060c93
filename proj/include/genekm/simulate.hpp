#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "genekm/kernels.hpp"
#include "genekm/mixed_model.hpp"

namespace genekm {

// Haplotype-pool genotype generator for one gene.
struct GenotypeSimConfig {
  Index n = 500;
  Index snps_per_gene = 10;
  double maf_low = 0.05;
  double maf_high = 0.5;
  // Correlation of the latent Gaussian chain between adjacent SNPs.
  double ld_rho = 0.5;
  Index haplotype_pool = 100;
  // Realized sample MAF below this is resampled.
  double min_sample_maf = 0.05;
  std::uint64_t seed = 1;
};

struct TraitSimConfig {
  double mu = 0.0;
  VarianceComponents components;
  std::uint64_t seed = 1;
};

GenotypeMatrix simulate_genotypes(const GenotypeSimConfig& cfg);

// sigma^2_G = sigma2 h2 / (1 - h2), tau3 = eta sigma^2_G, and the main-effect
// share split main_ratio : (1 - main_ratio) between tau1 and tau2.
VarianceComponents components_from_heritability(double h2, double eta, double sigma2, double main_ratio = 0.5);

// y ~ MVN(mu 1, sigma^2 I + tau1 K1 + tau2 K2 + tau3 K3).
Vector simulate_phenotype(const KernelMatrix& k1, const KernelMatrix& k2, const KernelMatrix& k3,
                          const TraitSimConfig& cfg);

enum class Method { kKernel, kPpca, kFpca, kSingleSnp };
std::string to_string(Method m);
Method parse_method(const std::string& name);

enum class TraitModel {
  // MVN with kernel-structured covariance.
  kKernel,
  // y = b0 + b1 S1 + b2 S2 + b12 S1 S2 + e with one HWE SNP per gene.
  kSingleSnp,
};

struct StudyDescriptor {
  std::set<Method> methods{Method::kKernel, Method::kPpca, Method::kFpca};
  Index n = 500;
  int replicates = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  bool run_overall = true;
  bool run_interaction = true;

  TraitModel trait_model = TraitModel::kKernel;
  // Kernel trait model.
  double h2 = 0.0;
  double eta = 0.0;
  double sigma2 = 0.8;
  double main_ratio = 0.5;
  double mu = 0.0;
  // Single-SNP trait model.
  std::array<double, 4> coefficients{0.0, 0.0, 0.0, 0.0};
  double snp_maf = 0.3;

  GenotypeSimConfig genotypes;
  double fpca_threshold = 0.85;
};

// Applies one of the named scenarios I-IV (I: no genetic effect, II: main
// effects only, III: interaction half of each main effect, IV: twice).
void apply_scenario(StudyDescriptor& d, const std::string& scenario);

struct RejectionCount {
  Method method;
  std::string test;  // "overall" or "interaction"
  int rejections = 0;
  int replicates = 0;
  int failures = 0;

  double rate() const { return replicates > 0 ? double(rejections) / replicates : 0.0; }
  double standard_error() const;
};

struct ReplicateOutcome {
  // Indexed like StudyDescriptor::methods; NaN where the method failed.
  std::vector<double> p_overall;
  std::vector<double> p_interaction;
};

struct StudyResult {
  std::vector<RejectionCount> rows;
  // Per-replicate p-values (row order = replicate index).
  std::vector<ReplicateOutcome> replicates;
  const RejectionCount& find(Method m, const std::string& test) const;
};

// Seed for replicate r derived from the master seed.
std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t stream);

StudyResult run_study(const StudyDescriptor& d, int threads = 1);

void write_study_table(std::ostream& out, const StudyResult& result);

}  // namespace genekm
