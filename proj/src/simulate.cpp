#include "genekm/simulate.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <thread>

#include "genekm/baselines.hpp"
#include "genekm/distributions.hpp"
#include "genekm/error.hpp"
#include "genekm/score_tests.hpp"

namespace genekm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double sample_maf(const GenotypeCodes& codes, Index s) {
  const double p = codes.col(s).cast<double>().sum() / (2.0 * static_cast<double>(codes.rows()));
  return std::min(p, 1.0 - p);
}

void validate(const GenotypeSimConfig& cfg) {
  if (cfg.n < 2) throw ValidationError("genotype simulation: n must be >= 2");
  if (cfg.snps_per_gene < 1) throw ValidationError("genotype simulation: need at least one SNP");
  if (!(cfg.maf_low > 0.0 && cfg.maf_low <= cfg.maf_high && cfg.maf_high <= 0.5))
    throw ValidationError("genotype simulation: MAF range must satisfy 0 < low <= high <= 0.5");
  if (!(cfg.ld_rho >= 0.0 && cfg.ld_rho < 1.0)) throw ValidationError("genotype simulation: ld_rho must lie in [0, 1)");
  if (cfg.haplotype_pool < 2) throw ValidationError("genotype simulation: haplotype pool must hold >= 2 haplotypes");
}

}  // namespace

std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(master) ^ replicate) ^ (stream * 0x2545f4914f6cdd1dULL));
}

GenotypeMatrix simulate_genotypes(const GenotypeSimConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> freq(cfg.maf_low, cfg.maf_high);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<Index> pick(0, cfg.haplotype_pool - 1);

  const Index pool = cfg.haplotype_pool;
  const Index l = cfg.snps_per_gene;
  const double innovation = std::sqrt(1.0 - cfg.ld_rho * cfg.ld_rho);

  // Latent AR(1) chain per haplotype; allele present when z < Phi^-1(p_s).
  Matrix latent(pool, l);
  for (Index h = 0; h < pool; ++h) {
    for (Index s = 0; s < l; ++s) {
      const double e = gauss(rng);
      latent(h, s) = s == 0 ? e : cfg.ld_rho * latent(h, s - 1) + innovation * e;
    }
  }
  Vector threshold(l);
  for (Index s = 0; s < l; ++s) threshold[s] = normal_quantile(freq(rng));

  std::vector<std::array<Index, 2>> draws(static_cast<std::size_t>(cfg.n));
  for (auto& d : draws) d = {pick(rng), pick(rng)};

  GenotypeCodes codes(cfg.n, l);
  auto fill_column = [&](Index s) {
    for (Index i = 0; i < cfg.n; ++i) {
      const auto& d = draws[static_cast<std::size_t>(i)];
      codes(i, s) = static_cast<std::uint8_t>((latent(d[0], s) < threshold[s]) + (latent(d[1], s) < threshold[s]));
    }
  };

  for (Index s = 0; s < l; ++s) {
    fill_column(s);
    int attempts = 0;
    while (sample_maf(codes, s) < cfg.min_sample_maf) {
      if (++attempts > 100) {
        throw ValidationError("genotype simulation: could not reach sample MAF >= " +
                              std::to_string(cfg.min_sample_maf) + " for SNP " + std::to_string(s + 1) +
                              " in 100 attempts; widen maf range or enlarge n / pool");
      }
      // Redraw this SNP's frequency and innovations, keeping its link to s-1.
      threshold[s] = normal_quantile(freq(rng));
      for (Index h = 0; h < pool; ++h) {
        const double e = gauss(rng);
        latent(h, s) = s == 0 ? e : cfg.ld_rho * latent(h, s - 1) + innovation * e;
      }
      fill_column(s);
    }
  }

  std::vector<std::string> snps(static_cast<std::size_t>(l));
  std::vector<std::string> inds(static_cast<std::size_t>(cfg.n));
  for (Index s = 0; s < l; ++s) snps[s] = "snp" + std::to_string(s + 1);
  for (Index i = 0; i < cfg.n; ++i) inds[i] = "ind" + std::to_string(i + 1);
  return GenotypeMatrix(std::move(codes), std::move(snps), std::move(inds));
}

VarianceComponents components_from_heritability(double h2, double eta, double sigma2, double main_ratio) {
  if (!(h2 >= 0.0 && h2 < 1.0)) throw ValidationError("heritability must lie in [0, 1)");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("interaction share eta must lie in [0, 1]");
  if (!(sigma2 > 0.0)) throw ValidationError("residual variance must be positive");
  if (!(main_ratio >= 0.0 && main_ratio <= 1.0)) throw ValidationError("main_ratio must lie in [0, 1]");
  const double genetic = sigma2 * h2 / (1.0 - h2);
  return {sigma2, main_ratio * (1.0 - eta) * genetic, (1.0 - main_ratio) * (1.0 - eta) * genetic, eta * genetic};
}

Vector simulate_phenotype(const KernelMatrix& k1, const KernelMatrix& k2, const KernelMatrix& k3,
                          const TraitSimConfig& cfg) {
  const Index n = k1.rows();
  if (k2.rows() != n || k3.rows() != n || k1.cols() != n || k2.cols() != n || k3.cols() != n)
    throw ValidationError("simulate_phenotype: kernels are not conformable");
  const VarianceComponents& vc = cfg.components;
  if (!(vc.sigma2 > 0.0) || vc.tau1 < 0.0 || vc.tau2 < 0.0 || vc.tau3 < 0.0)
    throw ValidationError("simulate_phenotype: need sigma^2 > 0 and non-negative taus");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector z(n);
  for (Index i = 0; i < n; ++i) z[i] = gauss(rng);

  if (vc.tau1 == 0.0 && vc.tau2 == 0.0 && vc.tau3 == 0.0) {
    return (cfg.mu + std::sqrt(vc.sigma2) * z.array()).matrix();
  }

  Matrix v = vc.sigma2 * Matrix::Identity(n, n);
  v.noalias() += vc.tau1 * k1;
  v.noalias() += vc.tau2 * k2;
  v.noalias() += vc.tau3 * k3;
  Eigen::LLT<Matrix> llt(v);
  if (llt.info() != Eigen::Success) {
    v.diagonal().array() += 1e-10 * static_cast<double>(n);
    llt.compute(v);
    if (llt.info() != Eigen::Success) throw NumericError("simulate_phenotype: covariance factorization failed");
  }
  Vector y = llt.matrixL() * z;
  y.array() += cfg.mu;
  return y;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kKernel: return "kernel";
    case Method::kPpca: return "ppca";
    case Method::kFpca: return "fpca";
    case Method::kSingleSnp: return "single_snp";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "kernel") return Method::kKernel;
  if (name == "ppca") return Method::kPpca;
  if (name == "fpca") return Method::kFpca;
  if (name == "single_snp") return Method::kSingleSnp;
  throw ValidationError("unknown method '" + name + "' (expected kernel, ppca, fpca or single_snp)");
}

void apply_scenario(StudyDescriptor& d, const std::string& scenario) {
  if (scenario == "I") {
    d.h2 = 0.0;
    d.eta = 0.0;
  } else if (scenario == "II") {
    d.eta = 0.0;
  } else if (scenario == "III") {
    d.eta = 0.2;
  } else if (scenario == "IV") {
    d.eta = 0.5;
  } else {
    throw ValidationError("unknown scenario '" + scenario + "' (expected I, II, III or IV)");
  }
}

double RejectionCount::standard_error() const {
  const double p = rate();
  return replicates > 0 ? std::sqrt(p * (1.0 - p) / replicates) : 0.0;
}

const RejectionCount& StudyResult::find(Method m, const std::string& test) const {
  for (const auto& r : rows) {
    if (r.method == m && r.test == test) return r;
  }
  throw ValidationError("no result row for " + to_string(m) + "/" + test);
}

namespace {

GenotypeMatrix hwe_snp(Index n, double maf, std::uint64_t seed, const std::string& id) {
  std::mt19937_64 rng(seed);
  std::binomial_distribution<int> draw(2, maf);
  GenotypeCodes codes(n, 1);
  for (int attempt = 0;; ++attempt) {
    for (Index i = 0; i < n; ++i) codes(i, 0) = static_cast<std::uint8_t>(draw(rng));
    if (codes.maxCoeff() != codes.minCoeff()) break;
    if (attempt > 100) throw ValidationError("single-SNP simulation: SNP stayed monomorphic");
  }
  std::vector<std::string> inds(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) inds[i] = "ind" + std::to_string(i + 1);
  return GenotypeMatrix(std::move(codes), {id}, std::move(inds));
}

ReplicateOutcome run_replicate(const StudyDescriptor& d, const std::vector<Method>& methods, int r) {
  const auto rep = static_cast<std::uint64_t>(r);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ReplicateOutcome out{std::vector<double>(methods.size(), nan), std::vector<double>(methods.size(), nan)};

  const bool single = d.trait_model == TraitModel::kSingleSnp;
  GenotypeSimConfig gcfg = d.genotypes;
  gcfg.n = d.n;
  gcfg.seed = replicate_seed(d.seed, rep, 1);
  GenotypeMatrix g1 = single ? hwe_snp(d.n, d.snp_maf, gcfg.seed, "s1") : simulate_genotypes(gcfg);
  gcfg.seed = replicate_seed(d.seed, rep, 2);
  GenotypeMatrix g2 = single ? hwe_snp(d.n, d.snp_maf, gcfg.seed, "s2") : simulate_genotypes(gcfg);

  const KernelMatrix k1 = gene_kernel(g1);
  const KernelMatrix k2 = gene_kernel(g2);
  const KernelMatrix k3 = interaction_kernel(k1, k2);

  const std::uint64_t trait_seed = replicate_seed(d.seed, rep, 3);
  Vector y;
  if (single) {
    const Vector s1 = g1.as_real().col(0);
    const Vector s2 = g2.as_real().col(0);
    std::mt19937_64 rng(trait_seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(d.sigma2));
    y.resize(d.n);
    const auto& b = d.coefficients;
    for (Index i = 0; i < d.n; ++i) y[i] = b[0] + b[1] * s1[i] + b[2] * s2[i] + b[3] * s1[i] * s2[i] + gauss(rng);
  } else {
    TraitSimConfig tcfg;
    tcfg.mu = d.mu;
    tcfg.components = components_from_heritability(d.h2, d.eta, d.sigma2, d.main_ratio);
    tcfg.seed = trait_seed;
    y = simulate_phenotype(k1, k2, k3, tcfg);
  }

  for (std::size_t m = 0; m < methods.size(); ++m) {
    try {
      switch (methods[m]) {
        case Method::kKernel:
          if (d.run_overall) out.p_overall[m] = overall_test(y, k1, k2, k3).p_value;
          if (d.run_interaction) out.p_interaction[m] = interaction_test(y, k1, k2, k3).p_value;
          break;
        case Method::kPpca: {
          const auto res = ppca_test(y, g1, g2);
          out.p_overall[m] = res.p_overall;
          out.p_interaction[m] = res.p_interaction;
          break;
        }
        case Method::kFpca: {
          const auto res = fpca_test(y, g1, g2, d.fpca_threshold);
          out.p_overall[m] = res.p_overall;
          out.p_interaction[m] = res.p_interaction;
          break;
        }
        case Method::kSingleSnp: {
          const auto res = single_snp_test(y, g1.as_real().col(0), g2.as_real().col(0));
          out.p_overall[m] = res.p_overall;
          out.p_interaction[m] = res.p_interaction;
          break;
        }
      }
    } catch (const Error&) {
      // Recorded as a failure for this method only.
    }
  }
  return out;
}

}  // namespace

StudyResult run_study(const StudyDescriptor& d, int threads) {
  if (d.methods.empty()) throw ValidationError("study: no methods selected");
  if (d.replicates < 1) throw ValidationError("study: replicates must be >= 1");
  if (!(d.alpha > 0.0 && d.alpha < 1.0)) throw ValidationError("study: alpha must lie in (0, 1)");
  if (d.n < 3) throw ValidationError("study: n must be >= 3");
  const bool single = d.trait_model == TraitModel::kSingleSnp;
  if (d.methods.contains(Method::kSingleSnp) && !single && d.genotypes.snps_per_gene != 1)
    throw ValidationError("study: the single_snp method needs one SNP per gene");
  if (single && !(d.snp_maf > 0.0 && d.snp_maf < 1.0)) throw ValidationError("study: snp_maf must lie in (0, 1)");
  if (!single) components_from_heritability(d.h2, d.eta, d.sigma2, d.main_ratio);

  const std::vector<Method> methods(d.methods.begin(), d.methods.end());
  StudyResult result;
  result.replicates.resize(static_cast<std::size_t>(d.replicates));

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < d.replicates; r = next++) {
      result.replicates[static_cast<std::size_t>(r)] = run_replicate(d, methods, r);
    }
  };
  const int k = std::max(1, std::min(threads, d.replicates));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < k; ++t) pool.emplace_back(worker);
    worker();
  }

  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (const std::string test : {"overall", "interaction"}) {
      if (test == "overall" ? !d.run_overall : !d.run_interaction) continue;
      RejectionCount row{methods[m], test};
      for (const auto& rep : result.replicates) {
        const double p = test == "overall" ? rep.p_overall[m] : rep.p_interaction[m];
        if (std::isnan(p)) {
          ++row.failures;
          continue;
        }
        ++row.replicates;
        if (p <= d.alpha) ++row.rejections;
      }
      result.rows.push_back(row);
    }
  }
  return result;
}

void write_study_table(std::ostream& out, const StudyResult& result) {
  out << "method\ttest\treplicates\trejections\tfailures\trate\tse\n";
  char buf[64];
  for (const auto& r : result.rows) {
    out << to_string(r.method) << '\t' << r.test << '\t' << r.replicates << '\t' << r.rejections << '\t'
        << r.failures << '\t';
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f", r.rate(), r.standard_error());
    out << buf << '\n';
  }
}

}  // namespace genekm
