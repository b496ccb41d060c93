#include <doctest.h>

#include <sstream>

#include "genekm/error.hpp"
#include "genekm/simulate.hpp"
#include "oracles.hpp"

using namespace genekm;

TEST_SUITE("simulate") {
  TEST_CASE("genotype frequencies at MAF 0.5 without LD") {
    GenotypeSimConfig cfg;
    cfg.n = 10000;
    cfg.snps_per_gene = 5;
    cfg.maf_low = cfg.maf_high = 0.5;
    cfg.ld_rho = 0.0;
    cfg.haplotype_pool = 200000;
    cfg.seed = 42;
    const GenotypeMatrix g = simulate_genotypes(cfg);
    const double n = 10000.0;
    for (Index s = 0; s < g.n_snps(); ++s) {
      const std::array<double, 3> expected{0.25, 0.5, 0.25};
      for (int code = 0; code < 3; ++code) {
        const double f = (g.values().col(s).array() == code).cast<double>().sum() / n;
        const double se = std::sqrt(expected[code] * (1 - expected[code]) / n);
        CHECK(std::abs(f - expected[code]) < 3 * se);
      }
    }
  }

  TEST_CASE("genotype simulation is deterministic and respects the MAF filter") {
    GenotypeSimConfig cfg;
    cfg.n = 200;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      cfg.seed = seed;
      const GenotypeMatrix g = simulate_genotypes(cfg);
      CHECK(g.n_snps() == 10);
      for (Index s = 0; s < g.n_snps(); ++s) {
        const double p = g.values().col(s).cast<double>().sum() / (2.0 * 200);
        CHECK(std::min(p, 1 - p) >= 0.05);
      }
      if (seed < 5) CHECK(simulate_genotypes(cfg).values() == g.values());
    }
    cfg.seed = 1;
    const GenotypeMatrix a = simulate_genotypes(cfg);
    cfg.seed = 2;
    CHECK(simulate_genotypes(cfg).values() != a.values());
  }

  TEST_CASE("adjacent SNPs are correlated when ld_rho is high") {
    GenotypeSimConfig cfg;
    cfg.n = 2000;
    cfg.haplotype_pool = 5000;
    cfg.ld_rho = 0.95;
    cfg.maf_low = cfg.maf_high = 0.4;
    cfg.seed = 3;
    const Matrix g = simulate_genotypes(cfg).as_real();
    double r = 0;
    for (Index s = 0; s + 1 < g.cols(); ++s) {
      const Vector a = (g.col(s).array() - g.col(s).mean()).matrix();
      const Vector b = (g.col(s + 1).array() - g.col(s + 1).mean()).matrix();
      r += a.dot(b) / (a.norm() * b.norm());
    }
    CHECK(r / (g.cols() - 1) > 0.5);
  }

  TEST_CASE("genotype configuration errors") {
    GenotypeSimConfig cfg;
    cfg.maf_low = 0.3;
    cfg.maf_high = 0.2;
    CHECK_THROWS_AS(simulate_genotypes(cfg), ValidationError);
    cfg = {};
    cfg.ld_rho = 1.0;
    CHECK_THROWS_AS(simulate_genotypes(cfg), ValidationError);
    cfg = {};
    cfg.n = 20;
    cfg.maf_low = cfg.maf_high = 0.01;
    cfg.min_sample_maf = 0.3;
    CHECK_THROWS_WITH_AS(simulate_genotypes(cfg), doctest::Contains("100 attempts"), ValidationError);
  }

  TEST_CASE("heritability bookkeeping") {
    auto c = components_from_heritability(0.2, 0.2, 0.8);
    CHECK(c.tau1 == doctest::Approx(0.08));
    CHECK(c.tau2 == doctest::Approx(0.08));
    CHECK(c.tau3 == doctest::Approx(0.04));
    CHECK(c.sigma2 == 0.8);
    c = components_from_heritability(0.2, 0.8, 0.8);
    CHECK(c.tau1 == doctest::Approx(0.02));
    CHECK(c.tau3 == doctest::Approx(0.16));
    c = components_from_heritability(0.05, 0.0, 0.8);
    CHECK(std::abs(c.tau1 - 0.021) <= 0.0005);
    CHECK(c.tau3 == 0.0);
    CHECK_THROWS_AS(components_from_heritability(1.0, 0, 0.8), ValidationError);
    CHECK_THROWS_AS(components_from_heritability(0.2, 1.5, 0.8), ValidationError);
    CHECK_THROWS_AS(components_from_heritability(0.2, 0.5, 0.0), ValidationError);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 0.99), e(0, 1), s(0.1, 5);
    for (int rep = 0; rep < 200; ++rep) {
      const double h2 = u(rng), eta = e(rng), sigma2 = s(rng);
      const auto v = components_from_heritability(h2, eta, sigma2);
      const double g = v.tau1 + v.tau2 + v.tau3;
      CHECK(g / (g + sigma2) == doctest::Approx(h2).epsilon(1e-12).scale(1e-12));
      if (g > 0) CHECK(v.tau3 / g == doctest::Approx(eta));
      CHECK(v.tau1 == doctest::Approx(v.tau2));
    }
  }

  TEST_CASE("white-noise phenotype variance") {
    const Matrix one = Matrix::Ones(1, 1);
    TraitSimConfig cfg;
    cfg.components = {1.7, 0, 0, 0};
    cfg.mu = 0.3;
    const int draws = 10000;
    double sum = 0, sum2 = 0;
    for (int r = 0; r < draws; ++r) {
      cfg.seed = static_cast<std::uint64_t>(r) + 1000;
      const double y = simulate_phenotype(one, one, one, cfg)[0];
      sum += y;
      sum2 += y * y;
    }
    const double mean = sum / draws;
    const double var = sum2 / draws - mean * mean;
    CHECK(std::abs(var - 1.7) < 3 * 1.7 * std::sqrt(2.0 / draws));
  }

  TEST_CASE("phenotype covariance matches V") {
    std::mt19937_64 rng(2);
    const Index n = 5;
    const Matrix k1 = oracle::random_psd(n, rng), k2 = oracle::random_psd(n, rng);
    const Matrix k3 = k1.cwiseProduct(k2);
    TraitSimConfig cfg;
    cfg.components = {0.8, 0.5, 0.3, 0.4};
    const Matrix v = oracle::covariance({&k1, &k2, &k3}, cfg.components.as_array(), n);
    const int draws = 20000;
    Matrix sum = Matrix::Zero(n, n), sum2 = Matrix::Zero(n, n);
    for (int r = 0; r < draws; ++r) {
      cfg.seed = static_cast<std::uint64_t>(r);
      const Vector y = simulate_phenotype(k1, k2, k3, cfg);
      const Matrix outer = y * y.transpose();
      sum += outer;
      sum2 += outer.cwiseProduct(outer);
    }
    const Matrix mean = sum / draws;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        const double se = std::sqrt((sum2(i, j) / draws - mean(i, j) * mean(i, j)) / draws);
        CHECK(std::abs(mean(i, j) - v(i, j)) < 3 * se);
      }
    }
    cfg.seed = 9;
    CHECK(simulate_phenotype(k1, k2, k3, cfg) == simulate_phenotype(k1, k2, k3, cfg));
  }

  TEST_CASE("scenarios and methods") {
    StudyDescriptor d;
    d.h2 = 0.2;
    apply_scenario(d, "IV");
    CHECK(d.eta == 0.5);
    apply_scenario(d, "III");
    CHECK(d.eta == 0.2);
    apply_scenario(d, "I");
    CHECK(d.h2 == 0.0);
    CHECK_THROWS_AS(apply_scenario(d, "V"), ValidationError);
    for (Method m : {Method::kKernel, Method::kPpca, Method::kFpca, Method::kSingleSnp})
      CHECK(parse_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_method("svm"), ValidationError);
    // Scenario III's interaction is half of each main effect.
    const auto c = components_from_heritability(0.2, 0.2, 0.8);
    CHECK(c.tau3 == doctest::Approx(0.5 * c.tau1));
    const auto c4 = components_from_heritability(0.2, 0.5, 0.8);
    CHECK(c4.tau3 == doctest::Approx(2 * c4.tau1));
  }

  TEST_CASE("studies are reproducible across thread counts") {
    StudyDescriptor d;
    d.n = 60;
    d.replicates = 12;
    d.h2 = 0.3;
    d.eta = 0.5;
    d.genotypes.snps_per_gene = 4;
    d.seed = 77;
    const StudyResult a = run_study(d, 1);
    const StudyResult b = run_study(d, 4);
    std::ostringstream ta, tb;
    write_study_table(ta, a);
    write_study_table(tb, b);
    CHECK(ta.str() == tb.str());
    for (std::size_t r = 0; r < a.replicates.size(); ++r) {
      for (std::size_t m = 0; m < 3; ++m) {
        CHECK(a.replicates[r].p_overall[m] == b.replicates[r].p_overall[m]);
        CHECK(a.replicates[r].p_interaction[m] == b.replicates[r].p_interaction[m]);
      }
    }
    CHECK(a.rows.size() == 6);
    CHECK(ta.str().rfind("method\ttest\treplicates\trejections\tfailures\trate\tse\n", 0) == 0);
    CHECK(ta.str().back() == '\n');
  }

  TEST_CASE("study validation") {
    StudyDescriptor d;
    d.methods = {Method::kSingleSnp};
    CHECK_THROWS_AS(run_study(d), ValidationError);
    d.methods.clear();
    CHECK_THROWS_AS(run_study(d), ValidationError);
    d = {};
    d.h2 = 1.0;
    CHECK_THROWS_AS(run_study(d), ValidationError);
  }
}
