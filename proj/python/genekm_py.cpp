#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "genekm/cli.hpp"
#include "genekm/kernels.hpp"
#include "genekm/mixed_model.hpp"
#include "genekm/scan.hpp"
#include "genekm/score_tests.hpp"
#include "genekm/simulate.hpp"

namespace py = pybind11;
using namespace genekm;

namespace {

using Codes = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

GenotypeMatrix to_genotypes(const Codes& codes) {
  std::vector<std::vector<int>> rows(codes.rows(), std::vector<int>(codes.cols()));
  for (Index i = 0; i < codes.rows(); ++i)
    for (Index j = 0; j < codes.cols(); ++j) rows[i][j] = codes(i, j);
  return GenotypeMatrix::from_rows(rows);
}

py::dict components_dict(const VarianceComponents& c) {
  py::dict d;
  d["sigma2"] = c.sigma2;
  d["tau1"] = c.tau1;
  d["tau2"] = c.tau2;
  d["tau3"] = c.tau3;
  return d;
}

py::dict result_dict(const TestResult& r) {
  py::dict d;
  d["statistic"] = r.statistic;
  d["p_value"] = r.p_value;
  d["a"] = r.satterthwaite.a;
  d["g"] = r.satterthwaite.g;
  d["delta"] = r.satterthwaite.delta;
  d["nu"] = r.satterthwaite.nu;
  d["flags"] = r.flags;
  d["components"] = components_dict(r.null_fit.components);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gene-gene interaction tests with allele-matching kernels";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "gene_kernel",
      [](const Codes& codes, std::optional<Vector> weights) {
        std::optional<WeightVector> w;
        if (weights) w.emplace(*weights);
        return Matrix(gene_kernel(to_genotypes(codes), w));
      },
      py::arg("genotypes"), py::arg("weights") = py::none());
  m.def("interaction_kernel", [](const Matrix& k1, const Matrix& k2) { return Matrix(interaction_kernel(k1, k2)); });

  m.def(
      "overall_test",
      [](const Vector& y, const Matrix& k1, const Matrix& k2, std::optional<Matrix> k3) {
        const Matrix prod = k3 ? *k3 : Matrix(k1.cwiseProduct(k2));
        return result_dict(overall_test(y, k1, k2, prod));
      },
      py::arg("y"), py::arg("k1"), py::arg("k2"), py::arg("k3") = py::none());
  m.def(
      "interaction_test",
      [](const Vector& y, const Matrix& k1, const Matrix& k2, std::optional<Matrix> k3) {
        const Matrix prod = k3 ? *k3 : Matrix(k1.cwiseProduct(k2));
        return result_dict(interaction_test(y, k1, k2, prod));
      },
      py::arg("y"), py::arg("k1"), py::arg("k2"), py::arg("k3") = py::none());

  m.def(
      "reml_fit",
      [](const Vector& y, const std::vector<Matrix>& kernels) {
        if (kernels.empty() || kernels.size() > 3) throw ValidationError("reml_fit: expected 1 to 3 kernels");
        FreeMask mask{true, false, false, false};
        for (std::size_t l = 0; l < kernels.size(); ++l) mask[l + 1] = true;
        const KernelSet ks = kernels.size() == 1   ? KernelSet(kernels[0])
                             : kernels.size() == 2 ? KernelSet(kernels[0], kernels[1])
                                                   : KernelSet(kernels[0], kernels[1], kernels[2]);
        const NullFit fit = reml_fit(y, ks, mask);
        py::dict d = components_dict(fit.components);
        d["mu"] = fit.mu_hat;
        d["loglik"] = fit.reml_loglik;
        d["iterations"] = fit.iterations;
        return d;
      },
      py::arg("y"), py::arg("kernels"));

  m.def(
      "components_from_heritability",
      [](double h2, double eta, double sigma2, double main_ratio) {
        return components_dict(components_from_heritability(h2, eta, sigma2, main_ratio));
      },
      py::arg("h2"), py::arg("eta"), py::arg("sigma2") = 0.8, py::arg("main_ratio") = 0.5);

  m.def(
      "simulate_genotypes",
      [](Index n, Index snps, std::uint64_t seed) {
        GenotypeSimConfig cfg;
        cfg.n = n;
        cfg.snps_per_gene = snps;
        cfg.seed = seed;
        return Codes(simulate_genotypes(cfg).values().cast<int>());
      },
      py::arg("n"), py::arg("snps") = 10, py::arg("seed") = 1);
  m.def(
      "simulate_phenotype",
      [](const Matrix& k1, const Matrix& k2, double sigma2, double tau1, double tau2, double tau3, double mu,
         std::uint64_t seed) {
        TraitSimConfig cfg;
        cfg.mu = mu;
        cfg.components = {sigma2, tau1, tau2, tau3};
        cfg.seed = seed;
        return simulate_phenotype(k1, k2, interaction_kernel(k1, k2), cfg);
      },
      py::arg("k1"), py::arg("k2"), py::arg("sigma2"), py::arg("tau1"), py::arg("tau2"), py::arg("tau3"),
      py::arg("mu") = 0.0, py::arg("seed") = 1);

  m.def(
      "scan",
      [](const Vector& y, const std::vector<std::pair<std::string, Matrix>>& genes, const std::string& stage1,
         int threads) {
        KernelStore store;
        for (const auto& [id, k] : genes) store.add(id, k);
        const ScanSummary s = two_stage_scan(y, store, Stage1Policy::parse(stage1), threads);
        py::list out;
        for (const auto& r : s.records) {
          py::dict d;
          d["gene1"] = r.gene1;
          d["gene2"] = r.gene2;
          d["p_overall"] = r.p_overall;
          d["p_interaction"] = r.p_interaction ? py::object(py::float_(*r.p_interaction)) : py::object(py::none());
          d["components"] = r.components ? py::object(components_dict(*r.components)) : py::object(py::none());
          d["flags"] = format_scan_flags(r.flags);
          out.append(d);
        }
        return out;
      },
      py::arg("y"), py::arg("genes"), py::arg("stage1") = "bonferroni:0.05", py::arg("threads") = 1);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"genekm"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
