#include "genekm/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "genekm/error.hpp"
#include "genekm/format.hpp"
#include "genekm/io.hpp"
#include "genekm/scan.hpp"
#include "genekm/score_tests.hpp"
#include "genekm/simulate.hpp"

namespace genekm {

namespace {

struct DataOptions {
  std::string genotypes;
  std::string gene_map;
  std::string trait;
  std::string weights = "none";
  bool impute = false;
};

void add_data_options(CLI::App* app, DataOptions& o, bool need_map, bool need_trait) {
  app->add_option("--genotypes,-g", o.genotypes, "genotype CSV (id column, one column per SNP)")->required();
  auto* map = app->add_option("--gene-map,-m", o.gene_map, "tab-separated snp_id / gene_id lines");
  if (need_map) map->required();
  if (need_trait) app->add_option("--trait,-t", o.trait, "trait file of id / value lines")->required();
  app->add_option("--weights", o.weights, "SNP weighting: none or inv-maf")
      ->check(CLI::IsMember({"none", "inv-maf"}));
  app->add_flag("--impute", o.impute, "fill NA genotypes with the most frequent code of the SNP");
}

// Writes through a buffer so that the file only appears once the output is complete.
void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << content;
  if (!f) throw ValidationError("failed writing '" + path + "'");
}

std::size_t find_gene(const GenePartition& p, const std::string& id) {
  for (std::size_t g = 0; g < p.size(); ++g) {
    if (p[g].id == id) return g;
  }
  throw ValidationError("gene '" + id + "' is not in the gene map");
}

void warn_unmapped(std::ostream& err, const GeneMap& map) {
  if (map.unmapped > 0) err << "warning: " << map.unmapped << " SNP(s) not in the gene map were excluded\n";
}

KernelMatrix gene_kernel_for(const GenotypeMatrix& g, const std::vector<Index>& columns, const std::string& weights) {
  const GenotypeMatrix sub = g.select_snps(columns);
  std::optional<WeightVector> w;
  if (parse_weighting(weights) == WeightingMode::kInverseMaf) w = inverse_maf_weights(sub);
  return gene_kernel(sub, w);
}

int cmd_kernel(const DataOptions& o, const std::string& gene, const std::string& out_path, std::ostream& out,
               std::ostream& err) {
  const GenotypeMatrix g = load_genotypes(o.genotypes, {o.impute});
  std::vector<Index> columns;
  if (o.gene_map.empty()) {
    if (!gene.empty()) throw ValidationError("--gene needs --gene-map");
    for (Index s = 0; s < g.n_snps(); ++s) columns.push_back(s);
  } else {
    const GeneMap map = load_gene_map(o.gene_map, g);
    warn_unmapped(err, map);
    if (gene.empty()) {
      if (map.partition.size() != 1) throw ValidationError("the gene map has several genes; choose one with --gene");
      columns = map.partition[0].columns;
    } else {
      columns = map.partition[find_gene(map.partition, gene)].columns;
    }
  }
  std::ostringstream buf;
  write_kernel_csv(buf, gene_kernel_for(g, columns, o.weights), g.individual_ids());
  if (out_path.empty()) {
    out << buf.str();
  } else {
    write_file(out_path, buf.str());
  }
  return 0;
}

int cmd_test(const DataOptions& o, const std::string& gene1, const std::string& gene2, std::ostream& out,
             std::ostream& err) {
  const GenotypeMatrix g = load_genotypes(o.genotypes, {o.impute});
  const GeneMap map = load_gene_map(o.gene_map, g);
  warn_unmapped(err, map);
  const Vector y = load_trait(o.trait, g.individual_ids());
  const std::size_t a = find_gene(map.partition, gene1);
  const std::size_t b = find_gene(map.partition, gene2);
  if (a == b) throw ValidationError("--gene1 and --gene2 must differ");
  const KernelMatrix k1 = gene_kernel_for(g, map.partition[a].columns, o.weights);
  const KernelMatrix k2 = gene_kernel_for(g, map.partition[b].columns, o.weights);
  const KernelMatrix k3 = interaction_kernel(k1, k2);

  const TestResult overall = overall_test(y, k1, k2, k3);
  const TestResult inter = interaction_test(y, k1, k2, k3);
  const VarianceComponents& c = inter.null_fit.components;
  out << "gene1\tgene2\tp_overall\tp_interaction\tsigma2\ttau1\ttau2\n";
  out << gene1 << '\t' << gene2 << '\t' << format_p_value(overall.p_value) << '\t'
      << format_p_value(inter.p_value) << '\t' << format_number(c.sigma2) << '\t' << format_number(c.tau1) << '\t'
      << format_number(c.tau2) << '\n';
  return 0;
}

struct ScanOptions {
  std::string out_path;
  std::string stage1 = "bonferroni:0.05";
  double alpha2 = 0.05;
  int threads = 1;
  std::uint64_t seed = 1;
  std::string edges;
  double edge_cut = -1.0;
};

int cmd_scan(const DataOptions& o, const ScanOptions& s, std::ostream& err) {
  const Stage1Policy policy = Stage1Policy::parse(s.stage1);
  if (!(s.alpha2 > 0.0 && s.alpha2 <= 1.0)) throw ValidationError("--alpha2 must lie in (0, 1]");
  if (s.threads < 1) throw ValidationError("--threads must be >= 1");
  const GenotypeMatrix g = load_genotypes(o.genotypes, {o.impute});
  const GeneMap map = load_gene_map(o.gene_map, g);
  warn_unmapped(err, map);
  const Vector y = load_trait(o.trait, g.individual_ids());
  const KernelStore store = precompute_gene_kernels(g, map.partition, parse_weighting(o.weights));
  const ScanSummary summary = two_stage_scan(y, store, policy, s.threads);

  std::ostringstream results;
  write_scan_results(results, summary.records);
  std::string edges;
  if (!s.edges.empty()) {
    std::ostringstream e;
    export_edges(e, summary.records, s.edge_cut >= 0.0 ? s.edge_cut : s.alpha2);
    edges = e.str();
  }
  write_file(s.out_path, results.str());
  if (!s.edges.empty()) write_file(s.edges, edges);
  err << summary.records.size() << " pairs tested, " << summary.stage2_count
      << " passed stage 1 (threshold " << format_p_value(summary.stage1_threshold) << ")\n";
  return 0;
}

int cmd_simulate(const std::string& descriptor, const std::string& out_path, int threads,
                 std::optional<std::uint64_t> seed, std::ostream& out) {
  if (threads < 1) throw ValidationError("--threads must be >= 1");
  StudyDescriptor d = load_study_descriptor(descriptor);
  if (seed) d.seed = *seed;
  const StudyResult result = run_study(d, threads);
  std::ostringstream buf;
  write_study_table(buf, result);
  if (out_path.empty()) {
    out << buf.str();
  } else {
    write_file(out_path, buf.str());
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gene-level kernel-machine tests for gene-gene interaction"};
  app.name("genekm");
  app.require_subcommand(1);

  DataOptions kernel_data;
  std::string kernel_gene, kernel_out;
  auto* kernel = app.add_subcommand("kernel", "print a gene's allele-matching kernel as CSV");
  add_data_options(kernel, kernel_data, false, false);
  kernel->add_option("--gene", kernel_gene, "gene id from the gene map (default: all SNPs)");
  kernel->add_option("--out,-o", kernel_out, "write to this file instead of standard output");

  DataOptions test_data;
  std::string gene1, gene2;
  auto* test = app.add_subcommand("test", "overall and interaction tests for one gene pair");
  add_data_options(test, test_data, true, true);
  test->add_option("--gene1", gene1, "first gene id")->required();
  test->add_option("--gene2", gene2, "second gene id")->required();

  DataOptions scan_data;
  ScanOptions scan_opts;
  auto* scan = app.add_subcommand("scan", "two-stage scan over all gene pairs");
  add_data_options(scan, scan_data, true, true);
  scan->add_option("--out,-o", scan_opts.out_path, "results file (tab-separated)")->required();
  scan->add_option("--stage1", scan_opts.stage1, "fixed:<c> or bonferroni:<alpha>")->capture_default_str();
  scan->add_option("--alpha2", scan_opts.alpha2, "stage-2 level; default edge cut")->capture_default_str();
  scan->add_option("--threads", scan_opts.threads, "worker threads")->capture_default_str();
  scan->add_option("--seed", scan_opts.seed, "master seed (the scan itself is deterministic)")->capture_default_str();
  scan->add_option("--edges", scan_opts.edges, "write an edge list of significant interactions");
  scan->add_option("--edge-cut", scan_opts.edge_cut, "p_interaction cut for --edges (default: --alpha2)");

  std::string descriptor, sim_out;
  int sim_threads = 1;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "run a simulation study and print the rejection table");
  simulate->add_option("descriptor", descriptor, "study descriptor file (key = value lines)")->required();
  simulate->add_option("--out,-o", sim_out, "write to this file instead of standard output");
  simulate->add_option("--threads", sim_threads, "worker threads");
  simulate->add_option("--seed", sim_seed, "override the descriptor's master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands()) {
      err << sub->help();
      return 1;
    }
    err << app.help();
    return 1;
  }

  try {
    if (kernel->parsed()) return cmd_kernel(kernel_data, kernel_gene, kernel_out, out, err);
    if (test->parsed()) return cmd_test(test_data, gene1, gene2, out, err);
    if (scan->parsed()) return cmd_scan(scan_data, scan_opts, err);
    if (simulate->parsed()) return cmd_simulate(descriptor, sim_out, sim_threads, sim_seed, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace genekm
