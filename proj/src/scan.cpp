#include "genekm/scan.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "genekm/error.hpp"
#include "genekm/format.hpp"
#include "genekm/score_tests.hpp"

namespace genekm {

GenePartition::GenePartition(std::vector<Gene> genes) : genes_(std::move(genes)) {
  std::unordered_set<std::string> ids;
  std::unordered_set<Index> columns;
  for (const auto& g : genes_) {
    if (g.columns.empty()) throw ValidationError("gene '" + g.id + "' has no SNPs");
    if (!ids.insert(g.id).second) throw ValidationError("duplicate gene id '" + g.id + "'");
    for (Index c : g.columns) {
      if (c < 0) throw ValidationError("gene '" + g.id + "' has a negative SNP column");
      if (!columns.insert(c).second)
        throw ValidationError("SNP column " + std::to_string(c) + " is assigned to more than one gene");
    }
  }
}

WeightingMode parse_weighting(const std::string& name) {
  if (name == "none") return WeightingMode::kNone;
  if (name == "inv-maf") return WeightingMode::kInverseMaf;
  throw ValidationError("unknown weighting '" + name + "' (expected none or inv-maf)");
}

void KernelStore::add(std::string id, KernelMatrix k) {
  if (!kernels_.empty() && k.rows() != kernels_.front().rows())
    throw ValidationError("kernel store: kernel dimension mismatch");
  ids_.push_back(std::move(id));
  kernels_.push_back(std::move(k));
  ++computations_;
}

KernelStore precompute_gene_kernels(const GenotypeMatrix& genotypes, const GenePartition& partition,
                                    WeightingMode weighting) {
  KernelStore store;
  for (const auto& gene : partition.genes()) {
    for (Index c : gene.columns) {
      if (c >= genotypes.n_snps())
        throw ValidationError("gene '" + gene.id + "' refers to SNP column " + std::to_string(c) +
                              " beyond the genotype matrix");
    }
    const GenotypeMatrix g = genotypes.select_snps(gene.columns);
    std::optional<WeightVector> w;
    if (weighting == WeightingMode::kInverseMaf) w = inverse_maf_weights(g);
    store.add(gene.id, gene_kernel(g, w));
  }
  return store;
}

Stage1Policy Stage1Policy::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw ValidationError("stage-1 policy '" + text + "' must be fixed:<c> or bonferroni:<alpha>");
  const std::string kind = text.substr(0, colon);
  const std::string value = text.substr(colon + 1);
  double level = 0.0;
  try {
    std::size_t used = 0;
    level = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::exception&) {
    throw ValidationError("stage-1 policy '" + text + "': '" + value + "' is not a number");
  }
  if (!(level > 0.0 && level <= 1.0)) throw ValidationError("stage-1 level must lie in (0, 1]");
  if (kind == "fixed") return fixed(level);
  if (kind == "bonferroni") return bonferroni(level);
  throw ValidationError("stage-1 policy '" + text + "' must be fixed:<c> or bonferroni:<alpha>");
}

double Stage1Policy::threshold(std::size_t n_pairs) const {
  if (kind == Kind::kFixed) return level;
  return level / static_cast<double>(std::max<std::size_t>(n_pairs, 1));
}

std::string format_scan_flags(std::uint32_t flags) {
  static const std::pair<std::uint32_t, const char*> names[] = {
      {kOverallFailed, "overall_failed"},
      {kNullFitFailed, "null_fit_failed"},
      {kInteractionFailed, "interaction_failed"},
      {kFullFitFailed, "full_fit_failed"},
      {kScanDegenerateMoments, "degenerate_moments"},
      {kScanNoEfficientCorrection, "no_efficient_correction"},
  };
  std::string out;
  for (const auto& [bit, name] : names) {
    if (flags & bit) {
      if (!out.empty()) out += ';';
      out += name;
    }
  }
  return out.empty() ? "NA" : out;
}

namespace {

std::uint32_t test_flags(const TestResult& r) {
  std::uint32_t f = kScanOk;
  if (r.has_flag(kDegenerateMoments)) f |= kScanDegenerateMoments;
  if (r.has_flag(kNoEfficientCorrection)) f |= kScanNoEfficientCorrection;
  return f;
}

ScanRecord scan_pair(const Vector& y, const KernelStore& store, std::size_t i, std::size_t j, double threshold) {
  ScanRecord rec;
  rec.gene1 = store.id(i);
  rec.gene2 = store.id(j);
  rec.index1 = i;
  rec.index2 = j;
  const KernelMatrix& k1 = store.kernel(i);
  const KernelMatrix& k2 = store.kernel(j);
  const KernelMatrix k3 = interaction_kernel(k1, k2);

  try {
    const TestResult overall = overall_test(y, k1, k2, k3);
    rec.p_overall = overall.p_value;
    rec.flags |= test_flags(overall);
  } catch (const DegenerateTraitError&) {
    throw;
  } catch (const Error&) {
    rec.p_overall = std::numeric_limits<double>::quiet_NaN();
    rec.flags |= kOverallFailed;
    return rec;
  }
  if (!(rec.p_overall <= threshold)) return rec;

  const KernelSet kernels(k1, k2, k3);
  NullFit null_fit;
  try {
    null_fit = reml_fit(y, kernels, kInteractionNull);
  } catch (const Error&) {
    rec.flags |= kNullFitFailed;
    rec.p_interaction = std::numeric_limits<double>::quiet_NaN();
    return rec;
  }
  rec.components = null_fit.components;

  try {
    const TestResult inter = interaction_test(y, k1, k2, k3, null_fit);
    rec.p_interaction = inter.p_value;
    rec.flags |= test_flags(inter);
  } catch (const Error&) {
    rec.p_interaction = std::numeric_limits<double>::quiet_NaN();
    rec.flags |= kInteractionFailed;
  }

  try {
    rec.components = reml_fit(y, kernels, kFullModel).components;
  } catch (const Error&) {
    rec.flags |= kFullFitFailed;
  }
  return rec;
}

}  // namespace

ScanSummary two_stage_scan(const Vector& y, const KernelStore& store, const Stage1Policy& stage1, int threads) {
  if (store.size() < 2) throw ValidationError("scan needs at least two genes");
  if (y.size() != store.n())
    throw ValidationError("trait length " + std::to_string(y.size()) + " does not match " +
                          std::to_string(store.n()) + " individuals");
  if (!y.allFinite()) throw ValidationError("trait contains non-finite values");
  if ((y.array() - y.mean()).abs().maxCoeff() == 0.0)
    throw DegenerateTraitError();

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (std::size_t j = i + 1; j < store.size(); ++j) pairs.emplace_back(i, j);
  }

  ScanSummary summary;
  summary.stage1_threshold = stage1.threshold(pairs.size());
  summary.records.resize(pairs.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr abort;
  std::atomic<bool> stop{false};
  std::mutex abort_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < pairs.size() && !stop; k = next++) {
      try {
        summary.records[k] = scan_pair(y, store, pairs[k].first, pairs[k].second, summary.stage1_threshold);
      } catch (...) {
        std::lock_guard lock(abort_mutex);
        if (!abort) abort = std::current_exception();
        stop = true;
      }
    }
  };
  const int k = std::max(1, std::min<int>(threads, static_cast<int>(pairs.size())));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < k; ++t) pool.emplace_back(worker);
    worker();
  }
  if (abort) std::rethrow_exception(abort);

  std::sort(summary.records.begin(), summary.records.end(), [](const ScanRecord& a, const ScanRecord& b) {
    const bool an = std::isnan(a.p_overall), bn = std::isnan(b.p_overall);
    if (an != bn) return bn;
    if (!an && a.p_overall != b.p_overall) return a.p_overall < b.p_overall;
    if (a.index1 != b.index1) return a.index1 < b.index1;
    return a.index2 < b.index2;
  });
  for (const auto& r : summary.records) summary.stage2_count += r.p_interaction.has_value() ? 1 : 0;
  return summary;
}

void write_scan_results(std::ostream& out, const std::vector<ScanRecord>& records) {
  out << "gene1\tgene2\ttau1\ttau2\ttau3\tsigma2\tp_overall\tp_interaction\tflags\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : records) {
    const VarianceComponents c = r.components.value_or(VarianceComponents{nan, nan, nan, nan});
    out << r.gene1 << '\t' << r.gene2 << '\t' << format_number(c.tau1) << '\t' << format_number(c.tau2) << '\t'
        << format_number(c.tau3) << '\t' << format_number(c.sigma2) << '\t' << format_p_value(r.p_overall) << '\t'
        << format_p_value(r.p_interaction.value_or(nan)) << '\t' << format_scan_flags(r.flags) << '\n';
  }
}

std::vector<const ScanRecord*> select_edges(const std::vector<ScanRecord>& records, double p_cut) {
  std::vector<const ScanRecord*> edges;
  for (const auto& r : records) {
    if (r.p_interaction && *r.p_interaction <= p_cut) edges.push_back(&r);
  }
  return edges;
}

void export_edges(std::ostream& out, const std::vector<ScanRecord>& records, double p_cut) {
  out << "gene1\tgene2\tp_interaction\ttau3\n";
  for (const ScanRecord* r : select_edges(records, p_cut)) {
    out << r->gene1 << '\t' << r->gene2 << '\t' << format_p_value(*r->p_interaction) << '\t'
        << (r->components ? format_number(r->components->tau3) : std::string("NA")) << '\n';
  }
}

}  // namespace genekm
