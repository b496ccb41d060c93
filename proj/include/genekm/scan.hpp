#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genekm/kernels.hpp"
#include "genekm/mixed_model.hpp"

namespace genekm {

struct Gene {
  std::string id;
  std::vector<Index> columns;
};

class GenePartition {
 public:
  GenePartition() = default;
  // Throws on empty genes, duplicate gene ids, or a column used twice.
  explicit GenePartition(std::vector<Gene> genes);

  std::size_t size() const { return genes_.size(); }
  const Gene& operator[](std::size_t g) const { return genes_[g]; }
  const std::vector<Gene>& genes() const { return genes_; }

 private:
  std::vector<Gene> genes_;
};

enum class WeightingMode { kNone, kInverseMaf };
WeightingMode parse_weighting(const std::string& name);

class KernelStore {
 public:
  std::size_t size() const { return kernels_.size(); }
  const std::string& id(std::size_t g) const { return ids_[g]; }
  const KernelMatrix& kernel(std::size_t g) const { return kernels_[g]; }
  // Number of gene kernels ever computed for this store.
  std::size_t computations() const { return computations_; }
  Index n() const { return kernels_.empty() ? 0 : kernels_.front().rows(); }

  void add(std::string id, KernelMatrix k);

 private:
  std::vector<std::string> ids_;
  std::vector<KernelMatrix> kernels_;
  std::size_t computations_ = 0;
};

KernelStore precompute_gene_kernels(const GenotypeMatrix& genotypes, const GenePartition& partition,
                                    WeightingMode weighting = WeightingMode::kNone);

struct Stage1Policy {
  enum class Kind { kFixed, kBonferroni } kind = Kind::kBonferroni;
  double level = 0.05;

  static Stage1Policy fixed(double cutoff) { return {Kind::kFixed, cutoff}; }
  static Stage1Policy bonferroni(double alpha) { return {Kind::kBonferroni, alpha}; }
  // "fixed:<c>" or "bonferroni:<alpha>".
  static Stage1Policy parse(const std::string& text);

  double threshold(std::size_t n_pairs) const;
};

enum ScanFlag : std::uint32_t {
  kScanOk = 0,
  kOverallFailed = 1u << 0,
  kNullFitFailed = 1u << 1,
  kInteractionFailed = 1u << 2,
  kFullFitFailed = 1u << 3,
  kScanDegenerateMoments = 1u << 4,
  kScanNoEfficientCorrection = 1u << 5,
};
std::string format_scan_flags(std::uint32_t flags);

struct ScanRecord {
  std::string gene1;
  std::string gene2;
  std::size_t index1 = 0;
  std::size_t index2 = 0;
  // Full-model REML components; stage-2 survivors only.
  std::optional<VarianceComponents> components;
  double p_overall = 1.0;
  std::optional<double> p_interaction;
  std::uint32_t flags = kScanOk;
};

struct ScanSummary {
  std::vector<ScanRecord> records;
  double stage1_threshold = 0.0;
  std::size_t stage2_count = 0;
};

ScanSummary two_stage_scan(const Vector& y, const KernelStore& store, const Stage1Policy& stage1, int threads = 1);

// Results table with "NA" for fields that were not computed.
void write_scan_results(std::ostream& out, const std::vector<ScanRecord>& records);

// Records with p_interaction <= p_cut as (gene1, gene2, p_interaction, tau3).
std::vector<const ScanRecord*> select_edges(const std::vector<ScanRecord>& records, double p_cut);
void export_edges(std::ostream& out, const std::vector<ScanRecord>& records, double p_cut);

}  // namespace genekm
