#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "genekm/kernels.hpp"
#include "genekm/scan.hpp"
#include "genekm/simulate.hpp"

namespace genekm {

struct GenotypeLoadOptions {
  // Replace "NA" with the most frequent observed code of that SNP.
  bool impute_missing = false;
};

// CSV: header "id,<snp ids...>", then one row per individual with codes 0/1/2 or NA.
GenotypeMatrix read_genotypes(std::istream& in, const std::string& name, const GenotypeLoadOptions& options = {});
GenotypeMatrix load_genotypes(const std::string& path, const GenotypeLoadOptions& options = {});

struct GeneMap {
  GenePartition partition;
  // SNPs of the genotype file that no line of the map mentions.
  std::size_t unmapped = 0;
};

// Tab-separated "snp_id<TAB>gene_id" lines; '#' starts a comment.
GeneMap read_gene_map(std::istream& in, const std::string& name, const GenotypeMatrix& genotypes);
GeneMap load_gene_map(const std::string& path, const GenotypeMatrix& genotypes);

// "id<sep>value" lines (tab or comma), optional header starting with "id".
// The result follows the order of `individual_ids`.
Vector read_trait(std::istream& in, const std::string& name, const std::vector<std::string>& individual_ids);
Vector load_trait(const std::string& path, const std::vector<std::string>& individual_ids);

// Kernel CSV with an id header row and an id column, values printed with 12
// significant digits.
void write_kernel_csv(std::ostream& out, const KernelMatrix& k, const std::vector<std::string>& ids);
KernelMatrix read_kernel_csv(std::istream& in, const std::string& name, std::vector<std::string>* ids = nullptr);

// "key = value" lines; see README for the keys.
StudyDescriptor read_study_descriptor(std::istream& in, const std::string& name);
StudyDescriptor load_study_descriptor(const std::string& path);

}  // namespace genekm
