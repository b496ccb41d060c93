#include "genekm/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "genekm/error.hpp"
#include "genekm/format.hpp"

namespace genekm {

namespace {

struct Field {
  std::string text;
  std::size_t column;  // 1-based character column of the field start
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<Field> split(const std::string& line, char sep) {
  std::vector<Field> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    const std::string raw = line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    out.push_back({trim(raw), start + 1});
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool blank(const std::string& line) { return trim(line).empty(); }

std::ifstream open(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return in;
}

bool parse_double(const std::string& text, double& value) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

}  // namespace

GenotypeMatrix read_genotypes(std::istream& in, const std::string& name, const GenotypeLoadOptions& options) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> snps;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto header = split(line, ',');
    if (header[0].text != "id") throw ParseError(name, lineno, header[0].column, "header must start with 'id'");
    if (header.size() < 2) throw ParseError(name, lineno, line.size() + 1, "header lists no SNPs");
    std::unordered_set<std::string> seen;
    for (std::size_t c = 1; c < header.size(); ++c) {
      if (header[c].text.empty()) throw ParseError(name, lineno, header[c].column, "empty SNP id");
      if (!seen.insert(header[c].text).second)
        throw ParseError(name, lineno, header[c].column, "duplicate SNP id '" + header[c].text + "'");
      snps.push_back(header[c].text);
    }
    break;
  }
  if (snps.empty()) throw ParseError(name, lineno + 1, 1, "missing header row");

  const std::size_t l = snps.size();
  std::vector<std::string> ids;
  std::vector<std::vector<int>> rows;  // -1 marks NA
  std::unordered_set<std::string> seen_ids;
  bool any_missing = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto cells = split(line, ',');
    if (cells.size() != l + 1)
      throw ParseError(name, lineno, 1,
                       "expected " + std::to_string(l + 1) + " fields, found " + std::to_string(cells.size()));
    if (cells[0].text.empty()) throw ParseError(name, lineno, 1, "empty individual id");
    if (!seen_ids.insert(cells[0].text).second)
      throw ParseError(name, lineno, 1, "duplicate individual id '" + cells[0].text + "'");
    std::vector<int> row(l);
    for (std::size_t c = 0; c < l; ++c) {
      const Field& f = cells[c + 1];
      if (f.text == "NA") {
        if (!options.impute_missing)
          throw ParseError(name, lineno, f.column, "missing genotype (NA) for SNP '" + snps[c] +
                                                       "'; rerun with imputation enabled");
        row[c] = -1;
        any_missing = true;
      } else if (f.text == "0" || f.text == "1" || f.text == "2") {
        row[c] = f.text[0] - '0';
      } else {
        throw ParseError(name, lineno, f.column,
                         "invalid genotype '" + f.text + "' for SNP '" + snps[c] + "' (expected 0, 1, 2 or NA)");
      }
    }
    ids.push_back(cells[0].text);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(name, lineno + 1, 1, "no individuals after the header");
  if (rows.size() < 2) throw ValidationError(name + ": need at least 2 individuals");

  const Index n = static_cast<Index>(rows.size());
  GenotypeCodes codes(n, static_cast<Index>(l));
  for (std::size_t c = 0; c < l; ++c) {
    int fill = 0;
    if (any_missing) {
      std::array<int, 3> counts{0, 0, 0};
      for (const auto& r : rows) {
        if (r[c] >= 0) ++counts[r[c]];
      }
      if (counts[0] + counts[1] + counts[2] == 0)
        throw ValidationError(name + ": SNP '" + snps[c] + "' has no observed genotypes to impute from");
      fill = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    for (Index i = 0; i < n; ++i) {
      const int v = rows[i][c];
      codes(i, static_cast<Index>(c)) = static_cast<std::uint8_t>(v < 0 ? fill : v);
    }
  }
  return GenotypeMatrix(std::move(codes), std::move(snps), std::move(ids));
}

GenotypeMatrix load_genotypes(const std::string& path, const GenotypeLoadOptions& options) {
  auto in = open(path);
  return read_genotypes(in, path, options);
}

GeneMap read_gene_map(std::istream& in, const std::string& name, const GenotypeMatrix& genotypes) {
  std::unordered_map<std::string, Index> column_of;
  for (Index s = 0; s < genotypes.n_snps(); ++s) column_of.emplace(genotypes.snp_ids()[s], s);

  std::vector<Gene> genes;
  std::unordered_map<std::string, std::size_t> gene_index;
  std::unordered_map<std::string, std::string> gene_of_snp;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line) || trim(line)[0] == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 2 || f[0].text.empty() || f[1].text.empty())
      throw ParseError(name, lineno, 1, "expected 'snp_id<TAB>gene_id'");
    const std::string& snp = f[0].text;
    const std::string& gene = f[1].text;
    const auto col = column_of.find(snp);
    if (col == column_of.end())
      throw ParseError(name, lineno, f[0].column, "SNP '" + snp + "' is not in the genotype file");
    const auto [it, inserted] = gene_of_snp.emplace(snp, gene);
    if (!inserted) {
      throw ParseError(name, lineno, f[0].column,
                       "SNP '" + snp + "' is mapped more than once (genes '" + it->second + "' and '" + gene + "')");
    }
    auto g = gene_index.find(gene);
    if (g == gene_index.end()) {
      g = gene_index.emplace(gene, genes.size()).first;
      genes.push_back({gene, {}});
    }
    genes[g->second].columns.push_back(col->second);
  }
  if (genes.empty()) throw ParseError(name, lineno + 1, 1, "gene map is empty");
  GeneMap map{GenePartition(std::move(genes)), 0};
  map.unmapped = static_cast<std::size_t>(genotypes.n_snps()) - gene_of_snp.size();
  return map;
}

GeneMap load_gene_map(const std::string& path, const GenotypeMatrix& genotypes) {
  auto in = open(path);
  return read_gene_map(in, path, genotypes);
}

Vector read_trait(std::istream& in, const std::string& name, const std::vector<std::string>& individual_ids) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < individual_ids.size(); ++i) row_of.emplace(individual_ids[i], i);

  std::vector<double> values(individual_ids.size(), std::nan(""));
  std::vector<bool> filled(individual_ids.size(), false);
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
    const auto f = split(line, sep);
    if (f.size() != 2) throw ParseError(name, lineno, 1, "expected 'id<TAB>value'");
    if (first && f[0].text == "id") {
      first = false;
      continue;
    }
    first = false;
    double v = 0.0;
    if (!parse_double(f[1].text, v) || !std::isfinite(v))
      throw ParseError(name, lineno, f[1].column, "trait value '" + f[1].text + "' is not a finite number");
    const auto row = row_of.find(f[0].text);
    if (row == row_of.end())
      throw ParseError(name, lineno, f[0].column, "individual '" + f[0].text + "' is not in the genotype file");
    if (filled[row->second])
      throw ParseError(name, lineno, f[0].column, "duplicate individual id '" + f[0].text + "'");
    filled[row->second] = true;
    values[row->second] = v;
  }
  for (std::size_t i = 0; i < filled.size(); ++i) {
    if (!filled[i]) throw ValidationError(name + ": no trait value for individual '" + individual_ids[i] + "'");
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

Vector load_trait(const std::string& path, const std::vector<std::string>& individual_ids) {
  auto in = open(path);
  return read_trait(in, path, individual_ids);
}

void write_kernel_csv(std::ostream& out, const KernelMatrix& k, const std::vector<std::string>& ids) {
  if (static_cast<Index>(ids.size()) != k.rows()) throw ValidationError("kernel ids do not match its size");
  out << "id";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (Index i = 0; i < k.rows(); ++i) {
    out << ids[i];
    for (Index j = 0; j < k.cols(); ++j) out << ',' << format_number(k(i, j), 12);
    out << '\n';
  }
}

KernelMatrix read_kernel_csv(std::istream& in, const std::string& name, std::vector<std::string>* ids) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto f = split(line, ',');
    if (f[0].text != "id") throw ParseError(name, lineno, 1, "header must start with 'id'");
    for (std::size_t c = 1; c < f.size(); ++c) header.push_back(f[c].text);
    break;
  }
  const Index n = static_cast<Index>(header.size());
  if (n == 0) throw ParseError(name, lineno + 1, 1, "missing kernel header");
  KernelMatrix k(n, n);
  Index row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto f = split(line, ',');
    if (row >= n) throw ParseError(name, lineno, 1, "more rows than columns");
    if (static_cast<Index>(f.size()) != n + 1)
      throw ParseError(name, lineno, 1, "expected " + std::to_string(n + 1) + " fields");
    if (f[0].text != header[row])
      throw ParseError(name, lineno, 1, "row id '" + f[0].text + "' does not match column '" + header[row] + "'");
    for (Index j = 0; j < n; ++j) {
      double v = 0.0;
      if (!parse_double(f[j + 1].text, v)) throw ParseError(name, lineno, f[j + 1].column, "not a number");
      k(row, j) = v;
    }
    ++row;
  }
  if (row != n) throw ParseError(name, lineno + 1, 1, "kernel has fewer rows than columns");
  if (ids) *ids = std::move(header);
  return k;
}

namespace {

double to_double(const std::string& name, std::size_t lineno, const Field& f) {
  double v = 0.0;
  if (!parse_double(f.text, v) || !std::isfinite(v))
    throw ParseError(name, lineno, f.column, "'" + f.text + "' is not a finite number");
  return v;
}

long long to_integer(const std::string& name, std::size_t lineno, const Field& f) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(f.text.data(), f.text.data() + f.text.size(), v);
  if (ec != std::errc() || ptr != f.text.data() + f.text.size())
    throw ParseError(name, lineno, f.column, "'" + f.text + "' is not an integer");
  return v;
}

bool to_bool(const std::string& name, std::size_t lineno, const Field& f) {
  if (f.text == "true" || f.text == "1" || f.text == "yes") return true;
  if (f.text == "false" || f.text == "0" || f.text == "no") return false;
  throw ParseError(name, lineno, f.column, "'" + f.text + "' is not a boolean");
}

}  // namespace

StudyDescriptor read_study_descriptor(std::istream& in, const std::string& name) {
  StudyDescriptor d;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (blank(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(name, lineno, 1, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::size_t value_col = line.find_first_not_of(" \t", eq + 1);
    const Field value{trim(line.substr(eq + 1)), (value_col == std::string::npos ? eq + 1 : value_col) + 1};
    auto number = [&] { return to_double(name, lineno, value); };
    auto integer = [&] { return to_integer(name, lineno, value); };
    try {
      if (key == "methods") {
        d.methods.clear();
        for (const auto& m : split(value.text, ',')) d.methods.insert(parse_method(m.text));
      } else if (key == "tests") {
        d.run_overall = d.run_interaction = false;
        for (const auto& t : split(value.text, ',')) {
          if (t.text == "overall") d.run_overall = true;
          else if (t.text == "interaction") d.run_interaction = true;
          else throw ValidationError("unknown test '" + t.text + "' (expected overall or interaction)");
        }
      } else if (key == "n") {
        d.n = integer();
      } else if (key == "replicates") {
        d.replicates = static_cast<int>(integer());
      } else if (key == "alpha") {
        d.alpha = number();
      } else if (key == "seed") {
        d.seed = static_cast<std::uint64_t>(integer());
      } else if (key == "trait_model") {
        if (value.text == "kernel") d.trait_model = TraitModel::kKernel;
        else if (value.text == "single_snp") d.trait_model = TraitModel::kSingleSnp;
        else throw ValidationError("unknown trait_model '" + value.text + "' (expected kernel or single_snp)");
      } else if (key == "scenario") {
        apply_scenario(d, value.text);
      } else if (key == "h2") {
        d.h2 = number();
      } else if (key == "eta") {
        d.eta = number();
      } else if (key == "sigma2") {
        d.sigma2 = number();
      } else if (key == "main_ratio") {
        d.main_ratio = number();
      } else if (key == "mu") {
        d.mu = number();
      } else if (key == "coefficients") {
        const auto parts = split(value.text, ',');
        if (parts.size() != 4) throw ValidationError("coefficients needs 4 values (b0, b1, b2, b12)");
        for (std::size_t i = 0; i < 4; ++i) {
          d.coefficients[i] = to_double(name, lineno, {parts[i].text, value.column + parts[i].column - 1});
        }
      } else if (key == "snp_maf") {
        d.snp_maf = number();
      } else if (key == "snps_per_gene") {
        d.genotypes.snps_per_gene = integer();
      } else if (key == "maf_low") {
        d.genotypes.maf_low = number();
      } else if (key == "maf_high") {
        d.genotypes.maf_high = number();
      } else if (key == "ld_rho") {
        d.genotypes.ld_rho = number();
      } else if (key == "haplotype_pool") {
        d.genotypes.haplotype_pool = integer();
      } else if (key == "min_sample_maf") {
        d.genotypes.min_sample_maf = number();
      } else if (key == "fpca_threshold") {
        d.fpca_threshold = number();
      } else if (key == "run_overall") {
        d.run_overall = to_bool(name, lineno, value);
      } else if (key == "run_interaction") {
        d.run_interaction = to_bool(name, lineno, value);
      } else {
        throw ParseError(name, lineno, 1, "unknown key '" + key + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(name, lineno, value.column, e.what());
    }
  }
  d.genotypes.n = d.n;
  return d;
}

StudyDescriptor load_study_descriptor(const std::string& path) {
  auto in = open(path);
  return read_study_descriptor(in, path);
}

}  // namespace genekm
