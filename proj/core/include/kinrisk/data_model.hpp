#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kinrisk {

// Relationship of a relative to the genotyped proband of the family.
enum class Relation { parent, sibling, child };

enum class ProbandGenotype { noncarrier, het_carrier, hom_carrier };

Relation parse_relation(std::string_view text);
ProbandGenotype parse_proband_genotype(std::string_view text);

// Mendelian transmission under a dominant model.
struct MendelianRules {
  double prevalence = 0.0;  // carrier prevalence c in the population, in [0, 1)

  void validate() const;
};

// P(X = 1) for a first-degree relative of the proband. An observed relative
// genotype (0 or 1) overrides inference.
double assign_carrier_probability(Relation relation, ProbandGenotype proband,
                                  std::optional<int> relative_genotype,
                                  const MendelianRules& rules);

// One relative. config_probs is either {P(X = 1)} for the single-gene model or
// {p00, p01, p10, p11} = P(X = x, U = u) indexed by 2x + u for two genes.
struct RelativeRecord {
  std::string family_id;
  std::string relative_id;
  double y = 0.0;
  int delta = 0;
  std::vector<double> config_probs;
  std::vector<double> w;
  std::vector<double> z;
  double weight = 1.0;

  bool operator==(const RelativeRecord&) const = default;
};

// Validated, immutable collection of relatives.
class Dataset {
public:
  Dataset(std::vector<RelativeRecord> records, std::vector<std::string> w_names,
          std::vector<std::string> z_names);

  const std::vector<RelativeRecord>& records() const noexcept { return records_; }
  const RelativeRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const noexcept { return records_.size(); }

  const std::vector<std::string>& w_names() const noexcept { return w_names_; }
  const std::vector<std::string>& z_names() const noexcept { return z_names_; }
  std::size_t w_dim() const noexcept { return w_names_.size(); }
  std::size_t z_dim() const noexcept { return z_names_.size(); }

  // Sorted unique config_probs vectors present in the records.
  const std::vector<std::vector<double>>& distinct_probs() const noexcept { return distinct_probs_; }

  bool two_gene() const noexcept { return two_gene_; }

  // True when every config_probs vector is degenerate (all genotypes known).
  bool fully_genotyped() const;

  std::size_t event_count() const;

  // Distinct family ids in order of first appearance.
  std::vector<std::string> families() const;

  // Copy whose record weights are multiplied by `multipliers` (one per record).
  Dataset reweighted(std::span<const double> multipliers) const;

  Dataset subset(const std::function<bool(const RelativeRecord&)>& keep) const;

  bool operator==(const Dataset&) const = default;

private:
  std::vector<RelativeRecord> records_;
  std::vector<std::string> w_names_;
  std::vector<std::string> z_names_;
  std::vector<std::vector<double>> distinct_probs_;
  bool two_gene_ = false;
};

// Throws ValidationError unless the carrier-probability groups can identify
// the mixture: all genotypes observed, or at least two distinct groups.
void check_identifiability(const Dataset& data);

// Column mapping for CSV ingestion. Covariate columns are recognised by prefix
// and must already be numeric (categorical levels pre-encoded as indicators).
struct CsvSchema {
  std::string family_id = "family_id";
  std::string relative_id = "relative_id";
  std::string y = "y";
  std::string delta = "delta";
  std::string p_carrier = "p_carrier";
  std::string genotype = "genotype";
  std::string relation = "relation";
  std::string proband_genotype = "proband_genotype";
  std::string weight = "weight";
  std::string proband_flag = "is_proband";
  std::vector<std::string> two_gene_probs{"p_00", "p_01", "p_10", "p_11"};
  std::string w_prefix = "w_";
  std::string z_prefix = "z_";
  MendelianRules rules{};
  bool exclude_probands = false;
};

struct IngestionReport {
  std::size_t rows_read = 0;
  std::size_t dropped_missing_y = 0;
  std::size_t dropped_probands = 0;
  std::vector<std::size_t> dropped_rows;  // 1-based file rows, header = row 1

  std::string to_text() const;
};

struct ParsedDataset {
  Dataset data;
  IngestionReport report;
};

ParsedDataset parse_relatives(std::istream& in, const CsvSchema& schema = {});
ParsedDataset parse_relatives(const std::filesystem::path& path, const CsvSchema& schema = {});

// Writes the documented CSV layout with p_carrier (or p_00..p_11) columns.
// parse_relatives(write_relatives(d)) reproduces d exactly.
void write_relatives(std::ostream& out, const Dataset& data, const CsvSchema& schema = {});

// Shortest decimal representation that round-trips the double.
std::string format_double(double value);

}  // namespace kinrisk
