#include "kinrisk/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "kinrisk/errors.hpp"
#include "csv_util.hpp"

namespace kinrisk {

namespace {

using namespace detail;

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() > prefix.size() && s.substr(0, prefix.size()) == prefix;
}

}  // namespace

Relation parse_relation(std::string_view text) {
  const auto t = lowercase(trim(text));
  if (t == "parent" || t == "father" || t == "mother") return Relation::parent;
  if (t == "sibling" || t == "brother" || t == "sister") return Relation::sibling;
  if (t == "child" || t == "son" || t == "daughter") return Relation::child;
  throw ValidationError("unknown relation '" + std::string(text) +
                        "' (expected parent, sibling or child)");
}

ProbandGenotype parse_proband_genotype(std::string_view text) {
  const auto t = lowercase(trim(text));
  if (t == "noncarrier" || t == "0") return ProbandGenotype::noncarrier;
  if (t == "het_carrier" || t == "het" || t == "1") return ProbandGenotype::het_carrier;
  if (t == "hom_carrier" || t == "hom" || t == "2") return ProbandGenotype::hom_carrier;
  throw ValidationError("unknown proband genotype '" + std::string(text) + "'");
}

void MendelianRules::validate() const {
  if (!(prevalence >= 0.0 && prevalence < 1.0)) {
    throw ValidationError("carrier prevalence must lie in [0, 1)");
  }
}

double assign_carrier_probability(Relation relation, ProbandGenotype proband,
                                  std::optional<int> relative_genotype,
                                  const MendelianRules& rules) {
  rules.validate();
  if (relative_genotype) {
    if (*relative_genotype != 0 && *relative_genotype != 1) {
      throw ValidationError("observed relative genotype must be 0 or 1");
    }
    return static_cast<double>(*relative_genotype);
  }
  const double c = rules.prevalence;
  switch (proband) {
    case ProbandGenotype::noncarrier:
      return c;
    case ProbandGenotype::het_carrier:
      return 0.5 * (1.0 + c);
    case ProbandGenotype::hom_carrier:
      // Both parents of a homozygote carry the allele; a sibling misses it only
      // if neither heterozygous parent transmits.
      switch (relation) {
        case Relation::parent:
        case Relation::child:
          return 1.0;
        case Relation::sibling:
          return 0.75;
      }
  }
  throw ValidationError("unhandled relation/proband genotype combination");
}

Dataset::Dataset(std::vector<RelativeRecord> records, std::vector<std::string> w_names,
                 std::vector<std::string> z_names)
    : records_(std::move(records)), w_names_(std::move(w_names)), z_names_(std::move(z_names)) {
  if (records_.empty()) throw ValidationError("dataset is empty");
  const std::size_t n_probs = records_.front().config_probs.size();
  if (n_probs != 1 && n_probs != 4) {
    throw ValidationError("config_probs must hold 1 (single gene) or 4 (two genes) entries");
  }
  two_gene_ = n_probs == 4;

  std::set<std::pair<std::string, std::string>> ids;
  std::set<std::vector<double>> distinct;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    const std::string where = "record " + std::to_string(i + 1) + " (" + r.family_id + "/" +
                              r.relative_id + ")";
    if (r.family_id.empty()) throw ValidationError(where + ": empty family_id");
    if (!ids.emplace(r.family_id, r.relative_id).second) {
      throw ValidationError(where + ": duplicate (family_id, relative_id)");
    }
    if (!(std::isfinite(r.y) && r.y > 0.0)) throw ValidationError(where + ": y must be > 0");
    if (r.delta != 0 && r.delta != 1) throw ValidationError(where + ": delta must be 0 or 1");
    if (!(std::isfinite(r.weight) && r.weight > 0.0)) {
      throw ValidationError(where + ": weight must be > 0");
    }
    if (r.config_probs.size() != n_probs) {
      throw ValidationError(where + ": inconsistent number of configuration probabilities");
    }
    double total = 0.0;
    for (double p : r.config_probs) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError(where + ": carrier probability outside [0, 1]");
      }
      total += p;
    }
    if (two_gene_ && std::abs(total - 1.0) > 1e-12) {
      throw ValidationError(where + ": configuration probabilities must sum to 1");
    }
    if (r.w.size() != w_names_.size() || r.z.size() != z_names_.size()) {
      throw ValidationError(where + ": covariate vector length differs from the dataset header");
    }
    for (double v : r.w) {
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite W covariate");
    }
    for (double v : r.z) {
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite Z covariate");
    }
    distinct.insert(r.config_probs);
  }
  distinct_probs_.assign(distinct.begin(), distinct.end());
}

bool Dataset::fully_genotyped() const {
  for (const auto& probs : distinct_probs_) {
    if (probs.size() == 1) {
      if (probs[0] != 0.0 && probs[0] != 1.0) return false;
    } else {
      const auto ones = std::count(probs.begin(), probs.end(), 1.0);
      if (ones != 1) return false;
    }
  }
  return true;
}

std::size_t Dataset::event_count() const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(),
                                                [](const auto& r) { return r.delta == 1; }));
}

std::vector<std::string> Dataset::families() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records_) {
    if (seen.insert(r.family_id).second) out.push_back(r.family_id);
  }
  return out;
}

Dataset Dataset::reweighted(std::span<const double> multipliers) const {
  if (multipliers.size() != records_.size()) {
    throw ValidationError("reweighted: one multiplier per record required");
  }
  auto copy = records_;
  for (std::size_t i = 0; i < copy.size(); ++i) copy[i].weight *= multipliers[i];
  return Dataset(std::move(copy), w_names_, z_names_);
}

Dataset Dataset::subset(const std::function<bool(const RelativeRecord&)>& keep) const {
  std::vector<RelativeRecord> kept;
  for (const auto& r : records_) {
    if (keep(r)) kept.push_back(r);
  }
  if (kept.empty()) throw ValidationError("subset selects no records");
  return Dataset(std::move(kept), w_names_, z_names_);
}

void check_identifiability(const Dataset& data) {
  if (data.fully_genotyped()) return;
  if (data.distinct_probs().size() < 2) {
    throw ValidationError(
        "identifiability: genotypes are unobserved but only one carrier-probability group is "
        "present; at least two distinct groups are required");
  }
}

std::string IngestionReport::to_text() const {
  std::ostringstream os;
  os << "rows read: " << rows_read << "\n";
  os << "dropped: " << dropped_missing_y + dropped_probands << "\n";
  os << "dropped (missing y): " << dropped_missing_y << "\n";
  os << "dropped (probands): " << dropped_probands << "\n";
  if (!dropped_rows.empty()) {
    os << "dropped rows:";
    for (auto r : dropped_rows) os << ' ' << r;
    os << "\n";
  }
  return os.str();
}

ParsedDataset parse_relatives(std::istream& in, const CsvSchema& schema) {
  schema.rules.validate();
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("input has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  std::vector<std::pair<std::string, std::size_t>> w_cols;
  std::vector<std::pair<std::string, std::size_t>> z_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string name(trim(header[j]));
    if (!col.emplace(name, j).second) throw ParseError(1, "duplicate column '" + name + "'");
    if (starts_with(name, schema.w_prefix)) w_cols.emplace_back(name.substr(schema.w_prefix.size()), j);
    if (starts_with(name, schema.z_prefix)) z_cols.emplace_back(name.substr(schema.z_prefix.size()), j);
  }
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };
  auto require = [&](const std::string& name) {
    auto idx = find(name);
    if (!idx) throw ParseError(1, "required column '" + name + "' is missing");
    return *idx;
  };

  const auto c_family = require(schema.family_id);
  const auto c_y = require(schema.y);
  const auto c_delta = require(schema.delta);
  const auto c_relative = find(schema.relative_id);
  const auto c_weight = find(schema.weight);
  const auto c_p = find(schema.p_carrier);
  const auto c_geno = find(schema.genotype);
  const auto c_relation = find(schema.relation);
  const auto c_proband = find(schema.proband_genotype);
  const auto c_flag = find(schema.proband_flag);

  std::vector<std::size_t> c_two;
  for (const auto& name : schema.two_gene_probs) {
    if (auto idx = find(name)) c_two.push_back(*idx);
  }
  const bool two_gene = c_two.size() == schema.two_gene_probs.size() && !c_two.empty();
  const bool can_infer = c_relation && c_proband;
  if (!two_gene && !c_p && !can_infer) {
    throw ParseError(1, "need a '" + schema.p_carrier + "' column, or '" + schema.genotype +
                            "' with '" + schema.relation + "' and '" + schema.proband_genotype +
                            "' columns");
  }
  if (schema.exclude_probands && !c_flag) {
    throw ParseError(1, "proband exclusion requested but column '" + schema.proband_flag +
                            "' is missing");
  }

  std::vector<std::string> w_names;
  std::vector<std::string> z_names;
  for (const auto& [name, idx] : w_cols) w_names.push_back(name);
  for (const auto& [name, idx] : z_cols) z_names.push_back(name);

  IngestionReport report;
  std::vector<RelativeRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++report.rows_read;
    std::vector<std::string> cells;
    try {
      cells = split_csv_line(line);
    } catch (const boost::escaped_list_error& e) {
      throw ParseError(row, std::string("malformed CSV: ") + e.what());
    }
    if (cells.size() != header.size()) {
      throw ParseError(row, "expected " + std::to_string(header.size()) + " cells, found " +
                                std::to_string(cells.size()));
    }

    if (schema.exclude_probands && !is_missing(cells[*c_flag]) &&
        parse_number(cells[*c_flag], row, schema.proband_flag) != 0.0) {
      ++report.dropped_probands;
      report.dropped_rows.push_back(row);
      continue;
    }
    if (is_missing(cells[c_y])) {
      ++report.dropped_missing_y;
      report.dropped_rows.push_back(row);
      continue;
    }

    RelativeRecord r;
    r.family_id = std::string(trim(cells[c_family]));
    if (r.family_id.empty()) throw ParseError(row, "empty family_id");
    r.relative_id = c_relative ? std::string(trim(cells[*c_relative])) : std::to_string(row - 1);
    r.y = parse_number(cells[c_y], row, schema.y);
    if (r.y <= 0.0) throw ParseError(row, "y must be positive");
    const double delta = parse_number(cells[c_delta], row, schema.delta);
    if (delta != 0.0 && delta != 1.0) throw ParseError(row, "delta must be 0 or 1");
    r.delta = static_cast<int>(delta);

    if (two_gene) {
      for (std::size_t k = 0; k < c_two.size(); ++k) {
        const double p = parse_number(cells[c_two[k]], row, schema.two_gene_probs[k]);
        if (!(p >= 0.0 && p <= 1.0)) {
          throw ParseError(row, "configuration probability outside [0, 1]");
        }
        r.config_probs.push_back(p);
      }
    } else if (c_p && !is_missing(cells[*c_p])) {
      const double p = parse_number(cells[*c_p], row, schema.p_carrier);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ParseError(row, schema.p_carrier + " = " + std::string(trim(cells[*c_p])) +
                                  " is outside [0, 1]");
      }
      r.config_probs = {p};
    } else {
      if (!can_infer) throw ParseError(row, "missing carrier probability and no relation data");
      std::optional<int> geno;
      if (c_geno && !is_missing(cells[*c_geno])) {
        const double g = parse_number(cells[*c_geno], row, schema.genotype);
        if (g != 0.0 && g != 1.0) throw ParseError(row, "genotype must be 0, 1 or NA");
        geno = static_cast<int>(g);
      }
      try {
        r.config_probs = {assign_carrier_probability(parse_relation(cells[*c_relation]),
                                                     parse_proband_genotype(cells[*c_proband]),
                                                     geno, schema.rules)};
      } catch (const ValidationError& e) {
        throw ParseError(row, e.what());
      }
    }

    for (const auto& [name, idx] : w_cols) r.w.push_back(parse_number(cells[idx], row, schema.w_prefix + name));
    for (const auto& [name, idx] : z_cols) r.z.push_back(parse_number(cells[idx], row, schema.z_prefix + name));
    if (c_weight && !is_missing(cells[*c_weight])) {
      r.weight = parse_number(cells[*c_weight], row, schema.weight);
      if (r.weight <= 0.0) throw ParseError(row, "weight must be positive");
    }
    records.push_back(std::move(r));
  }

  if (records.empty()) throw ValidationError("no records remain after filtering");
  return ParsedDataset{Dataset(std::move(records), std::move(w_names), std::move(z_names)),
                       std::move(report)};
}

ParsedDataset parse_relatives(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file '" + path.string() + "'");
  return parse_relatives(in, schema);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_relatives(std::ostream& out, const Dataset& data, const CsvSchema& schema) {
  out << schema.family_id << ',' << schema.relative_id << ',' << schema.y << ',' << schema.delta;
  if (data.two_gene()) {
    for (const auto& name : schema.two_gene_probs) out << ',' << name;
  } else {
    out << ',' << schema.p_carrier;
  }
  for (const auto& name : data.w_names()) out << ',' << schema.w_prefix << name;
  for (const auto& name : data.z_names()) out << ',' << schema.z_prefix << name;
  out << ',' << schema.weight << '\n';
  for (const auto& r : data.records()) {
    out << quote_if_needed(r.family_id) << ',' << quote_if_needed(r.relative_id) << ','
        << format_double(r.y) << ',' << r.delta;
    for (double p : r.config_probs) out << ',' << format_double(p);
    for (double v : r.w) out << ',' << format_double(v);
    for (double v : r.z) out << ',' << format_double(v);
    out << ',' << format_double(r.weight) << '\n';
  }
}

}  // namespace kinrisk
