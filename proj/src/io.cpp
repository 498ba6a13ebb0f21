#include "zipg/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace zipg {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) cells.push_back("");
  return cells;
}

struct DelimitedFile {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

DelimitedFile read_delimited(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  DelimitedFile out;
  std::string line;
  int line_no = 0;
  char delim = '\t';
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (out.header.empty()) {
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      out.header = split_line(line, delim);
      continue;
    }
    out.rows.push_back(split_line(line, delim));
    out.line_numbers.push_back(line_no);
    if (out.rows.back().size() != out.header.size()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": row has " +
                       std::to_string(out.rows.back().size()) + " cells, header has " +
                       std::to_string(out.header.size()));
    }
  }
  if (out.header.empty()) throw ParseError(path + ": empty file");
  return out;
}

long parse_count(const std::string& cell, const std::string& path, int line_no) {
  std::size_t pos = 0;
  long value = 0;
  try {
    value = std::stol(cell, &pos);
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": non-integer count '" + cell + "'");
  }
  if (pos != cell.size()) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": non-integer count '" + cell + "'");
  }
  if (value < 0) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": negative count " + cell);
  }
  return value;
}

double parse_real(const std::string& cell, const std::string& path, int line_no,
                  const std::string& column) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric value '" + cell +
                     "' in column " + column);
  }
  if (pos != cell.size()) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric value '" + cell +
                     "' in column " + column);
  }
  return value;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

json provenance(const RunConfig& config);

json config_to_json(const RunConfig& c) {
  return json{{"mean_cols", c.mean_cols},
              {"disp_cols", c.disp_cols},
              {"zi_cols", c.zi_cols},
              {"offset_mode", to_string(c.offset_mode)},
              {"depth_column", c.depth_column},
              {"min_pobs", c.min_pobs},
              {"max_pobs", c.max_pobs},
              {"n_bootstrap", c.n_bootstrap},
              {"seed", c.seed},
              {"workers", c.workers},
              {"alpha", c.alpha},
              {"fdr_q", c.fdr_q},
              {"joint_fdr_family", c.joint_fdr_family},
              {"test_method", to_string(c.test_method)},
              {"resample_unit", to_string(c.resample_unit)},
              {"ci_method", to_string(c.ci_method)},
              {"ci_level", c.ci_level},
              {"eps_tol", c.fit.eps_tol},
              {"t_max", c.fit.t_max},
              {"gtol", c.fit.m_step.gtol},
              {"theta_poisson_floor", theta_poisson_floor()}};
}

json provenance(const RunConfig& config) {
  return json{{"version", kVersion},
              {"seed", config.seed},
              {"config_hash", config_hash(config)},
              {"config", config_to_json(config)}};
}

double json_double(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

}  // namespace

std::string to_string(TestMethod m) {
  switch (m) {
    case TestMethod::BWald: return "bWald";
    case TestMethod::PbWald: return "pbWald";
    case TestMethod::Lrt: return "LRT";
    case TestMethod::Wald: return "Wald";
  }
  return "bWald";
}

std::string to_string(ResampleUnit u) {
  return u == ResampleUnit::Measurement ? "measurement" : "subject";
}

std::string to_string(CiMethod m) {
  switch (m) {
    case CiMethod::Normal: return "normal";
    case CiMethod::Quantile: return "quantile";
    case CiMethod::Bca: return "bca";
  }
  return "normal";
}

std::string to_string(OffsetMode m) {
  switch (m) {
    case OffsetMode::LogDepth: return "depth";
    case OffsetMode::LogMedianOfRatios: return "median-ratios";
    case OffsetMode::None: return "none";
  }
  return "depth";
}

TestMethod test_method_from_string(const std::string& s) {
  if (s == "bWald" || s == "bwald") return TestMethod::BWald;
  if (s == "pbWald" || s == "pbwald") return TestMethod::PbWald;
  if (s == "LRT" || s == "lrt") return TestMethod::Lrt;
  if (s == "Wald" || s == "wald") return TestMethod::Wald;
  throw Error("unknown test method '" + s + "'");
}

ResampleUnit resample_unit_from_string(const std::string& s) {
  if (s == "measurement") return ResampleUnit::Measurement;
  if (s == "subject") return ResampleUnit::Subject;
  throw Error("unknown resample unit '" + s + "'");
}

CiMethod ci_method_from_string(const std::string& s) {
  if (s == "normal") return CiMethod::Normal;
  if (s == "quantile") return CiMethod::Quantile;
  if (s == "bca") return CiMethod::Bca;
  throw Error("unknown confidence interval method '" + s + "'");
}

OffsetMode offset_mode_from_string(const std::string& s) {
  if (s == "depth") return OffsetMode::LogDepth;
  if (s == "median-ratios") return OffsetMode::LogMedianOfRatios;
  if (s == "none") return OffsetMode::None;
  throw Error("unknown offset mode '" + s + "'");
}

double TaxaTable::observed_zero_proportion(int taxon) const {
  long zeros = 0;
  for (long w : counts[taxon]) {
    if (w == 0) ++zeros;
  }
  return static_cast<double>(zeros) / static_cast<double>(counts[taxon].size());
}

LongitudinalDataset LoadedData::dataset_for_taxon(int taxon) const {
  LongitudinalDataset data = shared;
  data.counts.assign(table.counts[taxon].begin(), table.counts[taxon].end());
  return data;
}

LoadedData load_dataset(const std::string& counts_path, const std::string& covariates_path,
                        const RunConfig& config) {
  const DelimitedFile counts_file = read_delimited(counts_path);
  if (counts_file.header.size() < 2) {
    throw ParseError(counts_path + ": need a taxon-name column plus at least one sample");
  }

  LoadedData out;
  out.table.sample_ids.assign(counts_file.header.begin() + 1, counts_file.header.end());
  {
    std::unordered_set<std::string> seen;
    for (const auto& id : out.table.sample_ids) {
      if (!seen.insert(id).second) {
        throw ParseError(counts_path + ": duplicated sample id '" + id + "' in header");
      }
    }
  }
  const int n_samples = out.table.n_samples();

  std::unordered_set<std::string> taxa_seen;
  for (std::size_t r = 0; r < counts_file.rows.size(); ++r) {
    const auto& row = counts_file.rows[r];
    const int line_no = counts_file.line_numbers[r];
    if (!taxa_seen.insert(row[0]).second) {
      throw ParseError(counts_path + ":" + std::to_string(line_no) + ": duplicated taxon '" +
                       row[0] + "'");
    }
    out.table.taxa.push_back(row[0]);
    std::vector<long> w(n_samples);
    for (int j = 0; j < n_samples; ++j) {
      w[j] = parse_count(row[j + 1], counts_path, line_no);
    }
    out.table.counts.push_back(std::move(w));
  }
  if (out.table.taxa.empty()) throw ParseError(counts_path + ": no taxa rows");

  // Covariates, keyed by sample id.
  const DelimitedFile cov_file = read_delimited(covariates_path);
  auto column_index = [&](const std::string& name) -> int {
    for (std::size_t j = 0; j < cov_file.header.size(); ++j) {
      if (cov_file.header[j] == name) return static_cast<int>(j);
    }
    return -1;
  };
  const int subject_col = column_index("subject");
  const int sample_col = column_index("sample");
  if (subject_col < 0 || sample_col < 0) {
    throw ParseError(covariates_path + ": header must contain 'subject' and 'sample' columns");
  }
  std::unordered_map<std::string, int> cov_row_of;
  for (std::size_t r = 0; r < cov_file.rows.size(); ++r) {
    const auto& id = cov_file.rows[r][sample_col];
    if (!cov_row_of.emplace(id, static_cast<int>(r)).second) {
      throw ParseError(covariates_path + ":" + std::to_string(cov_file.line_numbers[r]) +
                       ": duplicated sample id '" + id + "'");
    }
  }

  auto require_column = [&](const std::string& name) {
    const int j = column_index(name);
    if (j < 0) {
      throw ParseError(covariates_path + ": covariate column '" + name + "' not found");
    }
    return j;
  };

  out.spec.d1 = static_cast<int>(config.mean_cols.size());
  out.spec.d2 = static_cast<int>(config.disp_cols.size());
  out.spec.d3 = static_cast<int>(config.zi_cols.size());
  out.spec.offset_mode = config.offset_mode;
  out.spec.variant = config.zi_cols.empty() ? Variant::Zipg : Variant::ZipgFull;

  std::vector<int> mean_idx, disp_idx, zi_idx;
  for (const auto& c : config.mean_cols) mean_idx.push_back(require_column(c));
  for (const auto& c : config.disp_cols) disp_idx.push_back(require_column(c));
  for (const auto& c : config.zi_cols) zi_idx.push_back(require_column(c));
  const int depth_idx = config.depth_column.empty() ? -1 : require_column(config.depth_column);

  // Join in counts-column order; subjects indexed by first appearance.
  LongitudinalDataset& shared = out.shared;
  shared.mean_covariates.resize(n_samples, out.spec.d1);
  if (out.spec.d3 > 0) shared.zi_covariates.emplace(n_samples, out.spec.d3);
  shared.depths.resize(n_samples);
  shared.subject_of.resize(n_samples);

  std::unordered_map<std::string, int> subject_index;
  std::vector<std::vector<double>> disp_values;  // per subject, from first row seen
  for (int j = 0; j < n_samples; ++j) {
    const std::string& id = out.table.sample_ids[j];
    const auto it = cov_row_of.find(id);
    if (it == cov_row_of.end()) {
      throw ParseError(covariates_path + ": no covariate row for sample id '" + id + "'");
    }
    const auto& row = cov_file.rows[it->second];
    const int line_no = cov_file.line_numbers[it->second];

    const std::string& subject_id = row[subject_col];
    auto [sit, inserted] = subject_index.emplace(subject_id,
                                                 static_cast<int>(out.subject_ids.size()));
    if (inserted) {
      out.subject_ids.push_back(subject_id);
      disp_values.emplace_back();
    }
    const int s = sit->second;
    shared.subject_of[j] = s;

    for (std::size_t c = 0; c < mean_idx.size(); ++c) {
      shared.mean_covariates(j, static_cast<int>(c)) =
          parse_real(row[mean_idx[c]], covariates_path, line_no, cov_file.header[mean_idx[c]]);
    }
    for (std::size_t c = 0; c < zi_idx.size(); ++c) {
      (*shared.zi_covariates)(j, static_cast<int>(c)) =
          parse_real(row[zi_idx[c]], covariates_path, line_no, cov_file.header[zi_idx[c]]);
    }
    std::vector<double> disp_row(disp_idx.size());
    for (std::size_t c = 0; c < disp_idx.size(); ++c) {
      disp_row[c] =
          parse_real(row[disp_idx[c]], covariates_path, line_no, cov_file.header[disp_idx[c]]);
    }
    if (disp_values[s].empty()) {
      disp_values[s] = disp_row;
    } else {
      for (std::size_t c = 0; c < disp_idx.size(); ++c) {
        if (std::fabs(disp_values[s][c] - disp_row[c]) > 1e-12) {
          throw ParseError(covariates_path + ":" + std::to_string(line_no) +
                           ": dispersion covariate '" + cov_file.header[disp_idx[c]] +
                           "' varies within subject '" + subject_id + "'");
        }
      }
    }

    if (depth_idx >= 0) {
      const double m =
          parse_real(row[depth_idx], covariates_path, line_no, cov_file.header[depth_idx]);
      if (!(m > 0.0)) {
        throw ParseError(covariates_path + ":" + std::to_string(line_no) +
                         ": non-positive depth for sample '" + id + "'");
      }
      shared.depths[j] = m;
    }
  }

  const int n_subjects = static_cast<int>(out.subject_ids.size());
  shared.disp_covariates.resize(n_subjects, out.spec.d2);
  for (int s = 0; s < n_subjects; ++s) {
    for (int c = 0; c < out.spec.d2; ++c) shared.disp_covariates(s, c) = disp_values[s][c];
  }

  if (depth_idx < 0) {
    // M_ij = column sums of the full taxa table.
    for (int j = 0; j < n_samples; ++j) {
      double sum = 0.0;
      for (int t = 0; t < out.table.n_taxa(); ++t) sum += out.table.counts[t][j];
      if (!(sum > 0.0)) {
        throw ParseError(counts_path + ": sample '" + out.table.sample_ids[j] +
                         "' has zero total count; cannot form the depth offset");
      }
      shared.depths[j] = sum;
    }
  }

  if (config.offset_mode == OffsetMode::LogMedianOfRatios) {
    // DESeq-style size factors from taxa with all-positive counts.
    std::vector<int> reference_taxa;
    std::vector<double> log_geomean;
    for (int t = 0; t < out.table.n_taxa(); ++t) {
      bool all_positive = true;
      double sum_log = 0.0;
      for (int j = 0; j < n_samples; ++j) {
        if (out.table.counts[t][j] <= 0) {
          all_positive = false;
          break;
        }
        sum_log += std::log(static_cast<double>(out.table.counts[t][j]));
      }
      if (all_positive) {
        reference_taxa.push_back(t);
        log_geomean.push_back(sum_log / n_samples);
      }
    }
    if (reference_taxa.empty()) {
      throw Error("median-of-ratios offset: no taxon has all-positive counts");
    }
    Eigen::VectorXd sf(n_samples);
    std::vector<double> ratios(reference_taxa.size());
    for (int j = 0; j < n_samples; ++j) {
      for (std::size_t t = 0; t < reference_taxa.size(); ++t) {
        ratios[t] = std::log(static_cast<double>(out.table.counts[reference_taxa[t]][j])) -
                    log_geomean[t];
      }
      std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
      double median = ratios[ratios.size() / 2];
      if (ratios.size() % 2 == 0) {
        const double upper = median;
        std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2 - 1, ratios.end());
        median = 0.5 * (ratios[ratios.size() / 2 - 1] + upper);
      }
      sf[j] = std::exp(median);
    }
    shared.size_factors = sf;
  }
  return out;
}

FilterResult filter_taxa(const TaxaTable& table, double min_pobs, double max_pobs) {
  if (!(min_pobs >= 0.0 && min_pobs < max_pobs && max_pobs <= 1.0)) {
    throw Error("filter_taxa: need 0 <= min_pobs < max_pobs <= 1");
  }
  FilterResult out;
  out.kept.sample_ids = table.sample_ids;
  for (int t = 0; t < table.n_taxa(); ++t) {
    const double p_obs = table.observed_zero_proportion(t);
    if (p_obs <= min_pobs) {
      out.excluded.push_back({table.taxa[t], p_obs,
                              "p_obs <= " + format_double(min_pobs) +
                                  " (little or no zero inflation)"});
    } else if (p_obs >= max_pobs) {
      out.excluded.push_back({table.taxa[t], p_obs,
                              "p_obs >= " + format_double(max_pobs) +
                                  " (extremely low abundance)"});
    } else {
      out.kept.taxa.push_back(table.taxa[t]);
      out.kept.counts.push_back(table.counts[t]);
    }
  }
  return out;
}

std::string config_hash(const RunConfig& config) {
  const std::string dump = config_to_json(config).dump();
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : dump) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

void write_fit_records(const std::string& stem, const std::vector<FitRecord>& records,
                       const RunConfig& config) {
  std::string tsv = "taxon\tcoefficient\testimate\tloglik\tbic\taic\tn_em_iterations\t"
                    "converged\tp_obs\n";
  json arr = json::array();
  for (const auto& r : records) {
    for (std::size_t c = 0; c < r.coefficients.size(); ++c) {
      tsv += r.taxon + "\t" + r.coefficients[c] + "\t" + format_double(r.estimates[c]) + "\t" +
             format_double(r.loglik) + "\t" + format_double(r.bic) + "\t" +
             format_double(r.aic) + "\t" + std::to_string(r.n_em_iterations) + "\t" +
             (r.converged ? "true" : "false") + "\t" + format_double(r.p_obs) + "\n";
    }
    arr.push_back(json{{"taxon", r.taxon},
                       {"coefficients", r.coefficients},
                       {"estimates", r.estimates},
                       {"loglik", r.loglik},
                       {"bic", r.bic},
                       {"aic", r.aic},
                       {"n_em_iterations", r.n_em_iterations},
                       {"converged", r.converged},
                       {"p_obs", r.p_obs},
                       {"warnings", r.warnings}});
  }
  write_text(stem + ".tsv", tsv);
  write_text(stem + ".json",
             json{{"provenance", provenance(config)}, {"records", arr}}.dump(2) + "\n");
}

std::vector<FitRecord> load_fit_records(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error("cannot open " + json_path);
  const json doc = json::parse(in);
  std::vector<FitRecord> records;
  for (const auto& j : doc.at("records")) {
    FitRecord r;
    r.taxon = j.at("taxon").get<std::string>();
    r.coefficients = j.at("coefficients").get<std::vector<std::string>>();
    r.estimates = j.at("estimates").get<std::vector<double>>();
    r.loglik = json_double(j.at("loglik"));
    r.bic = json_double(j.at("bic"));
    r.aic = json_double(j.at("aic"));
    r.n_em_iterations = j.at("n_em_iterations").get<int>();
    r.converged = j.at("converged").get<bool>();
    r.p_obs = json_double(j.at("p_obs"));
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    records.push_back(std::move(r));
  }
  return records;
}

void write_test_records(const std::string& stem, const std::vector<TestRecord>& records,
                        const RunConfig& config) {
  std::string tsv =
      "taxon\tcoefficient\tfamily\testimate\tboot_se\tci_lo\tci_hi\tp\tq\tmethod\n";
  json arr = json::array();
  for (const auto& r : records) {
    tsv += r.taxon + "\t" + r.coefficient + "\t" + r.family + "\t" +
           format_double(r.estimate) + "\t" + format_double(r.boot_se) + "\t" +
           format_double(r.ci_lo) + "\t" + format_double(r.ci_hi) + "\t" +
           format_double(r.p) + "\t" + format_double(r.q) + "\t" + r.method + "\n";
    arr.push_back(json{{"taxon", r.taxon},
                       {"coefficient", r.coefficient},
                       {"family", r.family},
                       {"estimate", r.estimate},
                       {"boot_se", r.boot_se},
                       {"ci_lo", r.ci_lo},
                       {"ci_hi", r.ci_hi},
                       {"p", r.p},
                       {"q", r.q},
                       {"method", r.method}});
  }
  write_text(stem + ".tsv", tsv);
  write_text(stem + ".json",
             json{{"provenance", provenance(config)}, {"records", arr}}.dump(2) + "\n");
}

std::vector<TestRecord> load_test_records(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error("cannot open " + json_path);
  const json doc = json::parse(in);
  std::vector<TestRecord> records;
  for (const auto& j : doc.at("records")) {
    TestRecord r;
    r.taxon = j.at("taxon").get<std::string>();
    r.coefficient = j.at("coefficient").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.estimate = json_double(j.at("estimate"));
    r.boot_se = json_double(j.at("boot_se"));
    r.ci_lo = json_double(j.at("ci_lo"));
    r.ci_hi = json_double(j.at("ci_hi"));
    r.p = json_double(j.at("p"));
    r.q = json_double(j.at("q"));
    r.method = j.at("method").get<std::string>();
    records.push_back(std::move(r));
  }
  return records;
}

void write_gof_records(const std::string& stem, const std::vector<GofRecord>& records,
                       const RunConfig& config) {
  std::string tsv = "taxon\tks_statistic\tks_p\tquantile\tobserved\tpredicted\n";
  json arr = json::array();
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.quantile_grid.size(); ++i) {
      tsv += r.taxon + "\t" + format_double(r.ks_statistic) + "\t" + format_double(r.ks_p) +
             "\t" + format_double(r.quantile_grid[i]) + "\t" +
             format_double(r.observed_quantiles[i]) + "\t" +
             format_double(r.predicted_quantiles[i]) + "\n";
    }
    arr.push_back(json{{"taxon", r.taxon},
                       {"ks_statistic", r.ks_statistic},
                       {"ks_p", r.ks_p},
                       {"quantile_grid", r.quantile_grid},
                       {"observed_quantiles", r.observed_quantiles},
                       {"predicted_quantiles", r.predicted_quantiles}});
  }
  write_text(stem + ".tsv", tsv);
  write_text(stem + ".json",
             json{{"provenance", provenance(config)}, {"records", arr}}.dump(2) + "\n");
}

std::vector<GofRecord> load_gof_records(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error("cannot open " + json_path);
  const json doc = json::parse(in);
  std::vector<GofRecord> records;
  for (const auto& j : doc.at("records")) {
    GofRecord r;
    r.taxon = j.at("taxon").get<std::string>();
    r.ks_statistic = json_double(j.at("ks_statistic"));
    r.ks_p = json_double(j.at("ks_p"));
    r.quantile_grid = j.at("quantile_grid").get<std::vector<double>>();
    r.observed_quantiles = j.at("observed_quantiles").get<std::vector<double>>();
    r.predicted_quantiles = j.at("predicted_quantiles").get<std::vector<double>>();
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

json scenario_to_json(const ScenarioConfig& s) {
  const char* generator = s.generator == GeneratorKind::Zipg
                              ? "zipg"
                              : (s.generator == GeneratorKind::Pg ? "pg" : "zi-beta-binomial");
  const char* depth_model = s.depth_model == DepthModel::LogNormal
                                ? "log-normal"
                                : (s.depth_model == DepthModel::Constant ? "constant"
                                                                         : "empirical-file");
  return json{{"n_subjects", s.n_subjects},
              {"measurements_per_subject", s.measurements_per_subject},
              {"include_x2", s.include_x2},
              {"x2_noise_var", s.x2_noise_var},
              {"beta0", s.beta0},
              {"beta", std::vector<double>(s.beta.begin(), s.beta.end())},
              {"beta_star0", s.beta_star0},
              {"beta_star", std::vector<double>(s.beta_star.begin(), s.beta_star.end())},
              {"gamma", std::vector<double>(s.gamma.begin(), s.gamma.end())},
              {"generator", generator},
              {"depth_model", depth_model},
              {"depth_log_mean", s.depth_log_mean},
              {"depth_log_sd", s.depth_log_sd},
              {"constant_depth", s.constant_depth},
              {"empirical_depths", s.empirical_depths},
              {"seed", s.seed}};
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig s;
  s.n_subjects = j.at("n_subjects").get<int>();
  s.measurements_per_subject = j.at("measurements_per_subject").get<std::vector<int>>();
  s.include_x2 = j.at("include_x2").get<bool>();
  s.x2_noise_var = j.at("x2_noise_var").get<double>();
  s.beta0 = j.at("beta0").get<double>();
  const auto beta = j.at("beta").get<std::vector<double>>();
  s.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), beta.size());
  s.beta_star0 = j.at("beta_star0").get<double>();
  const auto beta_star = j.at("beta_star").get<std::vector<double>>();
  s.beta_star = Eigen::Map<const Eigen::VectorXd>(beta_star.data(), beta_star.size());
  const auto gamma = j.at("gamma").get<std::vector<double>>();
  s.gamma = Eigen::Map<const Eigen::VectorXd>(gamma.data(), gamma.size());
  const auto generator = j.at("generator").get<std::string>();
  if (generator == "zipg") {
    s.generator = GeneratorKind::Zipg;
  } else if (generator == "pg") {
    s.generator = GeneratorKind::Pg;
  } else if (generator == "zi-beta-binomial") {
    s.generator = GeneratorKind::ZiBetaBinomial;
  } else {
    throw Error("unknown generator '" + generator + "'");
  }
  const auto depth_model = j.at("depth_model").get<std::string>();
  if (depth_model == "log-normal") {
    s.depth_model = DepthModel::LogNormal;
  } else if (depth_model == "constant") {
    s.depth_model = DepthModel::Constant;
  } else if (depth_model == "empirical-file") {
    s.depth_model = DepthModel::EmpiricalFile;
  } else {
    throw Error("unknown depth model '" + depth_model + "'");
  }
  s.depth_log_mean = j.at("depth_log_mean").get<double>();
  s.depth_log_sd = j.at("depth_log_sd").get<double>();
  s.constant_depth = j.at("constant_depth").get<double>();
  s.empirical_depths = j.at("empirical_depths").get<std::vector<double>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void write_experiment_config(const std::string& json_path, const ExperimentConfig& config) {
  json tests = json::array();
  for (const auto& t : config.tests) {
    tests.push_back(json{{"method", to_string(t.method)}, {"coordinate", t.coordinate}});
  }
  const json doc{{"scenario", scenario_to_json(config.scenario)},
                 {"n_replicates", config.n_replicates},
                 {"n_bootstrap", config.n_bootstrap},
                 {"tests", tests},
                 {"alpha", config.alpha},
                 {"ci_level", config.ci_level},
                 {"ci_method", to_string(config.ci_method)},
                 {"resample_unit", to_string(config.resample_unit)},
                 {"workers", config.workers}};
  write_text(json_path, doc.dump(2) + "\n");
}

ExperimentConfig load_experiment_config(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error("cannot open " + json_path);
  const json doc = json::parse(in);
  ExperimentConfig config;
  config.scenario = scenario_from_json(doc.at("scenario"));
  config.n_replicates = doc.at("n_replicates").get<int>();
  config.n_bootstrap = doc.at("n_bootstrap").get<int>();
  for (const auto& t : doc.at("tests")) {
    config.tests.push_back(ExperimentTest{
        test_method_from_string(t.at("method").get<std::string>()),
        t.at("coordinate").get<int>()});
  }
  config.alpha = doc.at("alpha").get<double>();
  config.ci_level = doc.at("ci_level").get<double>();
  config.ci_method = ci_method_from_string(doc.at("ci_method").get<std::string>());
  config.resample_unit = resample_unit_from_string(doc.at("resample_unit").get<std::string>());
  config.workers = doc.at("workers").get<int>();
  return config;
}

void write_summary(const std::string& stem, const MonteCarloSummary& summary,
                   const ExperimentConfig& config) {
  std::string tsv = "coordinate\ttruth\tavg_bias\tbias_se\tavg_se\trmse\tcoverage\n";
  json coords = json::array();
  for (const auto& c : summary.coordinates) {
    tsv += c.name + "\t" + format_double(c.truth) + "\t" + format_double(c.avg_bias) + "\t" +
           format_double(c.bias_se) + "\t" + format_double(c.avg_se) + "\t" +
           format_double(c.rmse) + "\t" + format_double(c.coverage) + "\n";
    coords.push_back(json{{"name", c.name},
                          {"truth", c.truth},
                          {"avg_bias", c.avg_bias},
                          {"bias_se", c.bias_se},
                          {"avg_se", c.avg_se},
                          {"rmse", c.rmse},
                          {"coverage", c.coverage}});
  }
  tsv += "\ntest\tcoordinate\trejection_rate\n";
  json tests = json::array();
  for (const auto& t : summary.tests) {
    tsv += to_string(t.test.method) + "\t" + std::to_string(t.test.coordinate) + "\t" +
           format_double(t.rejection_rate) + "\n";
    tests.push_back(json{{"method", to_string(t.test.method)},
                         {"coordinate", t.test.coordinate},
                         {"rejection_rate", t.rejection_rate}});
  }
  const json doc{{"coordinates", coords},
                 {"tests", tests},
                 {"avg_observed_zero_proportion", summary.avg_observed_zero_proportion},
                 {"n_replicates", summary.n_replicates},
                 {"n_failed", summary.n_failed}};
  write_experiment_config(stem + ".config.json", config);
  write_text(stem + ".tsv", tsv);
  write_text(stem + ".json", doc.dump(2) + "\n");
}

MonteCarloSummary load_summary(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error("cannot open " + json_path);
  const json doc = json::parse(in);
  MonteCarloSummary summary;
  for (const auto& j : doc.at("coordinates")) {
    CoordinateSummary c;
    c.name = j.at("name").get<std::string>();
    c.truth = json_double(j.at("truth"));
    c.avg_bias = json_double(j.at("avg_bias"));
    c.bias_se = json_double(j.at("bias_se"));
    c.avg_se = json_double(j.at("avg_se"));
    c.rmse = json_double(j.at("rmse"));
    c.coverage = json_double(j.at("coverage"));
    summary.coordinates.push_back(std::move(c));
  }
  for (const auto& j : doc.at("tests")) {
    TestRateSummary t;
    t.test.method = test_method_from_string(j.at("method").get<std::string>());
    t.test.coordinate = j.at("coordinate").get<int>();
    t.rejection_rate = json_double(j.at("rejection_rate"));
    summary.tests.push_back(t);
  }
  summary.avg_observed_zero_proportion = json_double(doc.at("avg_observed_zero_proportion"));
  summary.n_replicates = doc.at("n_replicates").get<int>();
  summary.n_failed = doc.at("n_failed").get<int>();
  return summary;
}

}  // namespace zipg
