// Data ingestion, run configuration, and result serialization.
//
// Inputs are UTF-8 delimited text (tab or comma, header row required).
// Results go out twice: a human-readable TSV table and a structured
// JSON record with full provenance (config hash, seed, version), which
// round-trips losslessly through the loaders below.
#ifndef ZIPG_IO_HPP
#define ZIPG_IO_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zipg/inference.hpp"
#include "zipg/model.hpp"
#include "zipg/simulation.hpp"

namespace zipg {

inline constexpr const char* kVersion = "0.1.0";

struct ParseError : Error {
  using Error::Error;
};

// Taxa-by-sample count table.
struct TaxaTable {
  std::vector<std::string> taxa;
  std::vector<std::string> sample_ids;
  std::vector<std::vector<long>> counts;  // [taxon][sample]

  int n_taxa() const { return static_cast<int>(taxa.size()); }
  int n_samples() const { return static_cast<int>(sample_ids.size()); }
  double observed_zero_proportion(int taxon) const;
};

struct RunConfig {
  std::vector<std::string> mean_cols;
  std::vector<std::string> disp_cols;
  std::vector<std::string> zi_cols;   // nonempty selects zipg-full
  OffsetMode offset_mode = OffsetMode::LogDepth;
  std::string depth_column;           // covariate column holding M_ij; empty = column sums
  double min_pobs = 0.1;
  double max_pobs = 0.9;
  int n_bootstrap = 200;
  std::uint64_t seed = 1;
  int workers = 1;
  double alpha = 0.05;
  double fdr_q = 0.05;
  bool joint_fdr_family = false;      // adjust mean and dispersion p-values together
  TestMethod test_method = TestMethod::BWald;
  ResampleUnit resample_unit = ResampleUnit::Measurement;
  CiMethod ci_method = CiMethod::Normal;
  double ci_level = 0.95;
  FitSettings fit;
};

// Joined counts + covariates, ready to expand per taxon.
struct LoadedData {
  TaxaTable table;
  std::vector<std::string> subject_ids;   // subject index -> id
  LongitudinalDataset shared;             // counts left empty
  ModelSpec spec;

  LongitudinalDataset dataset_for_taxon(int taxon) const;
};

// Parses and joins the two input files. Counts file: first column is
// the taxon name, remaining header cells are sample ids. Covariates
// file: columns "subject", "sample", plus named numeric covariates.
// Depths default to the column sums of the full taxa table.
LoadedData load_dataset(const std::string& counts_path, const std::string& covariates_path,
                        const RunConfig& config);

struct ExcludedTaxon {
  std::string taxon;
  double p_obs = 0.0;
  std::string reason;
};

struct FilterResult {
  TaxaTable kept;
  std::vector<ExcludedTaxon> excluded;
};

// Keeps taxa whose observed zero proportion lies strictly inside
// (min_pobs, max_pobs).
FilterResult filter_taxa(const TaxaTable& table, double min_pobs, double max_pobs);

// --- result records -------------------------------------------------

struct FitRecord {
  std::string taxon;
  std::vector<std::string> coefficients;
  std::vector<double> estimates;
  double loglik = 0.0;
  double bic = 0.0;
  double aic = 0.0;
  int n_em_iterations = 0;
  bool converged = false;
  double p_obs = 0.0;
  std::vector<std::string> warnings;

  bool operator==(const FitRecord&) const = default;
};

struct TestRecord {
  std::string taxon;
  std::string coefficient;
  std::string family;  // "mean" or "dispersion"
  double estimate = 0.0;
  double boot_se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p = 1.0;
  double q = 1.0;
  std::string method;

  bool operator==(const TestRecord&) const = default;
};

struct GofRecord {
  std::string taxon;
  double ks_statistic = 0.0;
  double ks_p = 1.0;
  std::vector<double> quantile_grid;
  std::vector<double> observed_quantiles;
  std::vector<double> predicted_quantiles;

  bool operator==(const GofRecord&) const = default;
};

// FNV-1a over the canonical JSON dump of the config.
std::string config_hash(const RunConfig& config);

// Writers emit <stem>.tsv and <stem>.json; loaders read the JSON back.
void write_fit_records(const std::string& stem, const std::vector<FitRecord>& records,
                       const RunConfig& config);
std::vector<FitRecord> load_fit_records(const std::string& json_path);

void write_test_records(const std::string& stem, const std::vector<TestRecord>& records,
                        const RunConfig& config);
std::vector<TestRecord> load_test_records(const std::string& json_path);

void write_gof_records(const std::string& stem, const std::vector<GofRecord>& records,
                       const RunConfig& config);
std::vector<GofRecord> load_gof_records(const std::string& json_path);

void write_summary(const std::string& stem, const MonteCarloSummary& summary,
                   const ExperimentConfig& config);
MonteCarloSummary load_summary(const std::string& json_path);

// Experiment description files for the simulate subcommand.
ExperimentConfig load_experiment_config(const std::string& json_path);
void write_experiment_config(const std::string& json_path, const ExperimentConfig& config);

// Enum <-> string helpers shared by the CLI and serializers.
std::string to_string(TestMethod m);
std::string to_string(ResampleUnit u);
std::string to_string(CiMethod m);
std::string to_string(OffsetMode m);
TestMethod test_method_from_string(const std::string& s);
ResampleUnit resample_unit_from_string(const std::string& s);
CiMethod ci_method_from_string(const std::string& s);
OffsetMode offset_mode_from_string(const std::string& s);

}  // namespace zipg

#endif
