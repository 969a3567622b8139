#pragma once

// CSV ingestion, key-value run configuration and JSON/CSV reports.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "crm/inference.hpp"
#include "crm/nonparametric.hpp"
#include "crm/simulation.hpp"

namespace crm::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Datasets

/// CSV with a header containing `time` and `status` plus the requested
/// covariate columns. Lines starting with '#' are comments. Rows are numbered
/// from 1 at the header; comment and blank lines are not counted.
Dataset load_dataset(std::istream& in, const std::vector<std::string>& covariates = {});
Dataset load_dataset(const std::filesystem::path& path, const std::vector<std::string>& covariates = {});

void write_dataset(std::ostream& out, const Dataset& data);

/// Generic CSV table: header plus string cells. Used to read back exported files.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;
};
CsvTable read_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Key-value configuration

/// `key = value` lines; '#' starts a comment; keys are unique.
std::map<std::string, std::string> parse_key_values(std::istream& in);

struct SimulationRun {
  enum class Mode { Dataset, Study };
  Mode mode = Mode::Study;
  SimConfig config;
  std::vector<std::size_t> sample_sizes;  // study mode may sweep several n
  std::string dataset_prefix = "sim";     // dataset mode: <prefix>_rep<k>.csv
  std::string summary;                    // study mode CSV path; empty means stdout
};

SimulationRun simulation_run_from(const std::map<std::string, std::string>& kv);

// ---------------------------------------------------------------------------
// Fit configuration and reports

struct GridSpec {
  double start = 0;
  double stop = 0;
  double step = 5;
  std::vector<double> points() const;
};

GridSpec parse_grid(const std::string& text);  // start:stop:step

struct RunConfig {
  std::string input;
  FamilyKind family = FamilyKind::Weibull;
  double tau1 = 0;
  std::optional<double> tau2;
  std::optional<GridSpec> grid;
  std::vector<std::string> covariates;
  std::vector<CovariateSpec> link_ranges;  // optional unit-range link scaling
  bool normalize = true;
  double tol = 1e-8;
  int max_iter = 500;
  InnerOptimizer optimizer = InnerOptimizer::NewtonWithNumericDerivatives;
  CureMode cure_mode = CureMode::Logistic;
  unsigned threads = 1;

  EmConfig em_config() const;
  void validate(const Dataset& data) const;
};

json to_json(const RunConfig& config);
RunConfig run_config_from_json(const json& j);

/// Self-contained report of one fit; K-S is computed against `data`.
json fit_report(const RunConfig& config, const FitResult& fit, const Dataset& data);
/// Enough of a FitResult to evaluate fitted curves.
FitResult fit_from_report(const json& report);

json to_json(const TestResult& r, TestProblem problem);

void print_fit_table(std::ostream& out, const FitResult& fit, const json& report);

void write_profile_csv(std::ostream& out, const ProfileResult& profile);

/// One row per (n, parameter): truth, mean, rmse and bookkeeping.
void write_study_csv(std::ostream& out, const std::vector<StudySummary>& studies);

struct NamedProfile {
  std::string label;
  Eigen::VectorXd z;  // leading 1
};

/// Reads `label` plus one column per covariate name.
std::vector<NamedProfile> load_profiles(std::istream& in, const std::vector<std::string>& covariates);

/// time column followed by one population-survival column per profile.
void write_curves_csv(std::ostream& out, const FitResult& fit, const std::vector<NamedProfile>& profiles,
                      const std::vector<double>& times);

}  // namespace crm::io
