// Command-line front end: fit | profile | test | simulate | km | curves.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "crm/io.hpp"

namespace {

using crm::io::json;

enum ExitCode { Ok = 0, Usage = 1, Data = 2, Numerical = 3 };

int report_error(ExitCode code, const std::string& kind, const std::string& message) {
  json err{{"error", {{"kind", kind}, {"exit_code", static_cast<int>(code)}, {"message", message}}}};
  std::cerr << err.dump() << '\n';
  return code;
}

// Writes to `path`, or to stdout when empty.
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw crm::DataError("cannot write '" + path + "'");
  write(out);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw crm::DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw crm::DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

struct ModelOptions {
  std::string data;
  std::string family = "weibull";
  double tau1 = 0;
  std::optional<double> tau2;
  std::vector<std::string> covariates;
  std::vector<std::string> link_ranges;
  bool no_normalize = false;
  double tol = 1e-8;
  int max_iter = 500;
  std::string optimizer = "newton";
  std::string cure = "logistic";
  unsigned threads = 1;

  void add_to(CLI::App* cmd, bool need_tau2) {
    cmd->add_option("--data", data, "CSV with time, status and covariate columns");
    cmd->add_option("--family", family, "weibull | lfr | ge")->check(CLI::IsMember({"weibull", "lfr", "ge"}));
    cmd->add_option("--tau1", tau1, "stress change time");
    if (need_tau2) cmd->add_option("--tau2", tau2, "end of the lag period (tau2 >= tau1)");
    cmd->add_option("--covariates", covariates, "covariate columns for the cure link")->delimiter(',');
    cmd->add_option("--link-range", link_ranges, "name:lo:hi, maps the covariate onto [0, 1] in the link");
    cmd->add_flag("--no-normalize", no_normalize, "fit on the input time scale instead of time / tau1");
    cmd->add_option("--tol", tol, "EM log-likelihood increment tolerance");
    cmd->add_option("--max-iter", max_iter, "EM iteration cap");
    cmd->add_option("--optimizer", optimizer, "newton | nelder-mead")
        ->check(CLI::IsMember({"newton", "nelder-mead"}));
    cmd->add_option("--cure", cure, "logistic | constant | absent")
        ->check(CLI::IsMember({"logistic", "constant", "absent"}));
    cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }

  crm::io::RunConfig run_config() const {
    crm::io::RunConfig c;
    c.input = data;
    c.family = crm::parse_family(family);
    c.tau1 = tau1;
    c.tau2 = tau2;
    c.covariates = covariates;
    for (const auto& r : link_ranges) {
      const auto first = r.find(':');
      const auto last = r.rfind(':');
      if (first == std::string::npos || first == last)
        throw crm::ContractError("link range '" + r + "' must look like name:lo:hi");
      c.link_ranges.push_back({r.substr(0, first), std::stod(r.substr(first + 1, last - first - 1)),
                               std::stod(r.substr(last + 1))});
    }
    c.normalize = !no_normalize;
    c.tol = tol;
    c.max_iter = max_iter;
    c.optimizer = optimizer == "nelder-mead" ? crm::InnerOptimizer::NelderMead
                                             : crm::InnerOptimizer::NewtonWithNumericDerivatives;
    c.cure_mode = cure == "constant" ? crm::CureMode::Constant
                  : cure == "absent" ? crm::CureMode::Absent
                                     : crm::CureMode::Logistic;
    c.threads = threads;
    return c;
  }
};

crm::Dataset load_for(const crm::io::RunConfig& c) {
  if (c.input.empty()) throw crm::ContractError("--data is required");
  auto data = crm::io::load_dataset(std::filesystem::path(c.input), c.covariates);
  c.validate(data);
  return data;
}

crm::StressScheduled schedule_for(const crm::io::RunConfig& c) {
  if (!(c.tau1 > 0)) throw crm::ContractError("--tau1 must be positive");
  if (!c.tau2) throw crm::ContractError("--tau2 is required");
  return {c.tau1, *c.tau2, std::nullopt};
}

int run_fit(const crm::io::RunConfig& config, const std::string& out, bool json_only) {
  const auto data = load_for(config);
  const auto fit = crm::em_fit(data.records, schedule_for(config), config.family, config.em_config());
  const auto report = crm::io::fit_report(config, fit, data);
  if (json_only) {
    std::cout << report.dump(2) << '\n';
  } else {
    crm::io::print_fit_table(std::cout, fit, report);
  }
  if (!out.empty()) emit(out, [&](std::ostream& os) { os << report.dump(2) << '\n'; });
  return Ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Step-stress cumulative-risk cure models"};
  app.require_subcommand(1);

  ModelOptions model;
  std::string out;
  bool json_only = false;
  std::string rerun;

  auto* fit = app.add_subcommand("fit", "fit one model at a fixed tau2");
  model.add_to(fit, true);
  fit->add_option("--out", out, "write the JSON fit report here");
  fit->add_flag("--json", json_only, "print the JSON report instead of the table");
  fit->add_option("--rerun", rerun, "re-run the configuration embedded in a fit report");

  auto* profile = app.add_subcommand("profile", "grid search over tau2");
  model.add_to(profile, false);
  std::string grid_text;
  std::string curve_out;
  profile->add_option("--tau2-grid", grid_text, "start:stop:step (default tau1:tau1+200:5)");
  profile->add_option("--curve", curve_out, "write the profile curve CSV here (default stdout)");
  profile->add_option("--out", out, "write the best fit's JSON report here");

  auto* test = app.add_subcommand("test", "likelihood-ratio test");
  model.add_to(test, true);
  int problem = 0;
  std::vector<double> mll_pair;
  int slopes = 1;
  test->add_option("--problem", problem, "1 equal shapes | 2 exponential | 3 covariates | 4 cure presence")
      ->required()
      ->check(CLI::Range(1, 4));
  test->add_option("--mll", mll_pair, "null and alternative log-likelihoods; skips fitting")->expected(2);
  test->add_option("--slopes", slopes, "number of covariates for problem 3 with --mll");
  test->add_option("--out", out, "write the JSON result here (default stdout)");

  auto* simulate = app.add_subcommand("simulate", "simulate datasets or a replication study");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> sim_threads;
  std::string out_dir = ".";
  simulate->add_option("--config", config_path, "key = value configuration file")->required();
  simulate->add_option("--seed", seed, "overrides the configured seed");
  simulate->add_option("--threads", sim_threads, "overrides the configured thread count")->check(CLI::PositiveNumber);
  simulate->add_option("--out-dir", out_dir, "directory for generated files");

  auto* km = app.add_subcommand("km", "Kaplan-Meier step curve");
  std::string km_data;
  km->add_option("--data", km_data, "CSV with time and status columns")->required();
  km->add_option("--out", out, "write the step CSV here (default stdout)");

  auto* curves = app.add_subcommand("curves", "fitted population survival at covariate profiles");
  std::string report_path, profiles_path, times_text;
  curves->add_option("--report", report_path, "JSON fit report")->required();
  curves->add_option("--profiles", profiles_path, "CSV with a label column and the model covariates")
      ;
  curves->add_option("--times", times_text, "start:stop:step (default 0:2*tau2:5)");
  curves->add_option("--out", out, "write the curves CSV here (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(Usage, "usage", e.what());
  }

  try {
    if (*fit) {
      if (!rerun.empty()) {
        const auto report = read_json(rerun);
        if (!report.contains("config")) throw crm::DataError("'" + rerun + "' has no embedded config");
        return run_fit(crm::io::run_config_from_json(report["config"]), out, json_only);
      }
      return run_fit(model.run_config(), out, json_only);
    }

    if (*profile) {
      auto config = model.run_config();
      if (!(config.tau1 > 0)) throw crm::ContractError("--tau1 must be positive");
      config.grid = grid_text.empty() ? crm::io::GridSpec{config.tau1, config.tau1 + 200, 5}
                                      : crm::io::parse_grid(grid_text);
      const auto data = load_for(config);
      const auto grid = config.grid->points();
      const auto result =
          crm::profile_fit_delta(data.records, config.family, config.tau1, grid, config.em_config(), config.threads);
      emit(curve_out, [&](std::ostream& os) { crm::io::write_profile_csv(os, result); });
      config.tau2 = result.best_tau2;
      const auto report = crm::io::fit_report(config, result.best(), data);
      if (!out.empty()) emit(out, [&](std::ostream& os) { os << report.dump(2) << '\n'; });
      if (!curve_out.empty()) {
        std::cout << "best tau2 = " << result.best_tau2 << '\n';
        crm::io::print_fit_table(std::cout, result.best(), report);
      }
      return Ok;
    }

    if (*test) {
      const auto p = crm::parse_problem(problem);
      json result;
      if (!mll_pair.empty()) {
        result = crm::io::to_json(crm::lrt(p, mll_pair[0], mll_pair[1], slopes), p);
      } else {
        const auto config = model.run_config();
        const auto data = load_for(config);
        const auto outcome =
            crm::run_test(p, data.records, schedule_for(config), config.family, config.em_config());
        result = crm::io::to_json(outcome.result, p);
        result["boundary"] = outcome.boundary;
        result["null_converged"] = outcome.null_fit.converged;
        result["alternative_converged"] = outcome.alternative_fit.converged;
        result["config"] = crm::io::to_json(config);
      }
      emit(out, [&](std::ostream& os) { os << result.dump(2) << '\n'; });
      return Ok;
    }

    if (*simulate) {
      std::ifstream in(config_path);
      if (!in) throw crm::DataError("cannot open '" + config_path + "'");
      auto run = crm::io::simulation_run_from(crm::io::parse_key_values(in));
      if (seed) run.config.seed = *seed;
      if (sim_threads) run.config.threads = *sim_threads;
      std::filesystem::create_directories(out_dir);
      if (run.mode == crm::io::SimulationRun::Mode::Dataset) {
        const double end = crm::calibrate_study_end(run.config);
        for (const auto n : run.sample_sizes) {
          auto c = run.config;
          c.n = n;
          for (std::size_t r = 0; r < c.reps; ++r) {
            std::string name = run.dataset_prefix;
            if (run.sample_sizes.size() > 1) name += "_n" + std::to_string(n);
            name += "_rep" + std::to_string(r) + ".csv";
            const auto path = (std::filesystem::path(out_dir) / name).string();
            const auto data = crm::simulate_dataset(c, r, end);
            emit(path, [&](std::ostream& os) {
              os << "# seed " << c.seed << ", replication " << r << ", study end " << end << '\n';
              crm::io::write_dataset(os, data);
            });
          }
        }
        return Ok;
      }
      std::vector<crm::StudySummary> studies;
      for (const auto n : run.sample_sizes) {
        auto c = run.config;
        c.n = n;
        studies.push_back(crm::run_study(c));
        std::cerr << "n = " << n << ": " << studies.back().used << " of " << c.reps << " replications used\n";
      }
      const auto path = run.summary.empty() ? std::string() : (std::filesystem::path(out_dir) / run.summary).string();
      emit(path, [&](std::ostream& os) { crm::io::write_study_csv(os, studies); });
      return Ok;
    }

    if (*km) {
      const auto data = crm::io::load_dataset(std::filesystem::path(km_data));
      const auto curve = crm::kaplan_meier(data.records);
      emit(out, [&](std::ostream& os) { crm::write_step_csv(os, curve); });
      return Ok;
    }

    if (*curves) {
      const auto report = read_json(report_path);
      const auto fitted = crm::io::fit_from_report(report);
      std::vector<crm::io::NamedProfile> profiles;
      if (!profiles_path.empty()) {
        std::ifstream in(profiles_path);
        if (!in) throw crm::DataError("cannot open '" + profiles_path + "'");
        profiles = crm::io::load_profiles(in, fitted.cure.covariate_names);
      } else if (fitted.cure.beta.size() == 1) {
        profiles.push_back({"survival", Eigen::VectorXd::Ones(1)});
      } else {
        throw crm::ContractError("--profiles is required for a model with covariates");
      }
      const auto grid = times_text.empty() ? crm::io::GridSpec{0, 2 * fitted.schedule.tau2, 5}
                                           : crm::io::parse_grid(times_text);
      emit(out, [&](std::ostream& os) { crm::io::write_curves_csv(os, fitted, profiles, grid.points()); });
      return Ok;
    }
  } catch (const crm::ContractError& e) {
    return report_error(Usage, "usage", e.what());
  } catch (const crm::DataError& e) {
    return report_error(Data, "data", e.what());
  } catch (const crm::NumericalError& e) {
    return report_error(Numerical, "numerical", e.what());
  } catch (const crm::EvaluationError& e) {
    return report_error(Numerical, "numerical", e.what());
  } catch (const std::exception& e) {
    return report_error(Numerical, "numerical", e.what());
  }
  return Usage;
}
