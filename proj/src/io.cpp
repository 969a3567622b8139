#include "crm/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace crm::io {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) {
    cell = trim(cell);
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

double need_double(const std::string& s, const std::string& what) {
  const auto v = to_double(trim(s));
  if (!v) throw ContractError(what + ": '" + s + "' is not a number");
  return *v;
}

std::size_t need_count(const std::string& s, const std::string& what) {
  const double v = need_double(s, what);
  if (!(v >= 0) || v != std::floor(v)) throw ContractError(what + ": '" + s + "' is not a nonnegative integer");
  return static_cast<std::size_t>(v);
}

bool need_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ContractError(what + ": '" + s + "' is not a boolean");
}

// Skips blank lines and '#' comments.
bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    return true;
  }
  return false;
}

CovariateSpec parse_range(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3 || parts[0].empty())
    throw ContractError("covariate range '" + text + "' must look like name:lo:hi");
  CovariateSpec c{parts[0], need_double(parts[1], "range low"), need_double(parts[2], "range high")};
  if (!(c.hi > c.lo)) throw ContractError("covariate range '" + text + "' is empty");
  return c;
}

std::string_view optimizer_name(InnerOptimizer o) {
  return o == InnerOptimizer::NelderMead ? "nelder-mead" : "newton";
}

InnerOptimizer parse_optimizer(const std::string& s) {
  if (s == "newton") return InnerOptimizer::NewtonWithNumericDerivatives;
  if (s == "nelder-mead") return InnerOptimizer::NelderMead;
  throw ContractError("unknown optimizer '" + s + "' (expected newton|nelder-mead)");
}

std::string_view cure_mode_name(CureMode m) {
  switch (m) {
    case CureMode::Logistic: return "logistic";
    case CureMode::Constant: return "constant";
    case CureMode::Absent: return "absent";
  }
  return "";
}

CureMode parse_cure_mode(const std::string& s) {
  if (s == "logistic") return CureMode::Logistic;
  if (s == "constant") return CureMode::Constant;
  if (s == "absent") return CureMode::Absent;
  throw ContractError("unknown cure mode '" + s + "' (expected logistic|constant|absent)");
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

json theta_json(const FamilyParamsd& t) {
  return {{"alpha1", t.seg1.alpha}, {"alpha2", t.seg2.alpha}, {"lambda1", t.seg1.lambda}, {"lambda2", t.seg2.lambda}};
}

FamilyParamsd theta_from_json(const json& j) {
  return {{j.at("alpha1").get<double>(), j.at("lambda1").get<double>()},
          {j.at("alpha2").get<double>(), j.at("lambda2").get<double>()}};
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v(i)));
  return a;
}

Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = number_or(a[i], -std::numeric_limits<double>::infinity());
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Datasets

Dataset load_dataset(std::istream& in, const std::vector<std::string>& covariates) {
  std::string line;
  if (!next_line(in, line)) throw DataError("dataset: empty input, expected a header row");
  const auto header = split(line, ',');
  const auto find = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("dataset: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t time_col = find("time");
  const std::size_t status_col = find("status");
  std::vector<std::size_t> cov_cols;
  for (const auto& c : covariates) cov_cols.push_back(find(c));

  Dataset data;
  data.covariate_names = covariates;
  const auto s = static_cast<Eigen::Index>(covariates.size());
  std::size_t row = 1;
  while (next_line(in, line)) {
    ++row;
    const auto cells = split(line, ',');
    const auto where = "row " + std::to_string(row) + ": ";
    if (cells.size() != header.size())
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(cells.size()));
    SubjectRecord rec;
    const auto t = to_double(cells[time_col]);
    if (!t) throw DataError(where + "time is not a number");
    if (!(*t > 0) || !std::isfinite(*t)) throw DataError(where + "time must be positive");
    rec.time = *t;
    if (cells[status_col] == "1") rec.event = true;
    else if (cells[status_col] == "0") rec.event = false;
    else throw DataError(where + "status must be 0 or 1");
    rec.z = Eigen::VectorXd::Ones(s + 1);
    for (Eigen::Index j = 0; j < s; ++j) {
      const auto& name = covariates[static_cast<std::size_t>(j)];
      const auto v = to_double(cells[cov_cols[static_cast<std::size_t>(j)]]);
      if (!v || !std::isfinite(*v)) throw DataError(where + "column '" + name + "' is not a finite number");
      rec.z(j + 1) = *v;
    }
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) throw DataError("dataset: no data rows");
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, const std::vector<std::string>& covariates) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return load_dataset(in, covariates);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << std::setprecision(17) << "time,status";
  for (const auto& c : data.covariate_names) out << ',' << c;
  out << '\n';
  for (const auto& r : data.records) {
    out << r.time << ',' << (r.event ? 1 : 0);
    for (Eigen::Index j = 1; j < r.z.size(); ++j) out << ',' << r.z(j);
    out << '\n';
  }
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("csv: missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!next_line(in, line)) throw DataError("csv: empty input");
  t.header = split(line, ',');
  std::size_t row = 1;
  while (next_line(in, line)) {
    ++row;
    auto cells = split(line, ',');
    if (cells.size() != t.header.size())
      throw DataError("csv: row " + std::to_string(row) + ": expected " + std::to_string(t.header.size()) +
                      " fields");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Key-value configuration

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractError("config line " + std::to_string(number) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ContractError("config line " + std::to_string(number) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw ContractError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
  }
  return kv;
}

SimulationRun simulation_run_from(const std::map<std::string, std::string>& kv) {
  SimulationRun run;
  SimConfig& c = run.config;
  c.censor_fraction.reset();
  bool have_censor = false;
  for (const auto& [key, value] : kv) {
    if (key == "mode") {
      if (value == "dataset") run.mode = SimulationRun::Mode::Dataset;
      else if (value == "study") run.mode = SimulationRun::Mode::Study;
      else throw ContractError("mode must be dataset or study");
    } else if (key == "family") {
      c.kind = parse_family(value);
    } else if (key == "alpha1") {
      c.theta.seg1.alpha = need_double(value, key);
    } else if (key == "alpha2") {
      c.theta.seg2.alpha = need_double(value, key);
    } else if (key == "lambda1") {
      c.theta.seg1.lambda = need_double(value, key);
    } else if (key == "lambda2") {
      c.theta.seg2.lambda = need_double(value, key);
    } else if (key == "beta") {
      const auto parts = split(value, ',');
      c.beta.resize(static_cast<Eigen::Index>(parts.size()));
      for (std::size_t i = 0; i < parts.size(); ++i) c.beta(static_cast<Eigen::Index>(i)) = need_double(parts[i], key);
    } else if (key == "p") {
      const double p = need_double(value, key);
      if (!(p >= 0 && p < 1)) throw ContractError("p must lie in [0, 1)");
      c.beta = Eigen::VectorXd::Constant(1, CureModel::constant(p).beta(0));
    } else if (key == "covariates") {
      c.covariates.clear();
      for (const auto& part : split(value, ','))
        if (!part.empty()) c.covariates.push_back(parse_range(part));
    } else if (key == "tau1") {
      c.tau1 = need_double(value, key);
    } else if (key == "delta") {
      c.delta = need_double(value, key);
    } else if (key == "n") {
      run.sample_sizes.clear();
      for (const auto& part : split(value, ',')) run.sample_sizes.push_back(need_count(part, key));
    } else if (key == "reps") {
      c.reps = need_count(value, key);
    } else if (key == "censor_fraction") {
      c.censor_fraction = need_double(value, key);
      have_censor = true;
    } else if (key == "study_end") {
      c.study_end = need_double(value, key);
    } else if (key == "seed") {
      c.seed = need_count(value, key);
    } else if (key == "profile_delta") {
      c.profile_delta = need_bool(value, key);
    } else if (key == "grid_step") {
      c.grid_step = need_double(value, key);
    } else if (key == "grid_span") {
      c.grid_span = need_double(value, key);
    } else if (key == "threads") {
      c.threads = static_cast<unsigned>(need_count(value, key));
    } else if (key == "tol") {
      c.em.tol = need_double(value, key);
    } else if (key == "max_iter") {
      c.em.max_iter = static_cast<int>(need_count(value, key));
    } else if (key == "dataset_prefix") {
      run.dataset_prefix = value;
    } else if (key == "summary") {
      run.summary = value;
    } else {
      throw ContractError("unknown config key '" + key + "'");
    }
  }
  if (!have_censor && !c.study_end) c.censor_fraction = 0.2;
  if (run.sample_sizes.empty()) run.sample_sizes.push_back(c.n);
  c.n = run.sample_sizes.front();
  c.validate();
  return run;
}

// ---------------------------------------------------------------------------
// Fit configuration and reports

std::vector<double> GridSpec::points() const {
  std::vector<double> g;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long k = 0; k <= count; ++k) g.push_back(start + static_cast<double>(k) * step);
  return g;
}

GridSpec parse_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw ContractError("grid '" + text + "' must look like start:stop:step");
  GridSpec g{need_double(parts[0], "grid start"), need_double(parts[1], "grid stop"),
             need_double(parts[2], "grid step")};
  if (!(g.step > 0)) throw ContractError("grid step must be positive");
  if (!(g.stop >= g.start)) throw ContractError("grid stop must not precede start");
  return g;
}

EmConfig RunConfig::em_config() const {
  EmConfig em;
  em.tol = tol;
  em.max_iter = max_iter;
  em.inner_optimizer = optimizer;
  em.cure_mode = cure_mode;
  em.normalize = normalize;
  if (!link_ranges.empty()) {
    const auto s = static_cast<Eigen::Index>(covariates.size());
    Eigen::VectorXd lo(s), hi(s);
    for (Eigen::Index j = 0; j < s; ++j) {
      const auto& name = covariates[static_cast<std::size_t>(j)];
      const auto it = std::find_if(link_ranges.begin(), link_ranges.end(),
                                   [&](const CovariateSpec& c) { return c.name == name; });
      if (it == link_ranges.end()) throw ContractError("no link range given for covariate '" + name + "'");
      lo(j) = it->lo;
      hi(j) = it->hi;
    }
    em.link_scaling = CovariateScaling::unit_range(lo, hi);
  }
  return em;
}

void RunConfig::validate(const Dataset& data) const {
  if (!(tau1 > 0)) throw ContractError("tau1 must be positive");
  if (tau2 && !(*tau2 >= tau1)) throw ContractError("tau2 must not precede tau1");
  if (grid && !(grid->step > 0)) throw ContractError("grid step must be positive");
  if (grid && !(grid->start >= tau1)) throw ContractError("grid must start at or after tau1");
  if (data.covariate_names != covariates) throw ContractError("dataset columns do not match the configuration");
  for (const auto& r : link_ranges)
    if (std::find(covariates.begin(), covariates.end(), r.name) == covariates.end())
      throw ContractError("link range given for unselected covariate '" + r.name + "'");
}

json to_json(const RunConfig& c) {
  json j;
  j["input"] = c.input;
  j["family"] = std::string(to_string(c.family));
  j["tau1"] = c.tau1;
  j["tau2"] = c.tau2 ? json(*c.tau2) : json(nullptr);
  j["grid"] = c.grid ? json{{"start", c.grid->start}, {"stop", c.grid->stop}, {"step", c.grid->step}} : json(nullptr);
  j["covariates"] = c.covariates;
  json ranges = json::array();
  for (const auto& r : c.link_ranges) ranges.push_back({{"name", r.name}, {"lo", r.lo}, {"hi", r.hi}});
  j["link_ranges"] = ranges;
  j["normalize"] = c.normalize;
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  j["optimizer"] = std::string(optimizer_name(c.optimizer));
  j["cure_mode"] = std::string(cure_mode_name(c.cure_mode));
  j["threads"] = c.threads;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  try {
    RunConfig c;
    c.input = j.at("input").get<std::string>();
    c.family = parse_family(j.at("family").get<std::string>());
    c.tau1 = j.at("tau1").get<double>();
    if (!j.at("tau2").is_null()) c.tau2 = j.at("tau2").get<double>();
    if (!j.at("grid").is_null())
      c.grid = GridSpec{j["grid"].at("start").get<double>(), j["grid"].at("stop").get<double>(),
                        j["grid"].at("step").get<double>()};
    c.covariates = j.at("covariates").get<std::vector<std::string>>();
    for (const auto& r : j.at("link_ranges"))
      c.link_ranges.push_back({r.at("name").get<std::string>(), r.at("lo").get<double>(), r.at("hi").get<double>()});
    c.normalize = j.at("normalize").get<bool>();
    c.tol = j.at("tol").get<double>();
    c.max_iter = j.at("max_iter").get<int>();
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.cure_mode = parse_cure_mode(j.at("cure_mode").get<std::string>());
    c.threads = j.value("threads", 1u);
    return c;
  } catch (const json::exception& e) {
    throw ContractError(std::string("report config: ") + e.what());
  }
}

json fit_report(const RunConfig& config, const FitResult& fit, const Dataset& data) {
  json j;
  j["schema"] = "crm.fit_report/1";
  j["config"] = to_json(config);
  j["family"] = std::string(to_string(fit.kind));
  j["schedule"] = {{"tau1", fit.schedule.tau1}, {"tau2", fit.schedule.tau2}, {"delta", fit.schedule.delta()}};
  j["time_scale"] = fit.time_scale;
  j["normalized"] = config.normalize;
  j["counts"] = {{"n", fit.n}, {"events", fit.n1 + fit.n2 + fit.n3}, {"n1", fit.n1},
                 {"n2", fit.n2}, {"n3", fit.n3}, {"n4", fit.n4}};
  j["theta"] = theta_json(fit.theta);
  j["theta_input_scale"] = theta_json(time_rescaled(fit.kind, fit.theta, fit.time_scale));

  json cure;
  const bool logistic_fit = !fit.p.has_value();
  cure["mode"] = logistic_fit ? "logistic" : (*fit.p > 0 ? "constant" : "absent");
  if (logistic_fit) {
    json names = json::array({"intercept"});
    for (const auto& n : data.covariate_names) names.push_back(n);
    cure["names"] = names;
    cure["beta"] = vector_json(fit.cure.beta);
    cure["scaling"] = {{"offset", vector_json(fit.cure.scaling.offset)},
                       {"scale", vector_json(fit.cure.scaling.scale)}};
  } else {
    cure["p"] = *fit.p;
  }
  j["cure"] = cure;

  j["mll"] = fit.mll;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["se_available"] = fit.se_available;
  json se = json::object();
  if (fit.se_available)
    for (std::size_t k = 0; k < fit.se_names.size(); ++k)
      se[fit.se_names[k]] = fit.se(static_cast<Eigen::Index>(k));
  j["se"] = se;
  j["se_scale"] = "fitting";
  j["trace"] = fit.trace;

  const auto km = kaplan_meier(data.records);
  if (!km.times.empty()) {
    const auto ks = ks_distance(km, FittedSurvival::from_fit(fit, data.records));
    j["ks"] = {{"distance", ks.distance},
               {"p_value", ks.p_value},
               {"effective_n", ks.effective_n},
               {"comparison", ks.comparison},
               {"tie_convention", km.tie_convention}};
  }
  return j;
}

FitResult fit_from_report(const json& report) {
  try {
    FitResult f;
    f.kind = parse_family(report.at("family").get<std::string>());
    f.theta = theta_from_json(report.at("theta"));
    f.time_scale = report.at("time_scale").get<double>();
    f.schedule = {report.at("schedule").at("tau1").get<double>(), report.at("schedule").at("tau2").get<double>(),
                  std::nullopt};
    f.mll = report.at("mll").get<double>();
    const auto& cure = report.at("cure");
    const auto mode = cure.at("mode").get<std::string>();
    if (mode == "logistic") {
      f.cure.beta = vector_from_json(cure.at("beta"));
      f.cure.covariate_names = cure.at("names").get<std::vector<std::string>>();
      f.cure.covariate_names.erase(f.cure.covariate_names.begin());
      if (!cure.at("scaling").at("offset").empty()) {
        f.cure.scaling.offset = vector_from_json(cure["scaling"]["offset"]);
        f.cure.scaling.scale = vector_from_json(cure["scaling"]["scale"]);
      }
    } else {
      f.p = mode == "absent" ? 0.0 : cure.at("p").get<double>();
      f.cure = CureModel::constant(*f.p);
    }
    f.converged = report.at("converged").get<bool>();
    return f;
  } catch (const json::exception& e) {
    throw DataError(std::string("fit report: ") + e.what());
  }
}

json to_json(const TestResult& r, TestProblem problem) {
  json ref;
  if (r.reference.kind == Reference::Kind::HalfHalfChiSq1) ref = {{"kind", "half-half-chisq1"}, {"df", 1}};
  else ref = {{"kind", "chisq"}, {"df", r.reference.df}};
  return {{"problem", static_cast<int>(problem)},
          {"hypothesis", std::string(describe(problem))},
          {"statistic", r.statistic},
          {"reference", ref},
          {"p_value", r.p_value},
          {"l0", r.l0},
          {"l1", r.l1},
          {"clipped", r.clipped}};
}

void print_fit_table(std::ostream& out, const FitResult& fit, const json& report) {
  const auto flags = out.flags();
  out << "family " << to_string(fit.kind) << ", tau1 = " << fit.schedule.tau1 << ", tau2 = " << fit.schedule.tau2
      << ", time scale " << fit.time_scale << '\n';
  out << "n = " << fit.n << " (events " << fit.n1 << " / " << fit.n2 << " / " << fit.n3 << ", censored " << fit.n4
      << ")\n";
  out << std::left << std::setw(12) << "parameter" << std::right << std::setw(14) << "estimate" << std::setw(14)
      << "std.err" << '\n';
  const auto row = [&](const std::string& name, double est) {
    out << std::left << std::setw(12) << name << std::right << std::setw(14) << std::setprecision(6) << est;
    const auto& se = report["se"];
    if (se.contains(name)) out << std::setw(14) << se[name].get<double>();
    else out << std::setw(14) << "-";
    out << '\n';
  };
  row("alpha1", fit.theta.seg1.alpha);
  row("alpha2", fit.theta.seg2.alpha);
  row("lambda1", fit.theta.seg1.lambda);
  row("lambda2", fit.theta.seg2.lambda);
  if (fit.p) {
    row("p", *fit.p);
  } else {
    for (Eigen::Index k = 0; k < fit.cure.beta.size(); ++k) row("beta" + std::to_string(k), fit.cure.beta(k));
  }
  out << std::setprecision(8) << "log-likelihood " << fit.mll << ", iterations " << fit.iterations
      << (fit.converged ? ", converged" : ", NOT converged") << '\n';
  if (report.contains("ks"))
    out << std::setprecision(4) << "K-S distance " << report["ks"]["distance"].get<double>() << ", p-value "
        << report["ks"]["p_value"].get<double>() << '\n';
  out.flags(flags);
}

void write_profile_csv(std::ostream& out, const ProfileResult& profile) {
  out << std::setprecision(17) << "tau2,delta,mll,converged,best\n";
  for (const auto& pt : profile.curve) {
    const double tau1 = pt.fit ? pt.fit->schedule.tau1 : std::nan("");
    out << pt.tau2 << ',' << pt.tau2 - tau1 << ',';
    if (pt.fit) out << pt.fit->mll << ',' << (pt.fit->converged ? 1 : 0);
    else out << "nan,0";
    out << ',' << (pt.tau2 == profile.best_tau2 ? 1 : 0) << '\n';
  }
}

void write_study_csv(std::ostream& out, const std::vector<StudySummary>& studies) {
  out << std::setprecision(10)
      << "n,parameter,truth,mean,rmse,reps,used,nonconverged,failures,censor_fraction,study_end\n";
  for (const auto& s : studies)
    for (const auto& p : s.parameters)
      out << s.n << ',' << p.name << ',' << p.truth << ',' << p.mean << ',' << p.rmse << ',' << s.reps << ','
          << s.used << ',' << s.nonconverged << ',' << s.failures << ',' << s.mean_censor_fraction << ','
          << s.study_end << '\n';
}

std::vector<NamedProfile> load_profiles(std::istream& in, const std::vector<std::string>& covariates) {
  const auto table = read_csv(in);
  const std::size_t label_col = table.column("label");
  std::vector<std::size_t> cols;
  for (const auto& c : covariates) cols.push_back(table.column(c));
  std::vector<NamedProfile> out;
  std::size_t row = 1;
  for (const auto& r : table.rows) {
    ++row;
    NamedProfile p{r[label_col], Eigen::VectorXd::Ones(static_cast<Eigen::Index>(cols.size()) + 1)};
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto v = to_double(r[cols[j]]);
      if (!v) throw DataError("profiles: row " + std::to_string(row) + ": column '" + covariates[j] + "' is not a number");
      p.z(static_cast<Eigen::Index>(j) + 1) = *v;
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw DataError("profiles: no rows");
  return out;
}

void write_curves_csv(std::ostream& out, const FitResult& fit, const std::vector<NamedProfile>& profiles,
                      const std::vector<double>& times) {
  std::vector<FittedSurvival> curves;
  for (const auto& p : profiles) {
    if (fit.cure.beta.size() != 1 && p.z.size() != fit.cure.beta.size())
      throw ContractError("profile '" + p.label + "' has the wrong number of covariates");
    curves.push_back(FittedSurvival::at_profile(fit, p.z));
  }
  out << std::setprecision(12) << "time";
  for (const auto& p : profiles) out << ',' << p.label;
  out << '\n';
  for (const double t : times) {
    out << t;
    for (const auto& c : curves) out << ',' << c(t);
    out << '\n';
  }
}

}  // namespace crm::io
