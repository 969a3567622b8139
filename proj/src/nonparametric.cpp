#include "crm/nonparametric.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace crm {

double StepSurvival::operator()(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double StepSurvival::left_limit(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

StepSurvival kaplan_meier(std::span<const SubjectRecord> records) {
  if (records.empty()) throw ContractError("kaplan_meier: no records");
  std::vector<std::pair<double, bool>> obs;
  obs.reserve(records.size());
  for (const auto& r : records) obs.emplace_back(r.time, r.event);
  // Events before censorings at the same time: a subject censored at t was at risk at t.
  std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
    return a.first < b.first || (a.first == b.first && a.second > b.second);
  });

  StepSurvival km;
  std::size_t at_risk = obs.size();
  double s = 1.0;
  for (std::size_t i = 0; i < obs.size();) {
    const double t = obs[i].first;
    std::size_t d = 0, c = 0;
    for (; i < obs.size() && obs[i].first == t; ++i) (obs[i].second ? d : c) += 1;
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      km.times.push_back(t);
      km.values.push_back(s);
      km.at_risk.push_back(at_risk);
      km.events.push_back(d);
    }
    at_risk -= d + c;
  }
  return km;
}

double FittedSurvival::operator()(double t) const {
  const double u = t / time_scale;
  const double s0 = survival(model, u);
  double acc = 0;
  for (const auto& z : profiles) {
    const double p = logistic_p(cure, z);
    acc += p + (1 - p) * s0;
  }
  return acc / static_cast<double>(profiles.size());
}

FittedSurvival FittedSurvival::from_fit(const FitResult& fit, std::span<const SubjectRecord> records) {
  FittedSurvival f{fit.model(), fit.cure, {}, fit.time_scale};
  if (fit.cure.beta.size() == 1 || records.empty()) {
    f.profiles.push_back(Eigen::VectorXd::Ones(1));
  } else {
    f.profiles.reserve(records.size());
    for (const auto& r : records) f.profiles.push_back(r.z);
  }
  return f;
}

FittedSurvival FittedSurvival::at_profile(const FitResult& fit, const Eigen::VectorXd& z) {
  FittedSurvival f{fit.model(), fit.cure, {}, fit.time_scale};
  f.profiles.push_back(fit.cure.beta.size() == 1 ? Eigen::VectorXd::Ones(1) : z);
  return f;
}

double kolmogorov_sf(double x) {
  if (!(x > 0)) return 1.0;
  if (x < 1.18) {
    // Theta-function form, accurate for small x.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double cdf = 0;
    for (int k = 1; k <= 20; ++k) {
      const double m = 2.0 * k - 1.0;
      cdf += std::exp(-m * m * pi2 / (8 * x * x));
    }
    cdf *= std::sqrt(2 * std::numbers::pi) / x;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sf = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sf += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(sf, 0.0, 1.0);
}

KsResult ks_distance(const StepSurvival& km, const std::function<double(double)>& fitted) {
  if (km.times.empty()) throw ContractError("ks_distance: the Kaplan-Meier curve has no events");
  KsResult r;
  double before = 1.0;
  for (std::size_t i = 0; i < km.times.size(); ++i) {
    const double f = fitted(km.times[i]);
    r.distance = std::max({r.distance, std::abs(before - f), std::abs(km.values[i] - f)});
    before = km.values[i];
  }
  for (const auto d : km.events) r.effective_n += d;
  r.p_value = kolmogorov_sf(std::sqrt(static_cast<double>(r.effective_n)) * r.distance);
  return r;
}

void write_step_csv(std::ostream& out, const StepSurvival& s) {
  out.precision(17);
  out << "time,survival\n0," << 1.0 << '\n';
  for (std::size_t i = 0; i < s.times.size(); ++i) out << s.times[i] << ',' << s.values[i] << '\n';
}

StepSurvival read_step_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("time,survival", 0) != 0)
    throw DataError("step csv: expected header 'time,survival'");
  StepSurvival s;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    double t = 0, v = 0;
    char comma = 0;
    if (!(ls >> t >> comma >> v) || comma != ',')
      throw DataError("step csv: row " + std::to_string(row) + ": malformed");
    if (row == 2 && t == 0) continue;  // the t = 0 anchor
    s.times.push_back(t);
    s.values.push_back(v);
  }
  return s;
}

}  // namespace crm
