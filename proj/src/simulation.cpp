#include "mbl/simulation.hpp"

#include "mbl/error.hpp"
#include "mbl/evaluation.hpp"
#include "mbl/learner.hpp"
#include "mbl/numeric.hpp"
#include "mbl/parallel.hpp"
#include "mbl/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace mbl {

namespace {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::string compact_policy(const TreePolicy& tree) {
  std::ostringstream out;
  out << std::setprecision(6);
  const std::size_t internal = tree.splits().size();
  auto emit = [&](auto&& self, std::size_t k) -> void {
    if (k >= internal) {
      out << tree.actions()[k - internal];
      return;
    }
    const Split& s = tree.splits()[k];
    out << "(x" << s.feature + 1 << "<=" << s.threshold << " ? ";
    self(self, 2 * k + 1);
    out << " : ";
    self(self, 2 * k + 2);
    out << ')';
  };
  emit(emit, 0);
  return out.str();
}

// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

TreePolicy run_method(const std::string& method, const ObservationalDataset& data,
                      std::uint64_t seed) {
  if (method == "policy-tree") {
    AipwLearnerConfig config;
    config.seed = seed;
    return learn_aipw_policy(data, config);
  }
  LearnerConfig config = config_for_method(method);
  config.seed = seed;
  return learn_policy(data, config);
}

}  // namespace

std::string_view to_string(MainEffect m) { return m == MainEffect::linear ? "linear" : "nonlinear"; }
std::string_view to_string(Contrast c) { return c == Contrast::tree ? "tree" : "nontree"; }

MainEffect parse_main_effect(std::string_view text) {
  if (text == "linear") return MainEffect::linear;
  if (text == "nonlinear") return MainEffect::nonlinear;
  throw Error("unknown main effect '" + std::string(text) + "' (expected linear or nonlinear)");
}

Contrast parse_contrast(std::string_view text) {
  if (text == "tree") return Contrast::tree;
  if (text == "nontree" || text == "non-tree") return Contrast::nontree;
  throw Error("unknown contrast '" + std::string(text) + "' (expected tree or nontree)");
}

void SimulationSpec::validate() const {
  if (propensity_scenario < 1 || propensity_scenario > 5) {
    throw Error("propensity scenario must be 1..5, got " + std::to_string(propensity_scenario));
  }
  if (n < 1) throw Error("simulation size must be at least 1");
}

std::string SimulationSpec::label() const {
  return "s" + std::to_string(propensity_scenario) + "-" + std::string(to_string(main_effect)) +
         "-" + std::string(to_string(contrast)) + "-n" + std::to_string(n);
}

double propensity_index(int scenario, const Eigen::Ref<const Eigen::VectorXd>& x) {
  switch (scenario) {
    case 1: return -x[0] + 0.5 * x[1] - 0.25 * x[2] - 0.1 * x[3];
    case 2: return 0.1 * x[0] * x[0] * x[0] + 0.2 * x[1] * x[1] * x[1] + 0.3 * x[2];
    case 3: return 2.1 - x[0] + 2.0 * x[1] - 0.25 * x[2] - 0.1 * x[3];
    case 4: return std::log(9.0);
    case 5: return 1.0 + std::exp(x[1]) + std::sin(x[0]) * std::cos(x[2]);
    default: throw Error("propensity scenario must be 1..5");
  }
}

double main_effect(MainEffect m, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (m == MainEffect::linear) return 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2] - 1.5 * x[3];
  return 4.0 * std::sin(x[0]) + 2.5 * std::cos(x[1]) - x[2] * x[3];
}

double contrast(Contrast c, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (c == Contrast::tree) return (x[0] > 0.0 && x[1] > 0.0) ? 1.0 : -1.0;
  return (2.0 * x[1] - std::exp(1.0 + x[0]) + 2.0 > 0.0) ? 1.0 : -1.0;
}

SimulationOracle::SimulationOracle(SimulationSpec spec, Eigen::VectorXd y0, Eigen::VectorXd y1)
    : spec_(spec), y0_(std::move(y0)), y1_(std::move(y1)) {
  spec_.validate();
  if (y0_.size() != y1_.size()) throw Error("oracle potential outcome lengths differ");
}

double SimulationOracle::mu(const Eigen::Ref<const Eigen::VectorXd>& x, int w) const {
  return main_effect(spec_.main_effect, x) + w * contrast(spec_.contrast, x);
}

double SimulationOracle::propensity(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return logistic(propensity_index(spec_.propensity_scenario, x));
}

double SimulationOracle::contrast_at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return contrast(spec_.contrast, x);
}

int SimulationOracle::optimal_action(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return contrast_at(x) > 0.0 ? 1 : 0;
}

Assignments SimulationOracle::optimal_assignments(const Eigen::MatrixXd& x) const {
  Assignments out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = optimal_action(x.row(i).transpose());
  }
  return out;
}

MeanFunction SimulationOracle::mean_function() const {
  return [main = spec_.main_effect, con = spec_.contrast](const Eigen::VectorXd& x, int w) {
    return main_effect(main, x) + w * contrast(con, x);
  };
}

SimulatedData generate(const SimulationSpec& spec) {
  spec.validate();
  if (spec.n < 2) throw Error("simulated dataset needs at least 2 units");
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto p = static_cast<Eigen::Index>(kSimulationDim);
  Rng rng(spec.seed);
  Eigen::MatrixXd x(n, p);
  std::vector<int> w(spec.n);
  Eigen::VectorXd y(n), y0(n), y1(n);
  Eigen::VectorXd xi(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) xi[j] = rng.normal();
    const double noise = rng.normal();
    const double e = logistic(propensity_index(spec.propensity_scenario, xi));
    const int wi = rng.bernoulli(e) ? 1 : 0;
    const double m = main_effect(spec.main_effect, xi);
    const double c = contrast(spec.contrast, xi);
    x.row(i) = xi.transpose();
    w[static_cast<std::size_t>(i)] = wi;
    y0[i] = m + noise;
    y1[i] = m + c + noise;
    y[i] = wi == 1 ? y1[i] : y0[i];
  }
  return SimulatedData{ObservationalDataset(std::move(x), std::move(w), std::move(y)),
                       SimulationOracle(spec, std::move(y0), std::move(y1))};
}

double empirical_value(std::span<const int> assignments, const SimulationOracle& oracle) {
  const auto n = static_cast<std::size_t>(oracle.y0().size());
  if (assignments.size() != n) {
    throw Error("assignment vector has length " + std::to_string(assignments.size()) +
                ", oracle has " + std::to_string(n) + " units");
  }
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (assignments[i] != 0 && assignments[i] != 1) throw Error("assignments must be 0 or 1");
    terms[i] = assignments[i] == 1 ? oracle.y1()[ii] : oracle.y0()[ii];
  }
  return pairwise_sum(terms) / static_cast<double>(n);
}

MonteCarloEstimate true_advantage(const TreePolicy& policy, const SimulationSpec& spec,
                                  std::size_t mc_draws, std::uint64_t seed) {
  spec.validate();
  if (mc_draws < 1) throw Error("true_advantage needs at least one draw");
  for (const auto& s : policy.splits()) {
    if (s.feature >= kSimulationDim) throw Error("policy splits on a feature the simulation lacks");
  }
  Rng rng(seed);
  Eigen::RowVectorXd x(static_cast<Eigen::Index>(kSimulationDim));
  std::vector<double> terms(mc_draws);
  for (std::size_t d = 0; d < mc_draws; ++d) {
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = rng.normal();
    terms[d] = (2 * policy.act(x) - 1) * contrast(spec.contrast, x.transpose());
  }
  const double mean = pairwise_sum(terms) / static_cast<double>(mc_draws);
  double ss = 0.0;
  for (double t : terms) ss += (t - mean) * (t - mean);
  const double sd = mc_draws > 1 ? std::sqrt(ss / static_cast<double>(mc_draws - 1)) : 0.0;
  return MonteCarloEstimate{mean, sd / std::sqrt(static_cast<double>(mc_draws))};
}

bool is_known_method(std::string_view method) {
  if (method == "policy-tree") return true;
  try {
    config_for_method(method);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::vector<ExperimentRow> run_experiment(const ExperimentGrid& grid) {
  if (grid.specs.empty() || grid.methods.empty() || grid.replications == 0) {
    throw Error("experiment grid is empty");
  }
  for (const auto& spec : grid.specs) spec.validate();
  for (const auto& m : grid.methods) {
    if (!is_known_method(m)) throw Error("unknown method '" + m + "'");
  }
  if (grid.test_size < 2) throw Error("test set needs at least 2 units");

  struct Job {
    std::size_t spec;
    std::size_t replicate;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < grid.specs.size(); ++s) {
    for (std::size_t r = 0; r < grid.replications; ++r) jobs.push_back({s, r});
  }
  const std::size_t methods = grid.methods.size();
  std::vector<ExperimentRow> rows(jobs.size() * methods);

  parallel_for(jobs.size(), grid.threads, [&](std::size_t job_index) {
    const Job& job = jobs[job_index];
    SimulationSpec spec = grid.specs[job.spec];
    const std::uint64_t spec_key =
        derive_seed({static_cast<std::uint64_t>(spec.propensity_scenario),
                     static_cast<std::uint64_t>(spec.main_effect),
                     static_cast<std::uint64_t>(spec.contrast), spec.n});
    spec.seed = derive_seed({grid.seed, spec_key, job.replicate, tag_hash("train")});
    SimulationSpec test_spec = spec;
    test_spec.n = grid.test_size;
    test_spec.seed = derive_seed({grid.seed, spec_key, job.replicate, tag_hash("test")});

    std::optional<SimulatedData> train;
    std::optional<SimulatedData> test;
    std::string setup_error;
    try {
      train.emplace(generate(spec));
      test.emplace(generate(test_spec));
    } catch (const std::exception& e) {
      setup_error = std::string("generate: ") + e.what();
    }
    const double optimal = test ? empirical_value(test->oracle.optimal_assignments(test->data.x()),
                                                  test->oracle)
                                : 0.0;

    for (std::size_t k = 0; k < methods; ++k) {
      ExperimentRow& row = rows[job_index * methods + k];
      row.spec = spec;
      row.method = grid.methods[k];
      row.replicate = job.replicate;
      row.optimal_value = optimal;
      if (!setup_error.empty()) {
        row.error = setup_error;
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      try {
        const std::uint64_t method_seed = derive_seed(
            {grid.seed, spec_key, job.replicate, tag_hash(grid.methods[k])});
        const TreePolicy policy = run_method(grid.methods[k], train->data, method_seed);
        row.value = empirical_value(evaluate_policy(policy, test->data.x()), test->oracle);
        row.regret = optimal - row.value;
        row.policy = compact_policy(policy);
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  });
  return rows;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << "scenario,main,contrast,n,method,replicate,seed,ok,value,optimal_value,regret,policy,error\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.spec.propensity_scenario << ',' << to_string(r.spec.main_effect) << ','
        << to_string(r.spec.contrast) << ',' << r.spec.n << ',' << r.method << ',' << r.replicate
        << ',' << r.spec.seed << ',' << (r.ok ? 1 : 0) << ',';
    if (r.ok) {
      out << r.value << ',' << r.optimal_value << ',' << r.regret;
    } else {
      out << ",,";
    }
    out << ',' << csv_escape(r.policy) << ',' << csv_escape(r.error) << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  struct Group {
    const ExperimentRow* first = nullptr;
    std::size_t count = 0;
    std::size_t failures = 0;
    std::vector<double> values, regrets;
  };
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  for (const auto& r : rows) {
    const std::string key = r.spec.label() + "|" + r.method;
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) {
      order.push_back(key);
      it->second.first = &r;
    }
    ++it->second.count;
    if (r.ok) {
      it->second.values.push_back(r.value);
      it->second.regrets.push_back(r.regret);
    } else {
      ++it->second.failures;
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? std::nan("") : pairwise_sum(v) / static_cast<double>(v.size());
  };
  auto sd = [&](const std::vector<double>& v) {
    if (v.size() < 2) return std::nan("");
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  };
  out << "scenario,main,contrast,n,method,replicates,failures,mean_value,sd_value,q1_value,"
         "median_value,q3_value,mean_regret,median_regret\n";
  out << std::setprecision(17);
  for (const auto& key : order) {
    const Group& g = groups.at(key);
    const auto& s = g.first->spec;
    out << s.propensity_scenario << ',' << to_string(s.main_effect) << ',' << to_string(s.contrast)
        << ',' << s.n << ',' << g.first->method << ',' << g.count << ',' << g.failures << ','
        << mean(g.values) << ',' << sd(g.values) << ',' << quantile(g.values, 0.25) << ','
        << quantile(g.values, 0.5) << ',' << quantile(g.values, 0.75) << ',' << mean(g.regrets)
        << ',' << quantile(g.regrets, 0.5) << '\n';
  }
}

void write_timings_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << "scenario,main,contrast,n,method,replicate,wall_seconds\n";
  for (const auto& r : rows) {
    out << r.spec.propensity_scenario << ',' << to_string(r.spec.main_effect) << ','
        << to_string(r.spec.contrast) << ',' << r.spec.n << ',' << r.method << ',' << r.replicate
        << ',' << r.wall_seconds << '\n';
  }
}

}  // namespace mbl
