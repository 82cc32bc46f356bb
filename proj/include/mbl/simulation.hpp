#pragma once

#include "mbl/advantage.hpp"
#include "mbl/dataset.hpp"
#include "mbl/policytree.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mbl {

enum class MainEffect { linear, nonlinear };
enum class Contrast { tree, nontree };

std::string_view to_string(MainEffect m);
std::string_view to_string(Contrast c);
MainEffect parse_main_effect(std::string_view text);
Contrast parse_contrast(std::string_view text);

/// One data-generating process. X ~ N(0, I_4); W ~ Bernoulli(logistic(l(X)))
/// with l(X) chosen by propensity_scenario (1..5); Y = m(X) + W c(X) + e,
/// e ~ N(0, 1).
///
///   scenario 1  -X1 + 0.5 X2 - 0.25 X3 - 0.1 X4          (about 50:50)
///   scenario 2  0.1 X1^3 + 0.2 X2^3 + 0.3 X3             (about 50:50)
///   scenario 3  2.1 - X1 + 2 X2 - 0.25 X3 - 0.1 X4       (about 23:77)
///   scenario 4  log 9                                     (10:90)
///   scenario 5  1 + exp(X2) + sin(X1) cos(X3)            (about 12:88)
///
///   linear main     1 + 2 X1 - X2 + 0.5 X3 - 1.5 X4
///   nonlinear main  4 sin(X1) + 2.5 cos(X2) - X3 X4
///   tree contrast      2 I{X1 > 0, X2 > 0} - 1
///   non-tree contrast  2 I{2 X2 - exp(1 + X1) + 2 > 0} - 1
struct SimulationSpec {
  int propensity_scenario = 1;
  MainEffect main_effect = MainEffect::linear;
  Contrast contrast = Contrast::tree;
  std::size_t n = 1000;
  std::uint64_t seed = 0;

  void validate() const;
  std::string label() const;
};

inline constexpr std::size_t kSimulationDim = 4;

double propensity_index(int scenario, const Eigen::Ref<const Eigen::VectorXd>& x);
double main_effect(MainEffect m, const Eigen::Ref<const Eigen::VectorXd>& x);
double contrast(Contrast c, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Ground truth of a generated dataset. The stored potential outcomes share
/// the unit's single noise draw: Y_i(w) = m(X_i) + w c(X_i) + e_i.
class SimulationOracle {
 public:
  SimulationOracle(SimulationSpec spec, Eigen::VectorXd y0, Eigen::VectorXd y1);

  const SimulationSpec& spec() const { return spec_; }
  const Eigen::VectorXd& y0() const { return y0_; }
  const Eigen::VectorXd& y1() const { return y1_; }

  double mu(const Eigen::Ref<const Eigen::VectorXd>& x, int w) const;
  double propensity(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double contrast_at(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Globally optimal rule I{c(x) > 0}.
  int optimal_action(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Assignments optimal_assignments(const Eigen::MatrixXd& x) const;

  MeanFunction mean_function() const;

 private:
  SimulationSpec spec_;
  Eigen::VectorXd y0_;
  Eigen::VectorXd y1_;
};

struct SimulatedData {
  ObservationalDataset data;
  SimulationOracle oracle;
};

/// Per unit, in order: X1..X4 (normals), noise e (normal), then one uniform
/// for the treatment draw. Identical specs give bit-identical output.
SimulatedData generate(const SimulationSpec& spec);

/// Mean over units of Y_i(pi_i) from the oracle's stored potential outcomes.
double empirical_value(std::span<const int> assignments, const SimulationOracle& oracle);

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// E[(2 pi(X) - 1) c(X)] over fresh X ~ N(0, I_4).
MonteCarloEstimate true_advantage(const TreePolicy& policy, const SimulationSpec& spec,
                                  std::size_t mc_draws, std::uint64_t seed);

/// A policy-learning method runnable inside an experiment: the MB variants
/// ("mb-m1", ..., "mb-lasso-m5") or the AIPW baseline ("policy-tree").
bool is_known_method(std::string_view method);

struct ExperimentGrid {
  /// Seeds inside the specs are ignored; every replicate derives its own.
  std::vector<SimulationSpec> specs;
  std::vector<std::string> methods;
  std::size_t replications = 1;
  std::uint64_t seed = 0;
  std::size_t test_size = 20000;
  unsigned threads = 1;
};

struct ExperimentRow {
  SimulationSpec spec;  // seed = the replicate's training-data seed
  std::string method;
  std::size_t replicate = 0;
  bool ok = false;
  std::string error;
  double value = 0.0;
  double optimal_value = 0.0;
  double regret = 0.0;
  double wall_seconds = 0.0;
  std::string policy;  // compact one-line rendering of the learned tree
};

/// Runs every (spec, replicate) once, training all methods on the same data
/// and scoring them on the same fresh test set. Per-replicate failures are
/// recorded in the row, not thrown. Output order: spec, replicate, method.
std::vector<ExperimentRow> run_experiment(const ExperimentGrid& grid);

/// Columns: scenario,main,contrast,n,method,replicate,seed,ok,value,optimal_value,regret,policy,error
void write_results_csv(std::ostream& out, const std::vector<ExperimentRow>& rows);
/// One row per (spec, method): count, failures, mean/sd/quartiles of value and regret.
void write_summary_csv(std::ostream& out, const std::vector<ExperimentRow>& rows);
void write_timings_csv(std::ostream& out, const std::vector<ExperimentRow>& rows);

}  // namespace mbl
