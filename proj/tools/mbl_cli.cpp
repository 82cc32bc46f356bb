// mbl: matching-based policy learning from the command line.
//
//   mbl simulate   run simulation grids, write per-replicate and summary CSVs
//   mbl learn      learn a depth-1/2 tree policy from a CSV file
//   mbl evaluate   AIPW value of a fixed policy, or repeated k-fold CV of a learner
//   mbl balance    normalized differences between arms
//   mbl replicate  the full simulation grid at a chosen budget
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "mbl/dataset.hpp"
#include "mbl/error.hpp"
#include "mbl/evaluation.hpp"
#include "mbl/learner.hpp"
#include "mbl/policytree.hpp"
#include "mbl/simulation.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mbl::Error("cannot reopen " + path.string() + " for checksumming");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

// Resolved configuration as ordered key/value lines. Written before any
// result, then rewritten with the checksums of the artifacts.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command) : dir_(std::move(dir)) {
    set("command", std::move(command));
  }

  void set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  template <typename T>
  void set(const std::string& key, const T& value) {
    std::ostringstream s;
    s << value;
    set(key, s.str());
  }

  void write_config() const { write({}); }

  void finish(const std::vector<std::string>& artifacts) const {
    std::vector<std::pair<std::string, std::string>> sums;
    for (const auto& a : artifacts) sums.emplace_back(a, sha256_file(dir_ / a));
    write(sums);
  }

 private:
  void write(const std::vector<std::pair<std::string, std::string>>& sums) const {
    std::ofstream out(dir_ / "manifest.txt", std::ios::binary);
    if (!out) throw mbl::Error("cannot write " + (dir_ / "manifest.txt").string());
    out << "mbl-manifest 1\n";
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
    for (const auto& [name, sum] : sums) out << "sha256 " << name << " " << sum << '\n';
  }

  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct Common {
  std::string out_dir;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  fs::path prepare() const {
    fs::path dir = out_dir;
    if (dir.empty()) {
      const char* env = std::getenv("MBL_OUTPUT_DIR");
      dir = env != nullptr && *env != '\0' ? fs::path(env) : fs::path("mbl-out");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw mbl::Error("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
  }
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mbl::Error("cannot write " + path.string());
  return out;
}

struct DataArgs {
  std::string path;
  std::string treatment = "treat";
  std::string outcome = "re78";
  std::string covariates;
  std::string exclude;

  void add(CLI::App* app, bool with_exclude) {
    app->add_option("--data", path, "CSV file with a header row")->required();
    app->add_option("--treatment", treatment, "0/1 treatment column")->capture_default_str();
    app->add_option("--outcome", outcome, "Outcome column")->capture_default_str();
    app->add_option("--covariates", covariates,
                    "Comma-separated covariate columns (default: all other columns)");
    if (with_exclude) {
      app->add_option("--exclude", exclude,
                      "Comma-separated covariates used for matching but not for splits");
    }
  }

  mbl::ObservationalDataset load() const {
    mbl::CsvSchema schema{treatment, outcome, split_list(covariates)};
    mbl::ObservationalDataset data = [&] {
      try {
        return mbl::load_csv(path, schema);
      } catch (const mbl::Error& e) {
        throw mbl::StageError("load", e.what());
      }
    }();
    if (!exclude.empty()) data = data.exclude_from_policy(split_list(exclude));
    return data;
  }

  void record(Manifest& manifest) const {
    manifest.set("data", path);
    manifest.set("treatment", treatment);
    manifest.set("outcome", outcome);
    manifest.set("covariates", covariates.empty() ? std::string("(all others)") : covariates);
    manifest.set("exclude", exclude);
  }
};

// ---------------------------------------------------------------- simulate

std::vector<std::string> all_methods() {
  return {"mb-m1", "mb-m5", "mb-lr-m1", "mb-lr-m5", "mb-lasso-m1", "mb-lasso-m5", "policy-tree"};
}

int finish_experiment(const mbl::ExperimentGrid& grid, const fs::path& dir, Manifest& manifest) {
  manifest.write_config();
  const auto rows = mbl::run_experiment(grid);
  {
    auto out = open_output(dir / "results.csv");
    mbl::write_results_csv(out, rows);
  }
  {
    auto out = open_output(dir / "summary.csv");
    mbl::write_summary_csv(out, rows);
  }
  {
    auto out = open_output(dir / "timings.csv");
    mbl::write_timings_csv(out, rows);
  }
  manifest.finish({"results.csv", "summary.csv"});

  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (!r.ok) {
      ++failed;
      std::cerr << "warning: " << r.spec.label() << " " << r.method << " rep " << r.replicate
                << ": " << r.error << '\n';
    }
  }
  std::ifstream summary(dir / "summary.csv");
  std::cout << summary.rdbuf();
  std::cout << "wrote " << rows.size() << " rows to " << (dir / "results.csv").string() << '\n';
  if (failed == rows.size()) {
    std::cerr << "error: every replicate failed\n";
    return 1;
  }
  return 0;
}

struct SimulateArgs {
  std::string scenarios = "1";
  std::string mains = "linear";
  std::string contrasts = "tree";
  std::string sizes = "1000";
  std::string methods = "mb-lasso-m5";
  std::size_t reps = 50;
  std::size_t test_size = 20000;
};

int run_simulate(const SimulateArgs& args, const Common& common) {
  if (args.reps == 0) throw UsageError("--reps must be at least 1");
  if (args.test_size < 2) throw UsageError("--test-size must be at least 2");
  mbl::ExperimentGrid grid;
  grid.replications = args.reps;
  grid.seed = common.seed;
  grid.test_size = args.test_size;
  grid.threads = common.threads;
  grid.methods = split_list(args.methods);
  if (grid.methods.size() == 1 && grid.methods[0] == "all") grid.methods = all_methods();
  for (const auto& m : grid.methods) {
    if (!mbl::is_known_method(m)) throw UsageError("unknown method '" + m + "'");
  }
  try {
    for (const auto& s : split_list(args.scenarios)) {
      for (const auto& me : split_list(args.mains)) {
        for (const auto& c : split_list(args.contrasts)) {
          for (const auto& n : split_list(args.sizes)) {
            mbl::SimulationSpec spec;
            spec.propensity_scenario = std::stoi(s);
            spec.main_effect = mbl::parse_main_effect(me);
            spec.contrast = mbl::parse_contrast(c);
            spec.n = std::stoul(n);
            spec.validate();
            if (spec.n < 10) throw mbl::Error("--n must be at least 10");
            grid.specs.push_back(spec);
          }
        }
      }
    }
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (grid.specs.empty() || grid.methods.empty()) throw UsageError("empty simulation grid");

  const fs::path dir = common.prepare();
  Manifest manifest(dir, "simulate");
  manifest.set("scenarios", args.scenarios);
  manifest.set("main", args.mains);
  manifest.set("contrast", args.contrasts);
  manifest.set("n", args.sizes);
  manifest.set("methods", args.methods);
  manifest.set("reps", args.reps);
  manifest.set("test_size", args.test_size);
  manifest.set("seed", common.seed);
  return finish_experiment(grid, dir, manifest);
}

// --------------------------------------------------------------- replicate

int run_replicate(const std::string& budget, const std::string& methods, const Common& common) {
  mbl::ExperimentGrid grid;
  grid.seed = common.seed;
  grid.threads = common.threads;
  grid.methods = methods.empty() ? all_methods() : split_list(methods);
  for (const auto& m : grid.methods) {
    if (!mbl::is_known_method(m)) throw UsageError("unknown method '" + m + "'");
  }
  std::vector<std::size_t> sizes{200, 500, 1000};
  std::vector<int> scenarios{1, 2, 3, 4, 5};
  std::vector<mbl::MainEffect> mains{mbl::MainEffect::linear, mbl::MainEffect::nonlinear};
  std::vector<mbl::Contrast> contrasts{mbl::Contrast::tree, mbl::Contrast::nontree};
  if (budget == "smoke") {
    grid.replications = 2;
    grid.test_size = 2000;
    sizes = {200};
    scenarios = {1};
    mains = {mbl::MainEffect::linear};
    contrasts = {mbl::Contrast::tree};
  } else if (budget == "desk") {
    grid.replications = 10;
    grid.test_size = 20000;
  } else if (budget == "full") {
    grid.replications = 200;
    grid.test_size = 20000;
  } else {
    throw UsageError("--budget must be smoke, desk or full");
  }
  for (int s : scenarios) {
    for (auto me : mains) {
      for (auto c : contrasts) {
        for (auto n : sizes) grid.specs.push_back(mbl::SimulationSpec{s, me, c, n, 0});
      }
    }
  }
  const fs::path dir = common.prepare();
  Manifest manifest(dir, "replicate");
  manifest.set("budget", budget);
  manifest.set("methods", methods.empty() ? std::string("all") : methods);
  manifest.set("reps", grid.replications);
  manifest.set("test_size", grid.test_size);
  manifest.set("seed", common.seed);
  return finish_experiment(grid, dir, manifest);
}

// ------------------------------------------------------------------- learn

struct LearnArgs {
  DataArgs data;
  std::string correction = "lasso";
  std::size_t m = 5;
  std::size_t depth = 2;
};

int run_learn(const LearnArgs& args, const Common& common) {
  if (args.m < 1) throw UsageError("--m must be at least 1");
  if (args.depth != 1 && args.depth != 2) throw UsageError("--depth must be 1 or 2");
  mbl::LearnerConfig config;
  try {
    config.correction = mbl::parse_correction(args.correction);
  } catch (const mbl::Error& e) {
    throw UsageError(e.what());
  }
  config.m = args.m;
  config.depth = args.depth;
  config.seed = common.seed;
  config.threads = common.threads;

  const fs::path dir = common.prepare();
  Manifest manifest(dir, "learn");
  args.data.record(manifest);
  manifest.set("correction", args.correction);
  manifest.set("m", args.m);
  manifest.set("depth", args.depth);
  manifest.set("seed", common.seed);
  manifest.write_config();

  const auto data = args.data.load();
  const auto result = mbl::learn_policy_detailed(data, config);
  {
    auto out = open_output(dir / "policy.txt");
    out << mbl::to_text(result.policy, data.feature_names());
  }
  {
    auto out = open_output(dir / "policy.json");
    out << mbl::to_json(result.policy, data.feature_names());
  }
  {
    auto out = open_output(dir / "gamma.csv");
    const auto actions = mbl::evaluate_policy(result.policy, data.x());
    out << "unit,w,y,y0_hat,y1_hat,gamma,k_count,action\n" << std::setprecision(17);
    for (std::size_t i = 0; i < data.n(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      out << i << ',' << data.w()[i] << ',' << data.y()[ii] << ',' << result.imputed.y0[ii] << ','
          << result.imputed.y1[ii] << ',' << result.imputed.gamma[ii] << ','
          << result.matches.k_counts()[i] << ',' << actions[i] << '\n';
    }
  }
  manifest.finish({"policy.txt", "policy.json", "gamma.csv"});
  std::cout << mbl::to_text(result.policy, data.feature_names());
  std::cout << "estimated advantage " << std::setprecision(6) << result.advantage << '\n';
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  DataArgs data;
  std::string policy = "treat-all";
  std::string propensity = "arm-proportion";
  bool cv = false;
  std::size_t repeats = 100;
  std::size_t folds = 5;
  std::string method = "mb-lasso-m5";
};

mbl::TreePolicy load_policy(const std::string& spec, const mbl::ObservationalDataset& data) {
  if (spec == "treat-all") return mbl::TreePolicy::constant(1);
  if (spec == "treat-none") return mbl::TreePolicy::constant(0);
  std::ifstream in(spec, std::ios::binary);
  if (!in) throw mbl::StageError("policy", "cannot open policy file " + spec);
  std::ostringstream text;
  text << in.rdbuf();
  const std::string body = text.str();
  const auto first = body.find_first_not_of(" \t\r\n");
  const auto parsed = first != std::string::npos && body[first] == '{' ? mbl::parse_json(body)
                                                                        : mbl::parse_text(body);
  if (parsed.feature_names != data.feature_names()) {
    throw mbl::StageError("policy", "policy was learned on different features than --data provides");
  }
  return parsed.tree;
}

int run_evaluate(const EvaluateArgs& args, const Common& common) {
  mbl::PropensityMethod propensity;
  try {
    propensity = mbl::parse_propensity_method(args.propensity);
  } catch (const mbl::Error& e) {
    throw UsageError(e.what());
  }
  if (args.cv) {
    if (args.repeats < 1) throw UsageError("--repeats must be at least 1");
    if (args.folds < 2) throw UsageError("--folds must be at least 2");
    if (!mbl::is_known_method(args.method)) throw UsageError("unknown method '" + args.method + "'");
  }

  const fs::path dir = common.prepare();
  Manifest manifest(dir, "evaluate");
  args.data.record(manifest);
  manifest.set("propensity", args.propensity);
  manifest.set("seed", common.seed);
  if (args.cv) {
    manifest.set("mode", "cross-validation");
    manifest.set("method", args.method);
    manifest.set("folds", args.folds);
    manifest.set("repeats", args.repeats);
  } else {
    manifest.set("mode", "fixed-policy");
    manifest.set("policy", args.policy);
  }
  manifest.write_config();

  const auto data = args.data.load();
  if (!args.cv) {
    const auto policy = load_policy(args.policy, data);
    const auto nuisances = mbl::fit_evaluation_nuisances(data, propensity);
    const mbl::MeanFunction mu = [&](const Eigen::VectorXd& x, int w) {
      return nuisances.mu.predict(x, w);
    };
    const auto assignments = mbl::evaluate_policy(policy, data.x());
    const double value = mbl::aipw_value_estimate(data, assignments, nuisances.e_hat, mu);
    std::size_t treated = 0;
    for (int a : assignments) treated += static_cast<std::size_t>(a);
    {
      auto out = open_output(dir / "evaluation.csv");
      out << "policy,propensity,n,assigned_treatment,aipw_value\n"
          << args.policy << ',' << args.propensity << ',' << data.n() << ',' << treated << ','
          << std::setprecision(17) << value << '\n';
    }
    manifest.finish({"evaluation.csv"});
    std::cout << "AIPW value of " << args.policy << ": " << std::fixed << std::setprecision(2)
              << value << " (" << treated << " of " << data.n() << " assigned treatment)\n";
    return 0;
  }

  const std::string method = args.method;
  const unsigned threads = common.threads;
  const mbl::PolicyLearner learner = [method](const mbl::ObservationalDataset& train,
                                              std::uint64_t seed) {
    if (method == "policy-tree") {
      mbl::AipwLearnerConfig config;
      config.seed = seed;
      return mbl::learn_aipw_policy(train, config);
    }
    auto config = mbl::config_for_method(method);
    config.seed = seed;
    return mbl::learn_policy(train, config);
  };
  mbl::CrossValConfig config;
  config.folds = args.folds;
  config.repeats = args.repeats;
  config.seed = common.seed;
  config.propensity = propensity;
  config.threads = threads;
  const auto report = mbl::cross_validate(data, learner, config);
  {
    auto out = open_output(dir / "cv_summary.csv");
    mbl::write_csv(out, report);
  }
  {
    auto out = open_output(dir / "cv_repeats.csv");
    mbl::write_repeats_csv(out, report);
  }
  manifest.finish({"cv_summary.csv", "cv_repeats.csv"});
  for (const auto& f : report.failures) std::cerr << "warning: " << f << '\n';
  std::cout << method << " cross-validated AIPW value: " << std::fixed << std::setprecision(2)
            << report.mean << " (sd " << report.std << ") over " << report.repeats << " x "
            << report.folds << "-fold\n";
  if (std::isnan(report.mean)) {
    std::cerr << "error: every repeat failed\n";
    return 1;
  }
  return 0;
}

// ----------------------------------------------------------------- balance

int run_balance(const DataArgs& args, const Common& common) {
  const fs::path dir = common.prepare();
  Manifest manifest(dir, "balance");
  args.record(manifest);
  manifest.write_config();
  const auto data = args.load();
  const auto report = mbl::normalized_differences(data);
  {
    auto out = open_output(dir / "balance.csv");
    mbl::write_csv(out, report);
  }
  manifest.finish({"balance.csv"});
  std::cout << "n0 = " << report.n0 << ", n1 = " << report.n1 << '\n';
  for (std::size_t j = 0; j < report.features.size(); ++j) {
    std::cout << std::left << std::setw(16) << report.features[j] << std::right << std::fixed
              << std::setprecision(3) << std::setw(8) << report.normalized_difference[j] << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matching-based policy learning"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--out", common.out_dir, "Output directory (default $MBL_OUTPUT_DIR or ./mbl-out)");
  app.add_option("--seed", common.seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker threads; results do not depend on it")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  app.fallthrough();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run simulation replicates");
  simulate->add_option("--scenario", sim.scenarios, "Propensity scenarios 1-5, comma-separated")
      ->capture_default_str();
  simulate->add_option("--main", sim.mains, "linear and/or nonlinear")->capture_default_str();
  simulate->add_option("--contrast", sim.contrasts, "tree and/or nontree")->capture_default_str();
  simulate->add_option("--n", sim.sizes, "Training sizes, comma-separated")->capture_default_str();
  simulate->add_option("--method", sim.methods,
                       "Methods (mb-m1, mb-m5, mb-lr-m1, mb-lr-m5, mb-lasso-m1, mb-lasso-m5, "
                       "policy-tree) or 'all'")
      ->capture_default_str();
  simulate->add_option("--reps", sim.reps, "Replicates per setting")->capture_default_str();
  simulate->add_option("--test-size", sim.test_size, "Test set size")->capture_default_str();

  LearnArgs learn;
  auto* learn_cmd = app.add_subcommand("learn", "Learn a tree policy from a CSV file");
  learn.data.add(learn_cmd, true);
  learn_cmd->add_option("--correction", learn.correction, "none, ols or lasso")->capture_default_str();
  learn_cmd->add_option("--m", learn.m, "Matches per unit")->capture_default_str();
  learn_cmd->add_option("--depth", learn.depth, "Tree depth (1 or 2)")->capture_default_str();

  EvaluateArgs eval;
  auto* evaluate = app.add_subcommand("evaluate", "AIPW evaluation of a policy or a learner");
  eval.data.add(evaluate, true);
  evaluate->add_option("--policy", eval.policy, "treat-all, treat-none, or a policy file")
      ->capture_default_str();
  evaluate->add_option("--propensity", eval.propensity, "arm-proportion or linear-probability")
      ->capture_default_str();
  evaluate->add_flag("--cv", eval.cv, "Repeated k-fold cross-validation of --method");
  evaluate->add_option("--repeats", eval.repeats, "CV repeats")->capture_default_str();
  evaluate->add_option("--folds", eval.folds, "CV folds")->capture_default_str();
  evaluate->add_option("--method", eval.method, "Learner to cross-validate")->capture_default_str();

  DataArgs balance_data;
  auto* balance = app.add_subcommand("balance", "Normalized differences between arms");
  balance->add_option("--data", balance_data.path, "CSV file")->required();
  balance->add_option("--treatment", balance_data.treatment, "0/1 treatment column")
      ->capture_default_str();
  balance->add_option("--outcome", balance_data.outcome, "Outcome column (left out of the report)")
      ->capture_default_str();
  balance->add_option("--covariates", balance_data.covariates, "Comma-separated covariates");

  std::string budget = "smoke";
  std::string replicate_methods;
  auto* replicate = app.add_subcommand("replicate", "Full simulation grid at a fixed budget");
  replicate->add_option("--budget", budget, "smoke, desk or full")->capture_default_str();
  replicate->add_option("--method", replicate_methods, "Methods (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return run_simulate(sim, common);
    if (*learn_cmd) return run_learn(learn, common);
    if (*evaluate) return run_evaluate(eval, common);
    if (*balance) return run_balance(balance_data, common);
    if (*replicate) return run_replicate(budget, replicate_methods, common);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
