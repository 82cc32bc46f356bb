#include "mbl/evaluation.hpp"

#include "mbl/error.hpp"
#include "mbl/numeric.hpp"
#include "mbl/parallel.hpp"
#include "mbl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

namespace mbl {

PropensityModel PropensityModel::fit(const ObservationalDataset& data, double ridge_per_unit,
                                     double clip) {
  if (!(clip >= 0.0 && clip < 0.5)) throw Error("propensity clip must lie in [0, 0.5)");
  const Eigen::MatrixXd& x = data.x();
  const double n = static_cast<double>(data.n());
  PropensityModel model;
  model.clip_ = clip;
  model.center_ = x.colwise().mean().transpose();
  Eigen::MatrixXd z = x.rowwise() - model.center_.transpose();
  model.scale_.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt(z.col(j).squaredNorm() / n);
    model.scale_[j] = sd > 0.0 ? sd : 1.0;
    z.col(j) /= model.scale_[j];
  }
  Eigen::VectorXd w(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) w[i] = data.w()[static_cast<std::size_t>(i)];
  const double w_mean = w.mean();
  Eigen::MatrixXd gram = z.transpose() * z;
  gram.diagonal().array() += ridge_per_unit * n;
  const Eigen::VectorXd slopes = gram.ldlt().solve(z.transpose() * (w.array() - w_mean).matrix());
  model.coef_.resize(slopes.size() + 1);
  model.coef_[0] = w_mean;
  model.coef_.tail(slopes.size()) = slopes;
  return model;
}

double PropensityModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != center_.size()) throw Error("propensity model: dimension mismatch");
  const Eigen::VectorXd z = (x - center_).cwiseQuotient(scale_);
  const double e = coef_[0] + coef_.tail(z.size()).dot(z);
  return std::clamp(e, clip_, 1.0 - clip_);
}

std::vector<double> PropensityModel::predict_rows(const Eigen::MatrixXd& x) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = predict(x.row(i).transpose());
  }
  return out;
}

double aipw_value_estimate(const ObservationalDataset& data, std::span<const int> assignments,
                           std::span<const double> e_hat, const MeanFunction& mu_hat, double clip) {
  if (assignments.size() != data.n() || e_hat.size() != data.n()) {
    throw Error("AIPW value: assignment / propensity length does not match the data");
  }
  if (!(clip >= 0.0 && clip < 0.5)) throw Error("propensity clip must lie in [0, 0.5)");
  std::vector<double> terms(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const int action = assignments[i];
    if (action != 0 && action != 1) throw Error("assignments must be 0 or 1");
    const double e1 = e_hat[i];
    if (!(e1 >= 0.0 && e1 <= 1.0)) {
      throw Error("propensity " + std::to_string(e1) + " of unit " + std::to_string(i) +
                  " is outside [0, 1]");
    }
    const double e = std::clamp(action == 1 ? e1 : 1.0 - e1, clip, 1.0 - clip);
    const double follows = data.w()[i] == action ? 1.0 : 0.0;
    const auto ii = static_cast<Eigen::Index>(i);
    const double mu = mu_hat(data.x().row(ii).transpose(), action);
    terms[i] = data.y()[ii] * follows / e - (follows - e) / e * mu;
  }
  return pairwise_sum(terms) / static_cast<double>(data.n());
}

double aipw_value_estimate(const ObservationalDataset& data, std::span<const int> assignments,
                           const std::function<double(const Eigen::VectorXd&)>& e_hat,
                           const MeanFunction& mu_hat, double clip) {
  std::vector<double> e(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    e[i] = e_hat(data.x().row(static_cast<Eigen::Index>(i)).transpose());
  }
  return aipw_value_estimate(data, assignments, e, mu_hat, clip);
}

std::string_view to_string(PropensityMethod m) {
  return m == PropensityMethod::arm_proportion ? "arm-proportion" : "linear-probability";
}

PropensityMethod parse_propensity_method(std::string_view text) {
  if (text == "arm-proportion" || text == "arm") return PropensityMethod::arm_proportion;
  if (text == "linear-probability" || text == "linear") return PropensityMethod::linear_probability;
  throw Error("unknown propensity method '" + std::string(text) + "'");
}

EvaluationNuisances fit_evaluation_nuisances(const ObservationalDataset& data,
                                             PropensityMethod propensity) {
  std::vector<double> e_hat;
  if (propensity == PropensityMethod::arm_proportion) {
    e_hat.assign(data.n(), static_cast<double>(data.arm_size(1)) / static_cast<double>(data.n()));
  } else {
    e_hat = PropensityModel::fit(data).predict_rows(data.x());
  }
  return EvaluationNuisances{std::move(e_hat), fit_ols_per_arm(data, Expansion::quadratic)};
}

std::vector<std::vector<std::size_t>> fold_partition(std::span<const std::size_t> permutation,
                                                     std::size_t folds) {
  const std::size_t n = permutation.size();
  if (folds < 1 || folds > n) {
    throw Error("cannot split " + std::to_string(n) + " units into " + std::to_string(folds) +
                " folds");
  }
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(permutation.begin() + static_cast<std::ptrdiff_t>(pos),
                  permutation.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

CrossValReport cross_validate(const ObservationalDataset& data, const PolicyLearner& learner,
                              const CrossValConfig& config) {
  if (config.folds < 2) throw Error("cross-validation needs at least 2 folds");
  if (data.n() < config.folds) throw Error("fewer units than folds");
  if (config.repeats < 1) throw Error("cross-validation needs at least one repeat");

  const auto nuisances = fit_evaluation_nuisances(data, config.propensity);
  const MeanFunction mu = [&](const Eigen::VectorXd& x, int w) { return nuisances.mu.predict(x, w); };

  CrossValReport report;
  report.folds = config.folds;
  report.repeats = config.repeats;
  report.seed = config.seed;
  report.repeat_values.assign(config.repeats, std::numeric_limits<double>::quiet_NaN());
  report.flagged.assign(config.repeats, false);
  std::vector<std::vector<std::string>> failures(config.repeats);

  parallel_for(config.repeats, config.threads, [&](std::size_t r) {
    std::vector<std::size_t> perm(data.n());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed({config.seed, tag_hash("cv-repeat"), r}));
    rng.shuffle(std::span<std::size_t>(perm));
    const auto folds = fold_partition(perm, config.folds);

    double sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t k = 0; k < folds.size(); ++k) {
      std::vector<std::size_t> train;
      for (std::size_t j = 0; j < folds.size(); ++j) {
        if (j != k) train.insert(train.end(), folds[j].begin(), folds[j].end());
      }
      std::sort(train.begin(), train.end());
      std::vector<std::size_t> test = folds[k];
      std::sort(test.begin(), test.end());
      try {
        const auto policy =
            learner(data.subset(train), derive_seed({config.seed, tag_hash("cv-fold"), r, k}));
        const auto held_out = data.subset(test);
        const auto assignments = evaluate_policy(policy, held_out.x());
        std::vector<double> e(test.size());
        for (std::size_t t = 0; t < test.size(); ++t) e[t] = nuisances.e_hat[test[t]];
        sum += aipw_value_estimate(held_out, assignments, e, mu);
        ++scored;
      } catch (const std::exception& ex) {
        report.flagged[r] = true;
        failures[r].push_back("repeat " + std::to_string(r) + " fold " + std::to_string(k) +
                              ": " + ex.what());
      }
    }
    if (scored > 0) report.repeat_values[r] = sum / static_cast<double>(scored);
  });

  std::vector<double> valid;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    for (auto& f : failures[r]) report.failures.push_back(std::move(f));
    if (!std::isnan(report.repeat_values[r])) valid.push_back(report.repeat_values[r]);
  }
  if (valid.empty()) {
    report.mean = report.std = std::numeric_limits<double>::quiet_NaN();
    return report;
  }
  report.mean = pairwise_sum(valid) / static_cast<double>(valid.size());
  if (valid.size() > 1) {
    double ss = 0.0;
    for (double v : valid) ss += (v - report.mean) * (v - report.mean);
    report.std = std::sqrt(ss / static_cast<double>(valid.size() - 1));
  } else {
    report.std = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

void write_csv(std::ostream& out, const CrossValReport& report) {
  std::size_t flagged = 0;
  for (bool f : report.flagged) flagged += f ? 1 : 0;
  out << "folds,repeats,seed,mean,std,flagged_repeats\n";
  out << report.folds << ',' << report.repeats << ',' << report.seed << ','
      << std::setprecision(17) << report.mean << ',' << report.std << ',' << flagged << '\n';
}

void write_repeats_csv(std::ostream& out, const CrossValReport& report) {
  out << "repeat,value,flagged\n";
  for (std::size_t r = 0; r < report.repeat_values.size(); ++r) {
    out << r << ',' << std::setprecision(17) << report.repeat_values[r] << ','
        << (report.flagged[r] ? 1 : 0) << '\n';
  }
}

TreePolicy learn_aipw_policy(const ObservationalDataset& data, const AipwLearnerConfig& config) {
  const std::size_t n = data.n();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed({config.seed, tag_hash("aipw-crossfit")}));
  rng.shuffle(std::span<std::size_t>(perm));
  const auto folds = fold_partition(perm, config.cross_fit_folds);

  std::vector<double> e_hat(n);
  Eigen::VectorXd mu0(static_cast<Eigen::Index>(n)), mu1(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < folds.size(); ++k) {
    std::vector<std::size_t> train;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (j != k) train.insert(train.end(), folds[j].begin(), folds[j].end());
    }
    std::sort(train.begin(), train.end());
    const auto fit_data = data.subset(train);
    const auto outcome = fit_ols_per_arm(fit_data, Expansion::quadratic);
    const auto propensity = PropensityModel::fit(fit_data, 1e-3, 0.0);
    for (auto i : folds[k]) {
      const Eigen::VectorXd xi = data.x().row(static_cast<Eigen::Index>(i)).transpose();
      e_hat[i] = std::clamp(propensity.predict(xi), 0.0, 1.0);
      mu0[static_cast<Eigen::Index>(i)] = outcome.predict(xi, 0);
      mu1[static_cast<Eigen::Index>(i)] = outcome.predict(xi, 1);
    }
  }
  const auto scores = aipw_scores(data, e_hat, mu0, mu1, config.clip);
  return search_tree(data.x(), scores.gamma, config.depth, data.eligible_features());
}

}  // namespace mbl
