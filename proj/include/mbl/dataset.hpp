#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mbl {

/// Column roles for load_csv. Columns are matched by header name. An empty
/// covariate list selects every column that is neither treatment nor outcome,
/// in file order.
struct CsvSchema {
  std::string treatment;
  std::string outcome;
  std::vector<std::string> covariates;
};

/// Covariates, binary treatment and outcome for n units. Immutable once built.
///
/// Construction checks n >= 2, finite covariates and outcomes, and w in {0,1}.
/// Arm-size requirements are checked by the operations that need them.
class ObservationalDataset {
 public:
  ObservationalDataset(Eigen::MatrixXd x, std::vector<int> w, Eigen::VectorXd y,
                       std::vector<std::string> feature_names = {});

  std::size_t n() const { return w_.size(); }
  std::size_t p() const { return static_cast<std::size_t>(x_.cols()); }

  const Eigen::MatrixXd& x() const { return x_; }
  std::span<const int> w() const { return w_; }
  const Eigen::VectorXd& y() const { return y_; }
  const std::vector<std::string>& feature_names() const { return names_; }

  /// Features a learned policy may split on. Every feature is eligible unless
  /// excluded; excluded features still enter matching and outcome models.
  const std::vector<bool>& policy_eligible() const { return eligible_; }
  std::vector<std::size_t> eligible_features() const;

  std::size_t arm_size(int arm) const;
  std::size_t feature_index(const std::string& name) const;

  /// Copy with the named features marked ineligible for policy splits.
  ObservationalDataset exclude_from_policy(const std::vector<std::string>& names) const;

  /// Copy restricted to `rows`, in the given order.
  ObservationalDataset subset(std::span<const std::size_t> rows) const;

 private:
  Eigen::MatrixXd x_;
  std::vector<int> w_;
  Eigen::VectorXd y_;
  std::vector<std::string> names_;
  std::vector<bool> eligible_;
};

ObservationalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
ObservationalDataset load_csv(std::istream& in, const CsvSchema& schema,
                              const std::string& source = "<stream>");

/// Row-appends `b` to `a`. Feature names must agree.
ObservationalDataset concatenate(const ObservationalDataset& a, const ObservationalDataset& b);

struct BalanceReport {
  std::vector<std::string> features;
  std::vector<double> normalized_difference;
  std::size_t n0 = 0;
  std::size_t n1 = 0;
};

/// (mean_1 - mean_0) / sqrt((s2_1 + s2_0) / 2) per covariate, with (n_w - 1)
/// sample variances.
BalanceReport normalized_differences(const ObservationalDataset& data);

/// "feature,value" rows with a header.
void write_csv(std::ostream& out, const BalanceReport& report);

}  // namespace mbl
