#include "mbl/dataset.hpp"

#include "mbl/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace mbl {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      return fields;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool parse_double(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace

ObservationalDataset::ObservationalDataset(Eigen::MatrixXd x, std::vector<int> w,
                                           Eigen::VectorXd y,
                                           std::vector<std::string> feature_names)
    : x_(std::move(x)), w_(std::move(w)), y_(std::move(y)), names_(std::move(feature_names)) {
  const auto n = w_.size();
  if (n < 2) throw Error("dataset needs at least 2 units, got " + std::to_string(n));
  if (static_cast<std::size_t>(x_.rows()) != n || static_cast<std::size_t>(y_.size()) != n) {
    throw Error("dataset dimension mismatch: x has " + std::to_string(x_.rows()) + " rows, w " +
                std::to_string(n) + ", y " + std::to_string(y_.size()));
  }
  if (x_.cols() < 1) throw Error("dataset needs at least one covariate");
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  } else if (names_.size() != p()) {
    throw Error("feature name count does not match covariate count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (w_[i] != 0 && w_[i] != 1) {
      throw Error("treatment of unit " + std::to_string(i) + " is " + std::to_string(w_[i]) +
                  ", expected 0 or 1");
    }
    if (!std::isfinite(y_[static_cast<Eigen::Index>(i)])) {
      throw Error("non-finite outcome for unit " + std::to_string(i));
    }
  }
  if (!x_.allFinite()) throw Error("covariate matrix contains non-finite entries");
  eligible_.assign(p(), true);
}

std::vector<std::size_t> ObservationalDataset::eligible_features() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < eligible_.size(); ++j) {
    if (eligible_[j]) out.push_back(j);
  }
  return out;
}

std::size_t ObservationalDataset::arm_size(int arm) const {
  return static_cast<std::size_t>(std::count(w_.begin(), w_.end(), arm));
}

std::size_t ObservationalDataset::feature_index(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error("unknown feature '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

ObservationalDataset ObservationalDataset::exclude_from_policy(
    const std::vector<std::string>& names) const {
  ObservationalDataset copy = *this;
  for (const auto& name : names) copy.eligible_[feature_index(name)] = false;
  return copy;
}

ObservationalDataset ObservationalDataset::subset(std::span<const std::size_t> rows) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), x_.cols());
  std::vector<int> w(rows.size());
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n()) throw Error("subset row index out of range");
    const auto i = static_cast<Eigen::Index>(rows[r]);
    x.row(static_cast<Eigen::Index>(r)) = x_.row(i);
    w[r] = w_[rows[r]];
    y[static_cast<Eigen::Index>(r)] = y_[i];
  }
  ObservationalDataset out(std::move(x), std::move(w), std::move(y), names_);
  out.eligible_ = eligible_;
  return out;
}

ObservationalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file '" + path.string() + "'");
  return load_csv(in, schema, path.string());
}

ObservationalDataset load_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw Error(source + ": empty file, header row required");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto field : split_fields(line)) header.emplace_back(field);

  auto column_of = [&](const std::string& name, const char* role) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(source + ": missing " + std::string(role) + " column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  if (schema.treatment.empty() || schema.outcome.empty()) {
    throw Error("schema must name a treatment and an outcome column");
  }
  const std::size_t w_col = column_of(schema.treatment, "treatment");
  const std::size_t y_col = column_of(schema.outcome, "outcome");
  std::vector<std::size_t> x_cols;
  std::vector<std::string> names;
  if (schema.covariates.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != w_col && c != y_col) {
        x_cols.push_back(c);
        names.push_back(header[c]);
      }
    }
  } else {
    for (const auto& name : schema.covariates) {
      x_cols.push_back(column_of(name, "covariate"));
      names.push_back(name);
    }
  }
  if (x_cols.empty()) throw Error(source + ": no covariate columns");

  std::vector<double> values;
  std::vector<int> w;
  std::vector<double> y;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(source + ": line " + std::to_string(line_no) + " has " +
                  std::to_string(fields.size()) + " fields, header has " +
                  std::to_string(header.size()));
    }
    auto number = [&](std::size_t c) {
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        throw Error(source + ": line " + std::to_string(line_no) + ", column '" + header[c] +
                    "': cannot parse '" + std::string(fields[c]) + "' as a finite number");
      }
      return v;
    };
    const double wv = number(w_col);
    if (wv != 0.0 && wv != 1.0) {
      throw Error(source + ": line " + std::to_string(line_no) + ", treatment column '" +
                  header[w_col] + "' has value '" + std::string(fields[w_col]) +
                  "', expected 0 or 1");
    }
    w.push_back(static_cast<int>(wv));
    y.push_back(number(y_col));
    for (auto c : x_cols) values.push_back(number(c));
  }

  const auto n = static_cast<Eigen::Index>(w.size());
  const auto p = static_cast<Eigen::Index>(x_cols.size());
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = values[static_cast<std::size_t>(i * p + j)];
  }
  return ObservationalDataset(std::move(x), std::move(w),
                              Eigen::Map<Eigen::VectorXd>(y.data(), n), std::move(names));
}

ObservationalDataset concatenate(const ObservationalDataset& a, const ObservationalDataset& b) {
  if (a.feature_names() != b.feature_names()) {
    throw Error("cannot concatenate datasets with different covariates");
  }
  Eigen::MatrixXd x(a.x().rows() + b.x().rows(), a.x().cols());
  x << a.x(), b.x();
  Eigen::VectorXd y(a.y().size() + b.y().size());
  y << a.y(), b.y();
  std::vector<int> w(a.w().begin(), a.w().end());
  w.insert(w.end(), b.w().begin(), b.w().end());
  return ObservationalDataset(std::move(x), std::move(w), std::move(y), a.feature_names());
}

BalanceReport normalized_differences(const ObservationalDataset& data) {
  BalanceReport report;
  report.n0 = data.arm_size(0);
  report.n1 = data.arm_size(1);
  if (report.n0 < 2 || report.n1 < 2) {
    throw Error("normalized differences need at least 2 units per arm (n0 = " +
                std::to_string(report.n0) + ", n1 = " + std::to_string(report.n1) + ")");
  }
  std::string degenerate;
  for (std::size_t j = 0; j < data.p(); ++j) {
    double mean[2] = {0.0, 0.0};
    const double count[2] = {static_cast<double>(report.n0), static_cast<double>(report.n1)};
    for (std::size_t i = 0; i < data.n(); ++i) {
      mean[data.w()[i]] += data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    mean[0] /= count[0];
    mean[1] /= count[1];
    double ss[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < data.n(); ++i) {
      const int arm = data.w()[i];
      const double d =
          data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - mean[arm];
      ss[arm] += d * d;
    }
    const double pooled = (ss[0] / (count[0] - 1.0) + ss[1] / (count[1] - 1.0)) / 2.0;
    if (!(pooled > 0.0)) {
      degenerate += (degenerate.empty() ? "" : ", ") + data.feature_names()[j];
      continue;
    }
    report.features.push_back(data.feature_names()[j]);
    report.normalized_difference.push_back((mean[1] - mean[0]) / std::sqrt(pooled));
  }
  if (!degenerate.empty()) throw Error("zero pooled variance for feature(s): " + degenerate);
  return report;
}

void write_csv(std::ostream& out, const BalanceReport& report) {
  out << "feature,value\n";
  for (std::size_t j = 0; j < report.features.size(); ++j) {
    out << report.features[j] << ',' << std::setprecision(17) << report.normalized_difference[j]
        << '\n';
  }
}

}  // namespace mbl
