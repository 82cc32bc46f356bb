#include "mbl/outcome_models.hpp"

#include "mbl/error.hpp"
#include "mbl/rng.hpp"

#include <charconv>
#include <numeric>
#include <sstream>

namespace mbl {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_vector(std::ostringstream& out, const char* key, const Eigen::VectorXd& v) {
  out << key;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v[i]);
  out << '\n';
}

Eigen::VectorXd read_vector(std::istringstream& in, const char* key, std::size_t size) {
  std::string tag;
  if (!(in >> tag) || tag != key) throw Error(std::string("outcome model: expected '") + key + "'");
  Eigen::VectorXd v(static_cast<Eigen::Index>(size));
  for (std::size_t i = 0; i < size; ++i) {
    std::string token;
    if (!(in >> token)) throw Error(std::string("outcome model: truncated '") + key + "'");
    double value = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
      throw Error("outcome model: bad number '" + token + "'");
    }
    v[static_cast<Eigen::Index>(i)] = value;
  }
  return v;
}

std::vector<std::size_t> arm_rows(const ObservationalDataset& data, int arm) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.w()[i] == arm) rows.push_back(i);
  }
  return rows;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, std::span<const std::size_t> rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out[static_cast<Eigen::Index>(r)] = v[static_cast<Eigen::Index>(rows[r])];
  }
  return out;
}

ArmFit fit_ols(const Eigen::MatrixXd& features, const Eigen::VectorXd& y) {
  Eigen::MatrixXd design(features.rows(), features.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(features.cols()) = features;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  ArmFit fit;
  fit.coef = cod.solve(y);
  fit.center = Eigen::VectorXd::Zero(features.cols());
  fit.scale = Eigen::VectorXd::Ones(features.cols());
  return fit;
}

ArmFit fit_lasso_arm(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                     const LassoSettings& settings, std::uint64_t seed, LassoPath* path_out) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (settings.folds < 2) throw Error("lasso: folds must be at least 2");
  if (settings.folds > n) {
    throw Error("lasso: " + std::to_string(settings.folds) + " folds for an arm of " +
                std::to_string(n) + " units");
  }
  const LassoProblem full(features, y);

  std::vector<double> grid;
  if (settings.lambda_grid) {
    grid = *settings.lambda_grid;
    if (grid.empty()) throw Error("lasso: empty lambda grid");
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (!(grid[k] >= 0.0) || (k > 0 && !(grid[k] < grid[k - 1]))) {
        throw Error("lasso: lambda grid must be nonnegative and strictly descending");
      }
    }
  } else {
    const double top = full.lambda_max();
    grid = top > 0.0 ? geometric_grid(top, settings.grid_size, settings.min_ratio)
                     : std::vector<double>{0.0};
  }

  // Fold of each unit: position in a seeded shuffle, modulo the fold count.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::size_t> fold_of(n);
  for (std::size_t r = 0; r < n; ++r) fold_of[order[r]] = r % settings.folds;

  std::vector<double> sse(grid.size(), 0.0);
  for (std::size_t f = 0; f < settings.folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    const LassoProblem problem(take_rows(features, train), take(y, train));
    const Eigen::MatrixXd x_test = take_rows(features, test);
    const Eigen::VectorXd y_test = take(y, test);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(features.cols());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      problem.solve(grid[k], beta, settings.solver);
      const Eigen::VectorXd coef = problem.to_original(beta);
      const Eigen::VectorXd pred =
          (x_test * coef.tail(coef.size() - 1)).array() + coef[0];
      sse[k] += (y_test - pred).squaredNorm();
    }
  }

  LassoPath path;
  path.lambdas = grid;
  path.cv_mse.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    path.cv_mse[k] = sse[k] / static_cast<double>(n);
    if (path.cv_mse[k] < path.cv_mse[path.selected]) path.selected = k;
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(features.cols());
  for (std::size_t k = 0; k <= path.selected; ++k) full.solve(grid[k], beta, settings.solver);

  ArmFit fit;
  fit.coef = full.to_original(beta);
  fit.center = full.center();
  fit.scale = full.scale();
  fit.lambda = grid[path.selected];
  if (path_out) *path_out = std::move(path);
  return fit;
}

}  // namespace

std::string_view to_string(Expansion e) {
  return e == Expansion::linear ? "linear" : "quadratic";
}

Expansion parse_expansion(std::string_view text) {
  if (text == "linear") return Expansion::linear;
  if (text == "quadratic") return Expansion::quadratic;
  throw Error("unknown expansion '" + std::string(text) + "'");
}

std::size_t expanded_dim(Expansion e, std::size_t p) {
  return e == Expansion::linear ? p : 2 * p + p * (p - 1) / 2;
}

Eigen::MatrixXd expand(Expansion e, const Eigen::MatrixXd& x) {
  if (e == Expansion::linear) return x;
  const auto p = x.cols();
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(expanded_dim(e, static_cast<std::size_t>(p))));
  out.leftCols(p) = x;
  out.middleCols(p, p) = x.array().square();
  Eigen::Index c = 2 * p;
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = j + 1; k < p; ++k) out.col(c++) = x.col(j).cwiseProduct(x.col(k));
  }
  return out;
}

OutcomeModel::OutcomeModel(Expansion expansion, std::size_t p, ArmFit arm0, ArmFit arm1)
    : expansion_(expansion), p_(p), arms_{std::move(arm0), std::move(arm1)} {
  const auto d = static_cast<Eigen::Index>(expanded_dim(expansion, p));
  for (const auto& arm : arms_) {
    if (arm.coef.size() != d + 1 || arm.center.size() != d || arm.scale.size() != d) {
      throw Error("outcome model: coefficient length does not match the expansion");
    }
  }
}

OutcomeModel OutcomeModel::zero(Expansion expansion, std::size_t p) {
  const auto d = static_cast<Eigen::Index>(expanded_dim(expansion, p));
  ArmFit arm{Eigen::VectorXd::Zero(d + 1), Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d), 0.0};
  return OutcomeModel(expansion, p, arm, arm);
}

double OutcomeModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x, int w) const {
  if (static_cast<std::size_t>(x.size()) != p_) {
    throw Error("predict: covariate vector of dimension " + std::to_string(x.size()) +
                ", model expects " + std::to_string(p_));
  }
  if (w != 0 && w != 1) throw Error("predict: arm must be 0 or 1");
  const Eigen::VectorXd& coef = arms_[static_cast<std::size_t>(w)].coef;
  double value = coef[0];
  const auto p = x.size();
  for (Eigen::Index j = 0; j < p; ++j) value += coef[1 + j] * x[j];
  if (expansion_ == Expansion::quadratic) {
    Eigen::Index c = 1 + p;
    for (Eigen::Index j = 0; j < p; ++j) value += coef[c++] * x[j] * x[j];
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index k = j + 1; k < p; ++k) value += coef[c++] * x[j] * x[k];
    }
  }
  return value;
}

Eigen::VectorXd OutcomeModel::predict_rows(const Eigen::MatrixXd& x, int w) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i).transpose(), w);
  return out;
}

std::string OutcomeModel::serialize() const {
  std::ostringstream out;
  out << "mbl-outcome-model 1\n";
  out << "expansion " << to_string(expansion_) << '\n';
  out << "p " << p_ << '\n';
  out << "dim " << expanded_dim(expansion_, p_) << '\n';
  for (int w = 0; w < 2; ++w) {
    const ArmFit& arm = arms_[static_cast<std::size_t>(w)];
    out << "arm " << w << '\n';
    out << "lambda " << format_double(arm.lambda) << '\n';
    write_vector(out, "center", arm.center);
    write_vector(out, "scale", arm.scale);
    write_vector(out, "coef", arm.coef);
  }
  return out.str();
}

OutcomeModel OutcomeModel::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tag, value;
  int version = 0;
  if (!(in >> tag >> version) || tag != "mbl-outcome-model" || version != 1) {
    throw Error("outcome model: unrecognized header");
  }
  std::size_t p = 0, dim = 0;
  if (!(in >> tag >> value) || tag != "expansion") throw Error("outcome model: expected 'expansion'");
  const Expansion expansion = parse_expansion(value);
  if (!(in >> tag >> p) || tag != "p") throw Error("outcome model: expected 'p'");
  if (!(in >> tag >> dim) || tag != "dim" || dim != expanded_dim(expansion, p)) {
    throw Error("outcome model: bad 'dim'");
  }
  std::array<ArmFit, 2> arms;
  for (int w = 0; w < 2; ++w) {
    int arm_id = -1;
    if (!(in >> tag >> arm_id) || tag != "arm" || arm_id != w) throw Error("outcome model: expected 'arm'");
    arms[static_cast<std::size_t>(w)].lambda = read_vector(in, "lambda", 1)[0];
    arms[static_cast<std::size_t>(w)].center = read_vector(in, "center", dim);
    arms[static_cast<std::size_t>(w)].scale = read_vector(in, "scale", dim);
    arms[static_cast<std::size_t>(w)].coef = read_vector(in, "coef", dim + 1);
  }
  return OutcomeModel(expansion, p, std::move(arms[0]), std::move(arms[1]));
}

OutcomeModel fit_ols_per_arm(const ObservationalDataset& data, Expansion expansion) {
  const Eigen::MatrixXd features = expand(expansion, data.x());
  ArmFit arms[2];
  for (int w = 0; w < 2; ++w) {
    const auto rows = arm_rows(data, w);
    if (rows.size() < data.p() + 2) {
      throw Error("OLS outcome model: arm " + std::to_string(w) + " has " +
                  std::to_string(rows.size()) + " units, needs at least p + 2 = " +
                  std::to_string(data.p() + 2));
    }
    arms[w] = fit_ols(take_rows(features, rows), take(data.y(), rows));
  }
  return OutcomeModel(expansion, data.p(), std::move(arms[0]), std::move(arms[1]));
}

OutcomeModel fit_lasso_per_arm(const ObservationalDataset& data, const LassoSettings& settings,
                               std::array<LassoPath, 2>* paths) {
  const Eigen::MatrixXd features = expand(settings.expansion, data.x());
  ArmFit arms[2];
  for (int w = 0; w < 2; ++w) {
    const auto rows = arm_rows(data, w);
    arms[w] = fit_lasso_arm(take_rows(features, rows), take(data.y(), rows), settings,
                            derive_seed({settings.seed, static_cast<std::uint64_t>(w)}),
                            paths ? &(*paths)[static_cast<std::size_t>(w)] : nullptr);
  }
  return OutcomeModel(settings.expansion, data.p(), std::move(arms[0]), std::move(arms[1]));
}

}  // namespace mbl
