#pragma once

// Independent reference implementations used only by the tests. They follow
// the textbook definitions directly and share no code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

inline double quad_distance(const Eigen::MatrixXd& v, const Eigen::VectorXd& a,
                            const Eigen::VectorXd& b) {
  const Eigen::VectorXd d = a - b;
  return std::sqrt(d.dot(v * d));
}

// For every unit, all opposite-arm units sorted by (distance, index), first m kept.
inline std::vector<std::vector<std::size_t>> matches(const Eigen::MatrixXd& x,
                                                     const std::vector<int>& w,
                                                     const Eigen::MatrixXd& v, std::size_t m) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < n; ++j) {
      if (w[j] == w[i]) continue;
      cand.emplace_back(quad_distance(v, x.row(static_cast<Eigen::Index>(i)).transpose(),
                                      x.row(static_cast<Eigen::Index>(j)).transpose()),
                        j);
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t k = 0; k < m && k < cand.size(); ++k) out[i].push_back(cand[k].second);
  }
  return out;
}

// Sample covariance inverse, (n - 1) denominator.
inline Eigen::MatrixXd inverse_covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  return cov.inverse();
}

// Matching ATE: mean over units of (Y(1) - Y(0)) with the missing outcome
// replaced by the average of the matched outcomes.
inline double matching_ate(const Eigen::MatrixXd& x, const std::vector<int>& w,
                           const Eigen::VectorXd& y, const Eigen::MatrixXd& v, std::size_t m) {
  const auto sets = matches(x, w, v, m);
  double total = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    double other = 0.0;
    for (auto j : sets[i]) other += y[static_cast<Eigen::Index>(j)];
    other /= static_cast<double>(m);
    const double yi = y[static_cast<Eigen::Index>(i)];
    total += w[i] == 1 ? yi - other : other - yi;
  }
  return total / static_cast<double>(sets.size());
}

// Every threshold that can separate the observed values of a feature, plus
// the two that send everything one way.
inline std::vector<double> thresholds(const Eigen::MatrixXd& x, Eigen::Index j) {
  std::vector<double> v(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) v[static_cast<std::size_t>(i)] = x(i, j);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> t{-std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k + 1 < v.size(); ++k) t.push_back(0.5 * (v[k] + v[k + 1]));
  t.push_back(std::numeric_limits<double>::infinity());
  return t;
}

// Best value of sum_i (2 pi_i - 1) gamma_i over all depth-1 or depth-2 trees
// built from the thresholds above. Each leaf contributes |sum of its gammas|
// when it takes the better of its two actions.
inline double best_tree_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                                  int depth, const std::vector<Eigen::Index>& features) {
  const Eigen::Index n = x.rows();
  std::vector<std::pair<Eigen::Index, double>> splits;
  for (auto j : features) {
    for (double t : thresholds(x, j)) splits.emplace_back(j, t);
  }
  double best = -std::numeric_limits<double>::infinity();
  if (depth == 1) {
    for (const auto& [j, t] : splits) {
      double left = 0.0, right = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) (x(i, j) <= t ? left : right) += gamma[i];
      best = std::max(best, std::abs(left) + std::abs(right));
    }
    return best;
  }
  for (const auto& [j0, t0] : splits) {
    for (const auto& [j1, t1] : splits) {
      for (const auto& [j2, t2] : splits) {
        double leaf[4] = {0.0, 0.0, 0.0, 0.0};
        for (Eigen::Index i = 0; i < n; ++i) {
          const int k = x(i, j0) <= t0 ? (x(i, j1) <= t1 ? 0 : 1) : (x(i, j2) <= t2 ? 2 : 3);
          leaf[k] += gamma[i];
        }
        best = std::max(best, std::abs(leaf[0]) + std::abs(leaf[1]) + std::abs(leaf[2]) +
                                  std::abs(leaf[3]));
      }
    }
  }
  return best;
}

// Draws a small random observational dataset with both arms of size >= min_arm.
struct Instance {
  Eigen::MatrixXd x;
  std::vector<int> w;
  Eigen::VectorXd y;
};

inline Instance random_instance(std::mt19937_64& gen, std::size_t n, std::size_t p,
                                std::size_t min_arm) {
  std::normal_distribution<double> normal;
  Instance out;
  out.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  out.y.resize(static_cast<Eigen::Index>(n));
  for (;;) {
    out.w.assign(n, 0);
    std::size_t treated = 0;
    for (std::size_t i = 0; i < n; ++i) {
      out.w[i] = std::bernoulli_distribution(0.5)(gen) ? 1 : 0;
      treated += static_cast<std::size_t>(out.w[i]);
    }
    if (treated >= min_arm && n - treated >= min_arm) break;
  }
  for (Eigen::Index i = 0; i < out.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.x.cols(); ++j) out.x(i, j) = normal(gen);
    out.y[i] = out.x(i, 0) + 2.0 * out.w[static_cast<std::size_t>(i)] + normal(gen);
  }
  return out;
}

}  // namespace oracle
