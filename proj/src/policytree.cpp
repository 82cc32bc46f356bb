#include "mbl/policytree.hpp"

#include "mbl/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mbl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t leaf_count(std::size_t depth) { return std::size_t{1} << depth; }

// Threshold strictly between a < b, never equal to b.
double midpoint(double a, double b) {
  const double mid = a + (b - a) / 2.0;
  return mid < b ? mid : a;
}

struct StumpChoice {
  double value = -kInf;
  std::size_t feature = 0;
  double threshold = -kInf;
};

// Best depth-1 split of the rows flagged in `member`, scanning the presorted
// order of every eligible feature.
class StumpSearch {
 public:
  StumpSearch(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
              const std::vector<std::size_t>& features)
      : x_(x), gamma_(gamma), features_(features) {
    const auto n = static_cast<std::size_t>(x.rows());
    order_.resize(features.size());
    for (std::size_t f = 0; f < features.size(); ++f) {
      auto& order = order_[f];
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
      const auto col = static_cast<Eigen::Index>(features[f]);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x(static_cast<Eigen::Index>(a), col) < x(static_cast<Eigen::Index>(b), col);
      });
    }
  }

  const std::vector<std::size_t>& order(std::size_t f) const { return order_[f]; }

  StumpChoice best(const std::vector<char>& member, double total) const {
    StumpChoice best;
    auto consider = [&](double value, std::size_t feature, double threshold) {
      if (value > best.value) best = {value, feature, threshold};
    };
    for (std::size_t f = 0; f < features_.size(); ++f) {
      const auto col = static_cast<Eigen::Index>(features_[f]);
      consider(std::abs(total), features_[f], -kInf);
      double prefix = 0.0;
      bool started = false;
      double prev = 0.0;
      for (auto i : order_[f]) {
        if (!member[i]) continue;
        const double v = x_(static_cast<Eigen::Index>(i), col);
        if (started && v > prev) {
          consider(std::abs(prefix) + std::abs(total - prefix), features_[f], midpoint(prev, v));
        }
        prefix += gamma_[static_cast<Eigen::Index>(i)];
        prev = v;
        started = true;
      }
      consider(std::abs(total), features_[f], kInf);
    }
    return best;
  }

 private:
  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& gamma_;
  const std::vector<std::size_t>& features_;
  std::vector<std::vector<std::size_t>> order_;
};

std::vector<std::size_t> normalize_features(std::vector<std::size_t> features) {
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end()), features.end());
  return features;
}

std::string format_threshold(double t) {
  if (t == kInf) return "inf";
  if (t == -kInf) return "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, t);
  return std::string(buf, res.ptr);
}

double parse_threshold(std::string_view s) {
  if (s == "inf" || s == "+inf") return kInf;
  if (s == "-inf") return -kInf;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || std::isnan(v)) {
    throw Error("tree: bad threshold '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    out.push_back(s.substr(start, comma - start));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

void check_names(const TreePolicy& tree, const std::vector<std::string>& names) {
  for (const auto& s : tree.splits()) {
    if (s.feature >= names.size()) throw Error("tree: feature index without a name");
  }
  for (auto f : tree.eligible_features()) {
    if (f >= names.size()) throw Error("tree: eligible feature index without a name");
  }
}

}  // namespace

TreePolicy::TreePolicy(std::size_t depth, std::vector<Split> splits, std::vector<int> actions,
                       std::vector<std::size_t> eligible_features)
    : depth_(depth),
      splits_(std::move(splits)),
      actions_(std::move(actions)),
      eligible_(normalize_features(std::move(eligible_features))) {
  if (depth_ < 1 || depth_ > 16) throw Error("tree depth must be between 1 and 16");
  if (splits_.size() != leaf_count(depth_) - 1 || actions_.size() != leaf_count(depth_)) {
    throw Error("tree arrays do not match depth " + std::to_string(depth_));
  }
  if (eligible_.empty()) throw Error("tree needs at least one eligible feature");
  for (int a : actions_) {
    if (a != 0 && a != 1) throw Error("leaf actions must be 0 or 1");
  }
  for (const auto& s : splits_) {
    if (std::isnan(s.threshold)) throw Error("split threshold is NaN");
    if (!std::binary_search(eligible_.begin(), eligible_.end(), s.feature)) {
      throw Error("split on feature " + std::to_string(s.feature) + " which is not eligible");
    }
  }
}

TreePolicy TreePolicy::constant(int action, std::size_t feature) {
  return TreePolicy(1, {Split{feature, kInf}}, {action, action}, {feature});
}

int TreePolicy::act(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  std::size_t k = 0;
  for (std::size_t level = 0; level < depth_; ++level) {
    const Split& s = splits_[k];
    k = x[static_cast<Eigen::Index>(s.feature)] <= s.threshold ? 2 * k + 1 : 2 * k + 2;
  }
  return actions_[k - splits_.size()];
}

Assignments evaluate_policy(const TreePolicy& tree, const Eigen::MatrixXd& x) {
  for (const auto& s : tree.splits()) {
    if (s.feature >= static_cast<std::size_t>(x.cols())) {
      throw Error("tree splits on feature " + std::to_string(s.feature) + " but data has " +
                  std::to_string(x.cols()) + " covariates");
    }
  }
  Assignments out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = tree.act(x.row(i));
  return out;
}

double policy_objective(std::span<const int> assignments, const Eigen::VectorXd& gamma) {
  if (assignments.size() != static_cast<std::size_t>(gamma.size())) {
    throw Error("assignment and score lengths differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    sum += (2 * assignments[i] - 1) * gamma[static_cast<Eigen::Index>(i)];
  }
  return sum;
}

TreePolicy search_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma, std::size_t depth,
                       std::vector<std::size_t> eligible_features) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 1) throw Error("tree search needs at least one row");
  if (static_cast<std::size_t>(gamma.size()) != n) throw Error("tree search: score length mismatch");
  if (depth != 1 && depth != 2) throw Error("tree search supports depth 1 or 2");
  const auto features = normalize_features(std::move(eligible_features));
  if (features.empty()) throw Error("tree search: empty eligible feature set");
  for (auto f : features) {
    if (f >= static_cast<std::size_t>(x.cols())) throw Error("tree search: eligible feature out of range");
  }

  const StumpSearch search(x, gamma, features);
  const double total = gamma.sum();
  std::vector<Split> splits;

  if (depth == 1) {
    const auto stump = search.best(std::vector<char>(n, 1), total);
    splits = {Split{stump.feature, stump.threshold}};
  } else {
    double best_value = -kInf;
    Split root;
    StumpChoice best_left, best_right;
    std::vector<char> left(n), right(n);
    auto consider = [&](std::size_t feature, double threshold, double prefix) {
      const auto l = search.best(left, prefix);
      const auto r = search.best(right, total - prefix);
      const double value = l.value + r.value;
      if (value > best_value) {
        best_value = value;
        root = Split{feature, threshold};
        best_left = l;
        best_right = r;
      }
    };
    for (std::size_t f = 0; f < features.size(); ++f) {
      const auto col = static_cast<Eigen::Index>(features[f]);
      std::fill(left.begin(), left.end(), 0);
      std::fill(right.begin(), right.end(), 1);
      consider(features[f], -kInf, 0.0);
      const auto& order = search.order(f);
      double prefix = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const auto i = order[r];
        const double v = x(static_cast<Eigen::Index>(i), col);
        if (r > 0) {
          const double prev = x(static_cast<Eigen::Index>(order[r - 1]), col);
          if (v > prev) consider(features[f], midpoint(prev, v), prefix);
        }
        left[i] = 1;
        right[i] = 0;
        prefix += gamma[static_cast<Eigen::Index>(i)];
      }
      consider(features[f], kInf, prefix);
    }
    splits = {root, Split{best_left.feature, best_left.threshold},
              Split{best_right.feature, best_right.threshold}};
  }

  // Leaf actions from direct leaf sums.
  TreePolicy shape(depth, splits, std::vector<int>(leaf_count(depth), 0), features);
  std::vector<double> leaf_sum(leaf_count(depth), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t level = 0; level < depth; ++level) {
      const Split& s = splits[k];
      k = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s.feature)) <= s.threshold
              ? 2 * k + 1
              : 2 * k + 2;
    }
    leaf_sum[k - splits.size()] += gamma[static_cast<Eigen::Index>(i)];
  }
  std::vector<int> actions(leaf_sum.size());
  for (std::size_t l = 0; l < leaf_sum.size(); ++l) actions[l] = leaf_sum[l] > 0.0 ? 1 : 0;
  return TreePolicy(depth, std::move(splits), std::move(actions), features);
}

std::string to_text(const TreePolicy& tree, const std::vector<std::string>& feature_names) {
  check_names(tree, feature_names);
  std::ostringstream out;
  out << "mbl-tree 1\n";
  out << "depth " << tree.depth() << '\n';
  out << "features ";
  for (std::size_t j = 0; j < feature_names.size(); ++j) out << (j ? "," : "") << feature_names[j];
  out << "\neligible";
  for (auto f : tree.eligible_features()) out << ' ' << f;
  out << '\n';
  const std::size_t internal = tree.splits().size();
  auto emit = [&](auto&& self, std::size_t k, std::size_t indent) -> void {
    out << std::string(indent * 2, ' ');
    if (k >= internal) {
      out << "leaf " << tree.actions()[k - internal] << '\n';
      return;
    }
    const Split& s = tree.splits()[k];
    out << "split " << s.feature << ' ' << feature_names[s.feature] << " <= "
        << format_threshold(s.threshold) << '\n';
    self(self, 2 * k + 1, indent + 1);
    self(self, 2 * k + 2, indent + 1);
  };
  emit(emit, 0, 0);
  return out.str();
}

ParsedTree parse_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      line = line.substr(first);
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      return true;
    }
    throw Error("tree: unexpected end of text");
  };
  auto expect_prefix = [&](const std::string& prefix) {
    next_line();
    if (line.rfind(prefix, 0) != 0) throw Error("tree: expected '" + prefix + "', got '" + line + "'");
    return line.substr(prefix.size());
  };

  if (expect_prefix("mbl-tree ") != "1") throw Error("tree: unsupported format version");
  const std::size_t depth = std::stoul(expect_prefix("depth "));
  if (depth < 1 || depth > 16) throw Error("tree: bad depth");
  auto names = split_names(expect_prefix("features "));
  std::vector<std::size_t> eligible;
  {
    std::istringstream el(expect_prefix("eligible"));
    std::size_t f;
    while (el >> f) eligible.push_back(f);
  }
  const std::size_t internal = leaf_count(depth) - 1;
  std::vector<Split> splits(internal);
  std::vector<int> actions(leaf_count(depth));
  auto read = [&](auto&& self, std::size_t k) -> void {
    if (k >= internal) {
      const auto a = expect_prefix("leaf ");
      if (a != "0" && a != "1") throw Error("tree: bad leaf action '" + a + "'");
      actions[k - internal] = a == "1" ? 1 : 0;
      return;
    }
    const auto rest = expect_prefix("split ");
    const auto le = rest.rfind(" <= ");
    const auto sp = rest.find(' ');
    if (le == std::string::npos || sp == std::string::npos || sp > le) {
      throw Error("tree: malformed split line '" + line + "'");
    }
    const std::size_t feature = std::stoul(rest.substr(0, sp));
    if (feature >= names.size() || rest.substr(sp + 1, le - sp - 1) != names[feature]) {
      throw Error("tree: split feature name does not match its index in '" + line + "'");
    }
    splits[k] = Split{feature, parse_threshold(rest.substr(le + 4))};
    self(self, 2 * k + 1);
    self(self, 2 * k + 2);
  };
  read(read, 0);
  return ParsedTree{TreePolicy(depth, std::move(splits), std::move(actions), std::move(eligible)),
                    std::move(names)};
}

std::string to_json(const TreePolicy& tree, const std::vector<std::string>& feature_names) {
  check_names(tree, feature_names);
  using nlohmann::json;
  const std::size_t internal = tree.splits().size();
  auto node = [&](auto&& self, std::size_t k) -> json {
    if (k >= internal) return json{{"action", tree.actions()[k - internal]}};
    const Split& s = tree.splits()[k];
    json threshold = std::isinf(s.threshold) ? json(format_threshold(s.threshold)) : json(s.threshold);
    return json{{"feature", s.feature},
                {"name", feature_names[s.feature]},
                {"threshold", threshold},
                {"left", self(self, 2 * k + 1)},
                {"right", self(self, 2 * k + 2)}};
  };
  json doc{{"format", "mbl-tree"},
           {"version", 1},
           {"depth", tree.depth()},
           {"features", feature_names},
           {"eligible", tree.eligible_features()},
           {"tree", node(node, 0)}};
  return doc.dump(2) + "\n";
}

ParsedTree parse_json(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
    if (doc.at("format") != "mbl-tree" || doc.at("version") != 1) {
      throw Error("tree: unrecognized JSON format");
    }
    const auto depth = doc.at("depth").get<std::size_t>();
    if (depth < 1 || depth > 16) throw Error("tree: bad depth");
    auto names = doc.at("features").get<std::vector<std::string>>();
    auto eligible = doc.at("eligible").get<std::vector<std::size_t>>();
    const std::size_t internal = leaf_count(depth) - 1;
    std::vector<Split> splits(internal);
    std::vector<int> actions(leaf_count(depth));
    auto read = [&](auto&& self, const json& node, std::size_t k) -> void {
      if (k >= internal) {
        actions[k - internal] = node.at("action").get<int>();
        return;
      }
      const auto& t = node.at("threshold");
      const double threshold = t.is_string() ? parse_threshold(t.get<std::string>()) : t.get<double>();
      splits[k] = Split{node.at("feature").get<std::size_t>(), threshold};
      self(self, node.at("left"), 2 * k + 1);
      self(self, node.at("right"), 2 * k + 2);
    };
    read(read, doc.at("tree"), 0);
    return ParsedTree{TreePolicy(depth, std::move(splits), std::move(actions), std::move(eligible)),
                      std::move(names)};
  } catch (const json::exception& e) {
    throw Error(std::string("tree: invalid JSON: ") + e.what());
  }
}

}  // namespace mbl
