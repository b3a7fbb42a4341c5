#pragma once

#include <affect/error.hpp>
#include <affect/matrix.hpp>
#include <affect/preflearn.hpp>
#include <affect/random.hpp>
#include <affect/text.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace affect {

/// Binary classification samples with labels in {-1, +1}.
struct Dataset {
  Matrix x;
  std::vector<int> y;
  std::vector<std::string> feature_names;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t n_features() const noexcept { return x.cols(); }
};

/// Copies the selected columns of every pair. An empty column list selects all.
inline Dataset make_dataset(std::span<const PreferencePair> pairs, std::span<const std::size_t> columns = {},
                            std::vector<std::string> names = {}) {
  Dataset d;
  d.feature_names = std::move(names);
  if (pairs.empty()) return d;
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  if (cols.empty()) {
    cols.resize(pairs.front().x.size());
    std::iota(cols.begin(), cols.end(), std::size_t{0});
  }
  d.x = Matrix(pairs.size(), cols.size());
  d.y.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto row = d.x.row(i);
    for (std::size_t c = 0; c < cols.size(); ++c) row[c] = pairs[i].x[cols[c]];
    d.y[i] = pairs[i].y;
  }
  return d;
}

struct ClassCounts {
  std::int64_t neg = 0;
  std::int64_t pos = 0;

  std::int64_t total() const noexcept { return neg + pos; }
  void add(int label) noexcept { (label > 0 ? pos : neg) += 1; }

  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

inline double gini(ClassCounts c) {
  if (c.neg < 0 || c.pos < 0 || c.total() == 0) throw Error(ErrorKind::EmptyNode, "gini of an empty node");
  const double t = static_cast<double>(c.total());
  const double pn = static_cast<double>(c.neg) / t;
  const double pp = static_cast<double>(c.pos) / t;
  return 1.0 - (pn * pn + pp * pp);
}

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double decrease = 0.0;  // parent impurity minus size-weighted child impurity
};

/// Minimum impurity decrease treated as a real improvement, and the margin by
/// which a later candidate must beat the incumbent split.
inline constexpr double kMinDecrease = 1e-12;

namespace detail {

struct Sample {
  double value;
  int label;
};

inline double midpoint(double a, double b) noexcept {
  double mid = a / 2.0 + b / 2.0;
  if (mid >= b || mid < a) mid = a;
  return mid;
}

inline double sum_sq_over_total(std::int64_t neg, std::int64_t pos) noexcept {
  const double t = static_cast<double>(neg + pos);
  return (static_cast<double>(neg) * static_cast<double>(neg) + static_cast<double>(pos) * static_cast<double>(pos)) / t;
}

inline std::optional<Split> best_split(const Dataset& data, std::span<const std::size_t> samples,
                                       std::span<const std::size_t> candidates, std::vector<Sample>& scratch) {
  if (samples.size() < 2) return std::nullopt;
  ClassCounts parent;
  for (auto i : samples) parent.add(data.y[i]);
  const double parent_gini = gini(parent);
  if (parent_gini <= 0.0) return std::nullopt;
  const double n = static_cast<double>(samples.size());

  std::optional<Split> best;
  scratch.resize(samples.size());
  for (std::size_t f : candidates) {
    for (std::size_t k = 0; k < samples.size(); ++k) scratch[k] = {data.x(samples[k], f), data.y[samples[k]]};
    std::sort(scratch.begin(), scratch.end(), [](const Sample& a, const Sample& b) { return a.value < b.value; });
    if (scratch.front().value == scratch.back().value) continue;
    std::int64_t left_neg = 0;
    std::int64_t left_pos = 0;
    for (std::size_t k = 0; k + 1 < scratch.size(); ++k) {
      (scratch[k].label > 0 ? left_pos : left_neg) += 1;
      if (!(scratch[k].value < scratch[k + 1].value)) continue;
      const std::int64_t right_neg = parent.neg - left_neg;
      const std::int64_t right_pos = parent.pos - left_pos;
      const double children =
          1.0 - (sum_sq_over_total(left_neg, left_pos) + sum_sq_over_total(right_neg, right_pos)) / n;
      const double decrease = parent_gini - children;
      if (decrease <= kMinDecrease) continue;
      if (!best || decrease > best->decrease + kMinDecrease) {
        best = Split{f, midpoint(scratch[k].value, scratch[k + 1].value), decrease};
      }
    }
  }
  return best;
}

}  // namespace detail

/// Exhaustive search over midpoints between consecutive distinct values of each
/// candidate feature. Ties go to the lowest feature index, then the lowest
/// threshold. Returns nothing unless some split strictly decreases impurity.
inline std::optional<Split> best_split(const Dataset& data, std::span<const std::size_t> samples,
                                       std::span<const std::size_t> candidate_features) {
  std::vector<std::size_t> sorted(candidate_features.begin(), candidate_features.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<detail::Sample> scratch;
  return detail::best_split(data, samples, sorted, scratch);
}

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  ClassCounts counts;
  double impurity_decrease = 0.0;
  double sample_weight = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }

  /// +1 / -1 for the majority class, 0 on an exact tie.
  int vote() const noexcept { return counts.pos > counts.neg ? 1 : (counts.neg > counts.pos ? -1 : 0); }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct TreeConfig {
  int max_depth = 10;
  std::size_t features_per_split = 0;  // 0: every feature is a candidate
};

/// Flat preorder node array; node 0 is the root. Samples with
/// x[feature] <= threshold go left.
class DecisionTree {
 public:
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i];
  }

  /// Leaf majority; exact ties resolve to -1.
  int predict(std::span<const double> x) const {
    const int v = leaf_for(x).vote();
    return v == 0 ? -1 : v;
  }

  int depth() const { return nodes.empty() ? 0 : depth_from(0); }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  int depth_from(std::size_t i) const {
    const auto& n = nodes[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)), depth_from(static_cast<std::size_t>(n.right)));
  }
};

namespace detail {

class TreeGrower {
 public:
  TreeGrower(const Dataset& data, const TreeConfig& cfg, Rng& rng) : data_(data), cfg_(cfg), rng_(rng) {
    features_.resize(data.n_features());
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  DecisionTree grow(std::vector<std::size_t> samples) {
    DecisionTree tree;
    nodes_ = &tree.nodes;
    build(samples, 0);
    return tree;
  }

 private:
  std::vector<std::size_t> draw_candidates() {
    const std::size_t d = features_.size();
    const std::size_t m = cfg_.features_per_split == 0 ? d : std::min(cfg_.features_per_split, d);
    if (m < d) {
      for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, d - 1);
        std::swap(features_[i], features_[pick(rng_)]);
      }
    }
    std::vector<std::size_t> out(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(out.begin(), out.end());
    return out;
  }

  int build(std::span<std::size_t> samples, int depth) {
    const int index = static_cast<int>(nodes_->size());
    nodes_->emplace_back();
    TreeNode node;
    for (auto i : samples) node.counts.add(data_.y[i]);
    node.sample_weight = static_cast<double>(samples.size());

    const bool pure = node.counts.neg == 0 || node.counts.pos == 0;
    std::optional<Split> split;
    if (depth < cfg_.max_depth && !pure && samples.size() >= 2) {
      const auto candidates = draw_candidates();
      split = detail::best_split(data_, samples, candidates, scratch_);
    }
    if (!split) {
      (*nodes_)[static_cast<std::size_t>(index)] = node;
      return index;
    }
    const auto middle = std::partition(samples.begin(), samples.end(), [&](std::size_t i) {
      return data_.x(i, split->feature) <= split->threshold;
    });
    const auto n_left = static_cast<std::size_t>(middle - samples.begin());
    node.feature = static_cast<int>(split->feature);
    node.threshold = split->threshold;
    node.impurity_decrease = split->decrease;
    node.left = build(samples.first(n_left), depth + 1);
    node.right = build(samples.subspan(n_left), depth + 1);
    (*nodes_)[static_cast<std::size_t>(index)] = node;
    return index;
  }

  const Dataset& data_;
  const TreeConfig& cfg_;
  Rng& rng_;
  std::vector<std::size_t> features_;
  std::vector<Sample> scratch_;
  std::vector<TreeNode>* nodes_ = nullptr;
};

}  // namespace detail

/// Greedy CART growth. At each node `features_per_split` candidates are drawn
/// without replacement; growth stops at max_depth, at a pure node, or when no
/// candidate split decreases impurity. `samples` may contain repeated indices
/// (bootstrap multiplicities).
inline DecisionTree grow_tree(const Dataset& data, std::span<const std::size_t> samples, const TreeConfig& cfg,
                              Rng& rng) {
  if (samples.empty()) throw Error(ErrorKind::EmptyTrainingSet, "cannot grow a tree on zero samples");
  detail::TreeGrower grower(data, cfg, rng);
  return grower.grow({samples.begin(), samples.end()});
}

inline DecisionTree grow_tree(const Dataset& data, const TreeConfig& cfg, Rng& rng) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return grow_tree(data, all, cfg, rng);
}

struct ForestConfig {
  int n_estimators = 100;
  int max_depth = 10;
  std::size_t features_per_split = 0;  // 0: ceil(sqrt(n_features))
  unsigned threads = 0;                // 0: hardware concurrency; never changes results
};

inline std::size_t resolve_features_per_split(std::size_t requested, std::size_t n_features) {
  if (requested != 0) return std::min(requested, n_features);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features)))));
}

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  int max_depth = 10;
  std::size_t features_per_split = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::size_t n_features = 0;

  friend bool operator==(const RandomForestModel&, const RandomForestModel&) = default;
};

/// Every tree sees a bootstrap resample of the training set (same size, with
/// replacement) drawn from its own stream derive_seed(seed, tree index).
inline RandomForestModel fit_forest(const Dataset& data, const ForestConfig& cfg, std::uint64_t seed) {
  if (data.size() == 0) throw Error(ErrorKind::EmptyTrainingSet, "no training pairs");
  if (cfg.n_estimators < 1 || cfg.max_depth < 0) {
    throw Error(ErrorKind::InvalidArgument, "forest needs n_estimators >= 1 and max_depth >= 0");
  }
  RandomForestModel model;
  model.max_depth = cfg.max_depth;
  model.features_per_split = resolve_features_per_split(cfg.features_per_split, data.n_features());
  model.seed = seed;
  model.feature_names = data.feature_names;
  model.n_features = data.n_features();
  model.trees.resize(static_cast<std::size_t>(cfg.n_estimators));

  const TreeConfig tree_cfg{cfg.max_depth, model.features_per_split};
  parallel_for(model.trees.size(), cfg.threads, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    std::uniform_int_distribution<std::size_t> draw(0, data.size() - 1);
    std::vector<std::size_t> bootstrap(data.size());
    for (auto& b : bootstrap) b = draw(rng);
    model.trees[t] = grow_tree(data, bootstrap, tree_cfg, rng);
  });
  return model;
}

inline RandomForestModel fit_forest(std::span<const PreferencePair> pairs, const ForestConfig& cfg,
                                    std::uint64_t seed, std::vector<std::string> names = {}) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no training pairs");
  return fit_forest(make_dataset(pairs, {}, std::move(names)), cfg, seed);
}

/// Mode of the tree votes (tied leaves abstain). A tied vote goes to the class
/// with the larger summed leaf probability, then to -1.
inline int predict(const RandomForestModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(model.n_features) + " features, got " +
                                                  std::to_string(x.size()));
  }
  int pos_votes = 0;
  int neg_votes = 0;
  double pos_prob = 0.0;
  double neg_prob = 0.0;
  for (const auto& tree : model.trees) {
    const auto& leaf = tree.leaf_for(x);
    const int v = leaf.vote();
    pos_votes += v > 0;
    neg_votes += v < 0;
    const double total = static_cast<double>(leaf.counts.total());
    pos_prob += static_cast<double>(leaf.counts.pos) / total;
    neg_prob += static_cast<double>(leaf.counts.neg) / total;
  }
  if (pos_votes != neg_votes) return pos_votes > neg_votes ? 1 : -1;
  return pos_prob > neg_prob ? 1 : -1;
}

inline double accuracy(const RandomForestModel& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += predict(model, data.x.row(i)) == data.y[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mean Decrease Impurity: per tree, the sample-weighted impurity decrease of
/// each feature's splits relative to the root weight; averaged over trees and
/// normalized to sum to 1 (all zeros when no tree split).
inline std::vector<double> mdi(const RandomForestModel& model) {
  std::vector<double> scores(model.n_features, 0.0);
  for (const auto& tree : model.trees) {
    if (tree.nodes.empty()) continue;
    const double root = tree.nodes.front().sample_weight;
    for (const auto& n : tree.nodes) {
      if (!n.is_leaf()) scores[static_cast<std::size_t>(n.feature)] += n.sample_weight * n.impurity_decrease / root;
    }
  }
  const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
  if (total > 0) {
    for (auto& s : scores) s /= total;
  }
  return scores;
}

inline constexpr std::string_view kModelMagic = "affect-forest";
inline constexpr int kModelVersion = 1;

inline void save_model(std::ostream& out, const RandomForestModel& model) {
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "n_features " << model.n_features << '\n';
  for (std::size_t i = 0; i < model.n_features; ++i) {
    out << "feature " << (i < model.feature_names.size() ? model.feature_names[i] : "f" + std::to_string(i)) << '\n';
  }
  out << "max_depth " << model.max_depth << '\n';
  out << "features_per_split " << model.features_per_split << '\n';
  out << "seed " << model.seed << '\n';
  out << "n_estimators " << model.trees.size() << '\n';
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const auto& nodes = model.trees[t].nodes;
    out << "tree " << t << ' ' << nodes.size() << '\n';
    for (const auto& n : nodes) {
      out << n.feature << ' ' << text::format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
          << n.counts.neg << ' ' << n.counts.pos << ' ' << text::format_double(n.impurity_decrease) << ' '
          << text::format_double(n.sample_weight) << '\n';
    }
  }
}

inline RandomForestModel load_model(std::istream& in) {
  const auto fail = [](const std::string& what) { return Error(ErrorKind::ModelFormat, what); };
  std::string line;
  const auto next = [&](std::string_view key) {
    if (!std::getline(in, line)) throw fail("unexpected end of model file");
    const std::string_view view(line);
    if (view.substr(0, key.size()) != key || (view.size() > key.size() && view[key.size()] != ' ')) {
      throw fail("expected '" + std::string(key) + "', got '" + line + "'");
    }
    return std::string(view.size() > key.size() ? view.substr(key.size() + 1) : std::string_view{});
  };
  const auto number = [&](std::string_view key) {
    const auto v = text::parse_int<std::uint64_t>(next(key));
    if (!v) throw fail("bad value for " + std::string(key));
    return *v;
  };

  if (next(kModelMagic) != std::to_string(kModelVersion)) throw fail("unsupported model version");
  RandomForestModel model;
  model.n_features = number("n_features");
  for (std::size_t i = 0; i < model.n_features; ++i) model.feature_names.push_back(next("feature"));
  model.max_depth = static_cast<int>(number("max_depth"));
  model.features_per_split = number("features_per_split");
  model.seed = number("seed");
  const auto n_trees = number("n_estimators");
  for (std::size_t t = 0; t < n_trees; ++t) {
    const auto header = text::split(next("tree"), ' ');
    if (header.size() != 2) throw fail("bad tree header");
    const auto count = text::parse_int<std::size_t>(header[1]);
    if (!count || *count == 0) throw fail("bad node count");
    DecisionTree tree;
    for (std::size_t k = 0; k < *count; ++k) {
      if (!std::getline(in, line)) throw fail("truncated tree");
      const auto f = text::split(line, ' ');
      if (f.size() != 8) throw fail("bad node record '" + line + "'");
      TreeNode n;
      const auto feature = text::parse_int<int>(f[0]);
      const auto threshold = text::parse_double(f[1]);
      const auto left = text::parse_int<int>(f[2]);
      const auto right = text::parse_int<int>(f[3]);
      const auto neg = text::parse_int<std::int64_t>(f[4]);
      const auto pos = text::parse_int<std::int64_t>(f[5]);
      const auto dec = text::parse_double(f[6]);
      const auto weight = text::parse_double(f[7]);
      if (!feature || !threshold || !left || !right || !neg || !pos || !dec || !weight) {
        throw fail("bad node record '" + line + "'");
      }
      n = {*feature, *threshold, *left, *right, {*neg, *pos}, *dec, *weight};
      const auto in_range = [&](int c) { return c > static_cast<int>(k) && c < static_cast<int>(*count); };
      if (!n.is_leaf() && (*feature >= static_cast<int>(model.n_features) || !in_range(n.left) || !in_range(n.right))) {
        throw fail("node references out of range");
      }
      if (n.counts.total() == 0) throw fail("node with zero samples");
      tree.nodes.push_back(n);
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace affect
