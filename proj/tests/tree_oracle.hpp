#pragma once

// Brute-force reference for greedy CART growth, written without any of the
// library's split machinery: every node recounts its children directly for
// every midpoint of every feature. Used to cross-check grow_tree.

#include <algorithm>
#include <cstddef>
#include <set>
#include <vector>

namespace affect::testing {

struct OraclePoint {
  std::vector<double> x;
  int y;
};

struct OracleNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0;
  int vote = -1;
  std::size_t left = 0;
  std::size_t right = 0;
};

inline double oracle_gini(const std::vector<OraclePoint>& pts) {
  double pos = 0;
  for (const auto& p : pts) pos += p.y > 0 ? 1 : 0;
  const double n = static_cast<double>(pts.size());
  const double pp = pos / n;
  const double pn = (n - pos) / n;
  return 1.0 - pp * pp - pn * pn;
}

class OracleTree {
 public:
  OracleTree(const std::vector<OraclePoint>& pts, int max_depth) : max_depth_(max_depth) { build(pts, 0); }

  int predict(const std::vector<double>& x) const {
    std::size_t i = 0;
    while (!nodes_[i].leaf) i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
    return nodes_[i].vote;
  }

  double training_accuracy(const std::vector<OraclePoint>& pts) const {
    double ok = 0;
    for (const auto& p : pts) ok += predict(p.x) == p.y ? 1 : 0;
    return ok / static_cast<double>(pts.size());
  }

  std::size_t internal_nodes() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return !n.leaf; }));
  }

 private:
  std::size_t build(const std::vector<OraclePoint>& pts, int depth) {
    const std::size_t index = nodes_.size();
    nodes_.emplace_back();
    int pos = 0;
    for (const auto& p : pts) pos += p.y > 0 ? 1 : 0;
    const int neg = static_cast<int>(pts.size()) - pos;
    nodes_[index].vote = pos > neg ? 1 : -1;
    if (depth >= max_depth_ || pos == 0 || neg == 0) return index;

    const double parent = oracle_gini(pts);
    bool found = false;
    std::size_t best_f = 0;
    double best_t = 0;
    double best_gain = 0;
    for (std::size_t f = 0; f < pts.front().x.size(); ++f) {
      std::set<double> values;
      for (const auto& p : pts) values.insert(p.x[f]);
      for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
        const double t = *it / 2.0 + *std::next(it) / 2.0;
        std::vector<OraclePoint> l;
        std::vector<OraclePoint> r;
        for (const auto& p : pts) (p.x[f] <= t ? l : r).push_back(p);
        const double n = static_cast<double>(pts.size());
        const double gain = parent - (static_cast<double>(l.size()) / n) * oracle_gini(l) -
                            (static_cast<double>(r.size()) / n) * oracle_gini(r);
        if (gain > 1e-12 && (!found || gain > best_gain + 1e-12)) {
          found = true;
          best_f = f;
          best_t = t;
          best_gain = gain;
        }
      }
    }
    if (!found) return index;
    std::vector<OraclePoint> l;
    std::vector<OraclePoint> r;
    for (const auto& p : pts) (p.x[best_f] <= best_t ? l : r).push_back(p);
    nodes_[index].leaf = false;
    nodes_[index].feature = best_f;
    nodes_[index].threshold = best_t;
    const std::size_t left = build(l, depth + 1);
    const std::size_t right = build(r, depth + 1);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  int max_depth_;
  std::vector<OracleNode> nodes_;
};

}  // namespace affect::testing
