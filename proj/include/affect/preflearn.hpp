#pragma once

#include <affect/error.hpp>
#include <affect/preprocess.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace affect {

struct Provenance {
  std::size_t session = 0;  // index into the delta list the pair was built from
  int window_index = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct PreferencePair {
  std::vector<double> x;
  int y = 1;  // +1 or -1
  Provenance provenance;
};

struct TransformConfig {
  double preference_threshold = 0.15;
};

struct RetentionStats {
  std::size_t kept = 0;
  std::size_t total = 0;

  double fraction() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total);
  }

  RetentionStats& operator+=(const RetentionStats& o) noexcept {
    kept += o.kept;
    total += o.total;
    return *this;
  }
};

struct TransformResult {
  std::vector<PreferencePair> pairs;
  RetentionStats retention;
};

inline void check_threshold(double pt) {
  if (!(pt >= 0.0 && pt <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "preference threshold must lie in [0, 1]");
  }
}

/// A comparison is kept when |delta_label| > P_t; it yields (x, sign) followed
/// by its mirror (-x, -sign).
inline bool keeps(double delta_label, double pt) noexcept { return std::abs(delta_label) > pt; }

inline TransformResult transform(std::span<const SessionDeltas> deltas, const TransformConfig& cfg) {
  check_threshold(cfg.preference_threshold);
  TransformResult out;
  for (std::size_t s = 0; s < deltas.size(); ++s) {
    const auto& d = deltas[s];
    out.retention.total += d.size();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!keeps(d.labels[i], cfg.preference_threshold)) continue;
      ++out.retention.kept;
      const int sign = d.labels[i] > 0 ? 1 : -1;
      const auto row = d.features.row(i);
      PreferencePair pos{{row.begin(), row.end()}, sign, {s, d.window_index[i]}};
      PreferencePair neg{pos.x, -sign, pos.provenance};
      for (auto& v : neg.x) v = -v;
      out.pairs.push_back(std::move(pos));
      out.pairs.push_back(std::move(neg));
    }
  }
  return out;
}

inline RetentionStats retention(std::span<const SessionDeltas> deltas, double pt) {
  check_threshold(pt);
  RetentionStats r;
  for (const auto& d : deltas) {
    r.total += d.size();
    for (double l : d.labels) r.kept += keeps(l, pt) ? 1 : 0;
  }
  return r;
}

/// {0, step, 2*step, ..., max}, computed by multiplication to avoid drift.
inline std::vector<double> threshold_grid(double max = 0.5, double step = 0.05) {
  if (!(step > 0) || max < 0) throw Error(ErrorKind::InvalidArgument, "grid needs step > 0 and max >= 0");
  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::floor(max / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) grid.push_back(std::round(static_cast<double>(i) * step * 1e9) / 1e9);
  return grid;
}

struct TunePoint {
  double threshold = 0.0;
  double retention = 0.0;
  std::optional<double> accuracy;  // unset for points below the retention floor
};

struct TuneResult {
  double best_threshold = 0.0;
  std::vector<TunePoint> points;
};

/// Picks the accuracy-maximizing threshold among grid points that keep at
/// least `min_retention` of all comparisons; ties go to the smaller threshold.
inline TuneResult tune_pt(std::span<const SessionDeltas> deltas, std::span<const double> grid, double min_retention,
                          const std::function<double(double)>& model_eval) {
  if (deltas.empty()) throw Error(ErrorKind::InvalidArgument, "no deltas to tune on");
  TuneResult out;
  std::optional<double> best_acc;
  for (double pt : grid) {
    TunePoint p{pt, retention(deltas, pt).fraction(), std::nullopt};
    if (p.retention >= min_retention) {
      p.accuracy = model_eval(pt);
      if (!best_acc || *p.accuracy > *best_acc || (*p.accuracy == *best_acc && pt < out.best_threshold)) {
        best_acc = p.accuracy;
        out.best_threshold = pt;
      }
    }
    out.points.push_back(p);
  }
  if (!best_acc) throw Error(ErrorKind::NoFeasibleThreshold, "no grid threshold keeps enough comparisons");
  return out;
}

}  // namespace affect
