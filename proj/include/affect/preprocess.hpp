#pragma once

#include <affect/corpus.hpp>
#include <affect/error.hpp>
#include <affect/matrix.hpp>
#include <affect/schema.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace affect {

/// A session on a fixed time grid starting at t = 0.
struct ResampledSession {
  SessionInfo info;
  double interval_ms = 250.0;
  std::vector<double> arousal;
  Matrix features;  // one row per grid point

  std::size_t size() const noexcept { return arousal.size(); }
};

struct WindowedSession {
  SessionInfo info;
  Matrix features;  // one row per full window
  std::vector<double> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

struct HistoryDelta {
  int window_index = 0;  // 0-based index of the window compared against its history
  std::vector<double> features;
  double label = 0.0;
};

/// All history deltas of one session, stored densely.
struct SessionDeltas {
  SessionInfo info;
  std::vector<int> window_index;
  Matrix features;
  std::vector<double> labels;

  std::size_t size() const noexcept { return labels.size(); }

  HistoryDelta at(std::size_t i) const {
    const auto r = features.row(i);
    return {window_index[i], {r.begin(), r.end()}, labels[i]};
  }
};

enum class Normalization { Session, Global, None };
enum class Anchor { History, Consecutive };

constexpr std::string_view to_string(Normalization n) noexcept {
  switch (n) {
    case Normalization::Session: return "session";
    case Normalization::Global: return "global";
    case Normalization::None: return "none";
  }
  return "?";
}

inline std::optional<Normalization> parse_normalization(std::string_view s) {
  const auto l = text::lower(text::trim(s));
  if (l == "session") return Normalization::Session;
  if (l == "global") return Normalization::Global;
  if (l == "none") return Normalization::None;
  return std::nullopt;
}

constexpr std::string_view to_string(Anchor a) noexcept {
  return a == Anchor::History ? "history" : "consecutive";
}

inline std::optional<Anchor> parse_anchor(std::string_view s) {
  const auto l = text::lower(text::trim(s));
  if (l == "history") return Anchor::History;
  if (l == "consecutive") return Anchor::Consecutive;
  return std::nullopt;
}

/// Linear interpolation of arousal and Mean features onto the grid; Sum
/// features are binned into the grid cell [i*interval, (i+1)*interval) that
/// contains their timestamp. The grid covers [0, last timestamp].
inline ResampledSession resample(const SessionRecord& session, std::span<const Aggregation> aggregation,
                                 double interval_ms = 250.0) {
  if (!(interval_ms > 0)) throw Error(ErrorKind::InvalidArgument, "resample interval must be positive");
  const auto& frames = session.frames;
  if (frames.size() < 2) {
    throw Error(ErrorKind::TooFewFrames, "session '" + session.info.session_id + "' has " +
                                             std::to_string(frames.size()) + " frame(s), need 2");
  }
  const std::size_t width = frames.front().features.size();
  if (aggregation.size() != width) {
    throw Error(ErrorKind::DimensionMismatch, "aggregation rules do not match the feature count");
  }
  const double last = frames.back().timestamp_ms;
  const auto n = static_cast<std::size_t>(std::floor(last / interval_ms)) + 1;

  ResampledSession out;
  out.info = session.info;
  out.interval_ms = interval_ms;
  out.arousal.resize(n);
  out.features = Matrix(n, width);

  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * interval_ms;
    while (j + 1 < frames.size() && frames[j + 1].timestamp_ms <= t) ++j;
    const Frame& a = frames[j];
    const Frame* b = j + 1 < frames.size() ? &frames[j + 1] : nullptr;
    double w = 0.0;  // weight of b
    if (b != nullptr && t > a.timestamp_ms) w = (t - a.timestamp_ms) / (b->timestamp_ms - a.timestamp_ms);
    const auto lerp = [&](double va, double vb) { return w == 0.0 ? va : va + w * (vb - va); };
    out.arousal[i] = lerp(a.arousal, b ? b->arousal : a.arousal);
    for (std::size_t c = 0; c < width; ++c) {
      if (aggregation[c] == Aggregation::Mean) {
        out.features(i, c) = lerp(a.features[c], b ? b->features[c] : a.features[c]);
      }
    }
  }
  for (const auto& f : frames) {
    const auto bin = std::min(n - 1, static_cast<std::size_t>(std::max(0.0, std::floor(f.timestamp_ms / interval_ms))));
    for (std::size_t c = 0; c < width; ++c) {
      if (aggregation[c] == Aggregation::Sum) out.features(bin, c) += f.features[c];
    }
  }
  return out;
}

/// Re-associates the annotation at t + lag with the features at t and drops
/// the trailing lag-worth of frames.
inline ResampledSession apply_lag(const ResampledSession& rs, double lag_s = 1.0) {
  const double frames_f = lag_s * 1000.0 / rs.interval_ms;
  const auto shift = static_cast<std::size_t>(std::llround(frames_f));
  if (lag_s < 0 || std::abs(frames_f - static_cast<double>(shift)) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, "lag must be a non-negative multiple of the resample interval");
  }
  if (shift == 0) return rs;
  if (rs.size() <= shift) {
    throw Error(ErrorKind::SessionShorterThanLag,
                "session '" + rs.info.session_id + "' has " + std::to_string(rs.size()) + " grid frames, lag needs " +
                    std::to_string(shift + 1));
  }
  ResampledSession out;
  out.info = rs.info;
  out.interval_ms = rs.interval_ms;
  const std::size_t n = rs.size() - shift;
  out.arousal.assign(rs.arousal.begin() + static_cast<std::ptrdiff_t>(shift), rs.arousal.end());
  out.features = Matrix(n, rs.features.cols());
  for (std::size_t i = 0; i < n; ++i) std::ranges::copy(rs.features.row(i), out.features.row(i).begin());
  return out;
}

/// Min-max scales values to [0, 1]; a constant trace maps to all zeros.
inline void min_max_scale(std::span<double> values, double lo, double hi) {
  const double range = hi - lo;
  for (auto& v : values) v = range > 0 ? (v - lo) / range : 0.0;
}

inline ResampledSession normalize_trace(ResampledSession rs) {
  if (rs.arousal.empty()) return rs;
  const auto [lo, hi] = std::ranges::minmax_element(rs.arousal);
  min_max_scale(rs.arousal, *lo, *hi);
  return rs;
}

/// Aggregates each full window of width / interval grid frames; a trailing
/// partial window is dropped.
inline WindowedSession window(const ResampledSession& rs, std::span<const Aggregation> aggregation,
                              double width_s = 3.0) {
  const double per_f = width_s * 1000.0 / rs.interval_ms;
  const auto per = static_cast<std::size_t>(std::llround(per_f));
  if (per == 0 || std::abs(per_f - static_cast<double>(per)) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, "window width must be a positive multiple of the resample interval");
  }
  const std::size_t width = rs.features.cols();
  if (aggregation.size() != width) {
    throw Error(ErrorKind::DimensionMismatch, "aggregation rules do not match the feature count");
  }
  const std::size_t count = rs.size() / per;
  if (count == 0) {
    throw Error(ErrorKind::NoFullWindow, "session '" + rs.info.session_id + "' has " + std::to_string(rs.size()) +
                                             " grid frames, a window needs " + std::to_string(per));
  }
  WindowedSession out;
  out.info = rs.info;
  out.features = Matrix(count, width);
  out.labels.resize(count);
  for (std::size_t w = 0; w < count; ++w) {
    double label = 0.0;
    auto row = out.features.row(w);
    for (std::size_t k = w * per; k < (w + 1) * per; ++k) {
      label += rs.arousal[k];
      const auto src = rs.features.row(k);
      for (std::size_t c = 0; c < width; ++c) row[c] += src[c];
    }
    out.labels[w] = label / static_cast<double>(per);
    for (std::size_t c = 0; c < width; ++c) {
      if (aggregation[c] == Aggregation::Mean) row[c] /= static_cast<double>(per);
    }
  }
  return out;
}

/// For every window t >= 1 (0-based): window_t minus the mean of windows 0..t-1.
inline SessionDeltas history_deltas(const WindowedSession& ws) {
  if (ws.size() < 2) {
    throw Error(ErrorKind::SingleWindowSession, "session '" + ws.info.session_id + "' has a single window");
  }
  const std::size_t width = ws.features.cols();
  SessionDeltas out;
  out.info = ws.info;
  out.features = Matrix(ws.size() - 1, width);
  out.labels.resize(ws.size() - 1);
  out.window_index.resize(ws.size() - 1);
  // Running means (rather than sums) keep the history of a constant session
  // exactly equal to that constant, so its deltas are exactly zero.
  std::vector<double> mean(ws.features.row(0).begin(), ws.features.row(0).end());
  double label_mean = ws.labels[0];
  for (std::size_t t = 1; t < ws.size(); ++t) {
    const double next = static_cast<double>(t + 1);
    const auto src = ws.features.row(t);
    auto dst = out.features.row(t - 1);
    for (std::size_t c = 0; c < width; ++c) {
      dst[c] = src[c] - mean[c];
      mean[c] += dst[c] / next;
    }
    out.labels[t - 1] = ws.labels[t] - label_mean;
    label_mean += out.labels[t - 1] / next;
    out.window_index[t - 1] = static_cast<int>(t);
  }
  return out;
}

/// Alternative anchoring: window_t minus window_{t-1}.
inline SessionDeltas consecutive_deltas(const WindowedSession& ws) {
  if (ws.size() < 2) {
    throw Error(ErrorKind::SingleWindowSession, "session '" + ws.info.session_id + "' has a single window");
  }
  const std::size_t width = ws.features.cols();
  SessionDeltas out;
  out.info = ws.info;
  out.features = Matrix(ws.size() - 1, width);
  out.labels.resize(ws.size() - 1);
  out.window_index.resize(ws.size() - 1);
  for (std::size_t t = 1; t < ws.size(); ++t) {
    const auto cur = ws.features.row(t);
    const auto prev = ws.features.row(t - 1);
    auto dst = out.features.row(t - 1);
    for (std::size_t c = 0; c < width; ++c) dst[c] = cur[c] - prev[c];
    out.labels[t - 1] = ws.labels[t] - ws.labels[t - 1];
    out.window_index[t - 1] = static_cast<int>(t);
  }
  return out;
}

struct PreprocessConfig {
  double resample_ms = 250.0;
  double lag_s = 1.0;
  double window_s = 3.0;
  Normalization normalization = Normalization::Session;
  Anchor anchor = Anchor::History;
};

/// Windowed sessions and their deltas for a whole corpus. Sessions that cannot
/// be processed are listed in `skipped` with the reason; single-window
/// sessions keep their windows but contribute no deltas.
struct PreparedCorpus {
  FeatureSchema schema;
  PreprocessConfig config;
  std::vector<WindowedSession> windows;
  std::vector<SessionDeltas> deltas;
  std::vector<std::string> skipped;

  std::size_t total_windows() const {
    std::size_t n = 0;
    for (const auto& w : windows) n += w.size();
    return n;
  }

  std::size_t total_deltas() const {
    std::size_t n = 0;
    for (const auto& d : deltas) n += d.size();
    return n;
  }

  std::vector<std::string> players() const {
    std::set<std::string> ids;
    for (const auto& d : deltas) ids.insert(d.info.player_id);
    return {ids.begin(), ids.end()};
  }
};

inline PreparedCorpus preprocess_corpus(const Corpus& corpus, const PreprocessConfig& cfg = {}) {
  PreparedCorpus out;
  out.schema = corpus.schema();
  out.config = cfg;

  std::vector<ResampledSession> lagged;
  lagged.reserve(corpus.sessions().size());
  for (const auto& s : corpus.sessions()) {
    try {
      const auto& layout = corpus.schema().layout(s.info.genre);
      lagged.push_back(apply_lag(resample(s, layout.aggregation, cfg.resample_ms), cfg.lag_s));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgument) throw;
      out.skipped.push_back(s.info.player_id + "/" + s.info.session_id + ": " + e.what());
    }
  }

  if (cfg.normalization == Normalization::Session) {
    for (auto& rs : lagged) rs = normalize_trace(std::move(rs));
  } else if (cfg.normalization == Normalization::Global) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& rs : lagged) {
      for (double v : rs.arousal) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    for (auto& rs : lagged) min_max_scale(rs.arousal, lo, hi);
  }

  for (const auto& rs : lagged) {
    try {
      const auto& layout = corpus.schema().layout(rs.info.genre);
      auto ws = window(rs, layout.aggregation, cfg.window_s);
      if (ws.size() >= 2) {
        out.deltas.push_back(cfg.anchor == Anchor::History ? history_deltas(ws) : consecutive_deltas(ws));
      } else {
        out.skipped.push_back(rs.info.player_id + "/" + rs.info.session_id + ": SingleWindowSession");
      }
      out.windows.push_back(std::move(ws));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgument) throw;
      out.skipped.push_back(rs.info.player_id + "/" + rs.info.session_id + ": " + e.what());
    }
  }
  return out;
}

}  // namespace affect
