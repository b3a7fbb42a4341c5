#pragma once

#include <affect/error.hpp>
#include <affect/schema.hpp>
#include <affect/text.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace affect {

struct Frame {
  double timestamp_ms = 0.0;
  double arousal = 0.0;
  std::vector<double> features;  // ordered by the genre layout

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct SessionInfo {
  std::string player_id;
  std::string session_id;
  std::string game;
  Genre genre = Genre::Racing;

  friend bool operator==(const SessionInfo&, const SessionInfo&) = default;
};

struct SessionRecord {
  SessionInfo info;
  std::vector<Frame> frames;

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

enum class FeatureSet { Specific, General, All };

constexpr std::string_view to_string(FeatureSet f) noexcept {
  switch (f) {
    case FeatureSet::Specific: return "Specific";
    case FeatureSet::General: return "General";
    case FeatureSet::All: return "All";
  }
  return "?";
}

inline std::optional<FeatureSet> parse_feature_set(std::string_view s) {
  const auto l = text::lower(text::trim(s));
  if (l == "specific") return FeatureSet::Specific;
  if (l == "general") return FeatureSet::General;
  if (l == "all") return FeatureSet::All;
  return std::nullopt;
}

inline constexpr std::array<FeatureSet, 3> kAllFeatureSets{FeatureSet::Specific, FeatureSet::General,
                                                           FeatureSet::All};

/// Immutable collection of sessions with player/game/genre indices. Sessions
/// are kept sorted by (player_id, session_id).
class Corpus {
 public:
  Corpus() = default;

  Corpus(FeatureSchema schema, std::vector<SessionRecord> sessions, std::vector<std::string> warnings = {})
      : schema_(std::move(schema)), sessions_(std::move(sessions)), warnings_(std::move(warnings)) {
    std::sort(sessions_.begin(), sessions_.end(), [](const SessionRecord& a, const SessionRecord& b) {
      return std::tie(a.info.player_id, a.info.session_id) < std::tie(b.info.player_id, b.info.session_id);
    });
    for (std::size_t i = 0; i < sessions_.size(); ++i) {
      const auto& info = sessions_[i].info;
      by_player_[info.player_id].push_back(i);
      by_game_[info.game].push_back(i);
      by_genre_[info.genre].push_back(i);
    }
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  const std::vector<SessionRecord>& sessions() const noexcept { return sessions_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  std::vector<std::string> players() const {
    std::vector<std::string> out;
    out.reserve(by_player_.size());
    for (const auto& [p, _] : by_player_) out.push_back(p);
    return out;
  }

  const std::vector<std::size_t>& sessions_of_player(const std::string& id) const { return lookup(by_player_, id); }
  const std::vector<std::size_t>& sessions_of_game(const std::string& id) const { return lookup(by_game_, id); }
  const std::vector<std::size_t>& sessions_of_genre(Genre g) const { return lookup(by_genre_, g); }

  const std::map<std::string, std::vector<std::size_t>>& player_index() const noexcept { return by_player_; }
  const std::map<std::string, std::vector<std::size_t>>& game_index() const noexcept { return by_game_; }
  const std::map<Genre, std::vector<std::size_t>>& genre_index() const noexcept { return by_genre_; }

  friend bool operator==(const Corpus& a, const Corpus& b) { return a.sessions_ == b.sessions_; }

 private:
  template <typename Map, typename Key>
  static const std::vector<std::size_t>& lookup(const Map& m, const Key& k) {
    static const std::vector<std::size_t> kEmpty;
    const auto it = m.find(k);
    return it == m.end() ? kEmpty : it->second;
  }

  FeatureSchema schema_;
  std::vector<SessionRecord> sessions_;
  std::vector<std::string> warnings_;
  std::map<std::string, std::vector<std::size_t>> by_player_;
  std::map<std::string, std::vector<std::size_t>> by_game_;
  std::map<Genre, std::vector<std::size_t>> by_genre_;
};

/// Renames source columns to canonical names before loading, e.g. to adapt a
/// differently-named export. Parsed from `source = canonical` lines.
using ColumnMap = std::map<std::string, std::string>;

inline ColumnMap load_column_map(const std::filesystem::path& path) {
  return text::parse_key_values(text::read_file(path), path.string());
}

namespace detail {

inline bool is_missing_cell(std::string_view s) {
  if (s.empty()) return true;
  const auto l = text::lower(s);
  return l == "nan" || l == "na" || l == "null" || l == "none";
}

}  // namespace detail

inline Corpus parse_corpus(std::istream& in, FeatureSchema schema, const ColumnMap& column_map = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!text::trim(line).empty()) break;
  }
  if (text::trim(line).empty()) throw Error(ErrorKind::EmptyCorpus, "no header row");

  auto header = text::split_csv(line);
  for (auto& h : header) {
    if (const auto it = column_map.find(h); it != column_map.end()) h = it->second;
  }
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(header[i], i);

  const auto required = [&](const char* name) {
    const auto it = col.find(name);
    if (it == col.end()) throw Error(ErrorKind::MissingColumn, std::string("required column '") + name + "'");
    return it->second;
  };
  const std::size_t c_player = required("player_id");
  const std::size_t c_session = required("session_id");
  const std::size_t c_game = required("game");
  const std::size_t c_time = required("timestamp_ms");
  const std::size_t c_arousal = required("arousal");
  const std::optional<std::size_t> c_genre =
      col.contains("genre") ? std::optional<std::size_t>(col.at("genre")) : std::nullopt;

  std::vector<std::string> warnings;
  const std::set<std::string> reserved{"player_id", "session_id", "game", "genre", "timestamp_ms", "arousal"};
  for (const auto& h : header) {
    if (!reserved.contains(h) && schema.find(h) == nullptr) {
      warnings.push_back("warning: unknown column '" + h + "' ignored");
    }
  }

  // Per genre: file column feeding each layout slot, if any.
  std::array<std::vector<std::optional<std::size_t>>, 3> slot_columns;
  for (auto g : kAllGenres) {
    const auto& layout = schema.layout(g);
    auto& slots = slot_columns[static_cast<std::size_t>(g)];
    for (const auto& name : layout.names) {
      const auto it = col.find(name);
      slots.push_back(it == col.end() ? std::nullopt : std::optional<std::size_t>(it->second));
    }
  }

  std::map<std::pair<std::string, std::string>, SessionRecord> building;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    ++data_rows;
    const auto cells = text::split_csv(line);
    const auto row_error = [&](const std::string& what) {
      return Error(ErrorKind::MalformedRow, "row " + std::to_string(line_no) + ": " + what);
    };
    if (cells.size() != header.size()) {
      throw row_error("expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    }
    const auto numeric = [&](std::size_t c) {
      const auto v = text::parse_double(cells[c]);
      if (!v) throw row_error("non-numeric value '" + cells[c] + "' in column '" + header[c] + "'");
      return *v;
    };

    const std::string& game = cells[c_game];
    const auto mapped = schema.genre_of(game);
    if (!mapped) throw Error(ErrorKind::UnknownGame, "row " + std::to_string(line_no) + ": '" + game + "'");
    Genre genre = *mapped;
    if (c_genre) {
      const auto g = parse_genre(cells[*c_genre]);
      if (!g) throw row_error("unknown genre '" + cells[*c_genre] + "'");
      genre = *g;
    }

    auto key = std::make_pair(cells[c_player], cells[c_session]);
    auto [it, inserted] = building.try_emplace(key);
    auto& session = it->second;
    if (inserted) {
      session.info = {cells[c_player], cells[c_session], game, genre};
    } else if (session.info.game != game || session.info.genre != genre) {
      throw row_error("session '" + key.second + "' of player '" + key.first + "' changes game or genre");
    }

    Frame frame;
    frame.timestamp_ms = numeric(c_time);
    frame.arousal = numeric(c_arousal);
    const auto& slots = slot_columns[static_cast<std::size_t>(genre)];
    frame.features.resize(slots.size(), 0.0);
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (!slots[s] || detail::is_missing_cell(cells[*slots[s]])) continue;
      frame.features[s] = numeric(*slots[s]);
    }
    session.frames.push_back(std::move(frame));
  }
  if (data_rows == 0) throw Error(ErrorKind::EmptyCorpus, "header present but no data rows");

  std::vector<SessionRecord> sessions;
  sessions.reserve(building.size());
  for (auto& [_, s] : building) {
    std::stable_sort(s.frames.begin(), s.frames.end(),
                     [](const Frame& a, const Frame& b) { return a.timestamp_ms < b.timestamp_ms; });
    sessions.push_back(std::move(s));
  }
  return Corpus(std::move(schema), std::move(sessions), std::move(warnings));
}

inline Corpus load_corpus(const std::filesystem::path& path, FeatureSchema schema, const ColumnMap& column_map = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return parse_corpus(in, std::move(schema), column_map);
}

/// Writes the canonical flat CSV. Cells of features outside a session's genre,
/// and zero cells of features the schema marks absent for that game, are left
/// blank so that loading reproduces the corpus exactly.
inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  const auto& schema = corpus.schema();
  const bool need_genre = std::any_of(corpus.sessions().begin(), corpus.sessions().end(), [&](const auto& s) {
    return schema.genre_of(s.info.game) != s.info.genre;
  });
  out << "player_id,session_id,game,";
  if (need_genre) out << "genre,";
  out << "timestamp_ms,arousal";
  for (const auto& e : schema.entries()) out << ',' << text::csv_field(e.name);
  out << '\n';

  for (const auto& s : corpus.sessions()) {
    const auto& layout = schema.layout(s.info.genre);
    std::vector<std::optional<std::size_t>> slot_of_entry(schema.entries().size());
    for (std::size_t k = 0; k < layout.entries.size(); ++k) slot_of_entry[layout.entries[k]] = k;
    for (const auto& f : s.frames) {
      out << text::csv_field(s.info.player_id) << ',' << text::csv_field(s.info.session_id) << ','
          << text::csv_field(s.info.game) << ',';
      if (need_genre) out << to_string(s.info.genre) << ',';
      out << text::format_double(f.timestamp_ms) << ',' << text::format_double(f.arousal);
      for (std::size_t e = 0; e < schema.entries().size(); ++e) {
        out << ',';
        const auto slot = slot_of_entry[e];
        if (!slot || *slot >= f.features.size()) continue;
        const double v = f.features[*slot];
        if (v == 0.0 && schema.entries()[e].absent_in.contains(s.info.game)) continue;
        out << text::format_double(v);
      }
      out << '\n';
    }
  }
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ostringstream ss;
  write_corpus(ss, corpus);
  text::write_file(path, ss.str());
}

/// Human-readable invariant violations; an empty list means the corpus is
/// well formed. Load warnings (ignored columns) are included.
inline std::vector<std::string> validate_corpus(const Corpus& corpus) {
  std::vector<std::string> diags = corpus.warnings();
  const auto& schema = corpus.schema();
  for (const auto& s : corpus.sessions()) {
    const std::string name = "session '" + s.info.session_id + "' of player '" + s.info.player_id + "'";
    const auto mapped = schema.genre_of(s.info.game);
    if (!mapped) {
      diags.push_back(name + ": game '" + s.info.game + "' is not declared in the schema");
    } else if (*mapped != s.info.genre) {
      diags.push_back(name + ": game '" + s.info.game + "' belongs to genre " + std::string(to_string(*mapped)) +
                      ", not " + std::string(to_string(s.info.genre)));
    }
    if (s.frames.empty()) {
      diags.push_back(name + ": no frames");
      continue;
    }
    const std::size_t width = schema.layout(s.info.genre).size();
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      const auto& f = s.frames[i];
      const std::string at = name + " at t=" + text::format_double(f.timestamp_ms) + " ms";
      if (f.timestamp_ms < 0 || !std::isfinite(f.timestamp_ms)) diags.push_back(at + ": invalid timestamp");
      if (i > 0) {
        const double prev = s.frames[i - 1].timestamp_ms;
        if (f.timestamp_ms == prev) {
          diags.push_back(at + ": duplicated timestamp");
        } else if (f.timestamp_ms < prev) {
          diags.push_back(at + ": timestamps not increasing");
        }
      }
      if (f.features.size() != width) {
        diags.push_back(at + ": " + std::to_string(f.features.size()) + " features, genre layout has " +
                        std::to_string(width));
      }
      if (!std::isfinite(f.arousal) ||
          std::any_of(f.features.begin(), f.features.end(), [](double v) { return !std::isfinite(v); })) {
        diags.push_back(at + ": non-finite value");
      }
    }
  }
  std::size_t indexed = 0;
  for (const auto& [_, ids] : corpus.player_index()) indexed += ids.size();
  if (indexed != corpus.sessions().size()) diags.push_back("player index does not cover every session");
  return diags;
}

/// Column indices (into the genre layout) of the requested feature set.
inline std::vector<std::size_t> select_features(const FeatureSchema& schema, FeatureSet set, Genre genre) {
  const auto& layout = schema.layout(genre);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const bool general = layout.kinds[i] == FeatureKind::General;
    if (set == FeatureSet::All || (set == FeatureSet::General) == general) out.push_back(i);
  }
  return out;
}

inline std::vector<std::size_t> select_features(const Corpus& corpus, FeatureSet set, Genre genre) {
  return select_features(corpus.schema(), set, genre);
}

}  // namespace affect
