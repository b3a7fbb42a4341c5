#pragma once

#include <affect/error.hpp>
#include <affect/text.hpp>

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace affect {

enum class Genre { Racing, Shooter, Platformer };
inline constexpr std::array<Genre, 3> kAllGenres{Genre::Racing, Genre::Shooter, Genre::Platformer};

enum class FeatureKind { General, Specific };
enum class Aggregation { Mean, Sum };

constexpr std::string_view to_string(Genre g) noexcept {
  switch (g) {
    case Genre::Racing: return "Racing";
    case Genre::Shooter: return "Shooter";
    case Genre::Platformer: return "Platformer";
  }
  return "?";
}

constexpr std::string_view to_string(FeatureKind k) noexcept {
  return k == FeatureKind::General ? "General" : "Specific";
}

constexpr std::string_view to_string(Aggregation a) noexcept {
  return a == Aggregation::Mean ? "Mean" : "Sum";
}

inline std::optional<Genre> parse_genre(std::string_view s) {
  const auto l = text::lower(text::trim(s));
  if (l == "racing") return Genre::Racing;
  if (l == "shooter") return Genre::Shooter;
  if (l == "platformer") return Genre::Platformer;
  return std::nullopt;
}

struct FeatureEntry {
  std::string name;
  FeatureKind kind = FeatureKind::General;
  std::set<Genre> genres;
  Aggregation aggregation = Aggregation::Mean;
  // Games of an applicable genre that do not log this feature. Loading does
  // not depend on it (absent values are zero-filled anyway); writers and the
  // synthetic generator use it to leave those cells blank.
  std::set<std::string> absent_in;
};

struct GameEntry {
  std::string id;
  Genre genre = Genre::Racing;
};

/// Column layout of the dense feature vector for one genre: every schema entry
/// that applies to the genre, in schema order.
struct GenreLayout {
  Genre genre = Genre::Racing;
  std::vector<std::size_t> entries;
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;
  std::vector<Aggregation> aggregation;

  std::size_t size() const noexcept { return names.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }
};

/// Declarative feature schema plus the closed game -> genre table.
///
/// Text format, one record per line, fields separated by `|`:
///
///     game    | <id>   | <genre>
///     feature | <name> | General|Specific | <genre,genre,...|*> | Mean|Sum [| <absent game,...>]
///
/// Blank lines and lines starting with `#` are ignored.
class FeatureSchema {
 public:
  FeatureSchema() = default;

  FeatureSchema(std::vector<FeatureEntry> entries, std::vector<GameEntry> games)
      : entries_(std::move(entries)), games_(std::move(games)) {
    std::set<std::string> seen;
    for (const auto& e : entries_) {
      if (e.name.empty()) throw Error(ErrorKind::SchemaError, "feature with empty name");
      if (!seen.insert(e.name).second) {
        throw Error(ErrorKind::SchemaError, "duplicate feature name '" + e.name + "'");
      }
      if (e.genres.empty()) throw Error(ErrorKind::SchemaError, "feature '" + e.name + "' has no genre");
    }
    std::set<std::string> game_ids;
    for (const auto& g : games_) {
      if (!game_ids.insert(g.id).second) {
        throw Error(ErrorKind::SchemaError, "duplicate game '" + g.id + "'");
      }
    }
    for (auto genre : kAllGenres) {
      auto& layout = layouts_[static_cast<std::size_t>(genre)];
      layout.genre = genre;
      for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (!e.genres.contains(genre)) continue;
        layout.entries.push_back(i);
        layout.names.push_back(e.name);
        layout.kinds.push_back(e.kind);
        layout.aggregation.push_back(e.aggregation);
      }
    }
  }

  static FeatureSchema parse(std::string_view content) {
    std::vector<FeatureEntry> entries;
    std::vector<GameEntry> games;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t line_no = 0;
    const auto fail = [&](const std::string& what) {
      throw Error(ErrorKind::SchemaError, "line " + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
      ++line_no;
      const auto body = text::trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto fields = text::split(body, '|');
      const auto tag = text::lower(fields[0]);
      if (tag == "game") {
        if (fields.size() != 3) fail("game record needs 3 fields");
        const auto genre = parse_genre(fields[2]);
        if (!genre) fail("unknown genre '" + fields[2] + "'");
        games.push_back({fields[1], *genre});
      } else if (tag == "feature") {
        if (fields.size() != 5 && fields.size() != 6) fail("feature record needs 5 or 6 fields");
        FeatureEntry e;
        e.name = fields[1];
        const auto kind = text::lower(fields[2]);
        if (kind == "general") {
          e.kind = FeatureKind::General;
        } else if (kind == "specific") {
          e.kind = FeatureKind::Specific;
        } else {
          fail("unknown feature kind '" + fields[2] + "'");
        }
        if (fields[3] == "*") {
          e.genres = {kAllGenres.begin(), kAllGenres.end()};
        } else {
          for (const auto& g : text::split(fields[3], ',')) {
            const auto genre = parse_genre(g);
            if (!genre) fail("unknown genre '" + g + "'");
            e.genres.insert(*genre);
          }
        }
        const auto agg = text::lower(fields[4]);
        if (agg == "mean") {
          e.aggregation = Aggregation::Mean;
        } else if (agg == "sum") {
          e.aggregation = Aggregation::Sum;
        } else {
          fail("unknown aggregation '" + fields[4] + "'");
        }
        if (fields.size() == 6 && !fields[5].empty()) {
          for (const auto& g : text::split(fields[5], ',')) e.absent_in.insert(g);
        }
        entries.push_back(std::move(e));
      } else {
        fail("unknown record type '" + fields[0] + "'");
      }
    }
    return FeatureSchema(std::move(entries), std::move(games));
  }

  static FeatureSchema load(const std::filesystem::path& path) { return parse(text::read_file(path)); }

  const std::vector<FeatureEntry>& entries() const noexcept { return entries_; }
  const std::vector<GameEntry>& games() const noexcept { return games_; }
  const GenreLayout& layout(Genre g) const { return layouts_[static_cast<std::size_t>(g)]; }

  std::optional<Genre> genre_of(std::string_view game) const {
    for (const auto& g : games_) {
      if (g.id == game) return g.genre;
    }
    return std::nullopt;
  }

  std::vector<std::string> games_in(Genre genre) const {
    std::vector<std::string> out;
    for (const auto& g : games_) {
      if (g.genre == genre) out.push_back(g.id);
    }
    return out;
  }

  const FeatureEntry* find(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  std::size_t count(FeatureKind kind, Genre genre) const {
    const auto& l = layout(genre);
    return static_cast<std::size_t>(std::count(l.kinds.begin(), l.kinds.end(), kind));
  }

  std::size_t count_general() const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const auto& e) {
      return e.kind == FeatureKind::General;
    }));
  }

 private:
  std::vector<FeatureEntry> entries_;
  std::vector<GameEntry> games_;
  std::array<GenreLayout, 3> layouts_{};
};

#ifdef AFFECT_DATA_DIR
inline std::filesystem::path bundled_schema_path() {
  return std::filesystem::path(AFFECT_DATA_DIR) / "again_schema.txt";
}
#endif

}  // namespace affect
