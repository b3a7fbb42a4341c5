#pragma once

#include <affect/eval.hpp>
#include <affect/text.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace affect::report {

inline constexpr std::string_view kDispersionNote =
    "+/- is the sample standard deviation of the per-run (fold-averaged) accuracies";

/// One table cell, detached from the full report so it can be re-read from CSV.
struct CellSummary {
  ProtocolKind protocol = ProtocolKind::GameModel;
  Genre genre = Genre::Racing;
  std::string game;
  FeatureSet feature_set = FeatureSet::All;
  double threshold = 0.0;
  int repeats = 0;
  int folds = 0;
  double mean = 0.0;
  double dispersion = 0.0;
  double best_fold = 0.0;
  std::size_t kept = 0;
  std::size_t total = 0;
};

inline CellSummary summarize(const EvalReport& r) {
  return {r.config.protocol.kind,  r.config.protocol.genre, r.config.protocol.game, r.config.feature_set,
          r.config.threshold,      r.config.repeats,        r.config.folds,         r.mean,
          r.dispersion,            r.best_fold,             r.retention.kept,       r.retention.total};
}

inline constexpr std::string_view kCellsHeader =
    "protocol,genre,game,feature_set,threshold,repeats,folds,mean,dispersion,best_fold,kept,total";

inline std::string cells_csv(std::span<const CellSummary> cells) {
  std::string out(kCellsHeader);
  out += '\n';
  for (const auto& c : cells) {
    out += std::string(to_string(c.protocol)) + ',' + std::string(to_string(c.genre)) + ',' + text::csv_field(c.game) +
           ',' + std::string(to_string(c.feature_set)) + ',' + text::format_double(c.threshold) + ',' +
           std::to_string(c.repeats) + ',' + std::to_string(c.folds) + ',' + text::format_double(c.mean) + ',' +
           text::format_double(c.dispersion) + ',' + text::format_double(c.best_fold) + ',' + std::to_string(c.kept) +
           ',' + std::to_string(c.total) + '\n';
  }
  return out;
}

inline std::vector<CellSummary> parse_cells_csv(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kCellsHeader) {
    throw Error(ErrorKind::MalformedRow, "cells file does not start with the expected header");
  }
  std::vector<CellSummary> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto f = text::split_csv(line);
    const auto bad = [&] { return Error(ErrorKind::MalformedRow, "cells row " + std::to_string(row)); };
    if (f.size() != 12) throw bad();
    CellSummary c;
    if (f[0] == "game") {
      c.protocol = ProtocolKind::GameModel;
    } else if (f[0] == "genre") {
      c.protocol = ProtocolKind::GenreModel;
    } else {
      throw bad();
    }
    const auto genre = parse_genre(f[1]);
    const auto fs = parse_feature_set(f[3]);
    const auto num = [&](std::size_t i) {
      const auto v = text::parse_double(f[i]);
      if (!v) throw bad();
      return *v;
    };
    if (!genre || !fs) throw bad();
    c.genre = *genre;
    c.game = f[2];
    c.feature_set = *fs;
    c.threshold = num(4);
    c.repeats = static_cast<int>(num(5));
    c.folds = static_cast<int>(num(6));
    c.mean = num(7);
    c.dispersion = num(8);
    c.best_fold = num(9);
    c.kept = static_cast<std::size_t>(num(10));
    c.total = static_cast<std::size_t>(num(11));
    out.push_back(c);
  }
  return out;
}

inline std::string fold_csv(std::span<const EvalReport> reports) {
  std::string out = "protocol,game,feature_set,repeat,fold,accuracy\n";
  for (const auto& r : reports) {
    for (std::size_t rep = 0; rep < r.fold_accuracy.size(); ++rep) {
      for (std::size_t f = 0; f < r.fold_accuracy[rep].size(); ++f) {
        const double a = r.fold_accuracy[rep][f];
        out += std::string(to_string(r.config.protocol.kind)) + ',' + text::csv_field(r.config.protocol.game) + ',' +
               std::string(to_string(r.config.feature_set)) + ',' + std::to_string(rep) + ',' + std::to_string(f) +
               ',' + (std::isnan(a) ? std::string("skipped") : text::format_double(a)) + '\n';
      }
    }
  }
  return out;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline std::string percent_cell(const CellSummary& c) {
  if (std::isnan(c.mean)) return "n/a";
  return text::fixed(100.0 * c.mean, 1) + "+/-" + text::fixed(100.0 * c.dispersion, 1);
}

/// Game rows, feature-set columns, and a marker column naming the most
/// accurate cell of each row. For genre tables, `best_game_models` adds the
/// best game-model cell of each game.
inline std::string accuracy_table(std::span<const CellSummary> cells, const FeatureSchema& schema, ProtocolKind kind,
                                  std::span<const CellSummary> best_game_models = {}) {
  std::map<std::pair<std::string, FeatureSet>, CellSummary> by_key;
  for (const auto& c : cells) {
    if (c.protocol == kind) by_key[{c.game, c.feature_set}] = c;
  }
  std::map<std::string, CellSummary> best_game;
  for (const auto& c : best_game_models) {
    if (c.protocol != ProtocolKind::GameModel || std::isnan(c.mean)) continue;
    auto it = best_game.find(c.game);
    if (it == best_game.end() || c.mean > it->second.mean) best_game[c.game] = c;
  }
  const bool with_best = kind == ProtocolKind::GenreModel && !best_game.empty();

  std::ostringstream out;
  out << (kind == ProtocolKind::GameModel ? "Game models: trained and tested on the same game"
                                          : "Genre models: trained on two games, tested on the unseen game")
      << "\nTest accuracy (%). " << kDispersionNote << ".\n\n";
  out << pad("Game", 12) << pad("Specific", 14) << pad("General", 14) << pad("All", 14);
  if (with_best) out << pad("GameBest", 14);
  out << "Best\n";
  for (auto genre : kAllGenres) {
    bool any = false;
    for (const auto& game : schema.games_in(genre)) {
      std::optional<CellSummary> best;
      std::string best_label;
      std::string row = pad(game, 12);
      bool row_has = false;
      for (auto fs : kAllFeatureSets) {
        const auto it = by_key.find({game, fs});
        if (it == by_key.end()) {
          row += pad("-", 14);
          continue;
        }
        row_has = true;
        row += pad(percent_cell(it->second), 14);
        if (!std::isnan(it->second.mean) && (!best || it->second.mean > best->mean)) {
          best = it->second;
          best_label = std::string(to_string(fs));
        }
      }
      if (!row_has) continue;
      if (with_best) {
        const auto it = best_game.find(game);
        if (it != best_game.end()) {
          row += pad(percent_cell(it->second), 14);
          if (!best || it->second.mean > best->mean) {
            best = it->second;
            best_label = "GameBest";
          }
        } else {
          row += pad("-", 14);
        }
      }
      out << row << (best ? best_label : "-") << '\n';
      any = true;
    }
    if (any) out << '\n';
  }
  return out.str();
}

inline std::string importance_csv(std::span<const RankedFeature> ranked, ProtocolKind kind, Genre genre) {
  std::string out = "protocol,genre,rank,kind,feature,score\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    out += std::string(to_string(kind)) + ',' + std::string(to_string(genre)) + ',' + std::to_string(i + 1) + ',' +
           (ranked[i].kind == FeatureKind::General ? "G" : "S") + ',' + text::csv_field(ranked[i].name) + ',' +
           text::format_double(ranked[i].score) + '\n';
  }
  return out;
}

struct ImportanceBlock {
  Genre genre;
  std::vector<RankedFeature> game_models;
  std::vector<RankedFeature> genre_models;
};

/// Top-N MDI features per genre, game models beside genre models.
inline std::string importance_table(std::span<const ImportanceBlock> blocks, std::size_t top = 5) {
  std::ostringstream out;
  out << "Feature importance (MDI), All-feature models averaged across the games of each genre.\n"
      << "G = general feature, S = genre-specific feature.\n\n";
  out << pad("Genre", 12) << pad("Game models (averaged)", 36) << "Genre models (averaged)\n";
  const auto cell = [](const std::vector<RankedFeature>& v, std::size_t i) {
    if (i >= v.size()) return pad("", 36);
    return pad(std::string(v[i].kind == FeatureKind::General ? "G " : "S ") + pad(v[i].name, 26) +
                   text::fixed(v[i].score, 3),
               36);
  };
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < top; ++i) {
      out << pad(i == 0 ? std::string(to_string(b.genre)) : "", 12) << cell(b.game_models, i)
          << cell(b.genre_models, i) << '\n';
    }
    out << '\n';
  }
  return out.str();
}

inline std::string significance_csv(const std::vector<std::pair<std::string, std::vector<Comparison>>>& rows) {
  std::string out = "protocol_game,a,b,t,df,p,p_bonferroni,family_size,significant,zero_variance\n";
  for (const auto& [label, comps] : rows) {
    for (const auto& c : comps) {
      out += text::csv_field(label) + ',' + c.a + ',' + c.b + ',' + text::format_double(c.test.t) + ',' +
             text::format_double(c.test.df) + ',' + text::format_double(c.test.p) + ',' +
             text::format_double(c.p_adjusted) + ',' + std::to_string(c.family_size) + ',' +
             (c.significant ? "yes" : "no") + ',' + (c.test.zero_variance ? "yes" : "no") + '\n';
    }
  }
  return out;
}

}  // namespace affect::report
