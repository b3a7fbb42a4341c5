#pragma once

#include <affect/corpus.hpp>
#include <affect/error.hpp>
#include <affect/forest.hpp>
#include <affect/preflearn.hpp>
#include <affect/preprocess.hpp>
#include <affect/random.hpp>
#include <affect/stats.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace affect {

/// Between-subject fold assignment: every player belongs to exactly one fold.
struct FoldPlan {
  int k = 10;
  std::map<std::string, int> assignment;

  int fold_of(const std::string& player) const {
    const auto it = assignment.find(player);
    return it == assignment.end() ? -1 : it->second;
  }

  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (const auto& [_, f] : assignment) ++sizes[static_cast<std::size_t>(f)];
    return sizes;
  }

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Seeded shuffle of the (sorted, de-duplicated) players, then round-robin.
inline FoldPlan make_folds(std::vector<std::string> players, int k, std::uint64_t seed) {
  std::sort(players.begin(), players.end());
  players.erase(std::unique(players.begin(), players.end()), players.end());
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 folds");
  if (players.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::TooFewPlayers,
                std::to_string(players.size()) + " players cannot fill " + std::to_string(k) + " folds");
  }
  Rng rng(seed);
  std::shuffle(players.begin(), players.end(), rng);
  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < players.size(); ++i) plan.assignment[players[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return plan;
}

enum class ProtocolKind { GameModel, GenreModel };

constexpr std::string_view to_string(ProtocolKind p) noexcept {
  return p == ProtocolKind::GameModel ? "game" : "genre";
}

/// GameModel: train and test on `game`. GenreModel: train on the genre's other
/// games and test on `game`.
struct Protocol {
  ProtocolKind kind = ProtocolKind::GameModel;
  Genre genre = Genre::Racing;
  std::string game;

  static Protocol game_model(const FeatureSchema& schema, const std::string& game) {
    const auto g = schema.genre_of(game);
    if (!g) throw Error(ErrorKind::UnknownGame, "'" + game + "'");
    return {ProtocolKind::GameModel, *g, game};
  }

  static Protocol genre_model(const FeatureSchema& schema, Genre genre, const std::string& test_game) {
    const auto g = schema.genre_of(test_game);
    if (!g) throw Error(ErrorKind::UnknownGame, "'" + test_game + "'");
    if (*g != genre) {
      throw Error(ErrorKind::InvalidArgument,
                  "test game '" + test_game + "' is not a " + std::string(to_string(genre)) + " game");
    }
    return {ProtocolKind::GenreModel, genre, test_game};
  }
};

enum class TrainPlayers { OutOfFold, All };

constexpr std::string_view to_string(TrainPlayers t) noexcept { return t == TrainPlayers::OutOfFold ? "outfold" : "all"; }

struct ExperimentConfig {
  Protocol protocol;
  FeatureSet feature_set = FeatureSet::All;
  double threshold = 0.15;
  int repeats = 20;
  int folds = 10;
  std::uint64_t base_seed = 0;
  ForestConfig forest;
  TrainPlayers train_players = TrainPlayers::OutOfFold;
};

struct EvalReport {
  ExperimentConfig config;
  std::vector<std::vector<double>> fold_accuracy;  // [repeat][fold], NaN where skipped
  std::vector<double> run_means;
  double mean = 0.0;
  double dispersion = 0.0;  // sample std of the run means
  double best_fold = 0.0;   // max over folds of the run-averaged fold accuracy
  std::vector<int> skipped_folds;
  std::vector<double> importance;  // MDI averaged over runs and folds, genre layout order
  RetentionStats retention;        // comparisons of the sessions in play
};

/// Session indices (into PreparedCorpus::deltas) used for training and testing.
struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline FoldSplit make_split(const PreparedCorpus& prepared, const Protocol& protocol, const FoldPlan& plan, int fold,
                            TrainPlayers train_players = TrainPlayers::OutOfFold) {
  FoldSplit split;
  for (std::size_t i = 0; i < prepared.deltas.size(); ++i) {
    const auto& info = prepared.deltas[i].info;
    if (info.genre != protocol.genre) continue;
    const int f = plan.fold_of(info.player_id);
    if (f < 0) throw Error(ErrorKind::InvalidArgument, "player '" + info.player_id + "' missing from the fold plan");
    const bool in_fold = f == fold;
    if (info.game == protocol.game) {
      if (in_fold) {
        split.test.push_back(i);
      } else if (protocol.kind == ProtocolKind::GameModel) {
        split.train.push_back(i);
      }
    } else if (protocol.kind == ProtocolKind::GenreModel && (!in_fold || train_players == TrainPlayers::All)) {
      split.train.push_back(i);
    }
  }
  return split;
}

/// Throws LeakageDetected when a split shares players between train and test
/// (unless genre models are allowed every training player), or when a genre
/// model trains on its test game.
inline void check_split(const PreparedCorpus& prepared, const Protocol& protocol, const FoldSplit& split,
                        TrainPlayers train_players = TrainPlayers::OutOfFold) {
  std::set<std::string> train_players_set;
  std::set<std::string> train_games;
  for (auto i : split.train) {
    train_players_set.insert(prepared.deltas[i].info.player_id);
    train_games.insert(prepared.deltas[i].info.game);
  }
  const bool players_may_overlap = protocol.kind == ProtocolKind::GenreModel && train_players == TrainPlayers::All;
  for (auto i : split.test) {
    const auto& info = prepared.deltas[i].info;
    if (!players_may_overlap && train_players_set.contains(info.player_id)) {
      throw Error(ErrorKind::LeakageDetected, "player '" + info.player_id + "' is in both train and test");
    }
    if (protocol.kind == ProtocolKind::GenreModel && train_games.contains(info.game)) {
      throw Error(ErrorKind::LeakageDetected, "test game '" + info.game + "' appears in the training set");
    }
    if (info.game != protocol.game) {
      throw Error(ErrorKind::LeakageDetected, "test session of '" + info.game + "' in a '" + protocol.game + "' split");
    }
  }
  if (protocol.kind == ProtocolKind::GameModel) {
    for (const auto& g : train_games) {
      if (g != protocol.game) throw Error(ErrorKind::LeakageDetected, "game model trains on '" + g + "'");
    }
  }
}

inline std::uint64_t repeat_seed(std::uint64_t base_seed, int repeat) {
  return derive_seed(base_seed, 0x5EED0000ULL + static_cast<std::uint64_t>(repeat));
}

namespace detail {

/// Preference pairs of one genre's sessions, grouped by session.
struct PairPool {
  std::vector<PreferencePair> pairs;
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> range;  // session -> [begin, end)
  RetentionStats retention;

  static PairPool build(const PreparedCorpus& prepared, const Protocol& protocol, double threshold) {
    PairPool pool;
    for (std::size_t i = 0; i < prepared.deltas.size(); ++i) {
      const auto& info = prepared.deltas[i].info;
      if (info.genre != protocol.genre) continue;
      if (protocol.kind == ProtocolKind::GameModel && info.game != protocol.game) continue;
      auto result = transform(std::span(&prepared.deltas[i], 1), {threshold});
      const std::size_t begin = pool.pairs.size();
      for (auto& p : result.pairs) {
        p.provenance.session = i;
        pool.pairs.push_back(std::move(p));
      }
      pool.range[i] = {begin, pool.pairs.size()};
      pool.retention += result.retention;
    }
    return pool;
  }

  Dataset gather(std::span<const std::size_t> sessions, std::span<const std::size_t> columns,
                 const std::vector<std::string>& names) const {
    std::size_t n = 0;
    for (auto s : sessions) {
      const auto it = range.find(s);
      if (it != range.end()) n += it->second.second - it->second.first;
    }
    Dataset d;
    for (auto c : columns) d.feature_names.push_back(names[c]);
    d.x = Matrix(n, columns.size());
    d.y.reserve(n);
    std::size_t row = 0;
    for (auto s : sessions) {
      const auto it = range.find(s);
      if (it == range.end()) continue;
      for (std::size_t p = it->second.first; p < it->second.second; ++p, ++row) {
        auto dst = d.x.row(row);
        for (std::size_t c = 0; c < columns.size(); ++c) dst[c] = pairs[p].x[columns[c]];
        d.y.push_back(pairs[p].y);
      }
    }
    return d;
  }
};

inline void finalize(EvalReport& report, std::size_t importance_runs) {
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> all;
  report.run_means.clear();
  for (const auto& run : report.fold_accuracy) {
    std::vector<double> valid;
    for (double a : run) {
      if (!std::isnan(a)) valid.push_back(a);
    }
    report.run_means.push_back(valid.empty() ? nan : stats::mean(valid));
    all.insert(all.end(), valid.begin(), valid.end());
  }
  report.mean = all.empty() ? nan : stats::mean(all);
  report.dispersion = stats::stddev(report.run_means);
  report.best_fold = -std::numeric_limits<double>::infinity();
  const std::size_t k = report.fold_accuracy.empty() ? 0 : report.fold_accuracy.front().size();
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<double> per_run;
    for (const auto& run : report.fold_accuracy) {
      if (!std::isnan(run[f])) per_run.push_back(run[f]);
    }
    if (!per_run.empty()) report.best_fold = std::max(report.best_fold, stats::mean(per_run));
  }
  if (importance_runs > 0) {
    for (auto& v : report.importance) v /= static_cast<double>(importance_runs);
  }
}

}  // namespace detail

/// Runs the protocol once per seed in `run_seeds` over a fixed fold plan.
inline EvalReport evaluate(const PreparedCorpus& prepared, const ExperimentConfig& cfg, const FoldPlan& plan,
                           std::span<const std::uint64_t> run_seeds) {
  const auto& protocol = cfg.protocol;
  const auto& layout = prepared.schema.layout(protocol.genre);
  const auto columns = select_features(prepared.schema, cfg.feature_set, protocol.genre);
  if (columns.empty()) throw Error(ErrorKind::InvalidArgument, "feature set is empty for this genre");

  const auto pool = detail::PairPool::build(prepared, protocol, cfg.threshold);

  EvalReport report;
  report.config = cfg;
  report.retention = pool.retention;
  report.importance.assign(layout.size(), 0.0);

  struct FoldData {
    Dataset train;
    Dataset test;
  };
  std::vector<std::optional<FoldData>> folds(static_cast<std::size_t>(plan.k));
  for (int f = 0; f < plan.k; ++f) {
    const auto split = make_split(prepared, protocol, plan, f, cfg.train_players);
    check_split(prepared, protocol, split, cfg.train_players);
    auto test = pool.gather(split.test, columns, layout.names);
    if (test.size() == 0) {
      report.skipped_folds.push_back(f);
      continue;
    }
    auto train = pool.gather(split.train, columns, layout.names);
    if (train.size() == 0) {
      throw Error(ErrorKind::EmptyTrainingSet, "fold " + std::to_string(f) + " of " + protocol.game + " has no training pairs");
    }
    folds[static_cast<std::size_t>(f)] = FoldData{std::move(train), std::move(test)};
  }
  if (report.skipped_folds.size() == folds.size()) {
    throw Error(ErrorKind::EmptyFoldTestSet, "no fold has test pairs for '" + protocol.game + "'");
  }

  std::size_t fitted = 0;
  for (auto seed : run_seeds) {
    std::vector<double> accs(folds.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t f = 0; f < folds.size(); ++f) {
      if (!folds[f]) continue;
      const auto model = fit_forest(folds[f]->train, cfg.forest, derive_seed(seed, f));
      accs[f] = accuracy(model, folds[f]->test);
      const auto scores = mdi(model);
      for (std::size_t c = 0; c < columns.size(); ++c) report.importance[columns[c]] += scores[c];
      ++fitted;
    }
    report.fold_accuracy.push_back(std::move(accs));
  }
  detail::finalize(report, fitted);
  return report;
}

inline EvalReport eval_game_model(const PreparedCorpus& prepared, const std::string& game, FeatureSet feature_set,
                                  double threshold, const FoldPlan& plan, std::uint64_t seed,
                                  const ForestConfig& forest = {}) {
  ExperimentConfig cfg;
  cfg.protocol = Protocol::game_model(prepared.schema, game);
  cfg.feature_set = feature_set;
  cfg.threshold = threshold;
  cfg.repeats = 1;
  cfg.folds = plan.k;
  cfg.forest = forest;
  const std::uint64_t seeds[] = {seed};
  return evaluate(prepared, cfg, plan, seeds);
}

inline EvalReport eval_genre_model(const PreparedCorpus& prepared, Genre genre, const std::string& test_game,
                                   FeatureSet feature_set, double threshold, const FoldPlan& plan, std::uint64_t seed,
                                   const ForestConfig& forest = {},
                                   TrainPlayers train_players = TrainPlayers::OutOfFold) {
  ExperimentConfig cfg;
  cfg.protocol = Protocol::genre_model(prepared.schema, genre, test_game);
  cfg.feature_set = feature_set;
  cfg.threshold = threshold;
  cfg.repeats = 1;
  cfg.folds = plan.k;
  cfg.forest = forest;
  cfg.train_players = train_players;
  const std::uint64_t seeds[] = {seed};
  return evaluate(prepared, cfg, plan, seeds);
}

/// Fold plan shared by every experiment with the same base seed.
inline FoldPlan experiment_folds(const PreparedCorpus& prepared, int k, std::uint64_t base_seed) {
  return make_folds(prepared.players(), k, base_seed);
}

/// `repeats` runs with seeds repeat_seed(base_seed, r) over the fold plan
/// experiment_folds(prepared, folds, base_seed).
inline EvalReport run_experiment(const ExperimentConfig& cfg, const PreparedCorpus& prepared) {
  if (cfg.repeats < 1) throw Error(ErrorKind::InvalidArgument, "repeats must be >= 1");
  const auto plan = experiment_folds(prepared, cfg.folds, cfg.base_seed);
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < cfg.repeats; ++r) seeds.push_back(repeat_seed(cfg.base_seed, r));
  return evaluate(prepared, cfg, plan, seeds);
}

struct Comparison {
  std::string a;
  std::string b;
  stats::TTestResult test;
  double p_adjusted = 1.0;
  std::size_t family_size = 1;
  bool significant = false;
};

/// Pairwise t-tests of run means between reports, Bonferroni-adjusted over the
/// family of all pairs in `reports`.
inline std::vector<Comparison> compare_reports(std::span<const EvalReport> reports, double alpha = 0.05) {
  std::vector<Comparison> out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t j = i + 1; j < reports.size(); ++j) {
      Comparison c;
      c.a = std::string(to_string(reports[i].config.feature_set));
      c.b = std::string(to_string(reports[j].config.feature_set));
      c.test = stats::t_test(reports[i].run_means, reports[j].run_means);
      out.push_back(c);
    }
  }
  std::vector<double> ps;
  for (const auto& c : out) ps.push_back(c.test.p);
  const auto adjusted = stats::bonferroni(ps);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].p_adjusted = adjusted[i];
    out[i].family_size = out.size();
    out[i].significant = adjusted[i] < alpha;
  }
  return out;
}

struct RankedFeature {
  std::string name;
  FeatureKind kind = FeatureKind::General;
  double score = 0.0;
};

/// Averages the importance vectors of reports that share a genre layout and
/// sorts features by descending score (layout order breaks ties).
inline std::vector<RankedFeature> rank_importance(std::span<const EvalReport> reports, const GenreLayout& layout) {
  std::vector<double> sum(layout.size(), 0.0);
  for (const auto& r : reports) {
    if (r.importance.size() != layout.size()) throw Error(ErrorKind::DimensionMismatch, "importance layout mismatch");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += r.importance[i];
  }
  std::vector<RankedFeature> out;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    out.push_back({layout.names[i], layout.kinds[i], reports.empty() ? 0.0 : sum[i] / static_cast<double>(reports.size())});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

/// Games of `genre` that have at least one session with deltas.
inline std::vector<std::string> games_present(const PreparedCorpus& prepared, Genre genre) {
  std::set<std::string> present;
  for (const auto& d : prepared.deltas) {
    if (d.info.genre == genre) present.insert(d.info.game);
  }
  std::vector<std::string> out;
  for (const auto& g : prepared.schema.games_in(genre)) {
    if (present.contains(g)) out.push_back(g);
  }
  return out;
}

/// All-feature models for every game of the genre (as the modelled game for
/// game models, as the held-out test game for genre models); MDI averaged over
/// folds, runs and games.
inline std::vector<RankedFeature> importance_report(const PreparedCorpus& prepared, ProtocolKind kind, Genre genre,
                                                    ExperimentConfig base) {
  std::vector<EvalReport> reports;
  base.feature_set = FeatureSet::All;
  for (const auto& game : games_present(prepared, genre)) {
    base.protocol = kind == ProtocolKind::GameModel ? Protocol::game_model(prepared.schema, game)
                                                    : Protocol::genre_model(prepared.schema, genre, game);
    reports.push_back(run_experiment(base, prepared));
  }
  return rank_importance(reports, prepared.schema.layout(genre));
}

}  // namespace affect
