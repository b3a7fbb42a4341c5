#include "test_support.hpp"

#include <catch_amalgamated.hpp>

#include <cstdio>

using namespace affect;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<std::string> player_ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "P%03d", i);
    out.emplace_back(buf);
  }
  return out;
}

PreparedCorpus synthetic(SynthProfile p, std::uint64_t seed) {
  return preprocess_corpus(gen_corpus(p, testing::again_schema(), seed));
}

SynthProfile time_profile() {
  SynthProfile p;
  p.coupling = Coupling::TimeDriven;
  p.n_players = 12;
  p.sessions_per_player = 3;
  p.session_length_s = 45;
  return p;
}

/// One corpus with every genre; player ids are prefixed per genre.
PreparedCorpus all_genres(int players, double length_s) {
  const auto& schema = testing::again_schema();
  std::vector<SessionRecord> sessions;
  for (auto g : kAllGenres) {
    SynthProfile p = time_profile();
    p.genre = g;
    p.n_players = players;
    p.session_length_s = length_s;
    const auto corpus = gen_corpus(p, schema, 3);
    for (auto s : corpus.sessions()) {
      s.info.player_id = std::string(to_string(g)) + "-" + s.info.player_id;
      sessions.push_back(std::move(s));
    }
  }
  return preprocess_corpus(Corpus(schema, std::move(sessions)));
}

ExperimentConfig quick_config(Protocol protocol, FeatureSet fs = FeatureSet::All) {
  ExperimentConfig cfg;
  cfg.protocol = std::move(protocol);
  cfg.feature_set = fs;
  cfg.repeats = 2;
  cfg.forest.n_estimators = 10;
  return cfg;
}

}  // namespace

TEST_CASE("make_folds: sizes, determinism and errors") {
  const auto plan = make_folds(player_ids(122), 10, 42);
  const auto sizes = plan.fold_sizes();
  std::size_t total = 0;
  std::size_t thirteen = 0;
  for (auto s : sizes) {
    CHECK((s == 12 || s == 13));
    thirteen += s == 13;
    total += s;
  }
  CHECK(total == 122);
  CHECK(thirteen == 2);
  CHECK(plan.assignment.size() == 122);

  for (auto s : make_folds(player_ids(10), 10, 1).fold_sizes()) CHECK(s == 1);

  CHECK(make_folds(player_ids(122), 10, 42) == plan);
  CHECK_FALSE(make_folds(player_ids(122), 10, 43) == plan);

  // Input order and duplicates do not matter.
  auto shuffled = player_ids(122);
  std::reverse(shuffled.begin(), shuffled.end());
  shuffled.push_back(shuffled.front());
  CHECK(make_folds(shuffled, 10, 42) == plan);

  CHECK_THROWS_MATCHES(make_folds(player_ids(9), 10, 1), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.kind() == ErrorKind::TooFewPlayers; }));
  CHECK_THROWS_AS(make_folds(player_ids(9), 1, 1), Error);
}

TEST_CASE("protocols validate their games") {
  const auto& schema = testing::again_schema();
  CHECK(Protocol::game_model(schema, "Heist!").genre == Genre::Shooter);
  CHECK_THROWS_AS(Protocol::game_model(schema, "Tetris"), Error);
  CHECK_THROWS_AS(Protocol::genre_model(schema, Genre::Racing, "Heist!"), Error);
  CHECK(Protocol::genre_model(schema, Genre::Racing, "Solid").kind == ProtocolKind::GenreModel);
}

TEST_CASE("splits never leak players or test games") {
  const auto prepared = synthetic(time_profile(), 1);
  const auto plan = experiment_folds(prepared, 10, 5);
  const auto& schema = prepared.schema;
  for (const auto& game : schema.games_in(Genre::Shooter)) {
    for (const auto& protocol : {Protocol::game_model(schema, game), Protocol::genre_model(schema, Genre::Shooter, game)}) {
      for (int f = 0; f < plan.k; ++f) {
        const auto split = make_split(prepared, protocol, plan, f);
        CHECK_NOTHROW(check_split(prepared, protocol, split));
        std::set<std::string> train_players;
        std::set<std::string> train_games;
        for (auto i : split.train) {
          train_players.insert(prepared.deltas[i].info.player_id);
          train_games.insert(prepared.deltas[i].info.game);
          CHECK(plan.fold_of(prepared.deltas[i].info.player_id) != f);
        }
        for (auto i : split.test) {
          const auto& info = prepared.deltas[i].info;
          CHECK_FALSE(train_players.contains(info.player_id));
          CHECK(info.game == game);
          CHECK(plan.fold_of(info.player_id) == f);
          if (protocol.kind == ProtocolKind::GenreModel) CHECK_FALSE(train_games.contains(game));
        }
        if (protocol.kind == ProtocolKind::GameModel) CHECK(train_games == std::set<std::string>{game});
      }
    }
  }
}

TEST_CASE("split guard rejects constructed violations") {
  const auto prepared = synthetic(time_profile(), 1);
  const auto plan = experiment_folds(prepared, 10, 5);
  const auto genre = Protocol::genre_model(prepared.schema, Genre::Shooter, "Heist!");
  const auto is_leak = Catch::Matchers::Predicate<Error>([](const Error& e) { return e.kind() == ErrorKind::LeakageDetected; });

  auto split = make_split(prepared, genre, plan, 0);
  REQUIRE_FALSE(split.test.empty());
  split.train.push_back(split.test.front());
  CHECK_THROWS_MATCHES(check_split(prepared, genre, split), Error, is_leak);

  // Allowing every player still forbids the test game in training.
  auto all = make_split(prepared, genre, plan, 0, TrainPlayers::All);
  CHECK_NOTHROW(check_split(prepared, genre, all, TrainPlayers::All));
  CHECK_THROWS_MATCHES(check_split(prepared, genre, all), Error, is_leak);
  all.train.push_back(all.test.front());
  CHECK_THROWS_MATCHES(check_split(prepared, genre, all, TrainPlayers::All), Error, is_leak);

  const auto game = Protocol::game_model(prepared.schema, "Heist!");
  auto gs = make_split(prepared, game, plan, 0);
  for (std::size_t i = 0; i < prepared.deltas.size(); ++i) {
    if (prepared.deltas[i].info.game == "TopDown" && plan.fold_of(prepared.deltas[i].info.player_id) != 0) {
      gs.train.push_back(i);
      break;
    }
  }
  CHECK_THROWS_MATCHES(check_split(prepared, game, gs), Error, is_leak);
}

TEST_CASE("report aggregation arithmetic") {
  EvalReport r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.fold_accuracy = {{0.5, 0.7, nan}, {0.6, 0.9, nan}};
  r.importance = {2.0, 4.0};
  detail::finalize(r, 4);
  CHECK_THAT(r.run_means[0], WithinAbs(0.6, 1e-15));
  CHECK_THAT(r.run_means[1], WithinAbs(0.75, 1e-15));
  CHECK_THAT(r.mean, WithinAbs(0.675, 1e-15));
  CHECK_THAT(r.dispersion, WithinAbs(0.15 / std::sqrt(2.0), 1e-15));
  CHECK_THAT(r.best_fold, WithinAbs(0.8, 1e-15));
  CHECK(r.importance == std::vector<double>{0.5, 1.0});
}

TEST_CASE("a constant classifier scores exactly one half on mirrored pairs") {
  const auto prepared = synthetic(time_profile(), 2);
  const auto pairs = transform(prepared.deltas, {0.15}).pairs;
  REQUIRE_FALSE(pairs.empty());
  RandomForestModel constant;
  constant.n_features = pairs.front().x.size();
  constant.trees.resize(1);
  constant.trees[0].nodes.push_back(TreeNode{});
  constant.trees[0].nodes[0].counts = {1, 4};
  CHECK(accuracy(constant, make_dataset(pairs)) == 0.5);
}

TEST_CASE("run_experiment: one repeat equals a single evaluation") {
  const auto prepared = synthetic(time_profile(), 3);
  auto cfg = quick_config(Protocol::game_model(prepared.schema, "Shootout"), FeatureSet::General);
  cfg.repeats = 1;
  cfg.base_seed = 9;
  const auto via_run = run_experiment(cfg, prepared);
  const auto plan = experiment_folds(prepared, 10, 9);
  const auto single = eval_game_model(prepared, "Shootout", FeatureSet::General, 0.15, plan, repeat_seed(9, 0), cfg.forest);
  CHECK(via_run.fold_accuracy == single.fold_accuracy);
  CHECK(via_run.importance == single.importance);
  CHECK(via_run.mean == single.mean);

  auto genre_cfg = quick_config(Protocol::genre_model(prepared.schema, Genre::Shooter, "Heist!"));
  genre_cfg.repeats = 1;
  genre_cfg.base_seed = 9;
  const auto genre_run = run_experiment(genre_cfg, prepared);
  const auto genre_single =
      eval_genre_model(prepared, Genre::Shooter, "Heist!", FeatureSet::All, 0.15, plan, repeat_seed(9, 0), cfg.forest);
  CHECK(genre_run.fold_accuracy == genre_single.fold_accuracy);
}

TEST_CASE("run_experiment is deterministic and reports are well formed") {
  const auto prepared = synthetic(time_profile(), 4);
  const auto cfg = quick_config(Protocol::genre_model(prepared.schema, Genre::Shooter, "TopDown"));
  const auto a = run_experiment(cfg, prepared);
  const auto b = run_experiment(cfg, prepared);
  CHECK(a.fold_accuracy == b.fold_accuracy);
  CHECK(a.importance == b.importance);
  REQUIRE(a.fold_accuracy.size() == 2);
  std::vector<double> all;
  for (const auto& run : a.fold_accuracy) {
    REQUIRE(run.size() == 10);
    for (double v : run) {
      if (std::isnan(v)) continue;
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      all.push_back(v);
    }
  }
  CHECK_THAT(a.mean, WithinAbs(stats::mean(all), 1e-12));
  CHECK(a.retention.total > 0);
  CHECK(a.importance.size() == prepared.schema.layout(Genre::Shooter).size());
}

TEST_CASE("run_experiment: time-driven signal is recovered and stable across seeds") {
  const auto prepared = synthetic(time_profile(), 5);
  auto cfg = quick_config(Protocol::game_model(prepared.schema, "Heist!"), FeatureSet::General);
  cfg.base_seed = 1;
  const auto a = run_experiment(cfg, prepared);
  cfg.base_seed = 2;
  const auto b = run_experiment(cfg, prepared);
  CHECK(a.mean >= 0.95);
  CHECK(std::abs(a.mean - b.mean) < 0.02);
}

TEST_CASE("importance_report ranks the driving feature first") {
  SynthProfile p;
  p.coupling = Coupling::FeatureDriven;
  p.feature = "Player Score";
  p.gain = 1.0;
  p.noise_std = 0.01;
  p.n_players = 10;
  p.session_length_s = 45;
  const auto prepared = synthetic(p, 6);
  auto base = quick_config({});
  base.repeats = 1;
  for (auto kind : {ProtocolKind::GameModel, ProtocolKind::GenreModel}) {
    const auto ranked = importance_report(prepared, kind, Genre::Shooter, base);
    REQUIRE(ranked.size() == prepared.schema.layout(Genre::Shooter).size());
    CHECK(ranked.front().name == "Player Score");
    CHECK(ranked.front().kind == FeatureKind::General);
    double sum = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      sum += ranked[i].score;
      if (i > 0) CHECK(ranked[i].score <= ranked[i - 1].score);
    }
    CHECK_THAT(sum, WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("the full table sweep yields one report per game and feature set") {
  const auto prepared = all_genres(10, 15);
  std::vector<EvalReport> game_reports;
  std::vector<EvalReport> genre_reports;
  for (auto genre : kAllGenres) {
    for (const auto& game : prepared.schema.games_in(genre)) {
      for (auto fs : kAllFeatureSets) {
        auto cfg = quick_config(Protocol::game_model(prepared.schema, game), fs);
        cfg.repeats = 1;
        cfg.forest.n_estimators = 3;
        game_reports.push_back(run_experiment(cfg, prepared));
        cfg.protocol = Protocol::genre_model(prepared.schema, genre, game);
        genre_reports.push_back(run_experiment(cfg, prepared));
      }
    }
  }
  CHECK(game_reports.size() == 27);
  CHECK(genre_reports.size() == 27);
}

TEST_CASE("compare_reports applies Bonferroni over the row family") {
  const auto prepared = synthetic(time_profile(), 7);
  std::vector<EvalReport> row;
  for (auto fs : kAllFeatureSets) {
    auto cfg = quick_config(Protocol::game_model(prepared.schema, "Heist!"), fs);
    cfg.repeats = 3;
    row.push_back(run_experiment(cfg, prepared));
  }
  const auto comps = compare_reports(row);
  REQUIRE(comps.size() == 3);
  for (const auto& c : comps) {
    CHECK(c.family_size == 3);
    CHECK(c.p_adjusted == std::min(1.0, 3.0 * c.test.p));
    CHECK(c.significant == (c.p_adjusted < 0.05));
  }
  CHECK(comps[0].a == "Specific");
  CHECK(comps[0].b == "General");
}

TEST_CASE("evaluation errors") {
  const auto prepared = synthetic(time_profile(), 8);
  // No Racing sessions exist, so every fold of a Racing game has an empty test set.
  auto cfg = quick_config(Protocol::game_model(prepared.schema, "Solid"));
  CHECK_THROWS_MATCHES(run_experiment(cfg, prepared), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind() == ErrorKind::EmptyFoldTestSet; }));
  cfg = quick_config(Protocol::game_model(prepared.schema, "Heist!"));
  cfg.repeats = 0;
  CHECK_THROWS_AS(run_experiment(cfg, prepared), Error);
  cfg.repeats = 1;
  cfg.folds = 20;
  CHECK_THROWS_MATCHES(run_experiment(cfg, prepared), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.kind() == ErrorKind::TooFewPlayers; }));
}
