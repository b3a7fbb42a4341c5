#include "test_support.hpp"

#include <catch_amalgamated.hpp>

using namespace affect;
using Catch::Matchers::ContainsSubstring;

namespace {

report::CellSummary cell(ProtocolKind kind, const std::string& game, FeatureSet fs, double mean, double disp) {
  report::CellSummary c;
  c.protocol = kind;
  c.genre = *testing::again_schema().genre_of(game);
  c.game = game;
  c.feature_set = fs;
  c.threshold = 0.15;
  c.repeats = 20;
  c.folds = 10;
  c.mean = mean;
  c.dispersion = disp;
  c.best_fold = mean + 0.05;
  c.kept = 100;
  c.total = 180;
  return c;
}

std::string line_of(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) return line;
  }
  return {};
}

}  // namespace

TEST_CASE("cells CSV round-trips") {
  std::vector<report::CellSummary> cells{
      cell(ProtocolKind::GameModel, "Heist!", FeatureSet::All, 0.8123456789, 0.0123),
      cell(ProtocolKind::GenreModel, "Run'N'Gun", FeatureSet::Specific, 0.61, 0.004),
  };
  const auto csv = report::cells_csv(cells);
  const auto back = report::parse_cells_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].game == "Heist!");
  CHECK(back[0].mean == 0.8123456789);
  CHECK(back[1].protocol == ProtocolKind::GenreModel);
  CHECK(back[1].genre == Genre::Platformer);
  CHECK(back[1].feature_set == FeatureSet::Specific);
  CHECK(back[1].kept == 100);
  CHECK(report::cells_csv(back) == csv);

  CHECK_THROWS_AS(report::parse_cells_csv("nope\n"), Error);
  CHECK_THROWS_AS(report::parse_cells_csv(std::string(report::kCellsHeader) + "\ngame,Racing,Solid\n"), Error);
}

TEST_CASE("accuracy table marks the best cell of each row") {
  const auto& schema = testing::again_schema();
  std::vector<report::CellSummary> cells{
      cell(ProtocolKind::GameModel, "Heist!", FeatureSet::Specific, 0.70, 0.010),
      cell(ProtocolKind::GameModel, "Heist!", FeatureSet::General, 0.80, 0.012),
      cell(ProtocolKind::GameModel, "Heist!", FeatureSet::All, 0.75, 0.009),
      cell(ProtocolKind::GameModel, "Solid", FeatureSet::All, 0.66, 0.02),
  };
  const auto table = report::accuracy_table(cells, schema, ProtocolKind::GameModel);
  CHECK_THAT(table, ContainsSubstring(std::string(report::kDispersionNote)));
  const auto heist = line_of(table, "Heist!");
  CHECK_THAT(heist, ContainsSubstring("70.0+/-1.0"));
  CHECK_THAT(heist, ContainsSubstring("80.0+/-1.2"));
  CHECK(heist.substr(heist.size() - 7) == "General");
  const auto solid = line_of(table, "Solid");
  CHECK_THAT(solid, ContainsSubstring("-"));
  CHECK(solid.substr(solid.size() - 3) == "All");
  CHECK(line_of(table, "TinyCars").empty());

  std::vector<report::CellSummary> genre_cells{
      cell(ProtocolKind::GenreModel, "Heist!", FeatureSet::General, 0.79, 0.009),
  };
  const auto gt = report::accuracy_table(genre_cells, schema, ProtocolKind::GenreModel, cells);
  const auto row = line_of(gt, "Heist!");
  CHECK_THAT(row, ContainsSubstring("80.0+/-1.2"));
  CHECK(row.substr(row.size() - 8) == "GameBest");
}

TEST_CASE("fold, importance and significance exports") {
  EvalReport r;
  r.config.protocol = Protocol::game_model(testing::again_schema(), "Pirates!");
  r.fold_accuracy = {{0.5, std::numeric_limits<double>::quiet_NaN()}};
  const auto folds = report::fold_csv(std::span(&r, 1));
  CHECK(folds == "protocol,game,feature_set,repeat,fold,accuracy\ngame,Pirates!,All,0,0,0.5\ngame,Pirates!,All,0,1,skipped\n");

  std::vector<RankedFeature> ranked{{"Time Passed", FeatureKind::General, 0.4},
                                    {"Bot Health", FeatureKind::Specific, 0.1}};
  CHECK(report::importance_csv(ranked, ProtocolKind::GameModel, Genre::Shooter) ==
        "protocol,genre,rank,kind,feature,score\ngame,Shooter,1,G,Time Passed,0.4\ngame,Shooter,2,S,Bot Health,0.1\n");
  const std::vector<report::ImportanceBlock> blocks{{Genre::Shooter, ranked, ranked}};
  const auto table = report::importance_table(blocks, 2);
  CHECK_THAT(table, ContainsSubstring("G Time Passed"));
  CHECK_THAT(table, ContainsSubstring("0.400"));
  // Only the first row of a block carries the genre label.
  CHECK_THAT(line_of(table, "Shooter"), ContainsSubstring("G Time Passed"));
  CHECK_THAT(table, ContainsSubstring("\n            S Bot Health"));

  Comparison c;
  c.a = "Specific";
  c.b = "General";
  c.test = {-3.0, 0.01, 38, false};
  c.p_adjusted = 0.03;
  c.family_size = 3;
  c.significant = true;
  const auto sig = report::significance_csv({{"game:Heist!", {c}}});
  CHECK_THAT(sig, ContainsSubstring("game:Heist!,Specific,General,-3,38,0.01,0.03,3,yes,no"));
}
