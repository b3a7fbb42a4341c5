#include "test_support.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace affect;
using Catch::Matchers::WithinAbs;

namespace {

SessionDeltas deltas_with_labels(std::vector<double> labels, std::size_t width = 3) {
  SessionDeltas d;
  d.info = {"P1", "S1", "Heist!", Genre::Shooter};
  d.labels = std::move(labels);
  d.features = Matrix(d.labels.size(), width);
  d.window_index.resize(d.labels.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d.window_index[i] = static_cast<int>(i + 1);
    for (std::size_t c = 0; c < width; ++c) d.features(i, c) = static_cast<double>(i) - static_cast<double>(c) * 0.5;
  }
  return d;
}

SessionDeltas random_deltas(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> labels(n);
  for (auto& v : labels) v = u(rng);
  auto d = deltas_with_labels(labels, 4);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 4; ++c) d.features(i, c) = u(rng);
  }
  return d;
}

}  // namespace

TEST_CASE("transform: a kept delta yields a mirrored pair") {
  const std::vector<SessionDeltas> deltas{deltas_with_labels({0.6})};
  const auto r = transform(deltas, {0.15});
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0].y == 1);
  CHECK(r.pairs[1].y == -1);
  for (std::size_t c = 0; c < 3; ++c) CHECK(r.pairs[1].x[c] == -r.pairs[0].x[c]);
  CHECK(r.pairs[0].x == std::vector<double>{0.0, -0.5, -1.0});
  CHECK(r.pairs[0].provenance == Provenance{0, 1});
  CHECK(r.retention.kept == 1);
  CHECK(r.retention.total == 1);
}

TEST_CASE("transform: ties and zero labels are discarded") {
  for (double pt : {0.0, 0.15, 0.5}) {
    const std::vector<SessionDeltas> deltas{deltas_with_labels({0.0})};
    CHECK(transform(deltas, {pt}).pairs.empty());
  }
  const std::vector<SessionDeltas> at{deltas_with_labels({0.25, -0.25})};
  CHECK(transform(at, {0.25}).pairs.empty());
}

TEST_CASE("transform: enumeration fixture") {
  const std::vector<SessionDeltas> deltas{deltas_with_labels({0.05, -0.10, 0.20, -0.40})};
  const auto r = transform(deltas, {0.15});
  CHECK(r.pairs.size() == 4);
  CHECK(r.retention.kept == 2);
  CHECK(r.retention.total == 4);
  CHECK(r.retention.fraction() == 0.5);
  // The negative comparison keeps sign -1 on its original orientation.
  CHECK(r.pairs[2].y == -1);
  CHECK(r.pairs[2].provenance.window_index == 4);
}

TEST_CASE("transform: rejects thresholds outside [0, 1]") {
  const std::vector<SessionDeltas> deltas{deltas_with_labels({0.5})};
  CHECK_THROWS_AS(transform(deltas, {-0.1}), Error);
  CHECK_THROWS_AS(transform(deltas, {1.5}), Error);
}

TEST_CASE("transform: class balance, antisymmetry and P_t = 0") {
  std::mt19937_64 rng(21);
  std::vector<SessionDeltas> deltas;
  for (int s = 0; s < 5; ++s) deltas.push_back(random_deltas(rng, 37));
  deltas[2].labels[3] = 0.0;

  for (double pt : threshold_grid()) {
    const auto r = transform(deltas, {pt});
    std::size_t pos = 0;
    for (const auto& p : r.pairs) pos += p.y == 1 ? 1 : 0;
    CHECK(2 * pos == r.pairs.size());
    CHECK(r.pairs.size() == 2 * r.retention.kept);
  }

  const auto all = transform(deltas, {0.0});
  CHECK(all.retention.kept == all.retention.total - 1);

  // Flipping every delta produces the same multiset of instances.
  std::vector<SessionDeltas> flipped = deltas;
  for (auto& d : flipped) {
    for (auto& l : d.labels) l = -l;
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (auto& v : d.features.row(i)) v = -v;
    }
  }
  const auto a = transform(deltas, {0.15});
  const auto b = transform(flipped, {0.15});
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i + 1 < a.pairs.size(); i += 2) {
    CHECK(a.pairs[i].x == b.pairs[i + 1].x);
    CHECK(a.pairs[i].y == b.pairs[i + 1].y);
    CHECK(a.pairs[i + 1].x == b.pairs[i].x);
  }
}

TEST_CASE("retention is non-increasing in the threshold") {
  std::mt19937_64 rng(5);
  std::vector<SessionDeltas> deltas;
  for (int s = 0; s < 4; ++s) deltas.push_back(random_deltas(rng, 50));
  double prev = 2.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> pts;
  for (int i = 0; i < 200; ++i) pts.push_back(u(rng));
  std::sort(pts.begin(), pts.end());
  for (double pt : pts) {
    const double r = retention(deltas, pt).fraction();
    CHECK(r <= prev);
    prev = r;
  }
}

TEST_CASE("threshold grid spans 0 to 0.5 in steps of 0.05") {
  const auto g = threshold_grid();
  REQUIRE(g.size() == 11);
  CHECK(g.front() == 0.0);
  CHECK(g[3] == 0.15);
  CHECK(g.back() == 0.5);
}

TEST_CASE("tune_pt: unit-magnitude labels are feasible everywhere") {
  const std::vector<SessionDeltas> deltas{deltas_with_labels({1.0, -1.0, 1.0, 1.0})};
  const auto grid = threshold_grid();
  const auto r = tune_pt(deltas, grid, 0.5, [](double pt) { return pt == 0.3 ? 0.9 : 0.6; });
  CHECK(r.best_threshold == 0.3);
  REQUIRE(r.points.size() == grid.size());
  for (const auto& p : r.points) {
    CHECK(p.retention == 1.0);
    CHECK(p.accuracy.has_value());
  }
}

TEST_CASE("tune_pt: accuracy ties go to the smaller threshold") {
  const std::vector<SessionDeltas> deltas{deltas_with_labels({1.0, -1.0})};
  const auto grid = threshold_grid();
  CHECK(tune_pt(deltas, grid, 0.5, [](double pt) { return pt >= 0.1 && pt <= 0.2 ? 0.8 : 0.7; }).best_threshold == 0.1);
  const std::vector<double> reversed(grid.rbegin(), grid.rend());
  CHECK(tune_pt(deltas, reversed, 0.5, [](double) { return 0.7; }).best_threshold == 0.0);
}

TEST_CASE("tune_pt: retention floor excludes thresholds") {
  const std::vector<SessionDeltas> deltas{deltas_with_labels({0.05, 0.1, 0.2, 0.4})};
  const auto r = tune_pt(deltas, threshold_grid(), 0.5, [](double pt) { return pt; });
  // Retention is 1.0 up to 0.05 exclusive, 0.75 at 0.05, 0.5 at 0.10 and 0.15.
  CHECK(r.best_threshold == 0.15);
  CHECK_FALSE(r.points[4].accuracy.has_value());
  const std::vector<double> high{0.3, 0.4};
  CHECK_THROWS_MATCHES(tune_pt(deltas, high, 0.5, [](double) { return 1.0; }), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind() == ErrorKind::NoFeasibleThreshold; }));
}

TEST_CASE("tune_pt: uniform labels retain about 1 - P_t") {
  // Monte Carlo check of the closed form P(|U| > p) = 1 - p for U uniform on [-1, 1].
  std::mt19937_64 rng(99);
  std::vector<SessionDeltas> deltas;
  for (int s = 0; s < 40; ++s) deltas.push_back(random_deltas(rng, 500));
  const auto r = tune_pt(deltas, threshold_grid(), 0.5, [](double) { return 0.5; });
  for (const auto& p : r.points) CHECK_THAT(p.retention, WithinAbs(1.0 - p.threshold, 0.01));

  // With evenly stratified magnitudes the retention at 0.5 is exactly one half,
  // so the whole grid passes the floor.
  std::vector<double> stratified(1000);
  for (std::size_t i = 0; i < stratified.size(); ++i) {
    stratified[i] = (static_cast<double>(i) + 0.5) / 1000.0 * (i % 2 == 0 ? 1.0 : -1.0);
  }
  const std::vector<SessionDeltas> even{deltas_with_labels(stratified)};
  const auto full = tune_pt(even, threshold_grid(), 0.5, [](double) { return 0.5; });
  CHECK(full.points.back().retention == 0.5);
  for (const auto& p : full.points) CHECK(p.accuracy.has_value());
}
