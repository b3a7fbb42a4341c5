#pragma once

#include <affect/affect.hpp>

#include <filesystem>
#include <sstream>
#include <string>

namespace affect::testing {

inline const FeatureSchema& again_schema() {
  static const FeatureSchema schema = FeatureSchema::load(bundled_schema_path());
  return schema;
}

/// Two racing games, one shooter game; one Sum feature for binning tests.
inline FeatureSchema tiny_schema() {
  return FeatureSchema::parse(R"(
game | TinyCars | Racing
game | Solid | Racing
game | Heist! | Shooter
feature | Time Passed | General | * | Mean
feature | Player Score | General | * | Mean
feature | Event Intensity | General | * | Sum
feature | Player Loop Progress | Specific | Racing | Mean | TinyCars
feature | Bot Health | Specific | Shooter | Mean
)");
}

inline Corpus corpus_from_string(const std::string& csv, FeatureSchema schema) {
  std::istringstream in(csv);
  return parse_corpus(in, std::move(schema));
}

inline std::string corpus_to_string(const Corpus& c) {
  std::ostringstream out;
  write_corpus(out, c);
  return out.str();
}

/// A session sampled every `interval_ms` over [0, length_ms) with arousal
/// given by `arousal(t_ms)` and every feature constant at `feature_value`.
template <typename F>
SessionRecord regular_session(std::size_t n_features, double length_ms, double interval_ms, F arousal,
                              double feature_value = 1.0) {
  SessionRecord s;
  s.info = {"P1", "S1", "TinyCars", Genre::Racing};
  for (double t = 0; t < length_ms; t += interval_ms) {
    s.frames.push_back({t, arousal(t), std::vector<double>(n_features, feature_value)});
  }
  return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("affect_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace affect::testing
