// affect: command-line front end for the preference-learning pipeline.
//
// Every setting is handled as a string key so that built-in defaults, a
// --config file, the AFFECT_OUT_DIR environment variable and command-line
// flags merge in that order of precedence, and so that the resolved settings
// can be written verbatim to the run manifest.

#include <affect/affect.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace affect;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

constexpr std::string_view kManifestFormat = "affect-manifest 1";
constexpr std::string_view kManifestName = "manifest.txt";
constexpr std::string_view kOutEnv = "AFFECT_OUT_DIR";

/// Bad flags or settings, as opposed to bad data.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Setting {
  std::string key;
  std::string fallback;
  std::string help;
};

// Settings shared by several commands, grouped by the stage that reads them.
const std::vector<Setting> kInputSettings = {
    {"corpus", "", "corpus CSV"},
    {"schema", "", "feature schema file (defaults to the bundled AGAIN schema)"},
    {"column-map", "", "optional 'source = canonical' column renames"},
};
const std::vector<Setting> kPreprocessSettings = {
    {"normalization", "session", "arousal scaling: session, global or none"},
    {"anchor", "history", "delta anchor: history or consecutive"},
    {"lag-s", "1", "annotation lag in seconds"},
    {"window-s", "3", "window width in seconds"},
    {"resample-ms", "250", "resampling interval in milliseconds"},
};
const std::vector<Setting> kThresholdSettings = {
    {"pt", "0.15", "preference threshold P_t"},
};
const std::vector<Setting> kForestSettings = {
    {"n-estimators", "100", "trees per forest"},
    {"max-depth", "10", "maximum tree depth"},
    {"features-per-split", "0", "candidate features per split (0: ceil(sqrt(d)))"},
    {"seed", "0", "base seed for every random choice"},
    {"threads", "0", "worker threads (0: all cores); never changes results"},
};
const std::vector<Setting> kEvalSettings = {
    {"repeats", "20", "independent forest runs per experiment"},
    {"folds", "10", "between-subject folds"},
    {"train-players", "outfold", "genre-model training players: outfold or all"},
};
const std::vector<Setting> kOutSettings = {
    {"out", "out", "output directory"},
};

/// Keys whose values name input files; their content hashes go into the manifest.
const std::set<std::string> kInputFileKeys = {"corpus", "schema", "column-map", "profile", "model", "cells"};

struct Command {
  std::string name;
  std::string description;
  std::vector<Setting> settings;
};

std::vector<Setting> join(std::initializer_list<std::vector<Setting>> groups) {
  std::vector<Setting> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

std::vector<Command> commands() {
  const Setting game{"game", "", "game to model"};
  const Setting genre{"genre", "", "genre (Racing, Shooter or Platformer)"};
  const Setting feature_set{"feature-set", "", "Specific, General or All (empty: all three)"};
  return {
      {"ingest", "load and validate a corpus", join({kInputSettings, kOutSettings})},
      {"preprocess", "resample, lag, normalize, window and compute history deltas",
       join({kInputSettings, kPreprocessSettings, kOutSettings})},
      {"transform", "turn deltas into mirrored preference pairs",
       join({kInputSettings, kPreprocessSettings, kThresholdSettings, kOutSettings})},
      {"tune-pt", "choose P_t on a grid under a retention floor",
       join({kInputSettings, kPreprocessSettings, kForestSettings, kEvalSettings,
             {{"grid-max", "0.5", "largest grid threshold"},
              {"grid-step", "0.05", "grid spacing"},
              {"min-retention", "0.5", "minimum fraction of comparisons kept"}},
             kOutSettings})},
      {"train", "fit a forest on every pair of a game or genre",
       join({kInputSettings, kPreprocessSettings, kThresholdSettings, kForestSettings,
             {game, genre, {"feature-set", "All", "Specific, General or All"}}, kOutSettings})},
      {"predict", "apply a saved forest to the pairs of a game or genre",
       join({kInputSettings, kPreprocessSettings, kThresholdSettings,
             {{"model", "", "model file written by train"}, game, genre}, kOutSettings})},
      {"eval-game", "cross-validate a game model",
       join({kInputSettings, kPreprocessSettings, kThresholdSettings, kForestSettings, kEvalSettings,
             {game, feature_set}, kOutSettings})},
      {"eval-genre", "cross-validate a genre model on its unseen test game",
       join({kInputSettings, kPreprocessSettings, kThresholdSettings, kForestSettings, kEvalSettings,
             {{"test-game", "", "held-out game"}, genre, feature_set}, kOutSettings})},
      {"sweep", "every game and genre model for every feature set, plus importances",
       join({kInputSettings, kPreprocessSettings, kThresholdSettings, kForestSettings, kEvalSettings, kOutSettings})},
      {"importance", "MDI feature ranking of All-feature models per genre",
       join({kInputSettings, kPreprocessSettings, kThresholdSettings, kForestSettings, kEvalSettings, {genre},
             kOutSettings})},
      {"synth", "generate a synthetic corpus",
       {{"profile", "", "synthetic profile file"},
        {"seed", "0", "generator seed"},
        {"schema", "", "feature schema file (defaults to the bundled AGAIN schema)"},
        {"out", "synthetic.csv", "corpus CSV to write"}}},
      {"report", "render accuracy tables from cells CSV files",
       {{"cells", "", "comma-separated cells CSV files"},
        {"schema", "", "feature schema file (defaults to the bundled AGAIN schema)"},
        {"out", "out", "output directory"}}},
  };
}

const Command& find_command(const std::string& name) {
  static const auto all = commands();
  for (const auto& c : all) {
    if (c.name == name) return c;
  }
  throw UsageError("unknown command '" + name + "'");
}

// ---------------------------------------------------------------------------
// Settings resolution

class Settings {
 public:
  Settings(const Command& cmd, text::KeyValues values) : cmd_(cmd), values_(std::move(values)) {}

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("setting '" + key + "' is not declared for " + cmd_.name);
    return it->second;
  }

  bool has(const std::string& key) const { return values_.contains(key) && !values_.at(key).empty(); }

  std::string required(const std::string& key) const {
    if (!has(key)) throw UsageError(cmd_.name + " needs --" + key);
    return str(key);
  }

  double number(const std::string& key) const {
    const auto v = text::parse_double(str(key));
    if (!v || !std::isfinite(*v)) throw UsageError("--" + key + " expects a number, got '" + str(key) + "'");
    return *v;
  }

  double positive(const std::string& key) const {
    const double v = number(key);
    if (!(v > 0)) throw UsageError("--" + key + " must be positive");
    return v;
  }

  template <typename Int>
  Int integer(const std::string& key) const {
    const auto v = text::parse_int<Int>(str(key));
    if (!v) throw UsageError("--" + key + " expects a non-negative integer, got '" + str(key) + "'");
    return *v;
  }

  fs::path path(const std::string& key) const { return fs::path(required(key)); }

  const text::KeyValues& values() const { return values_; }
  const Command& command() const { return cmd_; }

 private:
  const Command& cmd_;
  text::KeyValues values_;
};

std::string canonical_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

/// Defaults, then the config file, then the environment, then flags. Input
/// paths are made absolute so a manifest can be replayed from anywhere.
text::KeyValues resolve_settings(const Command& cmd, const std::string& config_path,
                                 const std::map<std::string, std::string>& flags) {
  text::KeyValues values;
  std::set<std::string> known;
  for (const auto& s : cmd.settings) {
    values[s.key] = s.fallback;
    known.insert(s.key);
  }
  if (!config_path.empty()) {
    for (const auto& [k, v] : text::parse_key_values(text::read_file(config_path), config_path)) {
      const auto key = canonical_key(k);
      // A shared config file may carry settings for other commands.
      if (known.contains(key)) values[key] = v;
    }
  }
  if (const char* env = std::getenv(std::string(kOutEnv).c_str()); env != nullptr && *env != '\0' &&
                                                                    known.contains("out") && cmd.name != "synth") {
    values["out"] = env;
  }
  for (const auto& [k, v] : flags) values[k] = v;
  if (known.contains("schema") && values["schema"].empty()) values["schema"] = bundled_schema_path().string();
  for (auto& [k, v] : values) {
    if (!kInputFileKeys.contains(k) || v.empty()) continue;
    std::vector<std::string> parts;
    for (const auto& p : text::split(v, ',')) parts.push_back(fs::absolute(fs::path(p)).lexically_normal().string());
    std::string joined;
    for (std::size_t i = 0; i < parts.size(); ++i) joined += (i ? "," : "") + parts[i];
    v = joined;
  }
  return values;
}

// ---------------------------------------------------------------------------
// Shared stages

FeatureSchema load_schema(const Settings& s) { return FeatureSchema::load(s.path("schema")); }

Corpus load_input(const Settings& s) {
  ColumnMap map;
  if (s.has("column-map")) map = load_column_map(s.path("column-map"));
  return load_corpus(s.path("corpus"), load_schema(s), map);
}

PreprocessConfig preprocess_config(const Settings& s) {
  PreprocessConfig cfg;
  const auto norm = parse_normalization(s.str("normalization"));
  if (!norm) throw UsageError("--normalization must be session, global or none");
  const auto anchor = parse_anchor(s.str("anchor"));
  if (!anchor) throw UsageError("--anchor must be history or consecutive");
  cfg.normalization = *norm;
  cfg.anchor = *anchor;
  cfg.lag_s = s.number("lag-s");
  if (cfg.lag_s < 0) throw UsageError("--lag-s must be >= 0");
  cfg.window_s = s.positive("window-s");
  cfg.resample_ms = s.positive("resample-ms");
  return cfg;
}

PreparedCorpus prepare(const Settings& s) {
  const auto cfg = preprocess_config(s);
  const auto corpus = load_input(s);
  auto prepared = preprocess_corpus(corpus, cfg);
  for (const auto& skip : prepared.skipped) std::cerr << "note: skipped " << skip << '\n';
  return prepared;
}

double threshold(const Settings& s) {
  const double pt = s.number("pt");
  if (pt < 0 || pt > 1) throw UsageError("--pt must lie in [0, 1]");
  return pt;
}

ForestConfig forest_config(const Settings& s) {
  ForestConfig cfg;
  cfg.n_estimators = s.integer<int>("n-estimators");
  cfg.max_depth = s.integer<int>("max-depth");
  cfg.features_per_split = s.integer<std::size_t>("features-per-split");
  cfg.threads = s.integer<unsigned>("threads");
  if (cfg.n_estimators < 1 || cfg.max_depth < 1) throw UsageError("--n-estimators and --max-depth must be positive");
  return cfg;
}

ExperimentConfig experiment_config(const Settings& s, double pt) {
  ExperimentConfig cfg;
  cfg.threshold = pt;
  cfg.repeats = s.integer<int>("repeats");
  cfg.folds = s.integer<int>("folds");
  if (cfg.repeats < 1) throw UsageError("--repeats must be positive");
  if (cfg.folds < 2) throw UsageError("--folds must be at least 2");
  cfg.base_seed = s.integer<std::uint64_t>("seed");
  cfg.forest = forest_config(s);
  const auto& tp = s.str("train-players");
  if (tp == "outfold") {
    cfg.train_players = TrainPlayers::OutOfFold;
  } else if (tp == "all") {
    cfg.train_players = TrainPlayers::All;
  } else {
    throw UsageError("--train-players must be outfold or all");
  }
  return cfg;
}

Genre genre_arg(const Settings& s, const std::string& key = "genre") {
  const auto g = parse_genre(s.required(key));
  if (!g) throw UsageError("--" + key + " must be Racing, Shooter or Platformer");
  return *g;
}

std::vector<FeatureSet> feature_sets_arg(const Settings& s) {
  if (!s.has("feature-set")) return {kAllFeatureSets.begin(), kAllFeatureSets.end()};
  const auto f = parse_feature_set(s.str("feature-set"));
  if (!f) throw UsageError("--feature-set must be Specific, General or All");
  return {*f};
}

/// Union header over every schema feature; cells outside a session's genre stay blank.
struct UnionColumns {
  const FeatureSchema& schema;

  std::string header(std::string_view prefix) const {
    std::string out;
    for (const auto& e : schema.entries()) out += ',' + text::csv_field(std::string(prefix) + e.name);
    return out;
  }

  std::string row(Genre genre, std::span<const double> values) const {
    const auto& layout = schema.layout(genre);
    std::vector<std::string> cells(schema.entries().size());
    for (std::size_t c = 0; c < layout.size(); ++c) cells[layout.entries[c]] = text::format_double(values[c]);
    std::string out;
    for (const auto& cell : cells) out += ',' + cell;
    return out;
  }
};

std::string session_fields(const SessionInfo& info) {
  return text::csv_field(info.player_id) + ',' + text::csv_field(info.session_id) + ',' + text::csv_field(info.game);
}

nlohmann::ordered_json retention_json(const RetentionStats& r, double pt) {
  nlohmann::ordered_json j;
  j["threshold"] = pt;
  j["kept"] = r.kept;
  j["total"] = r.total;
  j["retention"] = r.fraction();
  return j;
}

// ---------------------------------------------------------------------------
// Commands. Each writes its files under `out` and returns a one-line summary.

struct Outputs {
  fs::path dir;

  void write(const std::string& name, std::string_view content) const { text::write_file(dir / name, content); }
};

std::string run_ingest(const Settings& s, const Outputs& out) {
  const auto corpus = load_input(s);
  const auto diags = validate_corpus(corpus);
  std::size_t frames = 0;
  for (const auto& sess : corpus.sessions()) frames += sess.frames.size();
  std::ostringstream summary;
  summary << "players = " << corpus.players().size() << "\nsessions = " << corpus.sessions().size()
          << "\nframes = " << frames << "\ndiagnostics = " << diags.size() << '\n';
  for (const auto& game : corpus.schema().games()) {
    summary << "sessions." << game.id << " = " << corpus.sessions_of_game(game.id).size() << '\n';
  }
  std::string diag_text;
  for (const auto& d : diags) diag_text += d + '\n';
  out.write("ingest_summary.txt", summary.str());
  out.write("diagnostics.txt", diag_text);
  for (const auto& d : diags) std::cerr << d << '\n';
  return "ingest: " + std::to_string(corpus.sessions().size()) + " sessions, " +
         std::to_string(corpus.players().size()) + " players, " + std::to_string(diags.size()) + " diagnostics";
}

std::string run_preprocess(const Settings& s, const Outputs& out) {
  const auto prepared = prepare(s);
  const UnionColumns cols{prepared.schema};
  std::string windows = "player_id,session_id,game,window_index,label" + cols.header("") + '\n';
  for (const auto& w : prepared.windows) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      windows += session_fields(w.info) + ',' + std::to_string(i) + ',' + text::format_double(w.labels[i]) +
                 cols.row(w.info.genre, w.features.row(i)) + '\n';
    }
  }
  std::string deltas = "player_id,session_id,game,window_index,delta_label" + cols.header("delta_") + '\n';
  for (const auto& d : prepared.deltas) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      deltas += session_fields(d.info) + ',' + std::to_string(d.window_index[i]) + ',' +
                text::format_double(d.labels[i]) + cols.row(d.info.genre, d.features.row(i)) + '\n';
    }
  }
  std::string skipped;
  for (const auto& k : prepared.skipped) skipped += k + '\n';
  out.write("windows.csv", windows);
  out.write("deltas.csv", deltas);
  out.write("skipped.txt", skipped);
  return "preprocess: " + std::to_string(prepared.total_windows()) + " windows, " +
         std::to_string(prepared.total_deltas()) + " deltas, " + std::to_string(prepared.skipped.size()) +
         " skipped sessions";
}

std::string run_transform(const Settings& s, const Outputs& out) {
  const double pt = threshold(s);
  const auto prepared = prepare(s);
  const auto result = transform(prepared.deltas, {pt});
  const UnionColumns cols{prepared.schema};
  std::string pairs = "y,player_id,session_id,game,window_index" + cols.header("") + '\n';
  for (const auto& p : result.pairs) {
    const auto& info = prepared.deltas[p.provenance.session].info;
    pairs += std::to_string(p.y) + ',' + session_fields(info) + ',' + std::to_string(p.provenance.window_index) +
             cols.row(info.genre, p.x) + '\n';
  }
  out.write("pairs.csv", pairs);
  out.write("retention.json", retention_json(result.retention, pt).dump(2) + '\n');
  return "transform: kept " + std::to_string(result.retention.kept) + " of " + std::to_string(result.retention.total) +
         " comparisons (" + text::fixed(100.0 * result.retention.fraction(), 1) + "%), " +
         std::to_string(result.pairs.size()) + " pairs";
}

/// Mean cross-validated accuracy of All-feature game models over every game present.
double mean_game_accuracy(const PreparedCorpus& prepared, ExperimentConfig cfg) {
  std::vector<double> means;
  for (auto genre : kAllGenres) {
    for (const auto& game : games_present(prepared, genre)) {
      cfg.protocol = Protocol::game_model(prepared.schema, game);
      cfg.feature_set = FeatureSet::All;
      try {
        means.push_back(run_experiment(cfg, prepared).mean);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyFoldTestSet && e.kind() != ErrorKind::EmptyTrainingSet) throw;
      }
    }
  }
  if (means.empty()) throw Error(ErrorKind::EmptyFoldTestSet, "no game has enough data to evaluate");
  return stats::mean(means);
}

std::string run_tune_pt(const Settings& s, const Outputs& out) {
  const auto grid = threshold_grid(s.number("grid-max"), s.positive("grid-step"));
  const double floor = s.number("min-retention");
  const auto base = experiment_config(s, 0.0);
  const auto prepared = prepare(s);
  const auto result = tune_pt(prepared.deltas, grid, floor, [&](double pt) {
    auto cfg = base;
    cfg.threshold = pt;
    return mean_game_accuracy(prepared, cfg);
  });
  std::string csv = "threshold,retention,feasible,accuracy\n";
  for (const auto& p : result.points) {
    csv += text::format_double(p.threshold) + ',' + text::format_double(p.retention) + ',' +
           (p.accuracy ? "yes," + text::format_double(*p.accuracy) : std::string("no,")) + '\n';
    std::cout << "P_t " << text::fixed(p.threshold, 2) << "  retention " << text::fixed(p.retention, 3)
              << "  accuracy " << (p.accuracy ? text::fixed(*p.accuracy, 4) : std::string("-")) << '\n';
  }
  out.write("tune_pt.csv", csv);
  out.write("tune_pt.txt", "best_threshold = " + text::format_double(result.best_threshold) + '\n');
  return "tune-pt: selected P_t = " + text::format_double(result.best_threshold);
}

/// Pairs for a game (when --game is set) or a whole genre, and the genre they use.
struct Scope {
  Genre genre;
  std::vector<PreferencePair> pairs;
  RetentionStats retention;
  std::string label;
};

Scope scope_pairs(const Settings& s, const PreparedCorpus& prepared, double pt) {
  Scope scope{};
  std::optional<std::string> game;
  if (s.has("game")) {
    game = s.str("game");
    const auto g = prepared.schema.genre_of(*game);
    if (!g) throw Error(ErrorKind::UnknownGame, "'" + *game + "'");
    scope.genre = *g;
    if (s.has("genre") && genre_arg(s) != *g) throw UsageError("--game is not in --genre");
    scope.label = *game;
  } else if (s.has("genre")) {
    scope.genre = genre_arg(s);
    scope.label = std::string(to_string(scope.genre));
  } else {
    throw UsageError(s.command().name + " needs --game or --genre");
  }
  std::vector<SessionDeltas> selected;
  for (const auto& d : prepared.deltas) {
    if (d.info.genre == scope.genre && (!game || d.info.game == *game)) selected.push_back(d);
  }
  auto result = transform(selected, {pt});
  scope.pairs = std::move(result.pairs);
  scope.retention = result.retention;
  if (scope.pairs.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no pairs for " + scope.label);
  return scope;
}

std::string run_train(const Settings& s, const Outputs& out) {
  const auto fsets = feature_sets_arg(s);
  if (fsets.size() != 1) throw UsageError("train needs a single --feature-set");
  const auto forest = forest_config(s);
  const double pt = threshold(s);
  const auto prepared = prepare(s);
  const auto scope = scope_pairs(s, prepared, pt);
  const auto columns = select_features(prepared.schema, fsets.front(), scope.genre);
  const auto& layout = prepared.schema.layout(scope.genre);
  std::vector<std::string> names;
  for (auto c : columns) names.push_back(layout.names[c]);
  const auto data = make_dataset(scope.pairs, columns, names);
  const auto model = fit_forest(data, forest, s.integer<std::uint64_t>("seed"));
  std::ostringstream buf;
  save_model(buf, model);
  out.write("model.txt", buf.str());
  const double acc = accuracy(model, data);
  out.write("train_summary.txt", "scope = " + scope.label + "\nfeature_set = " + std::string(to_string(fsets.front())) +
                                     "\npairs = " + std::to_string(data.size()) +
                                     "\ntraining_accuracy = " + text::format_double(acc) + '\n');
  return "train: " + std::to_string(model.trees.size()) + " trees on " + std::to_string(data.size()) + " pairs of " +
         scope.label + ", training accuracy " + text::fixed(100.0 * acc, 1) + "%";
}

std::string run_predict(const Settings& s, const Outputs& out) {
  const double pt = threshold(s);
  const auto prepared = prepare(s);
  const auto scope = scope_pairs(s, prepared, pt);
  std::istringstream in(text::read_file(s.path("model")));
  const auto model = load_model(in);
  const auto& layout = prepared.schema.layout(scope.genre);
  std::vector<std::size_t> columns;
  for (const auto& name : model.feature_names) {
    const auto idx = layout.index_of(name);
    if (!idx) throw Error(ErrorKind::DimensionMismatch, "model feature '" + name + "' is not in the genre layout");
    columns.push_back(*idx);
  }
  const auto data = make_dataset(scope.pairs, columns);
  std::string csv = "row,player_id,session_id,game,window_index,y,prediction\n";
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int yhat = predict(model, data.x.row(i));
    correct += yhat == data.y[i];
    const auto& pv = scope.pairs[i].provenance;
    csv += std::to_string(i) + ',' + session_fields(prepared.deltas[pv.session].info) + ',' +
           std::to_string(pv.window_index) + ',' + std::to_string(data.y[i]) + ',' + std::to_string(yhat) + '\n';
  }
  out.write("predictions.csv", csv);
  const double acc = data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
  return "predict: " + std::to_string(data.size()) + " pairs of " + scope.label + ", accuracy " +
         text::fixed(100.0 * acc, 1) + "%";
}

using SignificanceRows = std::vector<std::pair<std::string, std::vector<Comparison>>>;

void add_significance(SignificanceRows& rows, const std::string& label, const std::vector<EvalReport>& row) {
  if (row.size() < 2) return;
  for (const auto& r : row) {
    if (r.run_means.size() < 2) return;  // a t-test needs at least two runs
  }
  rows.emplace_back(label, compare_reports(row));
}

std::string cells_summary(const std::vector<EvalReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    out += (out.empty() ? "" : "; ") + std::string(to_string(r.config.feature_set)) + " " +
           text::fixed(100.0 * r.mean, 1) + "+/-" + text::fixed(100.0 * r.dispersion, 1);
  }
  return out;
}

void write_eval_outputs(const Outputs& out, const PreparedCorpus& prepared, const std::vector<EvalReport>& reports,
                        ProtocolKind kind) {
  std::vector<report::CellSummary> cells;
  for (const auto& r : reports) cells.push_back(report::summarize(r));
  out.write("cells.csv", report::cells_csv(cells));
  out.write("folds.csv", report::fold_csv(reports));
  out.write("table.txt", report::accuracy_table(cells, prepared.schema, kind));
  SignificanceRows sig;
  if (!reports.empty()) {
    add_significance(sig, std::string(to_string(kind)) + ":" + reports.front().config.protocol.game, reports);
  }
  out.write("significance.csv", report::significance_csv(sig));
}

std::string run_eval_game(const Settings& s, const Outputs& out) {
  auto cfg = experiment_config(s, threshold(s));
  const auto prepared = prepare(s);
  cfg.protocol = Protocol::game_model(prepared.schema, s.required("game"));
  std::vector<EvalReport> reports;
  for (auto fset : feature_sets_arg(s)) {
    cfg.feature_set = fset;
    reports.push_back(run_experiment(cfg, prepared));
  }
  write_eval_outputs(out, prepared, reports, ProtocolKind::GameModel);
  return "eval-game " + cfg.protocol.game + ": " + cells_summary(reports);
}

std::string run_eval_genre(const Settings& s, const Outputs& out) {
  auto cfg = experiment_config(s, threshold(s));
  const auto prepared = prepare(s);
  const auto test_game = s.required("test-game");
  const auto mapped = prepared.schema.genre_of(test_game);
  if (!mapped) throw Error(ErrorKind::UnknownGame, "'" + test_game + "'");
  const Genre genre = s.has("genre") ? genre_arg(s) : *mapped;
  cfg.protocol = Protocol::genre_model(prepared.schema, genre, test_game);
  std::vector<EvalReport> reports;
  for (auto fset : feature_sets_arg(s)) {
    cfg.feature_set = fset;
    reports.push_back(run_experiment(cfg, prepared));
  }
  write_eval_outputs(out, prepared, reports, ProtocolKind::GenreModel);
  return "eval-genre " + test_game + ": " + cells_summary(reports);
}

struct ImportanceRun {
  std::vector<report::ImportanceBlock> blocks;
  std::string csv;
};

ImportanceRun importance_outputs(const PreparedCorpus& prepared,
                                 const std::map<std::pair<ProtocolKind, Genre>, std::vector<EvalReport>>& all_feature) {
  ImportanceRun run;
  run.csv = "protocol,genre,rank,kind,feature,score\n";
  for (auto genre : kAllGenres) {
    report::ImportanceBlock block{genre, {}, {}};
    bool any = false;
    for (auto kind : {ProtocolKind::GameModel, ProtocolKind::GenreModel}) {
      const auto it = all_feature.find({kind, genre});
      if (it == all_feature.end() || it->second.empty()) continue;
      auto ranked = rank_importance(it->second, prepared.schema.layout(genre));
      const auto body = report::importance_csv(ranked, kind, genre);
      run.csv += body.substr(body.find('\n') + 1);
      (kind == ProtocolKind::GameModel ? block.game_models : block.genre_models) = std::move(ranked);
      any = true;
    }
    if (any) run.blocks.push_back(std::move(block));
  }
  return run;
}

bool skippable(const Error& e) {
  return e.kind() == ErrorKind::EmptyFoldTestSet || e.kind() == ErrorKind::EmptyTrainingSet;
}

std::string run_sweep(const Settings& s, const Outputs& out) {
  const auto base = experiment_config(s, threshold(s));
  const auto prepared = prepare(s);
  std::vector<EvalReport> all_reports;
  std::vector<report::CellSummary> game_cells;
  std::vector<report::CellSummary> genre_cells;
  std::map<std::pair<ProtocolKind, Genre>, std::vector<EvalReport>> all_feature;
  SignificanceRows sig;
  std::string skipped;

  for (auto kind : {ProtocolKind::GameModel, ProtocolKind::GenreModel}) {
    for (auto genre : kAllGenres) {
      for (const auto& game : games_present(prepared, genre)) {
        auto cfg = base;
        cfg.protocol = kind == ProtocolKind::GameModel ? Protocol::game_model(prepared.schema, game)
                                                       : Protocol::genre_model(prepared.schema, genre, game);
        std::vector<EvalReport> row;
        for (auto fset : kAllFeatureSets) {
          cfg.feature_set = fset;
          try {
            row.push_back(run_experiment(cfg, prepared));
          } catch (const Error& e) {
            if (!skippable(e)) throw;
            skipped += std::string(to_string(kind)) + "," + game + "," + std::string(to_string(fset)) + "," +
                       std::string(to_string(e.kind())) + '\n';
            continue;
          }
          (kind == ProtocolKind::GameModel ? game_cells : genre_cells).push_back(report::summarize(row.back()));
          if (fset == FeatureSet::All) all_feature[{kind, genre}].push_back(row.back());
        }
        add_significance(sig, std::string(to_string(kind)) + ":" + game, row);
        all_reports.insert(all_reports.end(), row.begin(), row.end());
      }
    }
  }

  const auto importance = importance_outputs(prepared, all_feature);
  out.write("game_cells.csv", report::cells_csv(game_cells));
  out.write("genre_cells.csv", report::cells_csv(genre_cells));
  out.write("folds.csv", report::fold_csv(all_reports));
  out.write("game_models.txt", report::accuracy_table(game_cells, prepared.schema, ProtocolKind::GameModel));
  out.write("genre_models.txt",
            report::accuracy_table(genre_cells, prepared.schema, ProtocolKind::GenreModel, game_cells));
  out.write("significance.csv", report::significance_csv(sig));
  out.write("importance.csv", importance.csv);
  out.write("importance.txt", report::importance_table(importance.blocks));
  out.write("skipped_cells.csv", "protocol,game,feature_set,reason\n" + skipped);
  return "sweep: " + std::to_string(game_cells.size()) + " game-model cells, " + std::to_string(genre_cells.size()) +
         " genre-model cells";
}

std::string run_importance(const Settings& s, const Outputs& out) {
  auto base = experiment_config(s, threshold(s));
  const auto prepared = prepare(s);
  base.feature_set = FeatureSet::All;
  std::vector<Genre> genres;
  if (s.has("genre")) {
    genres.push_back(genre_arg(s));
  } else {
    genres.assign(kAllGenres.begin(), kAllGenres.end());
  }
  std::map<std::pair<ProtocolKind, Genre>, std::vector<EvalReport>> all_feature;
  for (auto genre : genres) {
    for (auto kind : {ProtocolKind::GameModel, ProtocolKind::GenreModel}) {
      for (const auto& game : games_present(prepared, genre)) {
        auto cfg = base;
        cfg.protocol = kind == ProtocolKind::GameModel ? Protocol::game_model(prepared.schema, game)
                                                       : Protocol::genre_model(prepared.schema, genre, game);
        try {
          all_feature[{kind, genre}].push_back(run_experiment(cfg, prepared));
        } catch (const Error& e) {
          if (!skippable(e)) throw;
        }
      }
    }
  }
  const auto importance = importance_outputs(prepared, all_feature);
  out.write("importance.csv", importance.csv);
  out.write("importance.txt", report::importance_table(importance.blocks));
  std::string top;
  for (const auto& b : importance.blocks) {
    const auto& list = b.game_models.empty() ? b.genre_models : b.game_models;
    if (!list.empty()) top += (top.empty() ? "" : "; ") + std::string(to_string(b.genre)) + " " + list.front().name;
  }
  return "importance: top features " + (top.empty() ? std::string("none") : top);
}

std::string run_synth(const Settings& s, const fs::path& corpus_path) {
  const auto profile = parse_profile(text::parse_key_values(text::read_file(s.path("profile")), s.str("profile")));
  const auto corpus = gen_corpus(profile, load_schema(s), s.integer<std::uint64_t>("seed"));
  save_corpus(corpus_path, corpus);
  return "synth: " + std::to_string(corpus.sessions().size()) + " sessions of " +
         std::to_string(corpus.players().size()) + " players -> " + corpus_path.string();
}

std::string run_report(const Settings& s, const Outputs& out) {
  const auto schema = load_schema(s);
  std::vector<report::CellSummary> cells;
  for (const auto& file : text::split(s.required("cells"), ',')) {
    const auto part = report::parse_cells_csv(text::read_file(file));
    cells.insert(cells.end(), part.begin(), part.end());
  }
  std::string tables;
  const bool has_game = std::any_of(cells.begin(), cells.end(), [](const auto& c) { return c.protocol == ProtocolKind::GameModel; });
  const bool has_genre = std::any_of(cells.begin(), cells.end(), [](const auto& c) { return c.protocol == ProtocolKind::GenreModel; });
  if (has_game) tables += report::accuracy_table(cells, schema, ProtocolKind::GameModel);
  if (has_genre) tables += (tables.empty() ? "" : "\n") + report::accuracy_table(cells, schema, ProtocolKind::GenreModel, cells);
  out.write("tables.txt", tables);
  std::cout << tables;
  return "report: " + std::to_string(cells.size()) + " cells";
}

// ---------------------------------------------------------------------------
// Manifest handling

/// Resolved settings (minus the output location) plus input content hashes.
std::string manifest_text(const Settings& s) {
  text::KeyValues m = s.values();
  m.erase("out");
  m.erase("threads");  // affects speed only
  for (const auto& key : kInputFileKeys) {
    if (!s.has(key)) continue;
    std::string digest;
    for (const auto& file : text::split(s.str(key), ',')) {
      digest += (digest.empty() ? "" : ",") + text::hex64(text::fnv1a(text::read_file(file)));
    }
    m[key + ".fnv1a"] = digest;
  }
  return "# affect run manifest; replay with: affect replay --manifest <this file>\nformat = " +
         std::string(kManifestFormat) + "\ncommand = " + s.command().name + '\n' + text::format_key_values(m);
}

fs::path manifest_path(const Settings& s) {
  if (s.command().name == "synth") return fs::path(s.str("out") + ".manifest");
  return fs::path(s.str("out")) / kManifestName;
}

std::string execute(const Settings& s) {
  const auto& name = s.command().name;
  std::string summary;
  if (name == "synth") {
    summary = run_synth(s, s.path("out"));
  } else {
    static const std::map<std::string, std::function<std::string(const Settings&, const Outputs&)>> handlers = {
        {"ingest", run_ingest},       {"preprocess", run_preprocess}, {"transform", run_transform},
        {"tune-pt", run_tune_pt},     {"train", run_train},           {"predict", run_predict},
        {"eval-game", run_eval_game}, {"eval-genre", run_eval_genre}, {"sweep", run_sweep},
        {"importance", run_importance}, {"report", run_report},
    };
    const Outputs out{fs::path(s.required("out"))};
    fs::create_directories(out.dir);
    summary = handlers.at(name)(s, out);
  }
  text::write_file(manifest_path(s), manifest_text(s));
  return summary;
}

std::string run_replay(const std::string& manifest_file, const std::string& out_override) {
  auto kv = text::parse_key_values(text::read_file(manifest_file), manifest_file);
  if (kv["format"] != kManifestFormat) throw Error(ErrorKind::ManifestMismatch, "unsupported manifest format");
  const auto& cmd = find_command(kv["command"]);
  text::KeyValues values;
  for (const auto& setting : cmd.settings) {
    const auto it = kv.find(setting.key);
    values[setting.key] = it != kv.end() ? it->second : setting.fallback;
  }
  for (const auto& key : kInputFileKeys) {
    const auto it = kv.find(key + ".fnv1a");
    if (it == kv.end() || values[key].empty()) continue;
    std::string digest;
    for (const auto& file : text::split(values[key], ',')) {
      digest += (digest.empty() ? "" : ",") + text::hex64(text::fnv1a(text::read_file(file)));
    }
    if (digest != it->second) {
      throw Error(ErrorKind::ManifestMismatch, "input '" + values[key] + "' no longer matches the recorded hash");
    }
  }
  if (!out_override.empty()) {
    values["out"] = out_override;
  } else if (cmd.name == "synth") {
    auto p = fs::path(manifest_file).string();
    values["out"] = p.substr(0, p.size() - std::string(".manifest").size());
  } else {
    values["out"] = fs::path(manifest_file).parent_path().string();
  }
  if (values["out"].empty()) values["out"] = ".";
  values["threads"] = "0";
  if (!cmd.settings.empty() && std::none_of(cmd.settings.begin(), cmd.settings.end(),
                                            [](const Setting& st) { return st.key == "threads"; })) {
    values.erase("threads");
  }
  const Settings settings(cmd, values);
  return "replay of " + cmd.name + ": " + execute(settings);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference learning of game-play arousal from telemetry"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 usage error, 2 data error.\n"
             "Settings precedence: defaults < --config file < $" + std::string(kOutEnv) + " (output dir) < flags.");

  struct Parsed {
    CLI::App* sub = nullptr;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config;
  };
  const auto all = commands();
  std::vector<Parsed> parsed(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& p = parsed[i];
    p.sub = app.add_subcommand(all[i].name, all[i].description);
    p.sub->add_option("--config", p.config, "key = value settings file");
    for (const auto& st : all[i].settings) {
      std::string help = st.help;
      if (!st.fallback.empty()) help += " [" + st.fallback + "]";
      p.options[st.key] = p.sub->add_option("--" + st.key, p.values[st.key], help);
    }
  }
  std::string manifest;
  std::string replay_out;
  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay->add_option("--manifest", manifest, "manifest file")->required();
  replay->add_option("--out", replay_out, "output location (default: where the manifest was written)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (replay->parsed()) {
      std::cout << run_replay(manifest, replay_out) << '\n';
      return kExitOk;
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto& p = parsed[i];
      if (!p.sub->parsed()) continue;
      std::map<std::string, std::string> flags;
      for (const auto& [key, opt] : p.options) {
        if (opt->count() > 0) flags[key] = p.values[key];
      }
      const auto& cmd = find_command(all[i].name);
      const Settings settings(cmd, resolve_settings(cmd, p.config, flags));
      std::cout << execute(settings) << '\n';
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
