#pragma once

#include <affect/corpus.hpp>
#include <affect/error.hpp>
#include <affect/random.hpp>
#include <affect/schema.hpp>
#include <affect/text.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace affect {

inline constexpr std::string_view kTimePassed = "Time Passed";

enum class Coupling { TimeDriven, FeatureDriven, Random };

struct SynthProfile {
  Coupling coupling = Coupling::TimeDriven;
  double slope = 1.0;      // arousal units per second (TimeDriven)
  double gain = 1.0;       // arousal per unit of the driving feature (FeatureDriven)
  double noise_std = 0.1;  // Random uses max(noise_std, 1)
  std::string feature;     // FeatureDriven only
  int n_players = 20;
  int sessions_per_player = 3;
  double session_length_s = 120.0;
  Genre genre = Genre::Shooter;
  double sample_interval_ms = 250.0;
  double jitter_ms = 0.0;        // uniform timestamp jitter in [0, jitter) after t = 0
  double noise_hold_ms = 250.0;  // Random: each noise draw is held this long
};

inline void validate_profile(const SynthProfile& p) {
  const auto bad = [](const std::string& what) { return Error(ErrorKind::InvalidArgument, "synth profile: " + what); };
  if (!(p.noise_std >= 0)) throw bad("noise_std must be >= 0");
  if (!(p.session_length_s >= 6.0)) throw bad("session_length_s must be >= 6");
  if (p.n_players < 1 || p.sessions_per_player < 1) throw bad("need at least one player and session");
  if (!(p.sample_interval_ms > 0) || !(p.jitter_ms >= 0) || p.jitter_ms >= p.sample_interval_ms) {
    throw bad("need sample_interval_ms > 0 and 0 <= jitter_ms < sample_interval_ms");
  }
  if (!(p.noise_hold_ms > 0)) throw bad("noise_hold_ms must be positive");
  if (p.coupling == Coupling::FeatureDriven && p.feature.empty()) throw bad("feature_driven needs a feature");
}

inline SynthProfile parse_profile(const text::KeyValues& kv) {
  SynthProfile p;
  for (const auto& [key, value] : kv) {
    const auto number = [&] {
      const auto v = text::parse_double(value);
      if (!v) throw Error(ErrorKind::InvalidArgument, "synth profile: '" + key + "' is not a number");
      return *v;
    };
    if (key == "coupling") {
      const auto c = text::lower(value);
      if (c == "time_driven") {
        p.coupling = Coupling::TimeDriven;
      } else if (c == "feature_driven") {
        p.coupling = Coupling::FeatureDriven;
      } else if (c == "random") {
        p.coupling = Coupling::Random;
      } else {
        throw Error(ErrorKind::InvalidArgument, "synth profile: unknown coupling '" + value + "'");
      }
    } else if (key == "slope") {
      p.slope = number();
    } else if (key == "gain") {
      p.gain = number();
    } else if (key == "noise_std") {
      p.noise_std = number();
    } else if (key == "feature") {
      p.feature = value;
    } else if (key == "n_players") {
      p.n_players = static_cast<int>(number());
    } else if (key == "sessions_per_player") {
      p.sessions_per_player = static_cast<int>(number());
    } else if (key == "session_length_s") {
      p.session_length_s = number();
    } else if (key == "genre") {
      const auto g = parse_genre(value);
      if (!g) throw Error(ErrorKind::InvalidArgument, "synth profile: unknown genre '" + value + "'");
      p.genre = *g;
    } else if (key == "sample_interval_ms") {
      p.sample_interval_ms = number();
    } else if (key == "jitter_ms") {
      p.jitter_ms = number();
    } else if (key == "noise_hold_ms") {
      p.noise_hold_ms = number();
    } else {
      throw Error(ErrorKind::InvalidArgument, "synth profile: unknown key '" + key + "'");
    }
  }
  validate_profile(p);
  return p;
}

/// Sessions cycle through the genre's games; session s of player p plays
/// games[(p + s) % 3] and draws from its own stream of `seed`.
inline Corpus gen_corpus(const SynthProfile& profile, const FeatureSchema& schema, std::uint64_t seed) {
  validate_profile(profile);
  const auto& layout = schema.layout(profile.genre);
  const auto games = schema.games_in(profile.genre);
  if (games.empty()) throw Error(ErrorKind::SchemaError, "schema declares no games for the genre");
  const auto time_slot = layout.index_of(kTimePassed);
  std::optional<std::size_t> driver;
  if (profile.coupling == Coupling::FeatureDriven) {
    driver = layout.index_of(profile.feature);
    if (!driver) throw Error(ErrorKind::UnknownFeature, "'" + profile.feature + "' is not in the genre schema");
  }

  const auto samples = static_cast<std::size_t>(std::floor(profile.session_length_s * 1000.0 / profile.sample_interval_ms));
  std::vector<SessionRecord> sessions;
  for (int p = 0; p < profile.n_players; ++p) {
    for (int s = 0; s < profile.sessions_per_player; ++s) {
      char player[32];
      char session_id[32];
      std::snprintf(player, sizeof player, "P%04d", p + 1);
      std::snprintf(session_id, sizeof session_id, "S%02d", s + 1);
      SessionRecord rec;
      rec.info = {player, session_id, games[static_cast<std::size_t>(p + s) % games.size()], profile.genre};

      std::vector<bool> absent(layout.size(), false);
      for (std::size_t c = 0; c < layout.size(); ++c) {
        absent[c] = schema.entries()[layout.entries[c]].absent_in.contains(rec.info.game);
      }

      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p) * 4096 + static_cast<std::uint64_t>(s)));
      std::normal_distribution<double> unit(0.0, 1.0);
      std::poisson_distribution<int> events(0.5);
      std::uniform_real_distribution<double> jitter(0.0, profile.jitter_ms > 0 ? profile.jitter_ms : 1.0);
      double walk = 0.0;
      double held_noise = 0.0;
      double held_until = -1.0;
      const double random_std = std::max(profile.noise_std, 1.0);

      for (std::size_t k = 0; k < samples; ++k) {
        Frame f;
        f.timestamp_ms = static_cast<double>(k) * profile.sample_interval_ms;
        if (k > 0 && profile.jitter_ms > 0) f.timestamp_ms += jitter(rng);
        const double t_s = f.timestamp_ms / 1000.0;
        f.features.assign(layout.size(), 0.0);
        for (std::size_t c = 0; c < layout.size(); ++c) {
          if (absent[c]) continue;
          if (time_slot && c == *time_slot) {
            f.features[c] = t_s;
          } else if (layout.aggregation[c] == Aggregation::Sum) {
            f.features[c] = events(rng);
          } else {
            f.features[c] = unit(rng);
          }
        }
        switch (profile.coupling) {
          case Coupling::TimeDriven:
            f.arousal = profile.slope * t_s + profile.noise_std * unit(rng);
            break;
          case Coupling::FeatureDriven:
            if (!(time_slot && *driver == *time_slot)) {
              walk += 0.1 * unit(rng);
              f.features[*driver] = walk;
            }
            f.arousal = profile.gain * f.features[*driver] + profile.noise_std * unit(rng);
            break;
          case Coupling::Random:
            if (f.timestamp_ms >= held_until) {
              held_noise = random_std * unit(rng);
              held_until = (std::floor(f.timestamp_ms / profile.noise_hold_ms) + 1.0) * profile.noise_hold_ms;
            }
            f.arousal = held_noise;
            break;
        }
        rec.frames.push_back(std::move(f));
      }
      sessions.push_back(std::move(rec));
    }
  }
  return Corpus(schema, std::move(sessions));
}

}  // namespace affect
