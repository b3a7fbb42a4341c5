#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace affect {

enum class ErrorKind {
  InvalidArgument,
  IoError,
  SchemaError,
  MissingColumn,
  MalformedRow,
  EmptyCorpus,
  UnknownGame,
  TooFewFrames,
  SessionShorterThanLag,
  NoFullWindow,
  SingleWindowSession,
  NoFeasibleThreshold,
  EmptyNode,
  EmptyTrainingSet,
  DimensionMismatch,
  ModelFormat,
  TooFewPlayers,
  EmptyFoldTestSet,
  LeakageDetected,
  TooFewSamples,
  UnknownFeature,
  ManifestMismatch,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::UnknownGame: return "UnknownGame";
    case ErrorKind::TooFewFrames: return "TooFewFrames";
    case ErrorKind::SessionShorterThanLag: return "SessionShorterThanLag";
    case ErrorKind::NoFullWindow: return "NoFullWindow";
    case ErrorKind::SingleWindowSession: return "SingleWindowSession";
    case ErrorKind::NoFeasibleThreshold: return "NoFeasibleThreshold";
    case ErrorKind::EmptyNode: return "EmptyNode";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ModelFormat: return "ModelFormat";
    case ErrorKind::TooFewPlayers: return "TooFewPlayers";
    case ErrorKind::EmptyFoldTestSet: return "EmptyFoldTestSet";
    case ErrorKind::LeakageDetected: return "LeakageDetected";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::UnknownFeature: return "UnknownFeature";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind; the
/// message is prefixed with the kind name so the CLI can print it verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace affect
