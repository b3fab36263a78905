#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace p2d {

enum class ErrorCode {
  // corpus
  EmptyCorpus,
  IncompatibleManifest,
  NotFound,
  // semantic matching
  DictionaryEmpty,
  DuplicateEntry,
  EncoderUnavailable,
  DecodeError,
  DimensionError,
  InsufficientCandidates,
  InvalidK,
  // translation
  EmptyBatch,
  ShapeError,
  DivergedTraining,
  NoCheckpoint,
  // refinement / depth
  BackendUnavailable,
  WindowError,
  NotNormalized,
  TooSmall,
  InvalidArgument,
  // pipeline
  InvalidConfig,
  // study
  NotEnoughMaterial,
  OutOfOrder,
  DuplicateResponse,
  InvalidRating,
  InvalidChoice,
  UnknownSession,
  NoData,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace p2d
