#include "p2d/error.hpp"

namespace p2d {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::IncompatibleManifest: return "IncompatibleManifest";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::DictionaryEmpty: return "DictionaryEmpty";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::EncoderUnavailable: return "EncoderUnavailable";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::DimensionError: return "DimensionError";
    case ErrorCode::InsufficientCandidates: return "InsufficientCandidates";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::NoCheckpoint: return "NoCheckpoint";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::WindowError: return "WindowError";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NotEnoughMaterial: return "NotEnoughMaterial";
    case ErrorCode::OutOfOrder: return "OutOfOrder";
    case ErrorCode::DuplicateResponse: return "DuplicateResponse";
    case ErrorCode::InvalidRating: return "InvalidRating";
    case ErrorCode::InvalidChoice: return "InvalidChoice";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace p2d
