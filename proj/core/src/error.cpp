#include "apbit/error.hpp"

namespace apbit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::BadEncoding: return "BadEncoding";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IllegalEncodingPair: return "IllegalEncodingPair";
    case ErrorCode::BadTileConfig: return "BadTileConfig";
    case ErrorCode::QuantRangeError: return "QuantRangeError";
    case ErrorCode::BadLayoutTag: return "BadLayoutTag";
    case ErrorCode::CorruptPadding: return "CorruptPadding";
    case ErrorCode::GraphShapeError: return "GraphShapeError";
    case ErrorCode::UnsupportedLayer: return "UnsupportedLayer";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace apbit
