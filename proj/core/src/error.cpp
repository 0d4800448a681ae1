#include "transnet/error.hpp"

namespace transnet {

std::string_view to_string(CheckpointErrorKind kind) noexcept {
  switch (kind) {
    case CheckpointErrorKind::kBadMagic: return "bad_magic";
    case CheckpointErrorKind::kVersionMismatch: return "version_mismatch";
    case CheckpointErrorKind::kTruncated: return "truncated";
    case CheckpointErrorKind::kShapeMismatch: return "shape_mismatch";
    case CheckpointErrorKind::kMalformed: return "malformed";
    case CheckpointErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace transnet
