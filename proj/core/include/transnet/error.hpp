#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace transnet {

/// Base of every error thrown by the library. `kind()` is a stable,
/// machine-readable tag used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TRANSNET_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(tag, what) {}           \
  }

TRANSNET_DEFINE_ERROR(ShapeError, "shape");
TRANSNET_DEFINE_ERROR(IndexError, "index");
TRANSNET_DEFINE_ERROR(DomainError, "domain");
TRANSNET_DEFINE_ERROR(ConfigError, "config");
TRANSNET_DEFINE_ERROR(DataError, "data");
TRANSNET_DEFINE_ERROR(ContractError, "contract");
TRANSNET_DEFINE_ERROR(TransferError, "transfer");
TRANSNET_DEFINE_ERROR(PrecisionError, "precision");
TRANSNET_DEFINE_ERROR(DegenerateBatchError, "degenerate_batch");
TRANSNET_DEFINE_ERROR(LoadError, "load");

#undef TRANSNET_DEFINE_ERROR

enum class CheckpointErrorKind {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kShapeMismatch,
  kMalformed,
  kIo,
};

std::string_view to_string(CheckpointErrorKind kind) noexcept;

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : Error("checkpoint_" + std::string(to_string(kind)), what), ckpt_kind_(kind) {}

  CheckpointErrorKind checkpoint_kind() const noexcept { return ckpt_kind_; }

 private:
  CheckpointErrorKind ckpt_kind_;
};

}  // namespace transnet
