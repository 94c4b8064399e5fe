#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace protflow {

enum class Errc {
  kInvalidArgument,
  // seqio
  kUnknownResidue,
  kInvalidTokenId,
  kSequenceTooLong,
  kMalformedFasta,
  kInvalidHeader,
  kEmptyCorpus,
  // numeric
  kTooFewSamples,
  kNotSymmetric,
  kNotPsd,
  kNonFiniteValue,
  kShapeMismatch,
  // latent / flow / ode
  kIncompatibleRatio,
  kDiverged,
  kNonFiniteLoss,
  kNonFiniteState,
  kNfeBudgetExceeded,
  kStepUnderflow,
  // multichain
  kWidthMismatch,
  kLayoutMismatch,
  // metrics
  kEmptySequence,
  kEmptyInput,
  kTooFewSequences,
  kDimensionMismatch,
  kUnequalSizes,
  kBadBandwidth,
  kBatchTooLarge,
  // checkpoint / config
  kBadMagic,
  kVersionUnsupported,
  kCorruptOffset,
  kConfigError,
  kDataError,
  kIncompatibleCheckpoint,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class UnknownResidue : public Error {
 public:
  UnknownResidue(std::size_t position, char residue);
  std::size_t position() const noexcept { return position_; }
  char residue() const noexcept { return residue_; }

 private:
  std::size_t position_;
  char residue_;
};

class SequenceTooLong : public Error {
 public:
  SequenceTooLong(std::size_t length, std::size_t max_length);
  std::size_t length() const noexcept { return length_; }
  std::size_t max_length() const noexcept { return max_length_; }

 private:
  std::size_t length_;
  std::size_t max_length_;
};

class MalformedFasta : public Error {
 public:
  explicit MalformedFasta(std::size_t line);
  /// 1-based line number of the offending line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NonFiniteState : public Error {
 public:
  explicit NonFiniteState(std::size_t step);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace protflow
