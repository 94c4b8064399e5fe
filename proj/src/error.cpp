#include "protflow/error.hpp"

namespace protflow {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kUnknownResidue: return "UnknownResidue";
    case Errc::kInvalidTokenId: return "InvalidTokenId";
    case Errc::kSequenceTooLong: return "SequenceTooLong";
    case Errc::kMalformedFasta: return "MalformedFasta";
    case Errc::kInvalidHeader: return "InvalidHeader";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kTooFewSamples: return "TooFewSamples";
    case Errc::kNotSymmetric: return "NotSymmetric";
    case Errc::kNotPsd: return "NotPSD";
    case Errc::kNonFiniteValue: return "NonFiniteValue";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kIncompatibleRatio: return "IncompatibleRatio";
    case Errc::kDiverged: return "Diverged";
    case Errc::kNonFiniteLoss: return "NonFiniteLoss";
    case Errc::kNonFiniteState: return "NonFiniteState";
    case Errc::kNfeBudgetExceeded: return "NfeBudgetExceeded";
    case Errc::kStepUnderflow: return "StepUnderflow";
    case Errc::kWidthMismatch: return "WidthMismatch";
    case Errc::kLayoutMismatch: return "LayoutMismatch";
    case Errc::kEmptySequence: return "EmptySequence";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kTooFewSequences: return "TooFewSequences";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kUnequalSizes: return "UnequalSizes";
    case Errc::kBadBandwidth: return "BadBandwidth";
    case Errc::kBatchTooLarge: return "BatchTooLarge";
    case Errc::kBadMagic: return "BadMagic";
    case Errc::kVersionUnsupported: return "VersionUnsupported";
    case Errc::kCorruptOffset: return "CorruptOffset";
    case Errc::kConfigError: return "ConfigError";
    case Errc::kDataError: return "DataError";
    case Errc::kIncompatibleCheckpoint: return "IncompatibleCheckpoint";
  }
  return "Unknown";
}

UnknownResidue::UnknownResidue(std::size_t position, char residue)
    : Error(Errc::kUnknownResidue, "residue '" + std::string(1, residue) +
                                       "' at position " + std::to_string(position)),
      position_(position),
      residue_(residue) {}

SequenceTooLong::SequenceTooLong(std::size_t length, std::size_t max_length)
    : Error(Errc::kSequenceTooLong, "length " + std::to_string(length) +
                                        " exceeds maximum " + std::to_string(max_length)),
      length_(length),
      max_length_(max_length) {}

MalformedFasta::MalformedFasta(std::size_t line)
    : Error(Errc::kMalformedFasta,
            "sequence data before any header at line " + std::to_string(line)),
      line_(line) {}

NonFiniteState::NonFiniteState(std::size_t step)
    : Error(Errc::kNonFiniteState, "non-finite state after step " + std::to_string(step)),
      step_(step) {}

}  // namespace protflow
