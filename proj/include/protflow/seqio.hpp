#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "protflow/numeric.hpp"

namespace protflow {

using TokenId = std::int32_t;

/// The 20 standard residues in alphabetical one-letter order, then PAD.
struct Vocabulary {
  static constexpr std::string_view kResidues = "ACDEFGHIKLMNPQRSTVWY";
  static constexpr std::size_t kNumResidues = 20;
  static constexpr std::size_t kSize = 21;
  static constexpr TokenId kPad = 20;

  /// Token for a residue letter, or -1 if the letter is not a standard residue.
  static constexpr TokenId index(char residue) noexcept {
    for (std::size_t i = 0; i < kResidues.size(); ++i)
      if (kResidues[i] == residue) return static_cast<TokenId>(i);
    return -1;
  }
  /// Residue letter for a token; PAD maps to '-'. Caller checks the range.
  static constexpr char symbol(TokenId id) noexcept {
    return id == kPad ? '-' : kResidues[static_cast<std::size_t>(id)];
  }
  static constexpr bool valid(TokenId id) noexcept {
    return id >= 0 && id < static_cast<TokenId>(kSize);
  }
};

struct TokenizedSequence {
  std::vector<TokenId> tokens;
  std::vector<bool> mask;  // true at residue positions, always a prefix
  std::size_t true_length = 0;

  std::size_t padded_length() const noexcept { return tokens.size(); }
};

/// Throws UnknownResidue for anything outside the 20 standard residues.
TokenizedSequence tokenize(std::string_view residues);
/// Drops PAD positions. Throws InvalidTokenId on out-of-range ids.
std::string detokenize(const TokenizedSequence& ts);
/// Appends PAD up to max_length. Throws SequenceTooLong.
TokenizedSequence pad_to(const TokenizedSequence& ts, std::size_t max_length);
/// Prefix mask with `length` true entries out of `max_length`.
std::vector<bool> prefix_mask(std::size_t length, std::size_t max_length);

struct FastaRecord {
  std::string header;
  std::string sequence;

  friend bool operator==(const FastaRecord&, const FastaRecord&) = default;
};

std::vector<FastaRecord> parse_fasta(std::string_view text);
/// 60-column wrapped FASTA. Throws InvalidHeader for empty or multi-line headers.
std::string write_fasta(const std::vector<FastaRecord>& records);

std::vector<FastaRecord> read_fasta_file(const std::string& path);

class LengthDistribution {
 public:
  LengthDistribution() = default;
  explicit LengthDistribution(std::map<std::size_t, std::uint64_t> counts);

  const std::map<std::size_t, std::uint64_t>& counts() const noexcept { return counts_; }
  std::uint64_t total() const noexcept { return total_; }
  double probability(std::size_t length) const;
  std::size_t max_length() const;

 private:
  std::map<std::size_t, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

LengthDistribution fit_length_distribution(const std::vector<std::string>& corpus,
                                           std::size_t max_length);
/// Draws a length with probability counts[L] / total.
std::size_t sample_length(const LengthDistribution& dist, Rng& rng);

}  // namespace protflow
