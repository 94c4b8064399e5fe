#include "protflow/seqio.hpp"

#include <fstream>
#include <sstream>

#include "protflow/error.hpp"

namespace protflow {

TokenizedSequence tokenize(std::string_view residues) {
  if (residues.empty()) throw Error(Errc::kInvalidArgument, "empty residue string");
  TokenizedSequence ts;
  ts.tokens.reserve(residues.size());
  for (std::size_t i = 0; i < residues.size(); ++i) {
    const TokenId id = Vocabulary::index(residues[i]);
    if (id < 0) throw UnknownResidue(i, residues[i]);
    ts.tokens.push_back(id);
  }
  ts.mask.assign(residues.size(), true);
  ts.true_length = residues.size();
  return ts;
}

std::string detokenize(const TokenizedSequence& ts) {
  std::string out;
  out.reserve(ts.true_length);
  for (std::size_t i = 0; i < ts.tokens.size(); ++i) {
    const TokenId id = ts.tokens[i];
    if (!Vocabulary::valid(id)) {
      throw Error(Errc::kInvalidTokenId, "token " + std::to_string(id) + " at position " +
                                             std::to_string(i));
    }
    const bool residue_position = i < ts.mask.size() ? ts.mask[i] : true;
    if (residue_position && id != Vocabulary::kPad) out.push_back(Vocabulary::symbol(id));
  }
  return out;
}

std::vector<bool> prefix_mask(std::size_t length, std::size_t max_length) {
  std::vector<bool> mask(max_length, false);
  for (std::size_t i = 0; i < length && i < max_length; ++i) mask[i] = true;
  return mask;
}

TokenizedSequence pad_to(const TokenizedSequence& ts, std::size_t max_length) {
  if (ts.true_length > max_length) throw SequenceTooLong(ts.true_length, max_length);
  TokenizedSequence out;
  out.tokens.assign(ts.tokens.begin(), ts.tokens.begin() + static_cast<long>(ts.true_length));
  out.tokens.resize(max_length, Vocabulary::kPad);
  out.mask = prefix_mask(ts.true_length, max_length);
  out.true_length = ts.true_length;
  return out;
}

std::vector<FastaRecord> parse_fasta(std::string_view text) {
  std::vector<FastaRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (!line.empty() && line.front() == '>') {
      records.push_back({std::string(line.substr(1)), {}});
      continue;
    }
    std::string residues;
    for (char ch : line)
      if (ch != ' ' && ch != '\t') residues.push_back(ch);
    if (residues.empty()) continue;
    if (records.empty()) throw MalformedFasta(line_no);
    records.back().sequence += residues;
  }
  return records;
}

std::string write_fasta(const std::vector<FastaRecord>& records) {
  constexpr std::size_t kWidth = 60;
  std::string out;
  for (const auto& rec : records) {
    if (rec.header.empty() || rec.header.find_first_of("\r\n") != std::string::npos) {
      throw Error(Errc::kInvalidHeader, "header must be a nonempty single line");
    }
    out += '>';
    out += rec.header;
    out += '\n';
    for (std::size_t i = 0; i < rec.sequence.size(); i += kWidth) {
      out.append(rec.sequence, i, kWidth);
      out += '\n';
    }
  }
  return out;
}

std::vector<FastaRecord> read_fasta_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kDataError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_fasta(buf.str());
}

LengthDistribution::LengthDistribution(std::map<std::size_t, std::uint64_t> counts)
    : counts_(std::move(counts)) {
  for (auto it = counts_.begin(); it != counts_.end();) {
    if (it->first == 0) throw Error(Errc::kInvalidArgument, "length 0 in distribution");
    if (it->second == 0) {
      it = counts_.erase(it);
    } else {
      total_ += it->second;
      ++it;
    }
  }
  if (total_ == 0) throw Error(Errc::kEmptyCorpus, "length distribution has no mass");
}

double LengthDistribution::probability(std::size_t length) const {
  auto it = counts_.find(length);
  return it == counts_.end() ? 0.0
                             : static_cast<double>(it->second) / static_cast<double>(total_);
}

std::size_t LengthDistribution::max_length() const {
  return counts_.empty() ? 0 : counts_.rbegin()->first;
}

LengthDistribution fit_length_distribution(const std::vector<std::string>& corpus,
                                           std::size_t max_length) {
  if (corpus.empty()) throw Error(Errc::kEmptyCorpus, "no sequences");
  std::map<std::size_t, std::uint64_t> counts;
  for (const auto& seq : corpus) {
    if (seq.size() > max_length) throw SequenceTooLong(seq.size(), max_length);
    if (seq.empty()) throw Error(Errc::kInvalidArgument, "empty sequence in corpus");
    ++counts[seq.size()];
  }
  return LengthDistribution(std::move(counts));
}

std::size_t sample_length(const LengthDistribution& dist, Rng& rng) {
  if (dist.total() == 0) throw Error(Errc::kEmptyCorpus, "unfitted length distribution");
  std::uint64_t r = rng.uniform_int(dist.total());
  for (const auto& [length, count] : dist.counts()) {
    if (r < count) return length;
    r -= count;
  }
  return dist.counts().rbegin()->first;  // unreachable
}

}  // namespace protflow
