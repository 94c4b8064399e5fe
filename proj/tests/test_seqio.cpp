#include <string>

#include "doctest.h"
#include "protflow/error.hpp"
#include "protflow/seqio.hpp"

using namespace protflow;

namespace {

std::string random_residues(Rng& rng, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += Vocabulary::kResidues[rng.uniform_int(20)];
  return s;
}

}  // namespace

TEST_CASE("vocabulary order and inverses") {
  CHECK(Vocabulary::kSize == 21);
  for (TokenId i = 0; i < 20; ++i) CHECK(Vocabulary::index(Vocabulary::symbol(i)) == i);
  CHECK(Vocabulary::index('A') == 0);
  CHECK(Vocabulary::index('Y') == 19);
  CHECK(Vocabulary::index('-') == -1);
  CHECK_FALSE(Vocabulary::valid(21));
}

TEST_CASE("tokenize") {
  CHECK(tokenize("ACD").tokens == std::vector<TokenId>{0, 1, 2});
  CHECK(tokenize("Y").tokens == std::vector<TokenId>{19});
  CHECK(tokenize("ACD").true_length == 3);
  try {
    tokenize("ACDB");
    FAIL("expected UnknownResidue");
  } catch (const UnknownResidue& e) {
    CHECK(e.position() == 3);
    CHECK(e.residue() == 'B');
  }
  for (char c : std::string("BJOUXZ")) CHECK_THROWS_AS(tokenize(std::string("A") + c), UnknownResidue);
  CHECK_THROWS_AS(tokenize(""), Error);
}

TEST_CASE("detokenize") {
  CHECK(detokenize(tokenize("ACD")) == "ACD");
  TokenizedSequence ts{{0, 20, 20}, {true, false, false}, 1};
  CHECK(detokenize(ts) == "A");
  TokenizedSequence bad{{0, 25}, {true, true}, 2};
  try {
    detokenize(bad);
    FAIL("expected InvalidTokenId");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kInvalidTokenId);
  }
}

TEST_CASE("pad_to") {
  const TokenizedSequence p = pad_to(tokenize("AC"), 4);
  CHECK(p.tokens == std::vector<TokenId>{0, 1, 20, 20});
  CHECK(p.mask == std::vector<bool>{true, true, false, false});
  CHECK(pad_to(tokenize("ACDE"), 4).tokens == tokenize("ACDE").tokens);
  try {
    pad_to(tokenize("ACDEF"), 4);
    FAIL("expected SequenceTooLong");
  } catch (const SequenceTooLong& e) {
    CHECK(e.length() == 5);
    CHECK(e.max_length() == 4);
  }
}

TEST_CASE("tokenize and pad round trips on random strings") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const std::string s = random_residues(rng, 1 + rng.uniform_int(40));
    CHECK(detokenize(tokenize(s)) == s);
    const TokenizedSequence p = pad_to(tokenize(s), s.size() + rng.uniform_int(10));
    CHECK(detokenize(p) == s);
    bool seen_false = false;
    for (std::size_t j = 0; j < p.mask.size(); ++j) {
      if (!p.mask[j]) seen_false = true;
      CHECK(p.mask[j] != seen_false);
      CHECK((p.tokens[j] == Vocabulary::kPad) == !p.mask[j]);
    }
  }
}

TEST_CASE("prefix_mask") {
  CHECK(prefix_mask(2, 4) == std::vector<bool>{true, true, false, false});
  CHECK(prefix_mask(0, 2) == std::vector<bool>{false, false});
}

TEST_CASE("parse_fasta") {
  auto r = parse_fasta(">a\nAC\nDE\n");
  REQUIRE(r.size() == 1);
  CHECK(r[0] == FastaRecord{"a", "ACDE"});
  r = parse_fasta(">a\n>b\nAC\n");
  REQUIRE(r.size() == 2);
  CHECK(r[0] == FastaRecord{"a", ""});
  CHECK(r[1] == FastaRecord{"b", "AC"});
  CHECK(parse_fasta(">x y\r\nAC\r\n\r\n  \nDE\r\n")[0] == FastaRecord{"x y", "ACDE"});
  try {
    parse_fasta("AC\n>a\n");
    FAIL("expected MalformedFasta");
  } catch (const MalformedFasta& e) {
    CHECK(e.line() == 1);
  }
}

TEST_CASE("write_fasta wraps at 60 columns and round trips") {
  CHECK(write_fasta({{"a", "ACDE"}}) == ">a\nACDE\n");
  CHECK_THROWS_AS(write_fasta({{"a\nb", "AC"}}), Error);
  CHECK_THROWS_AS(write_fasta({{"", "AC"}}), Error);

  Rng rng(2);
  std::vector<FastaRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back({"seq_" + std::to_string(i), random_residues(rng, 1 + rng.uniform_int(200))});
  const std::string text = write_fasta(recs);
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    if (text[start] != '>') CHECK(end - start <= 60);
    start = end + 1;
  }
  CHECK(parse_fasta(text) == recs);
}

TEST_CASE("read_fasta_file reports missing files") {
  try {
    read_fasta_file("/nonexistent/x.fasta");
    FAIL("expected DataError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kDataError);
    CHECK(std::string(e.what()).find("/nonexistent/x.fasta") != std::string::npos);
  }
}

TEST_CASE("fit_length_distribution") {
  const LengthDistribution d = fit_length_distribution({"AC", "AC", "ACDEF"}, 10);
  CHECK(d.counts() == std::map<std::size_t, std::uint64_t>{{2, 2}, {5, 1}});
  CHECK(d.total() == 3);
  CHECK(fit_length_distribution({"A"}, 1).counts() == std::map<std::size_t, std::uint64_t>{{1, 1}});
  CHECK_THROWS_AS(fit_length_distribution({}, 10), Error);
  CHECK_THROWS_AS(fit_length_distribution({"ACD"}, 2), SequenceTooLong);
}

TEST_CASE("sample_length") {
  Rng rng(3);
  const LengthDistribution point(std::map<std::size_t, std::uint64_t>{{3, 1}});
  for (int i = 0; i < 100; ++i) CHECK(sample_length(point, rng) == 3);

  const LengthDistribution d(std::map<std::size_t, std::uint64_t>{{2, 2}, {5, 1}});
  int twos = 0;
  for (int i = 0; i < 30000; ++i) {
    const std::size_t l = sample_length(d, rng);
    CHECK((l == 2 || l == 5));
    twos += l == 2;
  }
  // Standard error of the frequency is sqrt(2/9 / 30000) ~ 0.0027.
  CHECK(std::abs(twos / 30000.0 - 2.0 / 3.0) < 0.01);

  Rng a(4), b(4);
  for (int i = 0; i < 50; ++i) CHECK(sample_length(d, a) == sample_length(d, b));
}
