#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>

#include "doctest.h"
#include "protflow/error.hpp"
#include "protflow/metrics.hpp"

using namespace protflow;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::kInvalidArgument;
}

std::string random_string(Rng& rng, std::string_view alphabet, std::size_t min_len, std::size_t max_len) {
  const std::size_t n = min_len + rng.uniform_int(max_len - min_len + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.uniform_int(alphabet.size())];
  return s;
}

// Levenshtein by its defining recursion on prefixes, memoised.
std::size_t lev_recursive(std::string_view a, std::string_view b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> lev = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (std::min(i, j) == 0) return std::max(i, j);
    auto it = memo.find({i, j});
    if (it != memo.end()) return it->second;
    const std::size_t r = std::min({lev(i - 1, j) + 1, lev(i, j - 1) + 1, lev(i - 1, j - 1) + (a[i - 1] != b[j - 1])});
    memo[{i, j}] = r;
    return r;
  };
  return lev(a.size(), b.size());
}

std::vector<std::string> all_strings(std::string_view alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (char c : alphabet) out.push_back(out[i] + c);
    begin = end;
  }
  return out;
}

double brute_force_assignment(const std::vector<double>& cost, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0;
    for (std::size_t i = 0; i < n; ++i) c += cost[i * n + perm[i]];
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double naive_mmd(const Matrix& x, const Matrix& y, double sigma) {
  auto k = [&](std::span<const double> a, std::span<const double> b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-d / (2 * sigma * sigma));
  };
  const std::size_t n = x.rows();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s += k(x.row(i), x.row(j)) + k(y.row(i), y.row(j)) - 2 * k(x.row(i), y.row(j));
  return s / static_cast<double>(n * n);
}

// Real roots of the characteristic cubic of a 3x3 matrix with real spectrum.
std::array<double, 3> cubic_eigenvalues(const Matrix& m) {
  const double tr = trace(m);
  const double minors = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) + m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0) +
                        m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  const double det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
                     m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
                     m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
  // lambda^3 - tr lambda^2 + minors lambda - det = 0, depressed with lambda = s + tr/3.
  const double p = minors - tr * tr / 3.0;
  const double q = -2.0 * tr * tr * tr / 27.0 + tr * minors / 3.0 - det;
  const double r = 2.0 * std::sqrt(-p / 3.0);
  const double phi = std::acos(std::clamp(3.0 * q / (p * r), -1.0, 1.0)) / 3.0;
  std::array<double, 3> out;
  for (int k = 0; k < 3; ++k) out[k] = r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0) + tr / 3.0;
  return out;
}

Matrix random_spd(Rng& rng, std::size_t d) {
  const Matrix a = gaussian(rng, d, d);
  Matrix s = matmul_nt(a, a);
  for (std::size_t i = 0; i < d; ++i) s(i, i) += 0.5;
  return s;
}

}  // namespace

TEST_CASE("shannon entropy") {
  CHECK(shannon_entropy("AAAA") == 0.0);
  CHECK(shannon_entropy("ACDE") == 2.0);
  CHECK(shannon_entropy("AAC") == doctest::Approx(-(2.0 / 3) * std::log2(2.0 / 3) - (1.0 / 3) * std::log2(1.0 / 3)));
  CHECK(shannon_entropy("AAC") == doctest::Approx(0.9183).epsilon(1e-4));
  CHECK(code_of([] { shannon_entropy(""); }) == Errc::kEmptySequence);
}

TEST_CASE("k-mer jaccard") {
  CHECK(kmer_jaccard({"ACDEFG"}, {"CDEFGH"}, 6).value == 0.0);
  CHECK(kmer_jaccard({"ACDEFG"}, {"CDEFGH"}, 5).value == doctest::Approx(1.0 / 3.0));
  CHECK(kmer_jaccard({"ACDEFGH", "KLM"}, {"ACDEFGH", "KLM"}, 3).value == 1.0);
  CHECK(kmer_jaccard({"AAAA"}, {"CCCC"}, 2).value == 0.0);
  const JaccardResult empty = kmer_jaccard({"AC"}, {"D"}, 6);
  CHECK(empty.both_empty);
  CHECK(empty.value == 0.0);
  CHECK_FALSE(kmer_jaccard({"ACDEFG"}, {"D"}, 6).both_empty);
  CHECK_THROWS(kmer_jaccard({"A"}, {"A"}, 0));
}

TEST_CASE("edit distance examples") {
  CHECK(edit_distance("", "ACD") == 3);
  CHECK(edit_distance("ACD", "") == 3);
  CHECK(edit_distance("ACDE", "ACDE") == 0);
  CHECK(edit_distance("ACDE", "ADE") == 1);
  CHECK(edit_distance("KITTEN", "SITTING") == 3);
}

TEST_CASE("edit distance equals the exhaustive recursion on short strings") {
  const std::vector<std::string> all = all_strings("ACD", 5);
  REQUIRE(all.size() == 364);
  std::size_t mismatches = 0;
  for (const auto& a : all)
    for (const auto& b : all) mismatches += edit_distance(a, b) != lev_recursive(a, b);
  CHECK(mismatches == 0);
}

TEST_CASE("edit distance metric axioms on random triples") {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const std::string a = random_string(rng, "ACDEF", 0, 12), b = random_string(rng, "ACDEF", 0, 12),
                      c = random_string(rng, "ACDEF", 0, 12);
    CHECK(edit_distance(a, a) == 0);
    CHECK((edit_distance(a, b) == 0) == (a == b));
    CHECK(edit_distance(a, b) == edit_distance(b, a));
    CHECK(edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c));
  }
}

TEST_CASE("edit distance matrix") {
  Rng rng(2);
  std::vector<std::string> a, b;
  for (int i = 0; i < 7; ++i) a.push_back(random_string(rng, "ACDE", 1, 9));
  for (int i = 0; i < 5; ++i) b.push_back(random_string(rng, "ACDE", 1, 9));
  const auto m = edit_distance_matrix(a, b);
  REQUIRE(m.size() == 35);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(m[i * 5 + j] == edit_distance(a[i], b[j]));
}

TEST_CASE("diversity and novelty") {
  CHECK(int_div({"ACD", "ACD", "ACD"}) == 0.0);
  CHECK(int_div({"A", "C"}) == 1.0);
  CHECK(int_div({"A", "AC", "ACD"}) == doctest::Approx(4.0 / 3.0));
  CHECK(code_of([] { int_div({"A"}); }) == Errc::kTooFewSequences);

  CHECK(mean_edit_to_reference({"ACD"}, {"ACD"}) == 0.0);
  CHECK(mean_edit_to_reference({"A"}, {"C", "G"}) == 1.0);
  Rng rng(3);
  std::vector<std::string> g, r;
  for (int i = 0; i < 3; ++i) g.push_back(random_string(rng, "ACDEFG", 1, 8)), r.push_back(random_string(rng, "ACDEFG", 1, 8));
  double direct = 0;
  for (const auto& x : g) {
    double row = 0;
    for (const auto& y : r) row += static_cast<double>(edit_distance(x, y));
    direct += row / 3.0;
  }
  CHECK(mean_edit_to_reference(g, r) == doctest::Approx(direct / 3.0).epsilon(1e-14));
  CHECK(code_of([] { mean_edit_to_reference({}, {"A"}); }) == Errc::kEmptyInput);

  CHECK(uniqueness({"A", "C", "D"}) == 1.0);
  CHECK(uniqueness({"A", "A"}) == 0.5);
  CHECK(uniqueness({"A", "A", "C", "G"}) == 0.75);
  CHECK(code_of([] { uniqueness({}); }) == Errc::kEmptyInput);
}

TEST_CASE("frechet distance closed forms") {
  Rng rng(4);
  const Matrix x = gaussian(rng, 50, 4);
  CHECK(std::abs(frechet_distance(x, x)) < 1e-8);

  const std::vector<double> m0{0.0}, m1{1.0};
  const Matrix one = Matrix::from_rows({{1.0}});
  CHECK(frechet_from_moments(m0, one, m1, one) == doctest::Approx(1.0).epsilon(1e-12));

  // 1-D samples: |dmu|^2 + (s1 - s2)^2 with the sample (n - 1) variance.
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = gaussian(rng, 30, 1), b = gaussian(rng, 40, 1);
    for (double& v : b.values()) v = 2.0 * v + 0.7;
    auto moments = [](const Matrix& m) {
      double mu = 0;
      for (double v : m.values()) mu += v;
      mu /= static_cast<double>(m.rows());
      double var = 0;
      for (double v : m.values()) var += (v - mu) * (v - mu);
      return std::pair{mu, std::sqrt(var / static_cast<double>(m.rows() - 1))};
    };
    const auto [ma, sa] = moments(a);
    const auto [mb, sb] = moments(b);
    CHECK(std::abs(frechet_distance(a, b) - ((ma - mb) * (ma - mb) + (sa - sb) * (sa - sb))) < 1e-8);
    CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-12));
  }

  CHECK(code_of([&] { frechet_distance(gaussian(rng, 5, 2), gaussian(rng, 5, 3)); }) == Errc::kDimensionMismatch);
  CHECK(code_of([&] { frechet_distance(gaussian(rng, 1, 2), gaussian(rng, 5, 2)); }) == Errc::kTooFewSamples);
}

TEST_CASE("frechet distance on planted three-dimensional moments") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s1 = random_spd(rng, 3), s2 = random_spd(rng, 3);
    const std::vector<double> mu1{rng.normal(), rng.normal(), rng.normal()};
    const std::vector<double> mu2{rng.normal(), rng.normal(), rng.normal()};
    // tr sqrt(S1 S2) is the sum of square roots of the (positive) eigenvalues of S1 S2.
    const std::array<double, 3> ev = cubic_eigenvalues(matmul(s1, s2));
    double tr_sqrt = 0;
    for (double e : ev) tr_sqrt += std::sqrt(e);
    double dmu = 0;
    for (int i = 0; i < 3; ++i) dmu += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
    const double expected = dmu + trace(s1) + trace(s2) - 2 * tr_sqrt;
    CHECK(std::abs(frechet_from_moments(mu1, s1, mu2, s2) - expected) < 1e-6);
  }
}

TEST_CASE("mmd") {
  Rng rng(6);
  const Matrix x = gaussian(rng, 20, 3);
  Matrix px(20, 3);
  for (std::size_t i = 0; i < 20; ++i) std::copy_n(x.row((i * 7) % 20).data(), 3, px.row(i).data());
  CHECK(std::abs(mmd_rbf(x, px, 1.3)) < 1e-12);

  const double sigma = 0.8;
  const Matrix a = Matrix::from_rows({{0.0, 0.0}});
  const Matrix b = Matrix::from_rows({{sigma, sigma}});
  CHECK(mmd_rbf(a, b, sigma) == doctest::Approx(2 - 2 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(mmd_rbf(a, b, sigma) == doctest::Approx(1.2642).epsilon(1e-4));

  for (int trial = 0; trial < 10; ++trial) {
    const Matrix p = gaussian(rng, 15, 4), q = gaussian(rng, 15, 4);
    const double s = 0.5 + rng.uniform();
    CHECK(std::abs(mmd_rbf(p, q, s) - naive_mmd(p, q, s)) < 1e-12);
  }

  CHECK(code_of([&] { mmd_rbf(gaussian(rng, 3, 2), gaussian(rng, 4, 2), 1.0); }) == Errc::kUnequalSizes);
  CHECK(code_of([&] { mmd_rbf(x, x, 0.0); }) == Errc::kBadBandwidth);
  CHECK(code_of([&] { mmd_rbf(x, x, -1.0); }) == Errc::kBadBandwidth);
}

TEST_CASE("mmd separates shifted gaussians") {
  Rng rng(7);
  const Matrix p = gaussian(rng, 500, 1), p2 = gaussian(rng, 500, 1);
  Matrix q = gaussian(rng, 500, 1);
  for (double& v : q.values()) v += 3.0;
  const double baseline = mmd_rbf_median(p, p2);
  const double shifted = mmd_rbf_median(p, q);
  CHECK(shifted > 10 * baseline);
}

TEST_CASE("median bandwidth") {
  const Matrix x = Matrix::from_rows({{0.0}, {1.0}});
  const Matrix y = Matrix::from_rows({{3.0}});
  // Pairwise distances 1, 3, 2.
  CHECK(median_bandwidth(x, y) == 2.0);
}

TEST_CASE("hungarian and OT over edit distances") {
  const std::vector<double> c{4, 1, 3, 2, 0, 5, 3, 2, 2};
  const Assignment a = hungarian(c, 3);
  CHECK(a.cost == 5.0);
  double check = 0;
  for (std::size_t i = 0; i < 3; ++i) check += c[i * 3 + a.column_of_row[i]];
  CHECK(check == a.cost);

  CHECK(ot_levenshtein({"A", "CC"}, {"CC", "A"}) == 0.0);
  CHECK(ot_levenshtein({"ACD", "EFG", "HIK"}, {"HIK", "ACD", "EFG"}) == 0.0);
  CHECK(code_of([] { ot_levenshtein({"A"}, {"A", "C"}); }) == Errc::kUnequalSizes);
  CHECK(code_of([] { ot_levenshtein({"A", "C", "D"}, {"A", "C", "D"}, 2); }) == Errc::kBatchTooLarge);
}

TEST_CASE("OT equals the brute-force permutation minimum") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(6);
    std::vector<std::string> a, b;
    for (std::size_t i = 0; i < n; ++i) a.push_back(random_string(rng, "ACDE", 1, 8)), b.push_back(random_string(rng, "ACDE", 1, 8));
    std::vector<double> cost;
    for (const auto& x : a)
      for (const auto& y : b) cost.push_back(static_cast<double>(edit_distance(x, y)));
    const double brute = brute_force_assignment(cost, n);
    CHECK(hungarian(cost, n).cost == brute);
    CHECK(ot_levenshtein(a, b) == brute / static_cast<double>(n));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(6);
    std::vector<double> cost;
    for (std::size_t i = 0; i < n * n; ++i) cost.push_back(rng.uniform() * 10 - 3);
    CHECK(hungarian(cost, n).cost == doctest::Approx(brute_force_assignment(cost, n)).epsilon(1e-12));
  }
}

TEST_CASE("property calculators") {
  const PropertyVector g = property_vector("G");
  CHECK(g.length == 1.0);
  CHECK(std::abs(g.molecular_weight - 75.0669) < 5e-4);
  CHECK(property_vector("GG").molecular_weight == doctest::Approx(2 * g.molecular_weight - 18.01528).epsilon(1e-12));
  CHECK(property_vector("FWY").aromaticity == 1.0);
  CHECK(property_vector("FAAA").aromaticity == 0.25);
  CHECK(property_vector("A").gravy == doctest::Approx(1.8));
  CHECK(property_vector("AR").gravy == doctest::Approx((1.8 - 4.5) / 2));
  CHECK_THROWS_AS(property_vector("AXA"), UnknownResidue);

  // Half-ionization: side-chain contribution at its own pKa, termini cancelled by a blank peptide.
  const std::vector<std::pair<char, double>> acids{{'D', 4.05}, {'E', 4.45}, {'C', 9.0}, {'Y', 10.0}};
  const std::vector<std::pair<char, double>> bases{{'K', 10.0}, {'R', 12.0}, {'H', 5.98}};
  for (auto [r, pka] : acids) {
    const std::string s = std::string("A") + r + "A";
    CHECK(charge_at_ph(s, pka) - charge_at_ph("AAA", pka) == doctest::Approx(-0.5).epsilon(1e-12));
  }
  for (auto [r, pka] : bases) {
    const std::string s = std::string("A") + r + "A";
    CHECK(charge_at_ph(s, pka) - charge_at_ph("AAA", pka) == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK(charge_at_ph("A", 9.0) == doctest::Approx(0.5 - 1.0 / (1.0 + std::pow(10.0, 2.0 - 9.0))).epsilon(1e-12));

  for (const char* s : {"ACDEFGHIK", "KKKKR", "DDEE", "G", "HHH"}) {
    const double pi = isoelectric_point(s);
    CHECK(pi >= 0.0);
    CHECK(pi <= 14.0);
    CHECK(std::abs(charge_at_ph(s, pi)) < 1e-3);
  }
  CHECK(isoelectric_point("KKKK") > 9.0);
  CHECK(isoelectric_point("DDDD") < 4.0);

  const PropertyVector p = property_vector("ACDK");
  const auto v = p.values();
  CHECK(v[0] == 4.0);
  CHECK(v[5] == p.charge_ph7);
  CHECK(PropertyVector::names()[1] == "molecular_weight");
}

TEST_CASE("one-dimensional wasserstein") {
  CHECK(wasserstein_1d({0.0}, {1.0}) == 1.0);
  CHECK(wasserstein_1d({0.0, 1.0}, {0.0, 1.0}) == 0.0);
  CHECK(wasserstein_1d({0.0, 0.0}, {1.0}) == 1.0);
  CHECK(wasserstein_1d({0.0, 2.0}, {1.0}) == 1.0);
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(6);
    std::vector<double> a, b, cost;
    for (std::size_t i = 0; i < n; ++i) a.push_back(rng.normal()), b.push_back(rng.normal());
    for (double x : a)
      for (double y : b) cost.push_back(std::abs(x - y));
    CHECK(wasserstein_1d(a, b) == doctest::Approx(hungarian(cost, n).cost / static_cast<double>(n)).epsilon(1e-12));
  }
  // Unequal sizes: CDF integral on a hand example. F_a jumps 1/2 at 0 and 1; F_b jumps 1/3 at 0, 2, 3.
  CHECK(wasserstein_1d({0.0, 1.0}, {0.0, 2.0, 3.0}) == doctest::Approx(1.0 / 6 + 2.0 / 3 + 1.0 / 3));
  CHECK_THROWS(wasserstein_1d({}, {1.0}));
}

TEST_CASE("property wasserstein") {
  Rng rng(10);
  std::vector<std::string> gen, ref;
  for (int i = 0; i < 30; ++i) gen.push_back(random_string(rng, "ACDEFGHIKLMNPQRSTVWY", 3, 20));
  for (int i = 0; i < 25; ++i) ref.push_back(random_string(rng, "ACDEFGHIKLMNPQRSTVWY", 3, 20));
  CHECK(w_property(gen, gen).value == 0.0);
  const WPropertyResult r = w_property(gen, ref);
  CHECK(r.value > 0.0);
  CHECK(r.value <= 1.0);
  CHECK(r.skipped.empty());

  const WPropertyResult same_len = w_property({"AAAA", "CCCC"}, {"DDDD"});
  CHECK(std::find(same_len.skipped.begin(), same_len.skipped.end(), "length") != same_len.skipped.end());
  CHECK(code_of([&] { w_property({}, ref); }) == Errc::kEmptyInput);
}

TEST_CASE("min-max normalisation absorbs a shared affine map") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a, b;
    for (int i = 0; i < 10; ++i) a.push_back(rng.normal());
    for (int i = 0; i < 7; ++i) b.push_back(rng.normal() + 0.5);
    auto normalised = [](std::vector<double> x, std::vector<double> y, double scale, double shift) {
      for (double& v : x) v = scale * v + shift;
      for (double& v : y) v = scale * v + shift;
      const double lo = std::min(*std::min_element(x.begin(), x.end()), *std::min_element(y.begin(), y.end()));
      const double hi = std::max(*std::max_element(x.begin(), x.end()), *std::max_element(y.begin(), y.end()));
      for (double& v : x) v = (v - lo) / (hi - lo);
      for (double& v : y) v = (v - lo) / (hi - lo);
      return wasserstein_1d(x, y);
    };
    CHECK(normalised(a, b, 1.0, 0.0) == doctest::Approx(normalised(a, b, 37.5, -12.0)).epsilon(1e-12));
  }
}

TEST_CASE("pseudoperplexity") {
  const UniformScorer uniform;
  CHECK(pseudoperplexity("ACDEFGHIK", uniform) == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(pseudoperplexity("W", uniform) == doctest::Approx(20.0).epsilon(1e-14));

  struct Oracle : MaskedScorer {
    std::array<double, 20> score(std::string_view seq, std::size_t pos) const override {
      std::array<double, 20> p{};
      p[static_cast<std::size_t>(Vocabulary::index(seq[pos]))] = 1.0;
      return p;
    }
  } oracle;
  CHECK(pseudoperplexity("ACDEF", oracle) == 1.0);

  struct Never : MaskedScorer {
    std::array<double, 20> score(std::string_view, std::size_t) const override { return {}; }
  } never;
  CHECK(pseudoperplexity("A", never) == doctest::Approx(1e12));
  CHECK(code_of([&] { pseudoperplexity("", uniform); }) == Errc::kEmptySequence);

  Rng rng(12);
  std::vector<std::string> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(random_string(rng, "AAAAKKLE", 10, 30));
  const UnigramScorer unigram(corpus);
  const BigramScorer bigram(corpus);
  for (const MaskedScorer* s : std::initializer_list<const MaskedScorer*>{&unigram, &bigram}) {
    for (std::size_t pos : {0, 3}) {
      const auto p = s->score("AKLEAK", pos);
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  double in = 0, rand = 0;
  for (int t = 0; t < 100; ++t) {
    in += pseudoperplexity(corpus[t], unigram);
    rand += pseudoperplexity(random_string(rng, "ACDEFGHIKLMNPQRSTVWY", 10, 30), unigram);
  }
  CHECK(in < rand);
  double in_bi = 0;
  for (int t = 0; t < 100; ++t) in_bi += pseudoperplexity(corpus[t], bigram);
  CHECK(in_bi < rand);
}

TEST_CASE("threshold proportion") {
  const std::vector<double> ones{1.0, 1.0};
  CHECK(threshold_proportion(ones, 0.8) == 1.0);
  const std::vector<double> mixed{0.9, 0.7};
  CHECK(threshold_proportion(mixed, 0.8) == 0.5);
  const std::vector<double> at{0.8, 0.8, 0.81};
  CHECK(threshold_proportion(at, 0.8) == doctest::Approx(1.0 / 3.0));
  CHECK(code_of([] { threshold_proportion({}, 0.5); }) == Errc::kEmptyInput);
}

TEST_CASE("mean pooled embeddings") {
  Rng rng(13);
  const Encoder enc(4, 5, rng);
  const Matrix e = mean_pooled_embeddings(enc, {"AC", "W"});
  CHECK(e.rows() == 2);
  const Matrix h = enc.encode(tokenize("AC"));
  for (std::size_t c = 0; c < 4; ++c) CHECK(e(0, c) == doctest::Approx((h(0, c) + h(1, c)) / 2));
}
