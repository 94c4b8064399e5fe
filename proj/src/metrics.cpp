#include "protflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>
#include <thread>
#include <unordered_set>

#include "protflow/error.hpp"
#include "protflow/seqio.hpp"

namespace protflow {

double shannon_entropy(std::string_view seq) {
  if (seq.empty()) throw Error(Errc::kEmptySequence, "entropy of an empty sequence");
  std::array<std::size_t, 256> counts{};
  for (char c : seq) ++counts[static_cast<unsigned char>(c)];
  const double n = static_cast<double>(seq.size());
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

namespace {

std::set<std::string_view> kmers(const std::vector<std::string>& corpus, std::size_t k) {
  std::set<std::string_view> out;
  for (const auto& s : corpus)
    for (std::size_t i = 0; i + k <= s.size(); ++i) out.insert(std::string_view(s).substr(i, k));
  return out;
}

}  // namespace

JaccardResult kmer_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           std::size_t k) {
  if (k == 0) throw Error(Errc::kInvalidArgument, "k must be at least 1");
  const auto sa = kmers(a, k), sb = kmers(b, k);
  if (sa.empty() && sb.empty()) return {0.0, true};
  std::size_t inter = 0;
  for (const auto& x : sa) inter += sb.count(x);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return {static_cast<double>(inter) / static_cast<double>(uni), false};
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

namespace {

std::size_t thread_budget(std::size_t work_rows) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PROTFLOW_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, std::min(n, work_rows / 16));
}

}  // namespace

std::vector<std::uint32_t> edit_distance_matrix(const std::vector<std::string>& a,
                                                const std::vector<std::string>& b) {
  std::vector<std::uint32_t> out(a.size() * b.size());
  auto fill = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < a.size(); i += stride)
      for (std::size_t j = 0; j < b.size(); ++j)
        out[i * b.size() + j] = static_cast<std::uint32_t>(edit_distance(a[i], b[j]));
  };
  const std::size_t threads = thread_budget(a.size());
  if (threads == 1) {
    fill(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(fill, t, threads);
  for (auto& th : pool) th.join();
  return out;
}

double int_div(const std::vector<std::string>& batch) {
  if (batch.size() < 2) throw Error(Errc::kTooFewSequences, "int_div needs at least 2 sequences");
  const auto d = edit_distance_matrix(batch, batch);
  const std::size_t n = batch.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sum += d[i * n + j];
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double mean_edit_to_reference(const std::vector<std::string>& batch,
                              const std::vector<std::string>& reference) {
  if (batch.empty() || reference.empty()) throw Error(Errc::kEmptyInput, "mean_edit_to_reference");
  const auto d = edit_distance_matrix(batch, reference);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < reference.size(); ++j) row += d[i * reference.size() + j];
    total += row / static_cast<double>(reference.size());
  }
  return total / static_cast<double>(batch.size());
}

double uniqueness(const std::vector<std::string>& batch) {
  if (batch.empty()) throw Error(Errc::kEmptyInput, "uniqueness of an empty batch");
  const std::unordered_set<std::string> distinct(batch.begin(), batch.end());
  return static_cast<double>(distinct.size()) / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------

double frechet_from_moments(std::span<const double> mu1, const Matrix& s1, std::span<const double> mu2,
                            const Matrix& s2) {
  const std::size_t d = mu1.size();
  if (mu2.size() != d || s1.rows() != d || s1.cols() != d || s2.rows() != d || s2.cols() != d) {
    throw Error(Errc::kDimensionMismatch, "frechet distance moments disagree in dimension");
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) mean_term += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
  const Matrix r1 = psd_sqrt(s1);
  Matrix m = matmul(matmul(r1, s2), r1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) m(i, j) = m(j, i) = 0.5 * (m(i, j) + m(j, i));
  const double value = mean_term + trace(s1) + trace(s2) - 2.0 * trace(psd_sqrt(m));
  return (value < 0.0 && value > -1e-8) ? 0.0 : value;
}

double frechet_distance(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw Error(Errc::kDimensionMismatch, "embedding widths " + std::to_string(x.cols()) + " and " +
                                              std::to_string(y.cols()));
  }
  const Moments a = mean_cov(x), b = mean_cov(y);
  return frechet_from_moments(a.mean, a.cov, b.mean, b.cov);
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

double median_bandwidth(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) throw Error(Errc::kDimensionMismatch, "median bandwidth");
  std::vector<std::span<const double>> rows;
  for (std::size_t i = 0; i < x.rows(); ++i) rows.push_back(x.row(i));
  for (std::size_t i = 0; i < y.rows(); ++i) rows.push_back(y.row(i));
  std::vector<double> d;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) d.push_back(std::sqrt(sq_dist(rows[i], rows[j])));
  if (d.empty()) throw Error(Errc::kBadBandwidth, "median heuristic needs at least two points");
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + mid, d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + mid));
  if (!(med > 0.0)) throw Error(Errc::kBadBandwidth, "median pairwise distance is zero");
  return med;
}

double mmd_rbf(const Matrix& x, const Matrix& y, double sigma) {
  if (x.rows() != y.rows()) {
    throw Error(Errc::kUnequalSizes, "mmd needs equal sample sizes, got " + std::to_string(x.rows()) +
                                         " and " + std::to_string(y.rows()));
  }
  if (x.cols() != y.cols()) throw Error(Errc::kDimensionMismatch, "mmd sample widths differ");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(Errc::kBadBandwidth, "bandwidth must be positive");
  if (x.rows() == 0) throw Error(Errc::kEmptyInput, "mmd of empty samples");
  const std::size_t n = x.rows();
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      sum += std::exp(-sq_dist(x.row(i), x.row(j)) * inv) + std::exp(-sq_dist(y.row(i), y.row(j)) * inv) -
             2.0 * std::exp(-sq_dist(x.row(i), y.row(j)) * inv);
    }
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n));
}

double mmd_rbf_median(const Matrix& x, const Matrix& y) { return mmd_rbf(x, y, median_bandwidth(x, y)); }

// ---------------------------------------------------------------------------

Assignment hungarian(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw Error(Errc::kShapeMismatch, "cost matrix is not n x n");
  Assignment out;
  if (n == 0) return out;
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials and matching are 1-based; column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.column_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.column_of_row[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) out.cost += cost[i * n + out.column_of_row[i]];
  return out;
}

double ot_levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t cap) {
  if (a.size() != b.size()) {
    throw Error(Errc::kUnequalSizes, "ot needs equal batch sizes, got " + std::to_string(a.size()) + " and " +
                                         std::to_string(b.size()));
  }
  if (a.empty()) throw Error(Errc::kEmptyInput, "ot of empty batches");
  if (a.size() > cap) {
    throw Error(Errc::kBatchTooLarge, "batch of " + std::to_string(a.size()) + " exceeds cap " + std::to_string(cap));
  }
  const auto d = edit_distance_matrix(a, b);
  const std::vector<double> cost(d.begin(), d.end());
  return hungarian(cost, a.size()).cost / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------

namespace {

// Average free amino-acid masses (Da), Biopython IUPAC average weights.
constexpr std::array<double, 20> kMass = {
    89.0932,  121.1582, 133.1027, 147.1293, 165.1891, 75.0666,  155.1546,
    131.1729, 146.1876, 131.1729, 149.2113, 132.1179, 115.1305, 146.1445,
    174.201,  105.0926, 119.1192, 117.1463, 204.2252, 181.1885};
constexpr double kWater = 18.01528;

// Kyte-Doolittle hydropathy.
constexpr std::array<double, 20> kHydropathy = {1.8,  2.5,  -3.5, -3.5, 2.8,  -0.4, -3.2, 4.5,  -3.9, 3.8,
                                                1.9,  -3.5, -1.6, -3.5, -4.5, -0.8, -0.7, 4.2,  -0.9, -1.3};

// pKa values, Biopython IsoelectricPoint base table.
constexpr double kPkNterm = 9.0;
constexpr double kPkCterm = 2.0;
constexpr double kPkK = 10.0, kPkR = 12.0, kPkH = 5.98;
constexpr double kPkD = 4.05, kPkE = 4.45, kPkC = 9.0, kPkY = 10.0;

std::array<std::size_t, 20> residue_counts(std::string_view seq) {
  std::array<std::size_t, 20> counts{};
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const TokenId t = Vocabulary::index(seq[i]);
    if (t < 0) throw UnknownResidue(i, seq[i]);
    ++counts[static_cast<std::size_t>(t)];
  }
  return counts;
}

std::size_t count_of(const std::array<std::size_t, 20>& counts, char r) {
  return counts[static_cast<std::size_t>(Vocabulary::index(r))];
}

double positive(double pk, double ph) { return 1.0 / (1.0 + std::pow(10.0, ph - pk)); }
double negative(double pk, double ph) { return 1.0 / (1.0 + std::pow(10.0, pk - ph)); }

double charge_from_counts(const std::array<std::size_t, 20>& c, double ph) {
  double q = positive(kPkNterm, ph) - negative(kPkCterm, ph);
  q += static_cast<double>(count_of(c, 'K')) * positive(kPkK, ph);
  q += static_cast<double>(count_of(c, 'R')) * positive(kPkR, ph);
  q += static_cast<double>(count_of(c, 'H')) * positive(kPkH, ph);
  q -= static_cast<double>(count_of(c, 'D')) * negative(kPkD, ph);
  q -= static_cast<double>(count_of(c, 'E')) * negative(kPkE, ph);
  q -= static_cast<double>(count_of(c, 'C')) * negative(kPkC, ph);
  q -= static_cast<double>(count_of(c, 'Y')) * negative(kPkY, ph);
  return q;
}

double pi_from_counts(const std::array<std::size_t, 20>& c) {
  double lo = 0.0, hi = 14.0;
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    if (charge_from_counts(c, mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

const std::array<std::string_view, PropertyVector::kCount>& PropertyVector::names() {
  static const std::array<std::string_view, kCount> n = {
      "length", "molecular_weight", "aromaticity", "gravy", "charge_ph6", "charge_ph7", "isoelectric_point"};
  return n;
}

std::array<double, PropertyVector::kCount> PropertyVector::values() const {
  return {length, molecular_weight, aromaticity, gravy, charge_ph6, charge_ph7, isoelectric_point};
}

double charge_at_ph(std::string_view seq, double ph) {
  if (seq.empty()) throw Error(Errc::kEmptySequence, "charge of an empty sequence");
  return charge_from_counts(residue_counts(seq), ph);
}

double isoelectric_point(std::string_view seq) {
  if (seq.empty()) throw Error(Errc::kEmptySequence, "pI of an empty sequence");
  return pi_from_counts(residue_counts(seq));
}

PropertyVector property_vector(std::string_view seq) {
  if (seq.empty()) throw Error(Errc::kEmptySequence, "properties of an empty sequence");
  const auto c = residue_counts(seq);
  PropertyVector p;
  const double n = static_cast<double>(seq.size());
  p.length = n;
  double mass = 0.0, hyd = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    mass += static_cast<double>(c[i]) * kMass[i];
    hyd += static_cast<double>(c[i]) * kHydropathy[i];
  }
  p.molecular_weight = mass - (n - 1.0) * kWater;
  p.aromaticity = static_cast<double>(count_of(c, 'F') + count_of(c, 'W') + count_of(c, 'Y')) / n;
  p.gravy = hyd / n;
  p.charge_ph6 = charge_from_counts(c, 6.0);
  p.charge_ph7 = charge_from_counts(c, 7.0);
  p.isoelectric_point = pi_from_counts(c);
  return p;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(Errc::kEmptyInput, "wasserstein of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // Integral of |F_a - F_b| over the merged support.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a.front(), b.front());
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    while (i < a.size() && a[i] == next) ++i;
    while (j < b.size() && b[j] == next) ++j;
    prev = next;
  }
  return total;
}

WPropertyResult w_property(const std::vector<std::string>& gen, const std::vector<std::string>& ref) {
  if (gen.empty() || ref.empty()) throw Error(Errc::kEmptyInput, "w_property needs both batches");
  std::vector<std::array<double, PropertyVector::kCount>> g, r;
  for (const auto& s : gen) g.push_back(property_vector(s).values());
  for (const auto& s : ref) r.push_back(property_vector(s).values());
  WPropertyResult out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < PropertyVector::kCount; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : g) lo = std::min(lo, v[k]), hi = std::max(hi, v[k]);
    for (const auto& v : r) lo = std::min(lo, v[k]), hi = std::max(hi, v[k]);
    if (!(hi > lo)) {
      out.skipped.emplace_back(PropertyVector::names()[k]);
      continue;
    }
    std::vector<double> a, b;
    for (const auto& v : g) a.push_back((v[k] - lo) / (hi - lo));
    for (const auto& v : r) b.push_back((v[k] - lo) / (hi - lo));
    sum += wasserstein_1d(std::move(a), std::move(b));
    ++used;
  }
  out.value = used ? sum / static_cast<double>(used) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

std::array<double, 20> UniformScorer::score(std::string_view, std::size_t) const {
  std::array<double, 20> p;
  p.fill(1.0 / 20.0);
  return p;
}

UnigramScorer::UnigramScorer(const std::vector<std::string>& corpus) {
  std::array<double, 20> counts;
  counts.fill(1.0);
  for (const auto& s : corpus) {
    const auto c = residue_counts(s);
    for (std::size_t i = 0; i < 20; ++i) counts[i] += static_cast<double>(c[i]);
  }
  double total = 0.0;
  for (double c : counts) total += c;
  for (std::size_t i = 0; i < 20; ++i) probs_[i] = counts[i] / total;
}

std::array<double, 20> UnigramScorer::score(std::string_view, std::size_t) const { return probs_; }

BigramScorer::BigramScorer(const std::vector<std::string>& corpus) : unigram_(UnigramScorer(corpus).score("", 0)) {
  std::array<std::array<double, 20>, 20> counts;
  for (auto& row : counts) row.fill(1.0);
  for (const auto& s : corpus) {
    residue_counts(s);
    for (std::size_t i = 1; i < s.size(); ++i) {
      counts[static_cast<std::size_t>(Vocabulary::index(s[i - 1]))][static_cast<std::size_t>(Vocabulary::index(s[i]))] += 1.0;
    }
  }
  for (std::size_t a = 0; a < 20; ++a) {
    double total = 0.0;
    for (double c : counts[a]) total += c;
    for (std::size_t b = 0; b < 20; ++b) table_[a][b] = counts[a][b] / total;
  }
}

std::array<double, 20> BigramScorer::score(std::string_view seq, std::size_t position) const {
  if (position == 0) return unigram_;
  const TokenId left = Vocabulary::index(seq[position - 1]);
  if (left < 0) throw UnknownResidue(position - 1, seq[position - 1]);
  return table_[static_cast<std::size_t>(left)];
}

double pseudoperplexity(std::string_view seq, const MaskedScorer& scorer) {
  if (seq.empty()) throw Error(Errc::kEmptySequence, "pseudoperplexity of an empty sequence");
  double nll = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const TokenId t = Vocabulary::index(seq[i]);
    if (t < 0) throw UnknownResidue(i, seq[i]);
    const double p = scorer.score(seq, i)[static_cast<std::size_t>(t)];
    nll -= std::log(std::max(p, 1e-12));
  }
  return std::exp(nll / static_cast<double>(seq.size()));
}

double threshold_proportion(std::span<const double> scores, double threshold) {
  if (scores.empty()) throw Error(Errc::kEmptyInput, "no scores");
  std::size_t above = 0;
  for (double s : scores) above += s > threshold;
  return static_cast<double>(above) / static_cast<double>(scores.size());
}

Matrix mean_pooled_embeddings(const Encoder& encoder, const std::vector<std::string>& seqs) {
  Matrix out(seqs.size(), encoder.dim());
  std::vector<double> row(encoder.dim());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const TokenizedSequence ts = tokenize(seqs[i]);
    if (ts.true_length > encoder.max_length()) throw SequenceTooLong(ts.true_length, encoder.max_length());
    for (std::size_t p = 0; p < ts.true_length; ++p) {
      encoder.encode_row(ts.tokens[p], p, row);
      for (std::size_t c = 0; c < row.size(); ++c) out(i, c) += row[c];
    }
    for (std::size_t c = 0; c < row.size(); ++c) out(i, c) /= static_cast<double>(ts.true_length);
  }
  return out;
}

}  // namespace protflow
