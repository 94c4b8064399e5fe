#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "protflow/latent.hpp"
#include "protflow/numeric.hpp"

namespace protflow {

/// Bits; empirical residue distribution of one sequence.
double shannon_entropy(std::string_view seq);

struct JaccardResult {
  double value = 0.0;
  bool both_empty = false;  // no k-mers on either side; value is 0
};

/// Set Jaccard of the k-mers (all length-k substrings) of two corpora.
JaccardResult kmer_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           std::size_t k);

/// Unit-cost Levenshtein distance.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Row-major |a| x |b| matrix of edit distances. Rows are filled on up to
/// PROTFLOW_THREADS threads; the result does not depend on the thread count.
std::vector<std::uint32_t> edit_distance_matrix(const std::vector<std::string>& a,
                                                const std::vector<std::string>& b);

/// Mean edit distance over unordered distinct pairs.
double int_div(const std::vector<std::string>& batch);
/// For each generated sequence the mean distance to every reference, then the mean of those.
double mean_edit_to_reference(const std::vector<std::string>& batch,
                              const std::vector<std::string>& reference);
double uniqueness(const std::vector<std::string>& batch);

/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
double frechet_from_moments(std::span<const double> mu1, const Matrix& s1, std::span<const double> mu2,
                            const Matrix& s2);
/// Rows are embeddings.
double frechet_distance(const Matrix& x, const Matrix& y);

/// Median pairwise Euclidean distance over the pooled rows of x and y.
double median_bandwidth(const Matrix& x, const Matrix& y);
/// Biased V-statistic with k(a, b) = exp(-|a - b|^2 / (2 sigma^2)); equal row counts.
double mmd_rbf(const Matrix& x, const Matrix& y, double sigma);
double mmd_rbf_median(const Matrix& x, const Matrix& y);

struct Assignment {
  std::vector<std::size_t> column_of_row;
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square row-major cost matrix.
Assignment hungarian(std::span<const double> cost, std::size_t n);

inline constexpr std::size_t kDefaultOtCap = 512;

/// Optimal assignment cost over the edit-distance matrix, divided by n.
double ot_levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b,
                      std::size_t cap = kDefaultOtCap);

struct PropertyVector {
  double length = 0.0;
  double molecular_weight = 0.0;
  double aromaticity = 0.0;
  double gravy = 0.0;
  double charge_ph6 = 0.0;
  double charge_ph7 = 0.0;
  double isoelectric_point = 0.0;

  static constexpr std::size_t kCount = 7;
  static const std::array<std::string_view, kCount>& names();
  std::array<double, kCount> values() const;
};

/// Net Henderson-Hasselbalch charge including both termini.
double charge_at_ph(std::string_view seq, double ph);
double isoelectric_point(std::string_view seq);
PropertyVector property_vector(std::string_view seq);

/// 1-Wasserstein distance between two 1-D empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

struct WPropertyResult {
  double value = 0.0;
  std::vector<std::string> skipped;  // properties constant over gen and ref
};

/// Mean over properties of W1 after joint min-max normalisation.
WPropertyResult w_property(const std::vector<std::string>& gen, const std::vector<std::string>& ref);

/// Distribution over the 20 residues at a masked position.
class MaskedScorer {
 public:
  virtual ~MaskedScorer() = default;
  virtual std::array<double, 20> score(std::string_view seq, std::size_t position) const = 0;
};

class UniformScorer final : public MaskedScorer {
 public:
  std::array<double, 20> score(std::string_view seq, std::size_t position) const override;
};

/// Add-one smoothed residue frequencies of a corpus.
class UnigramScorer final : public MaskedScorer {
 public:
  explicit UnigramScorer(const std::vector<std::string>& corpus);
  std::array<double, 20> score(std::string_view seq, std::size_t position) const override;

 private:
  std::array<double, 20> probs_{};
};

/// Add-one smoothed P(residue | left neighbour); position 0 uses the unigram.
class BigramScorer final : public MaskedScorer {
 public:
  explicit BigramScorer(const std::vector<std::string>& corpus);
  std::array<double, 20> score(std::string_view seq, std::size_t position) const override;

 private:
  std::array<double, 20> unigram_{};
  std::array<std::array<double, 20>, 20> table_{};
};

/// exp(-mean_i log p(x_i | x_{-i})), probabilities floored at 1e-12.
double pseudoperplexity(std::string_view seq, const MaskedScorer& scorer);

/// Fraction of scores strictly above threshold.
double threshold_proportion(std::span<const double> scores, double threshold);

/// One row per sequence: encoder output averaged over residue positions.
Matrix mean_pooled_embeddings(const Encoder& encoder, const std::vector<std::string>& seqs);

}  // namespace protflow
