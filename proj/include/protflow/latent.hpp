#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "protflow/nn.hpp"
#include "protflow/numeric.hpp"
#include "protflow/seqio.hpp"

namespace protflow {

/// Fixed sin/cos table: row i, column 2k is sin(i / 10000^(2k/D)), column
/// 2k+1 the matching cosine.
Matrix sinusoidal_table(std::size_t rows, std::size_t dim);

/// Toy stand-in for a protein language model: h[i] = embed[token_i] + pos[i].
class Encoder {
 public:
  Encoder() = default;
  Encoder(std::size_t dim, std::size_t max_length, Rng& rng);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t max_length() const noexcept { return max_length_; }

  /// One row per token (PAD rows included).
  Matrix encode(const TokenizedSequence& ts) const;
  void encode_row(TokenId token, std::size_t position, std::span<double> out) const;

  nn::Param& embedding() { return embed_; }
  const nn::Param& embedding() const { return embed_; }
  const Matrix& positions() const noexcept { return positions_; }
  nn::ParamList params() { return {&embed_}; }

 private:
  std::size_t dim_ = 0;
  std::size_t max_length_ = 0;
  nn::Param embed_;
  Matrix positions_;
};

/// Dense -> GELU -> LayerNorm -> projection to 21 logits, applied per position.
class Decoder {
 public:
  Decoder() = default;
  Decoder(std::size_t dim, Rng& rng);

  std::size_t dim() const noexcept { return dim_; }
  nn::Var forward(nn::Tape& tape, nn::Var h);
  Matrix logits(const Matrix& h) const;
  nn::ParamList params() { return {&dense_w_, &dense_b_, &norm_gain_, &norm_bias_, &out_w_, &out_b_}; }

 private:
  std::size_t dim_ = 0;
  nn::Param dense_w_, dense_b_, norm_gain_, norm_bias_, out_w_, out_b_;
};

/// Argmax decoding. Inside the mask only the 20 residues compete (ties go to
/// the lowest id); outside the mask the token is PAD.
TokenizedSequence decode(const Matrix& h, const std::vector<bool>& mask, const Decoder& dec);

// ---------------------------------------------------------------------------

struct SmoothingStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;  // dimensions passed through unchanged
  double clamp_k = 3.0;
  std::vector<double> zmin;  // post-clamp extrema of the fitted corpus
  std::vector<double> zmax;

  std::size_t dim() const noexcept { return mean.size(); }
};

/// Calls its sink once per embedding; must replay the same stream each call.
using EmbeddingSource = std::function<void(const std::function<void(const Matrix&)>& sink)>;

/// Per-dimension z-score statistics pooled over every row of every
/// embedding, then post-clamp extrema for the min-max stage.
SmoothingStats fit_smoothing(const EmbeddingSource& source, double clamp_k = 3.0);
SmoothingStats fit_smoothing(const std::vector<Matrix>& corpus, double clamp_k = 3.0);

/// z-score, clamp to +-k, min-max into [-1, 1].
Matrix smooth(const Matrix& h, const SmoothingStats& stats);
void smooth_row(std::span<double> row, const SmoothingStats& stats);
/// Inverse of smooth for values that were not clamped.
Matrix unsmooth(const Matrix& hs, const SmoothingStats& stats);

// ---------------------------------------------------------------------------

/// Per-position compressor/decompressor pair. Compression:
///   x = h_s + in_pos[i];  x = x + mlp_in(x);  h_c = tanh(x W_down + b)
/// Decompression:
///   u = h_c W_up + b;  u = u + mlp_out(u);  h_s' = u + out_pos[i]
/// The positional tables let a position-blind projection spend its whole
/// budget on residue identity.
class Compressor {
 public:
  Compressor() = default;
  /// Random projections, zero residual branches and positional tables.
  Compressor(std::size_t dim, std::size_t ratio, std::size_t max_length, Rng& rng);
  /// Identity projections: only valid for ratio 1.
  static Compressor identity(std::size_t dim, std::size_t max_length);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t ratio() const noexcept { return ratio_; }
  std::size_t width() const noexcept { return dim_ / ratio_; }
  std::size_t max_length() const noexcept { return max_length_; }

  nn::Var compress(nn::Tape& tape, nn::Var hs, const std::vector<std::size_t>& positions);
  nn::Var decompress(nn::Tape& tape, nn::Var hc, const std::vector<std::size_t>& positions);

  /// Whole sequences, row i at position i.
  Matrix compress(const Matrix& hs) const;
  Matrix decompress(const Matrix& hc) const;

  nn::ParamList params();

 private:
  std::size_t dim_ = 0, ratio_ = 1, max_length_ = 0;
  nn::Param in_pos_, in_w1_, in_b1_, in_w2_, in_b2_, down_w_, down_b_;
  nn::Param up_w_, up_b_, out_w1_, out_b1_, out_w2_, out_b2_, out_pos_;
};

/// Shape-checked construction; throws IncompatibleRatio unless ratio divides dim.
void check_ratio(std::size_t dim, std::size_t ratio);

/// Everything between a residue string and its flow-space latent.
struct LatentPipeline {
  Encoder encoder;
  Decoder decoder;
  SmoothingStats stats;
  Compressor compressor;

  std::size_t max_length() const noexcept { return encoder.max_length(); }
  std::size_t latent_width() const noexcept { return compressor.width(); }

  /// Padded sequence -> L_max x (D/c) latent.
  Matrix to_latent(const TokenizedSequence& padded) const;
  /// Latent -> decompress -> unsmooth -> decode under `mask`.
  TokenizedSequence from_latent(const Matrix& hc, const std::vector<bool>& mask) const;
};

// ---------------------------------------------------------------------------

struct LatentTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_rows = 256;
  double lr = 3e-3;
  double lr_min = 1e-4;
  std::size_t warmup = 100;
  double weight_decay = 0.001;
  double beta2 = 0.98;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct LatentTrainReport {
  std::vector<double> loss_trace;
  std::vector<double> lr_trace;
  std::vector<double> grad_norm_trace;
  double heldout_token_accuracy = 0.0;
  double heldout_sequence_accuracy = 0.0;
  double heldout_mse = 0.0;  // compressor only
};

/// Cross-entropy over residue positions with the encoder frozen.
/// `corpus` holds sequences padded to the encoder's max_length; the last
/// holdout_fraction of it is held out for the accuracy report.
LatentTrainReport train_decoder(const std::vector<TokenizedSequence>& corpus,
                                const Encoder& encoder, Decoder& decoder,
                                const LatentTrainConfig& config);

/// MSE between h_s and its compress/decompress reconstruction, over every
/// position (PAD rows included), with encoder, decoder and stats frozen.
LatentTrainReport train_compressor(const std::vector<TokenizedSequence>& corpus,
                                   const LatentPipeline& frozen, Compressor& compressor,
                                   const LatentTrainConfig& config);

struct ReconstructionScore {
  double token_accuracy = 0.0;
  double sequence_accuracy = 0.0;
};

/// Residue-level and whole-sequence recovery of decode after the full
/// latent round trip (or decode(encode(x)) when through_compressor is false).
ReconstructionScore reconstruction_accuracy(const std::vector<TokenizedSequence>& corpus,
                                            const LatentPipeline& pipeline,
                                            bool through_compressor);

}  // namespace protflow
