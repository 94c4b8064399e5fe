#include "protflow/latent.hpp"

#include <algorithm>
#include <cmath>

#include "protflow/error.hpp"

namespace protflow {
namespace {

/// Binds parameters either as trainable leaves or as frozen constants.
struct Binder {
  nn::Tape& tape;
  bool trainable;
  nn::Var operator()(const nn::Param& p) const {
    return trainable ? tape.param(const_cast<nn::Param&>(p)) : tape.constant(p.value);
  }
};

nn::Param zeros(std::string name, std::size_t rows, std::size_t cols) {
  return nn::Param(std::move(name), Matrix(rows, cols));
}

std::vector<std::size_t> iota_positions(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  return p;
}

void check_finite_loss(double loss, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw Error(Errc::kDiverged, "non-finite loss at step " + std::to_string(step));
  }
}

}  // namespace

Matrix sinusoidal_table(std::size_t rows, std::size_t dim) {
  Matrix t(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < dim; ++c) {
      const std::size_t k = c / 2;
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
      const double angle = static_cast<double>(i) * freq;
      t(i, c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

Encoder::Encoder(std::size_t dim, std::size_t max_length, Rng& rng)
    : dim_(dim),
      max_length_(max_length),
      embed_("encoder.embedding", gaussian(rng, Vocabulary::kSize, dim)),
      positions_(sinusoidal_table(max_length, dim)) {}

void Encoder::encode_row(TokenId token, std::size_t position, std::span<double> out) const {
  if (!Vocabulary::valid(token)) {
    throw Error(Errc::kInvalidTokenId, "token " + std::to_string(token));
  }
  if (position >= max_length_) throw SequenceTooLong(position + 1, max_length_);
  auto e = embed_.value.row(static_cast<std::size_t>(token));
  auto p = positions_.row(position);
  for (std::size_t c = 0; c < dim_; ++c) out[c] = e[c] + p[c];
}

Matrix Encoder::encode(const TokenizedSequence& ts) const {
  if (ts.tokens.size() > max_length_) throw SequenceTooLong(ts.tokens.size(), max_length_);
  Matrix h(ts.tokens.size(), dim_);
  for (std::size_t i = 0; i < ts.tokens.size(); ++i) encode_row(ts.tokens[i], i, h.row(i));
  return h;
}

// ---------------------------------------------------------------------------

Decoder::Decoder(std::size_t dim, Rng& rng)
    : dim_(dim),
      dense_w_("decoder.dense.weight", nn::init_weight(rng, dim, dim)),
      dense_b_(zeros("decoder.dense.bias", 1, dim)),
      norm_gain_("decoder.norm.gain", Matrix(1, dim, 1.0)),
      norm_bias_(zeros("decoder.norm.bias", 1, dim)),
      out_w_("decoder.out.weight", nn::init_weight(rng, dim, Vocabulary::kSize)),
      out_b_(zeros("decoder.out.bias", 1, Vocabulary::kSize)) {}

static nn::Var decoder_forward(nn::Tape& tape, nn::Var h, const Binder& bind, const nn::Param& dw,
                               const nn::Param& db, const nn::Param& g, const nn::Param& b,
                               const nn::Param& ow, const nn::Param& ob) {
  nn::Var x = tape.gelu(tape.linear(h, bind(dw), bind(db)));
  x = tape.layer_norm(x, bind(g), bind(b));
  return tape.linear(x, bind(ow), bind(ob));
}

nn::Var Decoder::forward(nn::Tape& tape, nn::Var h) {
  return decoder_forward(tape, h, Binder{tape, true}, dense_w_, dense_b_, norm_gain_, norm_bias_,
                         out_w_, out_b_);
}

Matrix Decoder::logits(const Matrix& h) const {
  nn::Tape tape;
  nn::Var out = decoder_forward(tape, tape.constant(h), Binder{tape, false}, dense_w_, dense_b_,
                                norm_gain_, norm_bias_, out_w_, out_b_);
  return tape.value(out);
}

TokenizedSequence decode(const Matrix& h, const std::vector<bool>& mask, const Decoder& dec) {
  if (mask.size() != h.rows()) throw Error(Errc::kShapeMismatch, "decode: mask length != rows");
  for (std::size_t i = 1; i < mask.size(); ++i)
    if (mask[i] && !mask[i - 1]) throw Error(Errc::kInvalidArgument, "decode: mask is not a prefix");

  TokenizedSequence ts;
  ts.tokens.assign(h.rows(), Vocabulary::kPad);
  ts.mask = mask;
  const std::size_t residues = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  ts.true_length = residues;
  if (residues == 0) return ts;

  const Matrix logits = dec.logits(slice_rows(h, 0, residues));
  for (std::size_t i = 0; i < residues; ++i) {
    auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < Vocabulary::kNumResidues; ++j)
      if (row[j] > row[best]) best = j;
    ts.tokens[i] = static_cast<TokenId>(best);
  }
  return ts;
}

// ---------------------------------------------------------------------------

SmoothingStats fit_smoothing(const EmbeddingSource& source, double clamp_k) {
  if (!(clamp_k > 0.0)) throw Error(Errc::kInvalidArgument, "clamp bound must be positive");
  SmoothingStats stats;
  stats.clamp_k = clamp_k;
  std::size_t embeddings = 0, rows = 0, dim = 0;
  std::vector<double> mean, m2;

  // Welford accumulation, pooled over positions and sequences.
  source([&](const Matrix& h) {
    if (embeddings == 0) {
      dim = h.cols();
      mean.assign(dim, 0.0);
      m2.assign(dim, 0.0);
    } else if (h.cols() != dim) {
      throw Error(Errc::kShapeMismatch, "fit_smoothing: embedding width changed");
    }
    ++embeddings;
    for (std::size_t r = 0; r < h.rows(); ++r) {
      ++rows;
      for (std::size_t c = 0; c < dim; ++c) {
        const double delta = h(r, c) - mean[c];
        mean[c] += delta / static_cast<double>(rows);
        m2[c] += delta * (h(r, c) - mean[c]);
      }
    }
  });
  if (embeddings < 2 || rows < 2) {
    throw Error(Errc::kTooFewSamples, "fit_smoothing needs at least 2 embeddings");
  }

  stats.mean = mean;
  stats.stddev.resize(dim);
  stats.constant.assign(dim, false);
  for (std::size_t c = 0; c < dim; ++c) {
    stats.stddev[c] = std::sqrt(m2[c] / static_cast<double>(rows));
    if (stats.stddev[c] <= 1e-12 * std::max(1.0, std::abs(mean[c]))) stats.constant[c] = true;
  }

  stats.zmin.assign(dim, clamp_k);
  stats.zmax.assign(dim, -clamp_k);
  source([&](const Matrix& h) {
    for (std::size_t r = 0; r < h.rows(); ++r)
      for (std::size_t c = 0; c < dim; ++c) {
        if (stats.constant[c]) continue;
        const double z = std::clamp((h(r, c) - stats.mean[c]) / stats.stddev[c], -clamp_k, clamp_k);
        stats.zmin[c] = std::min(stats.zmin[c], z);
        stats.zmax[c] = std::max(stats.zmax[c], z);
      }
  });
  for (std::size_t c = 0; c < dim; ++c) {
    if (stats.constant[c] || stats.zmax[c] - stats.zmin[c] <= 1e-12) {
      stats.constant[c] = true;
      stats.zmin[c] = -1.0;
      stats.zmax[c] = 1.0;
    }
  }
  return stats;
}

SmoothingStats fit_smoothing(const std::vector<Matrix>& corpus, double clamp_k) {
  return fit_smoothing(
      [&](const std::function<void(const Matrix&)>& sink) {
        for (const auto& h : corpus) sink(h);
      },
      clamp_k);
}

void smooth_row(std::span<double> row, const SmoothingStats& stats) {
  if (row.size() != stats.dim()) throw Error(Errc::kShapeMismatch, "smooth: width mismatch");
  const double k = stats.clamp_k;
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (stats.constant[c]) continue;
    const double z = std::clamp((row[c] - stats.mean[c]) / stats.stddev[c], -k, k);
    const double s = 2.0 * (z - stats.zmin[c]) / (stats.zmax[c] - stats.zmin[c]) - 1.0;
    row[c] = std::clamp(s, -1.0, 1.0);
  }
}

Matrix smooth(const Matrix& h, const SmoothingStats& stats) {
  Matrix out = h;
  for (std::size_t r = 0; r < out.rows(); ++r) smooth_row(out.row(r), stats);
  return out;
}

Matrix unsmooth(const Matrix& hs, const SmoothingStats& stats) {
  if (hs.cols() != stats.dim()) throw Error(Errc::kShapeMismatch, "unsmooth: width mismatch");
  Matrix out = hs;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) {
      if (stats.constant[c]) continue;
      const double z = (out(r, c) + 1.0) / 2.0 * (stats.zmax[c] - stats.zmin[c]) + stats.zmin[c];
      out(r, c) = z * stats.stddev[c] + stats.mean[c];
    }
  return out;
}

// ---------------------------------------------------------------------------

void check_ratio(std::size_t dim, std::size_t ratio) {
  static constexpr std::size_t kRatios[] = {1, 2, 4, 8, 16, 32};
  const bool listed = std::find(std::begin(kRatios), std::end(kRatios), ratio) != std::end(kRatios);
  if (!listed || dim % ratio != 0) {
    throw Error(Errc::kIncompatibleRatio, "ratio " + std::to_string(ratio) +
                                              " incompatible with width " + std::to_string(dim));
  }
}

Compressor::Compressor(std::size_t dim, std::size_t ratio, std::size_t max_length, Rng& rng)
    : dim_(dim), ratio_(ratio), max_length_(max_length) {
  check_ratio(dim, ratio);
  const std::size_t w = dim / ratio;
  in_pos_ = zeros("compressor.in_pos", max_length, dim);
  in_w1_ = nn::Param("compressor.in_mlp.w1", nn::init_weight(rng, dim, dim));
  in_b1_ = zeros("compressor.in_mlp.b1", 1, dim);
  in_w2_ = zeros("compressor.in_mlp.w2", dim, dim);
  in_b2_ = zeros("compressor.in_mlp.b2", 1, dim);
  down_w_ = nn::Param("compressor.down.weight", nn::init_weight(rng, dim, w));
  down_b_ = zeros("compressor.down.bias", 1, w);
  up_w_ = nn::Param("decompressor.up.weight", nn::init_weight(rng, w, dim));
  up_b_ = zeros("decompressor.up.bias", 1, dim);
  out_w1_ = nn::Param("decompressor.out_mlp.w1", nn::init_weight(rng, dim, dim));
  out_b1_ = zeros("decompressor.out_mlp.b1", 1, dim);
  out_w2_ = zeros("decompressor.out_mlp.w2", dim, dim);
  out_b2_ = zeros("decompressor.out_mlp.b2", 1, dim);
  out_pos_ = zeros("decompressor.out_pos", max_length, dim);
}

Compressor Compressor::identity(std::size_t dim, std::size_t max_length) {
  Rng rng(0);
  Compressor c(dim, 1, max_length, rng);
  c.down_w_.value = Matrix::identity(dim);
  c.up_w_.value = Matrix::identity(dim);
  return c;
}

nn::ParamList Compressor::params() {
  return {&in_pos_, &in_w1_, &in_b1_, &in_w2_, &in_b2_, &down_w_, &down_b_,
          &up_w_,   &up_b_,  &out_w1_, &out_b1_, &out_w2_, &out_b2_, &out_pos_};
}

namespace {

nn::Var residual_mlp(nn::Tape& tape, nn::Var x, const Binder& bind, const nn::Param& w1,
                     const nn::Param& b1, const nn::Param& w2, const nn::Param& b2) {
  nn::Var hidden = tape.gelu(tape.linear(x, bind(w1), bind(b1)));
  return tape.add(x, tape.linear(hidden, bind(w2), bind(b2)));
}

}  // namespace

nn::Var Compressor::compress(nn::Tape& tape, nn::Var hs, const std::vector<std::size_t>& positions) {
  Binder bind{tape, true};
  nn::Var x = tape.add(hs, tape.gather_rows(bind(in_pos_), positions));
  x = residual_mlp(tape, x, bind, in_w1_, in_b1_, in_w2_, in_b2_);
  return tape.tanh(tape.linear(x, bind(down_w_), bind(down_b_)));
}

nn::Var Compressor::decompress(nn::Tape& tape, nn::Var hc, const std::vector<std::size_t>& positions) {
  Binder bind{tape, true};
  nn::Var u = tape.linear(hc, bind(up_w_), bind(up_b_));
  u = residual_mlp(tape, u, bind, out_w1_, out_b1_, out_w2_, out_b2_);
  return tape.add(u, tape.gather_rows(bind(out_pos_), positions));
}

Matrix Compressor::compress(const Matrix& hs) const {
  if (hs.cols() != dim_) throw Error(Errc::kShapeMismatch, "compress: width mismatch");
  if (hs.rows() > max_length_) throw SequenceTooLong(hs.rows(), max_length_);
  nn::Tape tape;
  Binder bind{tape, false};
  nn::Var x = tape.add(tape.constant(hs), tape.gather_rows(bind(in_pos_), iota_positions(hs.rows())));
  x = residual_mlp(tape, x, bind, in_w1_, in_b1_, in_w2_, in_b2_);
  return tape.value(tape.tanh(tape.linear(x, bind(down_w_), bind(down_b_))));
}

Matrix Compressor::decompress(const Matrix& hc) const {
  if (hc.cols() != width()) throw Error(Errc::kShapeMismatch, "decompress: width mismatch");
  if (hc.rows() > max_length_) throw SequenceTooLong(hc.rows(), max_length_);
  nn::Tape tape;
  Binder bind{tape, false};
  nn::Var u = tape.linear(tape.constant(hc), bind(up_w_), bind(up_b_));
  u = residual_mlp(tape, u, bind, out_w1_, out_b1_, out_w2_, out_b2_);
  return tape.value(tape.add(u, tape.gather_rows(bind(out_pos_), iota_positions(hc.rows()))));
}

// ---------------------------------------------------------------------------

Matrix LatentPipeline::to_latent(const TokenizedSequence& padded) const {
  return compressor.compress(smooth(encoder.encode(padded), stats));
}

TokenizedSequence LatentPipeline::from_latent(const Matrix& hc, const std::vector<bool>& mask) const {
  return decode(unsmooth(compressor.decompress(hc), stats), mask, decoder);
}

// ---------------------------------------------------------------------------

namespace {

struct RowRef {
  std::uint32_t seq;
  std::uint32_t pos;
};

std::size_t train_count(std::size_t n, double holdout_fraction) {
  const auto held = static_cast<std::size_t>(static_cast<double>(n) * holdout_fraction);
  return std::max<std::size_t>(1, n - std::min(held, n - 1));
}

std::vector<TokenizedSequence> heldout_or_train(const std::vector<TokenizedSequence>& corpus,
                                                std::size_t n_train) {
  if (n_train < corpus.size()) return {corpus.begin() + static_cast<long>(n_train), corpus.end()};
  return corpus;
}

}  // namespace

LatentTrainReport train_decoder(const std::vector<TokenizedSequence>& corpus,
                                const Encoder& encoder, Decoder& decoder,
                                const LatentTrainConfig& config) {
  if (corpus.empty()) throw Error(Errc::kEmptyCorpus, "train_decoder");
  const std::size_t n_train = train_count(corpus.size(), config.holdout_fraction);
  std::vector<RowRef> rows;
  for (std::size_t s = 0; s < n_train; ++s)
    for (std::size_t i = 0; i < corpus[s].true_length; ++i)
      rows.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(i)});
  if (rows.empty()) throw Error(Errc::kEmptyCorpus, "train_decoder: no residues");

  nn::ParamList params = decoder.params();
  nn::AdamW opt(params, {0.9, config.beta2, 1e-8, config.weight_decay});
  nn::CosineSchedule schedule{config.lr, config.lr_min, config.warmup, config.steps};
  const Rng base = Rng(config.seed).split("train_decoder");
  LatentTrainReport report;

  const std::size_t d = encoder.dim();
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = base.split(step);
    Matrix h(config.batch_rows, d);
    std::vector<int> targets(config.batch_rows);
    for (std::size_t r = 0; r < config.batch_rows; ++r) {
      const RowRef ref = rows[rng.uniform_int(rows.size())];
      const TokenId tok = corpus[ref.seq].tokens[ref.pos];
      encoder.encode_row(tok, ref.pos, h.row(r));
      targets[r] = tok;
    }
    nn::zero_grads(params);
    nn::Tape tape;
    nn::Var loss = tape.cross_entropy(decoder.forward(tape, tape.constant(std::move(h))), targets);
    const double loss_value = tape.value(loss)(0, 0);
    check_finite_loss(loss_value, step);
    tape.backward(loss);
    const double gnorm = nn::clip_grad_norm(params, 1.0);
    const double lr = schedule(step);
    opt.step(lr);
    report.loss_trace.push_back(loss_value);
    report.lr_trace.push_back(lr);
    report.grad_norm_trace.push_back(gnorm);
  }

  LatentPipeline probe{encoder, decoder, {}, {}};
  const ReconstructionScore score =
      reconstruction_accuracy(heldout_or_train(corpus, n_train), probe, false);
  report.heldout_token_accuracy = score.token_accuracy;
  report.heldout_sequence_accuracy = score.sequence_accuracy;
  return report;
}

LatentTrainReport train_compressor(const std::vector<TokenizedSequence>& corpus,
                                   const LatentPipeline& frozen, Compressor& compressor,
                                   const LatentTrainConfig& config) {
  if (corpus.empty()) throw Error(Errc::kEmptyCorpus, "train_compressor");
  if (compressor.dim() != frozen.encoder.dim()) {
    throw Error(Errc::kShapeMismatch, "compressor width differs from encoder width");
  }
  const std::size_t n_train = train_count(corpus.size(), config.holdout_fraction);
  std::vector<RowRef> rows;
  for (std::size_t s = 0; s < n_train; ++s)
    for (std::size_t i = 0; i < corpus[s].tokens.size(); ++i)
      rows.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(i)});

  nn::ParamList params = compressor.params();
  nn::AdamW opt(params, {0.9, config.beta2, 1e-8, config.weight_decay});
  nn::CosineSchedule schedule{config.lr, config.lr_min, config.warmup, config.steps};
  const Rng base = Rng(config.seed).split("train_compressor");
  LatentTrainReport report;

  const std::size_t d = frozen.encoder.dim();
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = base.split(step);
    Matrix hs(config.batch_rows, d);
    std::vector<std::size_t> positions(config.batch_rows);
    for (std::size_t r = 0; r < config.batch_rows; ++r) {
      const RowRef ref = rows[rng.uniform_int(rows.size())];
      frozen.encoder.encode_row(corpus[ref.seq].tokens[ref.pos], ref.pos, hs.row(r));
      smooth_row(hs.row(r), frozen.stats);
      positions[r] = ref.pos;
    }
    nn::zero_grads(params);
    nn::Tape tape;
    nn::Var hc = compressor.compress(tape, tape.constant(hs), positions);
    nn::Var recon = compressor.decompress(tape, hc, positions);
    nn::Var loss = tape.mse(recon, hs);
    const double loss_value = tape.value(loss)(0, 0);
    check_finite_loss(loss_value, step);
    tape.backward(loss);
    const double gnorm = nn::clip_grad_norm(params, 1.0);
    const double lr = schedule(step);
    opt.step(lr);
    report.loss_trace.push_back(loss_value);
    report.lr_trace.push_back(lr);
    report.grad_norm_trace.push_back(gnorm);
  }

  const auto eval_set = heldout_or_train(corpus, n_train);
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& ts : eval_set) {
    const Matrix hs = smooth(frozen.encoder.encode(ts), frozen.stats);
    const Matrix recon = compressor.decompress(compressor.compress(hs));
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const double diff = hs.data()[i] - recon.data()[i];
      sq += diff * diff;
    }
    count += hs.size();
  }
  report.heldout_mse = count == 0 ? 0.0 : sq / static_cast<double>(count);

  LatentPipeline probe{frozen.encoder, frozen.decoder, frozen.stats, compressor};
  const ReconstructionScore score = reconstruction_accuracy(eval_set, probe, true);
  report.heldout_token_accuracy = score.token_accuracy;
  report.heldout_sequence_accuracy = score.sequence_accuracy;
  return report;
}

ReconstructionScore reconstruction_accuracy(const std::vector<TokenizedSequence>& corpus,
                                            const LatentPipeline& pipeline,
                                            bool through_compressor) {
  std::size_t tokens = 0, correct_tokens = 0, correct_sequences = 0;
  for (const auto& ts : corpus) {
    Matrix h = pipeline.encoder.encode(ts);
    if (through_compressor) {
      h = unsmooth(pipeline.compressor.decompress(pipeline.compressor.compress(smooth(h, pipeline.stats))),
                   pipeline.stats);
    }
    const TokenizedSequence out = decode(h, ts.mask, pipeline.decoder);
    bool all = true;
    for (std::size_t i = 0; i < ts.true_length; ++i) {
      ++tokens;
      if (out.tokens[i] == ts.tokens[i]) {
        ++correct_tokens;
      } else {
        all = false;
      }
    }
    if (all) ++correct_sequences;
  }
  ReconstructionScore score;
  if (tokens > 0) score.token_accuracy = static_cast<double>(correct_tokens) / static_cast<double>(tokens);
  if (!corpus.empty()) {
    score.sequence_accuracy = static_cast<double>(correct_sequences) / static_cast<double>(corpus.size());
  }
  return score;
}

}  // namespace protflow
