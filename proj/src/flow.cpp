#include "protflow/flow.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <string_view>

#include "protflow/error.hpp"
#include "protflow/latent.hpp"

namespace protflow {

Matrix time_features(std::span<const double> t, std::size_t dim) {
  Matrix f(t.size(), dim);
  for (std::size_t r = 0; r < t.size(); ++r) {
    const double s = 1000.0 * t[r];
    for (std::size_t c = 0; c < dim; ++c) {
      const std::size_t k = c / 2;
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
      f(r, c) = (c % 2 == 0) ? std::sin(s * freq) : std::cos(s * freq);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------

VectorField::VectorField(const VectorFieldConfig& config, Rng& rng) : config_(config) {
  const std::size_t w = config.width, lw = config.latent_width;
  if (w == 0 || lw == 0 || config.depth == 0 || config.seq_len == 0) {
    throw Error(Errc::kInvalidArgument, "vector field dimensions must be positive");
  }
  const double branch_scale = 1.0 / std::sqrt(static_cast<double>(config.depth));
  in_w_ = nn::Param("flow.in.weight", nn::init_weight(rng, lw, w));
  in_b_ = nn::Param("flow.in.bias", Matrix(1, w));
  for (std::size_t b = 0; b < config.depth; ++b) {
    const std::string p = "flow.block" + std::to_string(b) + ".";
    Block blk;
    blk.time_w = nn::Param(p + "time.weight", nn::init_weight(rng, w, w));
    blk.time_b = nn::Param(p + "time.bias", Matrix(1, w));
    blk.w1 = nn::Param(p + "mlp.w1", nn::init_weight(rng, w, w));
    blk.b1 = nn::Param(p + "mlp.b1", Matrix(1, w));
    blk.w2 = nn::Param(p + "mlp.w2", nn::init_weight(rng, w, w, branch_scale));
    blk.b2 = nn::Param(p + "mlp.b2", Matrix(1, w));
    if (config.attention) {
      blk.q = nn::Param(p + "attn.q", nn::init_weight(rng, w, w));
      blk.k = nn::Param(p + "attn.k", nn::init_weight(rng, w, w));
      blk.v = nn::Param(p + "attn.v", nn::init_weight(rng, w, w));
      blk.o = nn::Param(p + "attn.o", nn::init_weight(rng, w, w, branch_scale));
    }
    blocks_.push_back(std::move(blk));
  }
  for (std::size_t b = 0; b < config.depth / 2; ++b) {
    const std::string p = "flow.skip" + std::to_string(b) + ".";
    skips_.push_back({nn::Param(p + "weight", nn::init_weight(rng, w, w, branch_scale)),
                      nn::Param(p + "bias", Matrix(1, w))});
  }
  out_w_ = nn::Param("flow.out.weight", nn::init_weight(rng, w, lw));
  out_b_ = nn::Param("flow.out.bias", Matrix(1, lw));
  positions_ = sinusoidal_table(config.seq_len, w);
}

nn::ParamList VectorField::params() {
  nn::ParamList out{&in_w_, &in_b_};
  for (auto& blk : blocks_) {
    for (nn::Param* p : {&blk.time_w, &blk.time_b, &blk.w1, &blk.b1, &blk.w2, &blk.b2}) out.push_back(p);
    if (config_.attention)
      for (nn::Param* p : {&blk.q, &blk.k, &blk.v, &blk.o}) out.push_back(p);
  }
  for (auto& s : skips_) {
    out.push_back(&s.w);
    out.push_back(&s.b);
  }
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

std::size_t VectorField::parameter_count() const {
  return nn::parameter_count(const_cast<VectorField*>(this)->params());
}

template <class Bind>
nn::Var VectorField::forward_impl(nn::Tape& tape, nn::Var x, std::span<const double> t,
                                  const Bind& bind) const {
  const std::size_t rows = tape.value(x).rows();
  const std::size_t len = config_.seq_len;
  if (tape.value(x).cols() != config_.latent_width || rows % len != 0 || rows / len != t.size()) {
    throw Error(Errc::kShapeMismatch, "vector field input: " + std::to_string(rows) + "x" +
                                          std::to_string(tape.value(x).cols()) + " with " +
                                          std::to_string(t.size()) + " times");
  }
  const std::size_t n = t.size();
  const std::size_t w = config_.width;

  nn::Var h = tape.linear(x, bind(in_w_), bind(in_b_));
  Matrix pos(rows, w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(positions_.row(r % len).data(), w, pos.row(r).data());
  h = tape.add(h, tape.constant(std::move(pos)));
  const nn::Var temb = tape.constant(time_features(t, w));

  const std::size_t depth = config_.depth;
  std::vector<nn::Var> inputs(depth);
  for (std::size_t b = 0; b < depth; ++b) {
    const std::size_t mirror = depth - 1 - b;
    if (mirror < b && mirror < skips_.size()) {
      const Skip& s = skips_[mirror];
      h = tape.add(h, tape.linear(inputs[mirror], bind(s.w), bind(s.b)));
    }
    inputs[b] = h;
    const Block& blk = blocks_[b];
    h = tape.add_group_rows(h, tape.linear(temb, bind(blk.time_w), bind(blk.time_b)), len);
    if (config_.attention) {
      nn::Var q = tape.linear(h, bind(blk.q));
      nn::Var k = tape.linear(h, bind(blk.k));
      nn::Var v = tape.linear(h, bind(blk.v));
      h = tape.add(h, tape.linear(tape.attention(q, k, v, len), bind(blk.o)));
    }
    nn::Var hidden = tape.gelu(tape.linear(h, bind(blk.w1), bind(blk.b1)));
    h = tape.add(h, tape.linear(hidden, bind(blk.w2), bind(blk.b2)));
  }
  (void)n;
  return tape.linear(h, bind(out_w_), bind(out_b_));
}

nn::Var VectorField::forward(nn::Tape& tape, nn::Var x, std::span<const double> t) {
  return forward_impl(tape, x, t, [&](const nn::Param& p) { return tape.param(const_cast<nn::Param&>(p)); });
}

Matrix VectorField::evaluate(const Matrix& x, std::span<const double> t) const {
  nn::Tape tape;
  nn::Var out = forward_impl(tape, tape.constant(x), t,
                             [&](const nn::Param& p) { return tape.constant(p.value); });
  return tape.value(out);
}

Matrix VectorField::evaluate(const Matrix& x, double t) const {
  const std::vector<double> ts(x.rows() / config_.seq_len, t);
  return evaluate(x, ts);
}

VelocityFn VectorField::as_velocity() const {
  return [this](const Matrix& x, double t) { return evaluate(x, t); };
}

// ---------------------------------------------------------------------------

Matrix rf_interpolate(const Matrix& x0, const Matrix& x1, double t) {
  if (!x0.same_shape(x1)) throw Error(Errc::kShapeMismatch, "rf_interpolate");
  if (!(t >= 0.0 && t <= 1.0)) throw Error(Errc::kInvalidArgument, "t outside [0, 1]");
  Matrix out(x0.rows(), x0.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = t * x1.data()[i] + (1.0 - t) * x0.data()[i];
  return out;
}

Matrix rf_target(const Matrix& x0, const Matrix& x1) {
  if (!x0.same_shape(x1)) throw Error(Errc::kShapeMismatch, "rf_target");
  return x1 - x0;
}

namespace {

/// Per-sample interpolation over stacked rows.
Matrix interpolate_stacked(const CfmBatch& batch) {
  const std::size_t n = batch.t.size();
  if (!batch.x0.same_shape(batch.x1) || n == 0 || batch.x0.rows() % n != 0) {
    throw Error(Errc::kShapeMismatch, "cfm batch shapes");
  }
  const std::size_t len = batch.x0.rows() / n;
  Matrix xt(batch.x0.rows(), batch.x0.cols());
  for (std::size_t r = 0; r < xt.rows(); ++r) {
    const double t = batch.t[r / len];
    if (!(t >= 0.0 && t <= 1.0)) throw Error(Errc::kInvalidArgument, "t outside [0, 1]");
    for (std::size_t c = 0; c < xt.cols(); ++c)
      xt(r, c) = t * batch.x1(r, c) + (1.0 - t) * batch.x0(r, c);
  }
  return xt;
}

}  // namespace

double cfm_loss(VectorField& model, const CfmBatch& batch) {
  nn::ParamList params = model.params();
  nn::zero_grads(params);
  nn::Tape tape;
  nn::Var v = model.forward(tape, tape.constant(interpolate_stacked(batch)), batch.t);
  nn::Var loss = tape.mse(v, rf_target(batch.x0, batch.x1));
  const double value = tape.value(loss)(0, 0);
  if (!std::isfinite(value)) throw Error(Errc::kNonFiniteLoss, "cfm loss");
  tape.backward(loss);
  return value;
}

double cfm_loss_value(const VectorField& model, const CfmBatch& batch) {
  const Matrix v = model.evaluate(interpolate_stacked(batch), batch.t);
  const Matrix u = rf_target(batch.x0, batch.x1);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v.data()[i] - u.data()[i];
    sum += d * d;
  }
  const double value = sum / static_cast<double>(v.size());
  if (!std::isfinite(value)) throw Error(Errc::kNonFiniteLoss, "cfm loss");
  return value;
}

// ---------------------------------------------------------------------------

void FlowTrainConfig::validate() const {
  if (batch == 0) throw Error(Errc::kInvalidArgument, "batch must be positive");
  if (!(clip > 0.0)) throw Error(Errc::kInvalidArgument, "clip norm must be positive");
  if (!(lr >= 0.0) || !(lr_min >= 0.0)) throw Error(Errc::kInvalidArgument, "negative learning rate");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw Error(Errc::kInvalidArgument, "ema decay in [0, 1)");
}

namespace {

void stack_into(const Matrix& sample, Matrix& dst, std::size_t slot) {
  std::copy_n(sample.data(), sample.size(), dst.data() + slot * sample.size());
}

/// Shared optimisation loop; `fill` writes x0 and x1 for one step.
template <class Fill>
FlowTrainReport train_loop(VectorField& model, const FlowTrainConfig& config, std::string_view stream,
                           Fill fill) {
  config.validate();
  nn::ParamList params = model.params();
  nn::AdamW opt(params, {0.9, config.beta2, config.eps, config.weight_decay});
  nn::CosineSchedule schedule{config.lr, config.lr_min, config.warmup, config.steps};
  std::optional<nn::Ema> ema;
  if (config.ema_decay > 0.0) ema.emplace(params, config.ema_decay);

  const Rng base = Rng(config.seed).split(stream);
  const std::size_t len = model.config().seq_len, lw = model.config().latent_width;
  FlowTrainReport report;
  CfmBatch batch{Matrix(config.batch * len, lw), Matrix(config.batch * len, lw),
                 std::vector<double>(config.batch)};
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = base.split(step);
    fill(rng, batch);
    Rng trng = rng.split("t");
    for (double& t : batch.t) t = trng.uniform();
    double loss = 0.0;
    try {
      loss = cfm_loss(model, batch);
    } catch (const Error& e) {
      if (e.code() == Errc::kNonFiniteLoss) {
        throw Error(Errc::kDiverged, "non-finite loss at step " + std::to_string(step));
      }
      throw;
    }
    const double gnorm = nn::clip_grad_norm(params, config.clip);
    if (!std::isfinite(gnorm)) throw Error(Errc::kDiverged, "non-finite gradient at step " + std::to_string(step));
    const double lr = schedule(step);
    opt.step(lr);
    if (ema) ema->update(params);
    report.trace.push_back({step, loss, lr, gnorm});
  }
  if (ema && config.steps > 0) ema->copy_to(params);
  return report;
}

void check_sample_shape(const Matrix& m, const VectorFieldConfig& cfg) {
  if (m.rows() != cfg.seq_len || m.cols() != cfg.latent_width) {
    throw Error(Errc::kShapeMismatch, "latent " + std::to_string(m.rows()) + "x" +
                                          std::to_string(m.cols()) + " does not match model " +
                                          std::to_string(cfg.seq_len) + "x" +
                                          std::to_string(cfg.latent_width));
  }
}

}  // namespace

FlowTrainReport train_rf(const std::vector<Matrix>& dataset, const FlowTrainConfig& config,
                         VectorField& model) {
  if (dataset.empty()) throw Error(Errc::kEmptyInput, "train_rf: empty dataset");
  for (const auto& m : dataset) check_sample_shape(m, model.config());
  return train_loop(model, config, "train_rf", [&](Rng& rng, CfmBatch& batch) {
    Rng pick = rng.split("data");
    Rng noise = rng.split("noise");
    for (std::size_t i = 0; i < batch.t.size(); ++i) stack_into(dataset[pick.uniform_int(dataset.size())], batch.x0, i);
    for (double& v : batch.x1.values()) v = noise.normal();
  });
}

FlowTrainReport train_reflow(const std::vector<CouplingPair>& pairs, const FlowTrainConfig& config,
                             VectorField& model) {
  if (pairs.empty()) throw Error(Errc::kEmptyInput, "train_reflow: no coupling pairs");
  for (const auto& p : pairs) {
    check_sample_shape(p.z0, model.config());
    check_sample_shape(p.z1, model.config());
  }
  return train_loop(model, config, "train_reflow", [&](Rng& rng, CfmBatch& batch) {
    Rng pick = rng.split("pairs");
    for (std::size_t i = 0; i < batch.t.size(); ++i) {
      const CouplingPair& p = pairs[pick.uniform_int(pairs.size())];
      stack_into(p.z0, batch.x0, i);
      stack_into(p.z1, batch.x1, i);
    }
  });
}

ReflowPairs reflow_pairs(const VectorField& model, const SolverConfig& solver, std::size_t count,
                         const Rng& rng) {
  solver.validate();
  ReflowPairs out;
  out.solver = solver;
  if (count == 0) return out;
  const std::size_t len = model.config().seq_len, lw = model.config().latent_width;
  std::vector<Matrix> starts;
  starts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) starts.push_back(sample_noise(rng, i, len, lw));
  BatchSolve solved = solve_each(model, starts, solver);
  out.pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.pairs.push_back({std::move(solved.endpoints[i]), std::move(starts[i])});
  out.nfe_per_pair = solved.nfe.front();
  return out;
}

double straightness(const VectorField& model, const std::vector<CouplingPair>& pairs, std::size_t n_t) {
  if (pairs.empty()) throw Error(Errc::kEmptyInput, "straightness: no pairs");
  if (n_t < 2) throw Error(Errc::kInvalidArgument, "straightness needs n_t >= 2");
  const std::size_t len = model.config().seq_len, lw = model.config().latent_width;
  const std::size_t n = pairs.size();
  Matrix z0(n * len, lw), z1(n * len, lw);
  for (std::size_t i = 0; i < n; ++i) {
    check_sample_shape(pairs[i].z0, model.config());
    stack_into(pairs[i].z0, z0, i);
    stack_into(pairs[i].z1, z1, i);
  }
  const Matrix u = rf_target(z0, z1);
  double total = 0.0;
  for (std::size_t k = 0; k < n_t; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n_t - 1);
    const Matrix v = model.evaluate(rf_interpolate(z0, z1, t), t);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = u.data()[i] - v.data()[i];
      total += d * d;
    }
  }
  return total / static_cast<double>(n * n_t);
}

std::string trace_csv(const FlowTrainReport& report) {
  std::ostringstream out;
  out.precision(9);
  out << "step,loss,lr,grad_norm\n";
  for (const auto& row : report.trace)
    out << row.step << ',' << row.loss << ',' << row.lr << ',' << row.grad_norm << '\n';
  return out.str();
}

}  // namespace protflow
