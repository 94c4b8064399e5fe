#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "protflow/nn.hpp"
#include "protflow/numeric.hpp"
#include "protflow/ode.hpp"

namespace protflow {

struct VectorFieldConfig {
  std::size_t latent_width = 2;  // D / c
  std::size_t width = 64;        // hidden width of every block
  std::size_t depth = 4;         // number of residual blocks
  std::size_t seq_len = 1;       // rows per sample
  bool attention = false;        // self-attention sublayer in each block
};

/// Sinusoidal features of 1000 * t, `dim` columns, one row per entry of t.
Matrix time_features(std::span<const double> t, std::size_t dim);

/// v_theta(x_t, t). Input projection to `width`, fixed sinusoidal position
/// rows, then `depth` residual blocks. Before block b the time embedding
/// (projected per block) is added; blocks in the second half also receive a
/// linear projection of the input of their mirror block depth-1-b.
class VectorField {
 public:
  VectorField() = default;
  VectorField(const VectorFieldConfig& config, Rng& rng);

  const VectorFieldConfig& config() const noexcept { return config_; }

  /// x stacks n samples of seq_len rows; t holds one time per sample.
  nn::Var forward(nn::Tape& tape, nn::Var x, std::span<const double> t);
  Matrix evaluate(const Matrix& x, std::span<const double> t) const;
  /// All samples at the same time.
  Matrix evaluate(const Matrix& x, double t) const;
  VelocityFn as_velocity() const;

  nn::ParamList params();
  std::size_t parameter_count() const;

 private:
  struct Block {
    nn::Param time_w, time_b, w1, b1, w2, b2;
    nn::Param q, k, v, o;  // empty unless attention is enabled
  };
  struct Skip {
    nn::Param w, b;
  };

  template <class Bind>
  nn::Var forward_impl(nn::Tape& tape, nn::Var x, std::span<const double> t, const Bind& bind) const;

  VectorFieldConfig config_;
  nn::Param in_w_, in_b_, out_w_, out_b_;
  std::vector<Block> blocks_;
  std::vector<Skip> skips_;
  Matrix positions_;
};

/// x_t = t * x1 + (1 - t) * x0.
Matrix rf_interpolate(const Matrix& x0, const Matrix& x1, double t);
/// u = x1 - x0, independent of t.
Matrix rf_target(const Matrix& x0, const Matrix& x1);

/// Stacked batch: x0 and x1 hold n samples of seq_len rows, t one value per sample.
struct CfmBatch {
  Matrix x0;
  Matrix x1;
  std::vector<double> t;
};

/// Mean over every scalar of (v(x_t, t) - (x1 - x0))^2. Overwrites the
/// gradients of model.params().
double cfm_loss(VectorField& model, const CfmBatch& batch);
double cfm_loss_value(const VectorField& model, const CfmBatch& batch);

struct FlowTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 64;
  double lr = 1e-3;
  double lr_min = 2e-4;
  std::size_t warmup = 100;
  double clip = 1.0;
  double weight_decay = 0.01;
  double beta2 = 0.98;
  double eps = 1e-6;
  double ema_decay = 0.0;  // 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  std::size_t step;
  double loss;
  double lr;
  double grad_norm;
};

struct FlowTrainReport {
  std::vector<TraceRow> trace;
};

/// Rectified-flow training on independent (data, noise) couplings: each step
/// draws data latents uniformly, x1 ~ N(0, I), t ~ U(0, 1).
FlowTrainReport train_rf(const std::vector<Matrix>& dataset, const FlowTrainConfig& config,
                         VectorField& model);

struct CouplingPair {
  Matrix z0;  // data side, t = 0
  Matrix z1;  // noise side, t = 1
};

struct ReflowPairs {
  std::vector<CouplingPair> pairs;
  std::size_t nfe_per_pair = 0;
  SolverConfig solver;
};

/// z1_i ~ N(0, I) from rng.split(i); z0_i is the solver endpoint from z1_i.
ReflowPairs reflow_pairs(const VectorField& model, const SolverConfig& solver, std::size_t count,
                         const Rng& rng);

/// Same objective as train_rf with the deterministic coupling (z0, z1).
FlowTrainReport train_reflow(const std::vector<CouplingPair>& pairs, const FlowTrainConfig& config,
                             VectorField& model);

/// Mean over pairs and a uniform grid of n_t times in [0, 1] of
/// ||(z1 - z0) - v(z_t, t)||^2.
double straightness(const VectorField& model, const std::vector<CouplingPair>& pairs,
                    std::size_t n_t = 11);

/// Writes "step,loss,lr,grad_norm" rows.
std::string trace_csv(const FlowTrainReport& report);

}  // namespace protflow
