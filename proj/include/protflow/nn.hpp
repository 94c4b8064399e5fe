#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "protflow/numeric.hpp"

namespace protflow::nn {

/// A named trainable tensor and its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad.fill(0.0); }
};

using ParamList = std::vector<Param*>;

std::size_t parameter_count(const ParamList& params);
void zero_grads(const ParamList& params);
/// Flattens every parameter value, in list order.
std::vector<double> flatten_values(const ParamList& params);
std::vector<double> flatten_grads(const ParamList& params);
void assign_values(const ParamList& params, std::span<const double> flat);
double grad_norm(const ParamList& params);
/// Rounds every value to the nearest 32-bit float, the checkpoint storage precision.
void round_to_float(const ParamList& params);

/// Handle to a node on the tape.
struct Var {
  std::size_t id = 0;
};

/// Records matrix operations and replays them in reverse to accumulate
/// gradients. Node storage is a deque so references stay valid while the
/// tape grows.
class Tape {
 public:
  Var constant(Matrix value);
  Var param(Param& p);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and propagates to parameters.
  void backward(Var loss);

  /// x * w + b, with w stored in x out and b a 1 x out row.
  Var linear(Var x, Var w, Var b);
  Var linear(Var x, Var w);
  Var add(Var a, Var b);
  /// Adds row g of `per_group` to each of the `group` consecutive rows of x
  /// belonging to group g.
  Var add_group_rows(Var x, Var per_group, std::size_t group);
  Var scale(Var x, double s);
  /// Row r of the result is row index[r] of table.
  Var gather_rows(Var table, std::vector<std::size_t> index);
  Var gelu(Var x);
  Var tanh(Var x);
  /// Row-wise layer normalisation with learned gain and bias (1 x cols).
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  /// Scaled dot-product attention within each block of `group` rows.
  Var attention(Var q, Var k, Var v, std::size_t group);
  /// Mean over all entries of (pred - target)^2.
  Var mse(Var pred, const Matrix& target);
  /// Mean softmax cross-entropy over rows whose target is >= 0.
  Var cross_entropy(Var logits, std::span<const int> targets);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Param* param = nullptr;
    std::function<void()> backward;
  };

  Var push(Matrix value, bool needs_grad);
  Node& node(Var v) { return nodes_[v.id]; }
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Matrix& grad_of(Var v);

  std::deque<Node> nodes_;
};

double gelu(double x);

/// Weight matrix with N(0, scale^2 / fan_in) entries.
Matrix init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out, double scale = 1.0);

// ---------------------------------------------------------------------------

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(const ParamList& params, AdamWConfig config);
  void step(double lr);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  ParamList params_;
  AdamWConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

/// Linear warmup to `peak`, then a single cosine cycle down to `floor`.
struct CosineSchedule {
  double peak = 1e-3;
  double floor = 2e-4;
  std::size_t warmup = 0;
  std::size_t total = 1;

  double operator()(std::size_t step) const;
};

/// Scales all gradients so their global norm is at most max_norm. Returns
/// the pre-clip norm.
double clip_grad_norm(const ParamList& params, double max_norm);

/// Exponential moving average of parameter values.
class Ema {
 public:
  Ema(const ParamList& params, double decay);
  void update(const ParamList& params);
  void copy_to(const ParamList& params) const;

 private:
  double decay_;
  std::vector<Matrix> shadow_;
};

}  // namespace protflow::nn
