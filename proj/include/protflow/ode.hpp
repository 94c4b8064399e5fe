#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "protflow/numeric.hpp"
#include "protflow/seqio.hpp"

namespace protflow {

/// dx/dt = v(x, t). Integration always runs from t = 1 (noise) to t = 0.
using VelocityFn = std::function<Matrix(const Matrix& x, double t)>;

enum class SolverMethod { kEuler, kDopri5Fixed, kDopri5Adaptive };

std::string_view solver_method_name(SolverMethod method);
SolverMethod parse_solver_method(std::string_view name);

struct SolverConfig {
  SolverMethod method = SolverMethod::kDopri5Fixed;
  std::size_t steps = 25;  // fixed-grid methods, in [1, 100]
  double atol = 1e-5;
  double rtol = 1e-5;
  std::size_t max_nfe = 100000;
  bool keep_trajectory = false;

  void validate() const;
};

struct SolveResult {
  Matrix x0;
  std::size_t nfe = 0;
  std::vector<Matrix> trajectory;  // includes the start state when kept
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Uniform grid, t_k = 1 - k/N, x <- x - v(x, t_k)/N. nfe = N.
SolveResult euler_solve(const VelocityFn& v, Matrix x1, std::size_t steps,
                        bool keep_trajectory = false);
/// Dormand-Prince 5(4). Fixed-grid mode takes N steps of the 5th-order
/// solution with six evaluations each (nfe = 6N). Adaptive mode uses FSAL
/// and a PI controller on the RMS of err / (atol + rtol * max(|x|, |x_new|)).
SolveResult dopri5_solve(const VelocityFn& v, Matrix x1, const SolverConfig& config);
SolveResult solve(const VelocityFn& v, Matrix x1, const SolverConfig& config);

/// Velocity wrapper that counts evaluations.
class CountingField {
 public:
  explicit CountingField(VelocityFn inner) : inner_(std::move(inner)) {}
  Matrix operator()(const Matrix& x, double t) {
    ++count_;
    return inner_(x, t);
  }
  VelocityFn as_fn() {
    return [this](const Matrix& x, double t) { return (*this)(x, t); };
  }
  std::size_t count() const noexcept { return count_; }

 private:
  VelocityFn inner_;
  std::size_t count_ = 0;
};

class VectorField;
struct LatentPipeline;

/// Integrates a batch of stacked sequences (each `seq_len` rows) and returns
/// the per-sequence endpoints. Fixed-step methods solve in chunks, which is
/// bitwise identical to solving each sequence alone because every operation
/// in the field is row- or sequence-local. Adaptive solves run one sequence
/// at a time so step control never couples samples.
struct BatchSolve {
  std::vector<Matrix> endpoints;
  std::vector<std::size_t> nfe;
};
BatchSolve solve_each(const VectorField& model, const std::vector<Matrix>& starts,
                      const SolverConfig& config, std::size_t chunk = 256);

struct SampleBatch {
  std::vector<std::string> sequences;
  std::vector<std::size_t> nfe;
  double mean_nfe = 0.0;
};

/// Noise -> ODE solve -> decompress -> unsmooth -> decode under a mask whose
/// length is drawn from `lengths`. Sample i draws from rng.split(i) only.
SampleBatch sample_batch(const VectorField& model, const LatentPipeline& pipeline,
                         const LengthDistribution& lengths, std::size_t n,
                         const SolverConfig& config, const Rng& rng);

/// Noise for sample i: standard normal rows x cols from rng.split(i).
Matrix sample_noise(const Rng& rng, std::size_t index, std::size_t rows, std::size_t cols);

}  // namespace protflow
