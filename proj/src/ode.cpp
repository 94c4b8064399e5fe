#include "protflow/ode.hpp"

#include <algorithm>
#include <cmath>

#include "protflow/error.hpp"
#include "protflow/flow.hpp"
#include "protflow/latent.hpp"

namespace protflow {

std::string_view solver_method_name(SolverMethod method) {
  switch (method) {
    case SolverMethod::kEuler: return "euler";
    case SolverMethod::kDopri5Fixed: return "dopri5";
    case SolverMethod::kDopri5Adaptive: return "dopri5-adaptive";
  }
  return "unknown";
}

SolverMethod parse_solver_method(std::string_view name) {
  if (name == "euler") return SolverMethod::kEuler;
  if (name == "dopri5") return SolverMethod::kDopri5Fixed;
  if (name == "dopri5-adaptive") return SolverMethod::kDopri5Adaptive;
  throw Error(Errc::kInvalidArgument, "unknown solver '" + std::string(name) +
                                          "' (expected euler, dopri5 or dopri5-adaptive)");
}

void SolverConfig::validate() const {
  if (method != SolverMethod::kDopri5Adaptive && (steps < 1 || steps > 100)) {
    throw Error(Errc::kInvalidArgument, "solver steps must be in [1, 100], got " + std::to_string(steps));
  }
  if (method == SolverMethod::kDopri5Adaptive) {
    if (!(atol > 0.0) || !(rtol > 0.0)) throw Error(Errc::kInvalidArgument, "tolerances must be positive");
    if (max_nfe < 7) throw Error(Errc::kInvalidArgument, "max_nfe must allow at least one step");
  }
}

namespace {

void check_velocity(const Matrix& v, const Matrix& x, std::size_t step) {
  if (!v.same_shape(x)) throw Error(Errc::kShapeMismatch, "velocity shape differs from state");
  if (!v.all_finite()) throw NonFiniteState(step);
}

// Dormand-Prince coefficients.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
constexpr double kBStar[7] = {5179.0 / 57600,    0.0,         7571.0 / 16695, 393.0 / 640,
                              -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

/// x + h * sum_j coef[j] * k[j] over the first n stages.
Matrix combine(const Matrix& x, double h, const double* coef, const std::vector<Matrix>& k, std::size_t n) {
  Matrix out = x;
  double* o = out.data();
  for (std::size_t j = 0; j < n; ++j) {
    if (coef[j] == 0.0) continue;
    const double w = h * coef[j];
    const double* kj = k[j].data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] += w * kj[i];
  }
  return out;
}

/// Fills stages 2..6 given k[0]; returns the 5th-order solution.
Matrix dp_stages(const VelocityFn& v, const Matrix& x, double t, double h, std::vector<Matrix>& k,
                 std::size_t& nfe, std::size_t step) {
  for (std::size_t s = 1; s < 6; ++s) {
    const Matrix xs = combine(x, h, kA[s], k, s);
    k[s] = v(xs, t + kC[s] * h);
    ++nfe;
    check_velocity(k[s], x, step);
  }
  return combine(x, h, kB, k, 6);
}

SolveResult dopri5_fixed(const VelocityFn& v, Matrix x, const SolverConfig& config) {
  SolveResult res;
  const std::size_t n = config.steps;
  const double h = -1.0 / static_cast<double>(n);
  if (config.keep_trajectory) res.trajectory.push_back(x);
  std::vector<Matrix> k(7);
  for (std::size_t step = 0; step < n; ++step) {
    const double t = static_cast<double>(n - step) / static_cast<double>(n);
    k[0] = v(x, t);
    ++res.nfe;
    check_velocity(k[0], x, step);
    x = dp_stages(v, x, t, h, k, res.nfe, step);
    if (!x.all_finite()) throw NonFiniteState(step);
    ++res.accepted;
    if (config.keep_trajectory) res.trajectory.push_back(x);
  }
  res.x0 = std::move(x);
  return res;
}

double error_norm(const Matrix& err, const Matrix& x, const Matrix& x_new, double atol, double rtol) {
  double sum = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double scale = atol + rtol * std::max(std::abs(x.data()[i]), std::abs(x_new.data()[i]));
    const double r = err.data()[i] / scale;
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(std::max<std::size_t>(err.size(), 1)));
}

SolveResult dopri5_adaptive(const VelocityFn& v, Matrix x, const SolverConfig& config) {
  SolveResult res;
  if (config.keep_trajectory) res.trajectory.push_back(x);
  std::vector<Matrix> k(7);
  double t = 1.0;
  double h = -0.1;
  double prev_err = 1.0;
  k[0] = v(x, t);
  res.nfe = 1;
  check_velocity(k[0], x, 0);
  std::size_t step = 0;
  while (t > 0.0) {
    if (std::abs(h) < 1e-10) {
      throw Error(Errc::kStepUnderflow, "step size underflow at t=" + std::to_string(t));
    }
    if (res.nfe + 6 > config.max_nfe) {
      throw Error(Errc::kNfeBudgetExceeded, "nfe budget " + std::to_string(config.max_nfe) +
                                                " exhausted at t=" + std::to_string(t));
    }
    const bool last = t + h <= 0.0;
    const double h_step = last ? -t : h;
    Matrix x_new = dp_stages(v, x, t, h_step, k, res.nfe, step);
    const double t_new = last ? 0.0 : t + h_step;
    k[6] = v(x_new, t_new);
    ++res.nfe;
    if (!x_new.all_finite()) throw NonFiniteState(step);
    check_velocity(k[6], x_new, step);

    Matrix err(x.rows(), x.cols());
    for (std::size_t j = 0; j < 7; ++j) {
      const double w = h_step * (kB[j] - kBStar[j]);
      if (w == 0.0) continue;
      for (std::size_t i = 0; i < err.size(); ++i) err.data()[i] += w * k[j].data()[i];
    }
    const double e = error_norm(err, x, x_new, config.atol, config.rtol);
    if (!std::isfinite(e)) throw NonFiniteState(step);
    if (e <= 1.0) {
      x = std::move(x_new);
      t = t_new;
      k[0] = std::move(k[6]);
      ++res.accepted;
      ++step;
      if (config.keep_trajectory) res.trajectory.push_back(x);
      double factor = 5.0;
      if (e > 0.0) factor = std::clamp(0.9 * std::pow(e, -0.17) * std::pow(prev_err, 0.04), 0.2, 5.0);
      prev_err = std::max(e, 1e-4);
      h = h_step * factor;
      if (last) break;
    } else {
      ++res.rejected;
      h = h_step * std::max(0.2, 0.9 * std::pow(e, -0.2));
    }
  }
  res.x0 = std::move(x);
  return res;
}

}  // namespace

SolveResult euler_solve(const VelocityFn& v, Matrix x, std::size_t steps, bool keep_trajectory) {
  if (steps < 1 || steps > 100) {
    throw Error(Errc::kInvalidArgument, "solver steps must be in [1, 100], got " + std::to_string(steps));
  }
  SolveResult res;
  if (keep_trajectory) res.trajectory.push_back(x);
  const double dt = 1.0 / static_cast<double>(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    const double t = 1.0 - static_cast<double>(step) / static_cast<double>(steps);
    const Matrix vel = v(x, t);
    ++res.nfe;
    check_velocity(vel, x, step);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] -= dt * vel.data()[i];
    if (!x.all_finite()) throw NonFiniteState(step);
    ++res.accepted;
    if (keep_trajectory) res.trajectory.push_back(x);
  }
  res.x0 = std::move(x);
  return res;
}

SolveResult dopri5_solve(const VelocityFn& v, Matrix x1, const SolverConfig& config) {
  config.validate();
  if (config.method == SolverMethod::kDopri5Adaptive) return dopri5_adaptive(v, std::move(x1), config);
  return dopri5_fixed(v, std::move(x1), config);
}

SolveResult solve(const VelocityFn& v, Matrix x1, const SolverConfig& config) {
  config.validate();
  if (config.method == SolverMethod::kEuler) {
    return euler_solve(v, std::move(x1), config.steps, config.keep_trajectory);
  }
  return dopri5_solve(v, std::move(x1), config);
}

// ---------------------------------------------------------------------------

Matrix sample_noise(const Rng& rng, std::size_t index, std::size_t rows, std::size_t cols) {
  Rng r = rng.split(index).split("noise");
  return gaussian(r, rows, cols);
}

BatchSolve solve_each(const VectorField& model, const std::vector<Matrix>& starts,
                      const SolverConfig& config, std::size_t chunk) {
  config.validate();
  BatchSolve out;
  out.endpoints.resize(starts.size());
  out.nfe.resize(starts.size());
  const VelocityFn field = model.as_velocity();
  SolverConfig cfg = config;
  cfg.keep_trajectory = false;
  if (config.method == SolverMethod::kDopri5Adaptive) {
    for (std::size_t i = 0; i < starts.size(); ++i) {
      SolveResult r = solve(field, starts[i], cfg);
      out.endpoints[i] = std::move(r.x0);
      out.nfe[i] = r.nfe;
    }
    return out;
  }
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t begin = 0; begin < starts.size(); begin += chunk) {
    const std::size_t count = std::min(chunk, starts.size() - begin);
    const std::size_t rows = starts[begin].rows(), cols = starts[begin].cols();
    Matrix stacked(rows * count, cols);
    for (std::size_t j = 0; j < count; ++j) {
      const Matrix& s = starts[begin + j];
      if (s.rows() != rows || s.cols() != cols) throw Error(Errc::kShapeMismatch, "solve_each: ragged starts");
      std::copy_n(s.data(), s.size(), stacked.data() + j * s.size());
    }
    SolveResult r = solve(field, std::move(stacked), cfg);
    for (std::size_t j = 0; j < count; ++j) {
      out.endpoints[begin + j] = slice_rows(r.x0, j * rows, rows);
      out.nfe[begin + j] = r.nfe;
    }
  }
  return out;
}

SampleBatch sample_batch(const VectorField& model, const LatentPipeline& pipeline,
                         const LengthDistribution& lengths, std::size_t n,
                         const SolverConfig& config, const Rng& rng) {
  if (n == 0) throw Error(Errc::kInvalidArgument, "sample_batch needs n >= 1");
  const std::size_t len = model.config().seq_len;
  if (len != pipeline.max_length() || model.config().latent_width != pipeline.latent_width()) {
    throw Error(Errc::kShapeMismatch, "vector field does not match the latent pipeline");
  }
  if (lengths.total() == 0) throw Error(Errc::kEmptyCorpus, "empty length distribution");
  if (lengths.max_length() > len) throw SequenceTooLong(lengths.max_length(), len);
  std::vector<Matrix> starts;
  starts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) starts.push_back(sample_noise(rng, i, len, model.config().latent_width));
  BatchSolve solved = solve_each(model, starts, config);

  SampleBatch out;
  out.nfe = solved.nfe;
  double nfe_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Rng lr = rng.split(i).split("length");
    const std::size_t length = sample_length(lengths, lr);
    const TokenizedSequence ts = pipeline.from_latent(solved.endpoints[i], prefix_mask(length, len));
    out.sequences.push_back(detokenize(ts));
    nfe_sum += static_cast<double>(solved.nfe[i]);
  }
  out.mean_nfe = n ? nfe_sum / static_cast<double>(n) : 0.0;
  return out;
}

}  // namespace protflow
