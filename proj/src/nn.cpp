#include "protflow/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "protflow/error.hpp"

namespace protflow::nn {

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->value.size();
  return n;
}

void zero_grads(const ParamList& params) {
  for (Param* p : params) {
    if (!p->grad.same_shape(p->value)) p->grad = Matrix(p->value.rows(), p->value.cols());
    p->zero_grad();
  }
}

std::vector<double> flatten_values(const ParamList& params) {
  std::vector<double> out;
  out.reserve(parameter_count(params));
  for (const Param* p : params) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

std::vector<double> flatten_grads(const ParamList& params) {
  std::vector<double> out;
  out.reserve(parameter_count(params));
  for (const Param* p : params) out.insert(out.end(), p->grad.values().begin(), p->grad.values().end());
  return out;
}

void assign_values(const ParamList& params, std::span<const double> flat) {
  if (flat.size() != parameter_count(params)) {
    throw Error(Errc::kShapeMismatch, "assign_values: wrong flat length");
  }
  std::size_t offset = 0;
  for (Param* p : params) {
    std::copy_n(flat.begin() + static_cast<long>(offset), p->value.size(), p->value.data());
    offset += p->value.size();
  }
}

double grad_norm(const ParamList& params) {
  double sum = 0.0;
  for (const Param* p : params)
    for (double g : p->grad.values()) sum += g * g;
  return std::sqrt(sum);
}

void round_to_float(const ParamList& params) {
  for (Param* p : params)
    for (double& v : p->value.values()) v = static_cast<double>(static_cast<float>(v));
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

static double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out, double scale) {
  Matrix w = gaussian(rng, fan_in, fan_out);
  w *= scale / std::sqrt(static_cast<double>(fan_in));
  return w;
}

// ---------------------------------------------------------------------------

Var Tape::push(Matrix value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_of(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false); }

Var Tape::param(Param& p) {
  Var v = push(p.value, true);
  node(v).param = &p;
  return v;
}

void Tape::backward(Var loss) {
  if (value(loss).rows() != 1 || value(loss).cols() != 1) {
    throw Error(Errc::kShapeMismatch, "backward needs a scalar loss");
  }
  grad_of(loss)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward();
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

Var Tape::linear(Var x, Var w, Var b) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(w);
  const Matrix& bv = value(b);
  if (bv.rows() != 1 || bv.cols() != wv.cols()) throw Error(Errc::kShapeMismatch, "linear bias");
  Matrix y = matmul(xv, wv);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv(0, c);
  }
  Var out = push(std::move(y), needs(x) || needs(w) || needs(b));
  if (!needs(out)) return out;
  node(out).backward = [this, x, w, b, out] {
    const Matrix& dy = nodes_[out.id].grad;
    if (needs(x)) grad_of(x) += matmul_nt(dy, value(w));
    if (needs(w)) matmul_tn_acc(value(x), dy, grad_of(w));
    if (needs(b)) {
      Matrix& db = grad_of(b);
      for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto row = dy.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) db(0, c) += row[c];
      }
    }
  };
  return out;
}

Var Tape::linear(Var x, Var w) {
  Var out = push(matmul(value(x), value(w)), needs(x) || needs(w));
  if (!needs(out)) return out;
  node(out).backward = [this, x, w, out] {
    const Matrix& dy = nodes_[out.id].grad;
    if (needs(x)) grad_of(x) += matmul_nt(dy, value(w));
    if (needs(w)) matmul_tn_acc(value(x), dy, grad_of(w));
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(value(a) + value(b), needs(a) || needs(b));
  if (!needs(out)) return out;
  node(out).backward = [this, a, b, out] {
    const Matrix& dy = nodes_[out.id].grad;
    if (needs(a)) grad_of(a) += dy;
    if (needs(b)) grad_of(b) += dy;
  };
  return out;
}

Var Tape::add_group_rows(Var x, Var per_group, std::size_t group) {
  const Matrix& xv = value(x);
  const Matrix& gv = value(per_group);
  if (group == 0 || xv.rows() != gv.rows() * group || xv.cols() != gv.cols()) {
    throw Error(Errc::kShapeMismatch, "add_group_rows");
  }
  Matrix y = xv;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    auto add = gv.row(r / group);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += add[c];
  }
  Var out = push(std::move(y), needs(x) || needs(per_group));
  if (!needs(out)) return out;
  node(out).backward = [this, x, per_group, group, out] {
    const Matrix& dy = nodes_[out.id].grad;
    if (needs(x)) grad_of(x) += dy;
    if (needs(per_group)) {
      Matrix& dg = grad_of(per_group);
      for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto src = dy.row(r);
        auto dst = dg.row(r / group);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    }
  };
  return out;
}

Var Tape::scale(Var x, double s) {
  Var out = push(s * value(x), needs(x));
  if (!needs(out)) return out;
  node(out).backward = [this, x, s, out] { grad_of(x) += s * nodes_[out.id].grad; };
  return out;
}

Var Tape::gather_rows(Var table, std::vector<std::size_t> index) {
  const Matrix& tv = value(table);
  Matrix y(index.size(), tv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= tv.rows()) throw Error(Errc::kShapeMismatch, "gather_rows index out of range");
    std::copy_n(tv.row(index[r]).data(), tv.cols(), y.row(r).data());
  }
  Var out = push(std::move(y), needs(table));
  if (!needs(out)) return out;
  node(out).backward = [this, table, out, index = std::move(index)] {
    const Matrix& dy = nodes_[out.id].grad;
    Matrix& dt = grad_of(table);
    for (std::size_t r = 0; r < index.size(); ++r) {
      auto src = dy.row(r);
      auto dst = dt.row(index[r]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  };
  return out;
}

Var Tape::gelu(Var x) {
  Matrix y = value(x);
  for (double& v : y.values()) v = nn::gelu(v);
  Var out = push(std::move(y), needs(x));
  if (!needs(out)) return out;
  node(out).backward = [this, x, out] {
    const Matrix& dy = nodes_[out.id].grad;
    const Matrix& xv = value(x);
    Matrix& dx = grad_of(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += dy.data()[i] * gelu_grad(xv.data()[i]);
  };
  return out;
}

Var Tape::tanh(Var x) {
  Matrix y = value(x);
  for (double& v : y.values()) v = std::tanh(v);
  Var out = push(std::move(y), needs(x));
  if (!needs(out)) return out;
  node(out).backward = [this, x, out] {
    const Matrix& dy = nodes_[out.id].grad;
    const Matrix& yv = nodes_[out.id].value;
    Matrix& dx = grad_of(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double t = yv.data()[i];
      dx.data()[i] += dy.data()[i] * (1.0 - t * t);
    }
  };
  return out;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = value(x);
  const std::size_t n = xv.rows(), d = xv.cols();
  if (value(gain).cols() != d || value(bias).cols() != d) throw Error(Errc::kShapeMismatch, "layer_norm");
  Matrix xhat(n, d);
  std::vector<double> rstd(n);
  Matrix y(n, d);
  const Matrix& g = value(gain);
  const Matrix& b = value(bias);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (row[c] - mean) * rstd[r];
      y(r, c) = xhat(r, c) * g(0, c) + b(0, c);
    }
  }
  Var out = push(std::move(y), needs(x) || needs(gain) || needs(bias));
  if (!needs(out)) return out;
  node(out).backward = [this, x, gain, bias, out, xhat = std::move(xhat), rstd = std::move(rstd)] {
    const Matrix& dy = nodes_[out.id].grad;
    const Matrix& g = value(gain);
    const std::size_t n = dy.rows(), d = dy.cols();
    if (needs(gain) || needs(bias)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) {
          if (needs(gain)) grad_of(gain)(0, c) += dy(r, c) * xhat(r, c);
          if (needs(bias)) grad_of(bias)(0, c) += dy(r, c);
        }
    }
    if (needs(x)) {
      Matrix& dx = grad_of(x);
      std::vector<double> dxhat(d);
      for (std::size_t r = 0; r < n; ++r) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dxhat[c] = dy(r, c) * g(0, c);
          mean_d += dxhat[c];
          mean_dx += dxhat[c] * xhat(r, c);
        }
        mean_d /= static_cast<double>(d);
        mean_dx /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c)
          dx(r, c) += rstd[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
      }
    }
  };
  return out;
}

Var Tape::attention(Var q, Var k, Var v, std::size_t group) {
  const Matrix& qv = value(q);
  const Matrix& kv = value(k);
  const Matrix& vv = value(v);
  const std::size_t n = qv.rows(), d = qv.cols(), dv = vv.cols();
  if (group == 0 || n % group != 0 || !kv.same_shape(qv) || vv.rows() != n) {
    throw Error(Errc::kShapeMismatch, "attention");
  }
  const std::size_t groups = n / group;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> probs(groups * group * group);
  Matrix y(n, dv);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * group;
    double* p = probs.data() + g * group * group;
    for (std::size_t i = 0; i < group; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < group; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += qv(base + i, c) * kv(base + j, c);
        p[i * group + j] = s * inv_sqrt_d;
        mx = std::max(mx, p[i * group + j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < group; ++j) {
        p[i * group + j] = std::exp(p[i * group + j] - mx);
        z += p[i * group + j];
      }
      for (std::size_t j = 0; j < group; ++j) {
        p[i * group + j] /= z;
        const double w = p[i * group + j];
        for (std::size_t c = 0; c < dv; ++c) y(base + i, c) += w * vv(base + j, c);
      }
    }
  }
  Var out = push(std::move(y), needs(q) || needs(k) || needs(v));
  if (!needs(out)) return out;
  node(out).backward = [this, q, k, v, out, group, groups, inv_sqrt_d, probs = std::move(probs)] {
    const Matrix& dy = nodes_[out.id].grad;
    const Matrix& qv = value(q);
    const Matrix& kv = value(k);
    const Matrix& vv = value(v);
    const std::size_t d = qv.cols(), dv = vv.cols();
    std::vector<double> ds(group * group);
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = g * group;
      const double* p = probs.data() + g * group * group;
      if (needs(v)) {
        Matrix& dvm = grad_of(v);
        for (std::size_t i = 0; i < group; ++i)
          for (std::size_t j = 0; j < group; ++j) {
            const double w = p[i * group + j];
            for (std::size_t c = 0; c < dv; ++c) dvm(base + j, c) += w * dy(base + i, c);
          }
      }
      if (!needs(q) && !needs(k)) continue;
      for (std::size_t i = 0; i < group; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < group; ++j) {
          double dp = 0.0;
          for (std::size_t c = 0; c < dv; ++c) dp += dy(base + i, c) * vv(base + j, c);
          ds[i * group + j] = dp;
          dot += dp * p[i * group + j];
        }
        for (std::size_t j = 0; j < group; ++j)
          ds[i * group + j] = p[i * group + j] * (ds[i * group + j] - dot) * inv_sqrt_d;
      }
      for (std::size_t i = 0; i < group; ++i)
        for (std::size_t j = 0; j < group; ++j) {
          const double s = ds[i * group + j];
          if (needs(q)) {
            Matrix& dq = grad_of(q);
            for (std::size_t c = 0; c < d; ++c) dq(base + i, c) += s * kv(base + j, c);
          }
          if (needs(k)) {
            Matrix& dk = grad_of(k);
            for (std::size_t c = 0; c < d; ++c) dk(base + j, c) += s * qv(base + i, c);
          }
        }
    }
  };
  return out;
}

Var Tape::mse(Var pred, const Matrix& target) {
  const Matrix& pv = value(pred);
  if (!pv.same_shape(target)) throw Error(Errc::kShapeMismatch, "mse");
  Matrix diff = pv - target;
  double sum = 0.0;
  for (double v : diff.values()) sum += v * v;
  const double count = static_cast<double>(diff.size());
  Var out = push(Matrix(1, 1, sum / count), needs(pred));
  if (!needs(out)) return out;
  node(out).backward = [this, pred, out, count, diff = std::move(diff)] {
    const double g = nodes_[out.id].grad(0, 0) * 2.0 / count;
    Matrix& dp = grad_of(pred);
    for (std::size_t i = 0; i < dp.size(); ++i) dp.data()[i] += g * diff.data()[i];
  };
  return out;
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& lv = value(logits);
  if (targets.size() != lv.rows()) throw Error(Errc::kShapeMismatch, "cross_entropy targets");
  const std::size_t n = lv.rows(), c = lv.cols();
  Matrix probs(n, c);
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= c) throw Error(Errc::kInvalidTokenId, "cross_entropy target");
    auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs(r, j) = std::exp(row[j] - mx);
      z += probs(r, j);
    }
    for (std::size_t j = 0; j < c; ++j) probs(r, j) /= z;
    total += -(row[static_cast<std::size_t>(targets[r])] - mx - std::log(z));
    ++valid;
  }
  if (valid == 0) throw Error(Errc::kInvalidArgument, "cross_entropy with no valid rows");
  Var out = push(Matrix(1, 1, total / static_cast<double>(valid)), needs(logits));
  if (!needs(out)) return out;
  std::vector<int> tgt(targets.begin(), targets.end());
  node(out).backward = [this, logits, out, valid, probs = std::move(probs), tgt = std::move(tgt)] {
    const double g = nodes_[out.id].grad(0, 0) / static_cast<double>(valid);
    Matrix& dl = grad_of(logits);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      if (tgt[r] < 0) continue;
      for (std::size_t j = 0; j < probs.cols(); ++j) {
        const double onehot = static_cast<int>(j) == tgt[r] ? 1.0 : 0.0;
        dl(r, j) += g * (probs(r, j) - onehot);
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------

AdamW::AdamW(const ParamList& params, AdamWConfig config) : params_(params), config_(config) {
  for (const Param* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    double* w = params_[i]->value.data();
    const double* g = params_[i]->grad.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t j = 0; j < params_[i]->value.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * w[j]);
    }
  }
}

double CosineSchedule::operator()(std::size_t step) const {
  if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double span = static_cast<double>(std::max<std::size_t>(1, total > warmup ? total - warmup : 1));
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
  return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Param* p : params) p->grad *= s;
  }
  return norm;
}

Ema::Ema(const ParamList& params, double decay) : decay_(decay) {
  for (const Param* p : params) shadow_.push_back(p->value);
}

void Ema::update(const ParamList& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* s = shadow_[i].data();
    const double* w = params[i]->value.data();
    for (std::size_t j = 0; j < shadow_[i].size(); ++j) s[j] = decay_ * s[j] + (1.0 - decay_) * w[j];
  }
}

void Ema::copy_to(const ParamList& params) const {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = shadow_[i];
}

}  // namespace protflow::nn
