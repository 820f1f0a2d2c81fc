#include "berth/nn.hpp"

#include <cmath>

namespace berth::nn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_size(const Vector& x, Eigen::Index expected, const char* what) {
  if (x.size() != expected) {
    throw ShapeMismatch(std::string(what) + ": expected length " + std::to_string(expected) + ", got " +
                        std::to_string(x.size()));
  }
}

}  // namespace

ParamId ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (find(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Parameter p;
  p.name = std::move(name);
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  p.m = Matrix::Zero(rows, cols);
  p.v = Matrix::Zero(rows, cols);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) {
      return i;
    }
  }
  return std::nullopt;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) {
    p.grad.setZero();
  }
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    sq += p.grad.squaredNorm();
  }
  return std::sqrt(sq);
}

std::vector<double> ParamStore::flat_values() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for (const auto& p : params_) {
    out.insert(out.end(), p.value.data(), p.value.data() + p.value.size());
  }
  return out;
}

void ParamStore::assign_flat_values(std::span<const double> flat) {
  if (flat.size() != num_scalars()) {
    throw ShapeMismatch("assign_flat_values: size mismatch");
  }
  std::size_t offset = 0;
  for (auto& p : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p.value.size(), p.value.data());
    offset += static_cast<std::size_t>(p.value.size());
  }
}

std::vector<double> ParamStore::flat_grads() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for (const auto& p : params_) {
    out.insert(out.end(), p.grad.data(), p.grad.data() + p.grad.size());
  }
  return out;
}

AdamStats adam_update(ParamStore& store, const AdamConfig& cfg) {
  AdamStats stats;
  store.step += 1;
  const double t = static_cast<double>(store.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : store) {
    if (!p.grad.allFinite()) {
      ++stats.rejected_arrays;
      continue;
    }
    p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * p.grad;
    p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= cfg.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + cfg.eps);
  }
  return stats;
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (std::isfinite(norm) && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : store) {
      p.grad *= scale;
    }
  }
  return norm;
}

double activate(Activation act, double x) { return act == Activation::Tanh ? std::tanh(x) : x; }

Dense::Dense(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act)
    : in_(in), out_(out), act_(act) {
  weight_ = store.add(name + ".weight", out, in);
  bias_ = store.add(name + ".bias", out, 1);
}

Vector Dense::forward(const ParamStore& store, const Vector& x, Cache* cache) const {
  check_size(x, in_, "Dense::forward");
  Vector y = store.value(weight_) * x + store.value(bias_);
  if (act_ == Activation::Tanh) {
    y = y.array().tanh();
  }
  if (cache) {
    cache->input = x;
    cache->output = y;
    cache->recorded = true;
  }
  return y;
}

Vector Dense::backward(ParamStore& store, const Cache& cache, const Vector& grad_out) const {
  if (!cache.recorded) {
    throw NotRecorded("Dense::backward called before a recorded forward pass");
  }
  check_size(grad_out, out_, "Dense::backward");
  Vector dz = grad_out;
  if (act_ == Activation::Tanh) {
    dz.array() *= 1.0 - cache.output.array().square();
  }
  store.grad(weight_).noalias() += dz * cache.input.transpose();
  store.grad(bias_) += dz;
  return store.value(weight_).transpose() * dz;
}

LstmCell::LstmCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden)
    : in_(in), hidden_(hidden) {
  w_x_ = store.add(name + ".weight_ih", 4 * hidden, in);
  w_h_ = store.add(name + ".weight_hh", 4 * hidden, hidden);
  b_ = store.add(name + ".bias", 4 * hidden, 1);
}

RecurrentState LstmCell::forward(const ParamStore& store, const Vector& x, const RecurrentState& state,
                                 Cache* cache) const {
  check_size(x, in_, "LstmCell::forward input");
  check_size(state.h, hidden_, "LstmCell::forward h");
  check_size(state.c, hidden_, "LstmCell::forward c");
  const Eigen::Index n = hidden_;
  const Vector z = store.value(w_x_) * x + store.value(w_h_) * state.h + store.value(b_);

  const Vector i = z.segment(0, n).unaryExpr(&sigmoid);
  const Vector f = z.segment(n, n).unaryExpr(&sigmoid);
  const Vector g = z.segment(2 * n, n).array().tanh();
  const Vector o = z.segment(3 * n, n).unaryExpr(&sigmoid);

  RecurrentState next;
  next.c = f.cwiseProduct(state.c) + i.cwiseProduct(g);
  const Vector tanh_c = next.c.array().tanh();
  next.h = o.cwiseProduct(tanh_c);

  if (cache) {
    cache->x = x;
    cache->h_prev = state.h;
    cache->c_prev = state.c;
    cache->i = i;
    cache->f = f;
    cache->g = g;
    cache->o = o;
    cache->c = next.c;
    cache->tanh_c = tanh_c;
    cache->recorded = true;
  }
  return next;
}

LstmCell::Grads LstmCell::backward(ParamStore& store, const Cache& k, const Vector& dh, const Vector& dc) const {
  if (!k.recorded) {
    throw NotRecorded("LstmCell::backward called before a recorded forward pass");
  }
  check_size(dh, hidden_, "LstmCell::backward dh");
  check_size(dc, hidden_, "LstmCell::backward dc");
  const Eigen::Index n = hidden_;

  const Vector d_o = dh.cwiseProduct(k.tanh_c);
  const Vector dc_total =
      dc + dh.cwiseProduct(k.o).cwiseProduct((1.0 - k.tanh_c.array().square()).matrix());

  Vector dz(4 * n);
  dz.segment(0, n) = dc_total.cwiseProduct(k.g).cwiseProduct((k.i.array() * (1.0 - k.i.array())).matrix());
  dz.segment(n, n) = dc_total.cwiseProduct(k.c_prev).cwiseProduct((k.f.array() * (1.0 - k.f.array())).matrix());
  dz.segment(2 * n, n) = dc_total.cwiseProduct(k.i).cwiseProduct((1.0 - k.g.array().square()).matrix());
  dz.segment(3 * n, n) = d_o.cwiseProduct((k.o.array() * (1.0 - k.o.array())).matrix());

  store.grad(w_x_).noalias() += dz * k.x.transpose();
  store.grad(w_h_).noalias() += dz * k.h_prev.transpose();
  store.grad(b_) += dz;

  Grads g;
  g.dx = store.value(w_x_).transpose() * dz;
  g.dh_prev = store.value(w_h_).transpose() * dz;
  g.dc_prev = dc_total.cwiseProduct(k.f);
  return g;
}

void init_fan_in_uniform(Matrix& w, Rng& rng, double scale) {
  const double bound = scale / std::sqrt(static_cast<double>(std::max<Eigen::Index>(w.cols(), 1)));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      w(i, j) = rng.uniform(-bound, bound);
    }
  }
}

void init_orthogonal(Matrix& w, Rng& rng, double gain) {
  const Eigen::Index rows = w.rows();
  const Eigen::Index cols = w.cols();
  const bool tall = rows >= cols;
  Matrix a(tall ? rows : cols, tall ? cols : rows);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      a(i, j) = rng.normal();
    }
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  // Sign-fix so the distribution is uniform over orthogonal matrices.
  const Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) {
      q.col(j) *= -1.0;
    }
  }
  w = gain * (tall ? q : Matrix(q.transpose()));
}

}  // namespace berth::nn
