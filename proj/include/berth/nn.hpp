#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "berth/rng.hpp"

// Minimal dense + LSTM kernel with hand-written reverse-mode gradients.
// Every layer is a view onto parameters owned by a ParamStore; forward passes
// optionally record a cache, and backward accumulates into the store's grads.

namespace berth::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotRecorded : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // first moment
  Matrix v;  // second moment
};

class ParamStore {
 public:
  ParamId add(std::string name, Eigen::Index rows, Eigen::Index cols);

  Parameter& at(ParamId id) { return params_.at(id); }
  const Parameter& at(ParamId id) const { return params_.at(id); }
  const Matrix& value(ParamId id) const { return params_[id].value; }
  Matrix& value(ParamId id) { return params_[id].value; }
  Matrix& grad(ParamId id) { return params_[id].grad; }

  std::optional<ParamId> find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  double grad_norm() const;

  std::vector<double> flat_values() const;
  void assign_flat_values(std::span<const double> flat);
  std::vector<double> flat_grads() const;

  std::int64_t step = 0;  // optimizer updates applied

 private:
  std::vector<Parameter> params_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamStats {
  std::size_t rejected_arrays = 0;  // arrays skipped for non-finite gradients
};

// Bias-corrected Adam over every array in the store, using its grad field.
AdamStats adam_update(ParamStore& store, const AdamConfig& cfg);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

enum class Activation { Linear, Tanh };

double activate(Activation act, double x);

class Dense {
 public:
  struct Cache {
    Vector input;
    Vector output;
    bool recorded = false;
  };

  Dense() = default;
  Dense(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act);

  Vector forward(const ParamStore& store, const Vector& x, Cache* cache = nullptr) const;
  // Accumulates dL/dW, dL/db and returns dL/dx.
  Vector backward(ParamStore& store, const Cache& cache, const Vector& grad_out) const;

  ParamId weight() const { return weight_; }
  ParamId bias() const { return bias_; }
  Eigen::Index in() const { return in_; }
  Eigen::Index out() const { return out_; }

 private:
  ParamId weight_ = 0;
  ParamId bias_ = 0;
  Eigen::Index in_ = 0;
  Eigen::Index out_ = 0;
  Activation act_ = Activation::Linear;
};

struct RecurrentState {
  Vector h;
  Vector c;

  static RecurrentState zeros(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n)}; }
  bool operator==(const RecurrentState& o) const { return h == o.h && c == o.c; }
};

// Gate rows are stacked [input, forget, candidate, output].
class LstmCell {
 public:
  struct Cache {
    Vector x, h_prev, c_prev;
    Vector i, f, g, o, c, tanh_c;
    bool recorded = false;
  };
  struct Grads {
    Vector dx;
    Vector dh_prev;
    Vector dc_prev;
  };

  LstmCell() = default;
  LstmCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden);

  RecurrentState forward(const ParamStore& store, const Vector& x, const RecurrentState& state,
                         Cache* cache = nullptr) const;
  // dh, dc: gradients w.r.t. the new hidden and cell vectors.
  Grads backward(ParamStore& store, const Cache& cache, const Vector& dh, const Vector& dc) const;

  ParamId input_weight() const { return w_x_; }
  ParamId recurrent_weight() const { return w_h_; }
  ParamId bias() const { return b_; }
  Eigen::Index in() const { return in_; }
  Eigen::Index hidden() const { return hidden_; }

 private:
  ParamId w_x_ = 0;
  ParamId w_h_ = 0;
  ParamId b_ = 0;
  Eigen::Index in_ = 0;
  Eigen::Index hidden_ = 0;
};

// U(-scale/sqrt(fan_in), scale/sqrt(fan_in)), fan_in = cols.
void init_fan_in_uniform(Matrix& w, Rng& rng, double scale = 1.0);
// Orthogonal rows/columns (QR of a Gaussian matrix), times gain.
void init_orthogonal(Matrix& w, Rng& rng, double gain = 1.0);

}  // namespace berth::nn
