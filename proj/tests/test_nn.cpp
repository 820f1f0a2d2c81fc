#include <doctest.h>

#include <cmath>
#include <vector>

#include "berth/nn.hpp"

using namespace berth;
using namespace berth::nn;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_uniform(Matrix& m, Rng& rng, double scale) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.uniform(-scale, scale);
  }
}

// Relative error with an absolute floor, as used by the gradient checks.
bool grad_close(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  return diff <= 1e-6 || diff / std::max(std::abs(analytic), std::abs(numeric)) < 1e-4;
}

}  // namespace

TEST_CASE("dense layer") {
  ParamStore store;
  Dense tanh_layer(store, "a", 3, 2, Activation::Tanh);
  Dense lin(store, "b", 3, 3, Activation::Linear);

  SUBCASE("zero weights give activation(0)") {
    const Vector y = tanh_layer.forward(store, Vector::Constant(3, 4.0));
    CHECK(y == Vector::Zero(2));
  }
  SUBCASE("identity weights pass the input through") {
    store.value(lin.weight()) = Matrix::Identity(3, 3);
    const Vector x{{0.3, -1.7, 2.5}};
    CHECK(lin.forward(store, x) == x);
  }
  SUBCASE("3 to 2 product computed by hand") {
    store.value(tanh_layer.weight()) << 0.5, -1.0, 2.0, 0.25, 0.0, -0.5;
    store.value(tanh_layer.bias()) << 0.1, -0.2;
    const Vector x{{1.0, 2.0, -1.0}};
    // Row 0: 0.5 - 2 - 2 + 0.1 = -3.4; row 1: 0.25 + 0 + 0.5 - 0.2 = 0.55.
    const Vector y = tanh_layer.forward(store, x);
    CHECK(y(0) == doctest::Approx(std::tanh(-3.4)).epsilon(1e-15));
    CHECK(y(1) == doctest::Approx(std::tanh(0.55)).epsilon(1e-15));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(tanh_layer.forward(store, Vector::Zero(4)), ShapeMismatch);
  }
  SUBCASE("backward before forward") {
    Dense::Cache cache;
    CHECK_THROWS_AS(tanh_layer.backward(store, cache, Vector::Ones(2)), NotRecorded);
  }
  SUBCASE("sum of squares of a linear layer has the closed-form gradient") {
    Rng rng(3);
    fill_uniform(store.value(lin.weight()), rng, 1.0);
    fill_uniform(store.value(lin.bias()), rng, 1.0);
    const Vector x{{0.4, -0.9, 1.3}};
    Dense::Cache cache;
    const Vector y = lin.forward(store, x, &cache);
    store.zero_grad();
    const Vector dx = lin.backward(store, cache, 2.0 * y);
    CHECK((store.grad(lin.weight()) - 2.0 * y * x.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((store.grad(lin.bias()) - 2.0 * y).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((dx - 2.0 * store.value(lin.weight()).transpose() * y).cwiseAbs().maxCoeff() < 1e-14);
    // The other layer is off the loss path.
    CHECK(store.grad(tanh_layer.weight()).isZero(0.0));
    CHECK(store.grad(tanh_layer.bias()).isZero(0.0));
  }
  SUBCASE("loss equal to a bias entry has gradient one") {
    Dense::Cache cache;
    lin.forward(store, Vector::Zero(3), &cache);
    store.zero_grad();
    lin.backward(store, cache, Vector::Unit(3, 1));
    CHECK(store.grad(lin.bias())(1, 0) == 1.0);
    CHECK(store.grad(lin.bias()).sum() == 1.0);
  }
}

TEST_CASE("lstm cell") {
  ParamStore store;
  LstmCell cell(store, "lstm", 3, 2);

  SUBCASE("zero parameters from the zero state stay at zero") {
    const auto s = cell.forward(store, Vector{{1.0, -2.0, 0.5}}, RecurrentState::zeros(2));
    CHECK(s.h == Vector::Zero(2));
    CHECK(s.c == Vector::Zero(2));
    LstmCell::Cache cache;
    cell.forward(store, Vector{{1.0, -2.0, 0.5}}, RecurrentState{Vector::Ones(2), Vector::Ones(2)}, &cache);
    CHECK(cache.i.isConstant(0.5));
    CHECK(cache.f.isConstant(0.5));
    CHECK(cache.o.isConstant(0.5));
    CHECK(cache.g.isZero(0.0));
  }
  SUBCASE("saturated forget gate preserves the cell") {
    store.value(cell.bias()).block(2, 0, 2, 1).setConstant(50.0);  // forget rows
    store.value(cell.bias()).block(0, 0, 2, 1).setConstant(-50.0);  // input rows closed
    Rng rng(7);
    fill_uniform(store.value(cell.recurrent_weight()), rng, 0.5);
    RecurrentState s{Vector::Zero(2), Vector{{0.7, -1.3}}};
    for (int k = 0; k < 20; ++k) {
      s = cell.forward(store, Vector{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}}, s);
    }
    CHECK(s.c(0) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(s.c(1) == doctest::Approx(-1.3).epsilon(1e-12));
  }
  SUBCASE("one random step matches a scalar trace") {
    Rng rng(11);
    fill_uniform(store.value(cell.input_weight()), rng, 1.0);
    fill_uniform(store.value(cell.recurrent_weight()), rng, 1.0);
    fill_uniform(store.value(cell.bias()), rng, 1.0);
    const double x[3] = {0.3, -0.8, 1.1};
    const double h0[2] = {0.2, -0.4};
    const double c0[2] = {-0.6, 0.9};
    const Matrix& wx = store.value(cell.input_weight());
    const Matrix& wh = store.value(cell.recurrent_weight());
    const Matrix& b = store.value(cell.bias());
    const auto pre = [&](int row) {
      double z = b(row, 0);
      for (int j = 0; j < 3; ++j) z += wx(row, j) * x[j];
      for (int j = 0; j < 2; ++j) z += wh(row, j) * h0[j];
      return z;
    };
    const auto s = cell.forward(store, Vector{{x[0], x[1], x[2]}}, RecurrentState{Vector{{h0[0], h0[1]}}, Vector{{c0[0], c0[1]}}});
    for (int k = 0; k < 2; ++k) {
      const double ig = sig(pre(k));
      const double fg = sig(pre(2 + k));
      const double gg = std::tanh(pre(4 + k));
      const double og = sig(pre(6 + k));
      const double c = fg * c0[k] + ig * gg;
      const double h = og * std::tanh(c);
      CHECK(s.c(k) == doctest::Approx(c).epsilon(1e-14));
      CHECK(s.h(k) == doctest::Approx(h).epsilon(1e-14));
    }
  }
  SUBCASE("forward is stateless with respect to the store") {
    Rng rng(2);
    fill_uniform(store.value(cell.input_weight()), rng, 1.0);
    const Vector x{{0.1, 0.2, 0.3}};
    const auto st = RecurrentState{Vector{{0.5, 0.5}}, Vector{{-0.5, 0.5}}};
    CHECK(cell.forward(store, x, st) == cell.forward(store, x, st));
  }
  SUBCASE("shape mismatch and missing forward") {
    CHECK_THROWS_AS(cell.forward(store, Vector::Zero(2), RecurrentState::zeros(2)), ShapeMismatch);
    CHECK_THROWS_AS(cell.forward(store, Vector::Zero(3), RecurrentState::zeros(3)), ShapeMismatch);
    LstmCell::Cache cache;
    CHECK_THROWS_AS(cell.backward(store, cache, Vector::Zero(2), Vector::Zero(2)), NotRecorded);
  }
}

TEST_CASE("composed network gradients match finite differences") {
  // dense(tanh) -> lstm unrolled over T steps -> linear head; loss = sum of squares of outputs.
  const int T = 4;
  for (int draw = 0; draw < 100; ++draw) {
    ParamStore store;
    Dense in(store, "in", 3, 4, Activation::Tanh);
    LstmCell cell(store, "lstm", 4, 3);
    Dense head(store, "head", 3, 2, Activation::Linear);
    Rng rng(static_cast<std::uint64_t>(draw));
    for (auto& p : store) {
      fill_uniform(p.value, rng, 0.8);
    }
    std::vector<Vector> xs;
    for (int t = 0; t < T; ++t) {
      xs.push_back(Vector{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}});
    }
    const auto loss = [&](ParamStore& s) {
      auto st = RecurrentState::zeros(3);
      double l = 0.0;
      for (const auto& x : xs) {
        st = cell.forward(s, in.forward(s, x), st);
        l += head.forward(s, st.h).squaredNorm();
      }
      return l;
    };

    std::vector<Dense::Cache> in_c(T), head_c(T);
    std::vector<LstmCell::Cache> cell_c(T);
    auto st = RecurrentState::zeros(3);
    std::vector<Vector> ys;
    for (int t = 0; t < T; ++t) {
      st = cell.forward(store, in.forward(store, xs[t], &in_c[t]), st, &cell_c[t]);
      ys.push_back(head.forward(store, st.h, &head_c[t]));
    }
    store.zero_grad();
    Vector dh_next = Vector::Zero(3), dc_next = Vector::Zero(3);
    for (int t = T - 1; t >= 0; --t) {
      const Vector dh = head.backward(store, head_c[t], 2.0 * ys[t]) + dh_next;
      const auto g = cell.backward(store, cell_c[t], dh, dc_next);
      in.backward(store, in_c[t], g.dx);
      dh_next = g.dh_prev;
      dc_next = g.dc_prev;
    }

    const auto analytic = store.flat_grads();
    auto flat = store.flat_values();
    const double eps = 1e-5;
    int bad = 0;
    for (std::size_t k = 0; k < flat.size(); ++k) {
      const double orig = flat[k];
      flat[k] = orig + eps;
      store.assign_flat_values(flat);
      const double lp = loss(store);
      flat[k] = orig - eps;
      store.assign_flat_values(flat);
      const double lm = loss(store);
      flat[k] = orig;
      bad += !grad_close(analytic[k], (lp - lm) / (2 * eps));
    }
    store.assign_flat_values(flat);
    CHECK(bad == 0);
  }
}

TEST_CASE("adam") {
  ParamStore store;
  const auto id = store.add("w", 1, 1);
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};

  SUBCASE("three-step trace of the moment recursion") {
    store.value(id)(0, 0) = 1.0;
    const double grads[3] = {0.5, -0.2, 0.8};
    double w = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      const double g = grads[t - 1];
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1 - std::pow(0.9, t));
      const double vh = v / (1 - std::pow(0.999, t));
      w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      store.grad(id)(0, 0) = g;
      adam_update(store, cfg);
      CHECK(store.value(id)(0, 0) == doctest::Approx(w).epsilon(1e-14));
      CHECK(store.at(id).m(0, 0) == doctest::Approx(m).epsilon(1e-14));
      CHECK(store.at(id).v(0, 0) == doctest::Approx(v).epsilon(1e-14));
    }
    CHECK(store.step == 3);
  }
  SUBCASE("zero gradient leaves parameters and decays the moments") {
    store.value(id)(0, 0) = 2.0;
    store.at(id).m(0, 0) = 0.4;
    store.at(id).v(0, 0) = 0.3;
    store.step = 5;
    store.grad(id)(0, 0) = 0.0;
    adam_update(store, cfg);
    CHECK(store.at(id).m(0, 0) == doctest::Approx(0.36));
    CHECK(store.at(id).v(0, 0) == doctest::Approx(0.2997));
    // The decayed first moment still moves the weight; with m = v = 0 it would not.
    ParamStore fresh;
    const auto f = fresh.add("w", 2, 2);
    fresh.value(f).setConstant(1.5);
    adam_update(fresh, cfg);
    CHECK(fresh.value(f).isConstant(1.5));
  }
  SUBCASE("constant gradient approaches lr times its sign") {
    store.grad(id)(0, 0) = -3.0;
    double prev = store.value(id)(0, 0);
    double last_step = 0.0;
    for (int t = 0; t < 5000; ++t) {
      adam_update(store, cfg);
      last_step = store.value(id)(0, 0) - prev;
      prev = store.value(id)(0, 0);
    }
    CHECK(last_step == doctest::Approx(0.1).epsilon(1e-6));
  }
  SUBCASE("non-finite gradient is rejected for that array only") {
    const auto other = store.add("u", 2, 1);
    store.value(id)(0, 0) = 1.0;
    store.grad(id)(0, 0) = NAN;
    store.grad(other).setConstant(1.0);
    const auto stats = adam_update(store, cfg);
    CHECK(stats.rejected_arrays == 1);
    CHECK(store.value(id)(0, 0) == 1.0);
    CHECK(store.at(id).m(0, 0) == 0.0);
    CHECK(store.value(other).isConstant(-0.1, 1e-6));
  }
  SUBCASE("global norm clipping") {
    const auto other = store.add("u", 2, 1);
    store.grad(id)(0, 0) = 3.0;
    store.grad(other) << 4.0, 0.0;
    CHECK(clip_grad_norm(store, 0.5) == doctest::Approx(5.0));
    CHECK(store.grad_norm() == doctest::Approx(0.5));
    CHECK(store.grad(id)(0, 0) == doctest::Approx(0.3));
  }
}

TEST_CASE("initializers") {
  SUBCASE("orthogonal matrices have orthonormal columns") {
    Rng rng(1);
    Matrix w(12, 6);
    init_orthogonal(w, rng);
    CHECK((w.transpose() * w - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("fan-in uniform stays in its bound and is seed-determined") {
    Rng a(4), b(4);
    Matrix w1(5, 16), w2(5, 16);
    init_fan_in_uniform(w1, a);
    init_fan_in_uniform(w2, b);
    CHECK(w1 == w2);
    CHECK(w1.cwiseAbs().maxCoeff() <= 0.25);
  }
}
