#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "vtbench/adam.hpp"
#include "vtbench/rng.hpp"
#include "vtbench/tape.hpp"
#include "vtbench/tensor.hpp"
#include "vtbench/worldmodel.hpp"

using namespace vtb;
using dc::Tensor;
using dc::Var;

namespace {

template <typename F>
struct Fn : dc::GradCheckFn<double> {
  F f;
  explicit Fn(F g) : f(std::move(g)) {}
  Var<double> operator()(dc::Tape<double>& t,
                         const std::vector<Var<double>>& in) override {
    return f(t, in);
  }
};

template <typename F>
double fd(F f, std::vector<Tensor<double>> inputs, double eps = 1e-5) {
  Fn<F> fn(std::move(f));
  return dc::gradient_check(fn, std::move(inputs), eps);
}

Tensor<double> rnd(Rng& rng, std::vector<int> shape, double lo = -1.0,
                   double hi = 1.0, bool grad = true) {
  Tensor<double> t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  t.requires_grad = grad;
  return t;
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.dim(1) == 3);
  Tensor<float> v = t.reshaped({3, 2});
  v[0] = 9.0f;
  CHECK(t[0] == 9.0f);  // views share data
  Tensor<float> c = t.clone();
  c[0] = 1.0f;
  CHECK(t[0] == 9.0f);  // clones do not
  CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1.f, 2.f}),
                  std::invalid_argument);
}

TEST_CASE("rng determinism, splitting, and ranges") {
  Rng a(17), b(17);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng p(5), q(5);
  Rng s1 = p.split(1), s2 = p.split(2);
  CHECK(p.next_u64() == q.next_u64());  // split does not advance the parent
  CHECK(s1.next_u64() != s2.next_u64());

  Rng r(3);
  std::set<int> seen;
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    int k = r.uniform_int(7);
    CHECK(k >= 0);
    CHECK(k < 7);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("normal samples have unit moments") {
  Rng r(29);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(mean) < 0.02);
  CHECK(sd == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("dense forward matches a hand-computed example") {
  dc::Tape<double> t;
  Tensor<double> x({2, 2}, {1, 2, 3, -1});
  Tensor<double> w({2, 3}, {1, 0, 2, -1, 1, 0.5});
  Tensor<double> b({3}, {0.5, -1, 0});
  Var<double> y = t.dense(t.leaf(x), t.leaf(w), t.leaf(b));
  const Tensor<double>& v = t.value(y);
  REQUIRE(v.shape() == std::vector<int>{2, 3});
  const double expect[6] = {-0.5, 1, 3, 4.5, -2, 5.5};
  for (int i = 0; i < 6; ++i) CHECK(v[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("conv forward matches a naive loop") {
  Rng rng(1);
  const int C = 2, OC = 3, H = 6, W = 6, K = 4, S = 2, P = 1;
  Tensor<double> x = rnd(rng, {1, C, H, W});
  Tensor<double> w = rnd(rng, {OC, C, K, K});
  Tensor<double> b = rnd(rng, {OC});
  dc::Tape<double> t;
  const Tensor<double>& out = t.value(t.conv2d(t.leaf(x), t.leaf(w), t.leaf(b)));
  const int HO = H / 2, WO = W / 2;
  REQUIRE(out.shape() == std::vector<int>{1, OC, HO, WO});
  for (int oc = 0; oc < OC; ++oc) {
    for (int i = 0; i < HO; ++i) {
      for (int j = 0; j < WO; ++j) {
        double acc = b[oc];
        for (int c = 0; c < C; ++c) {
          for (int ki = 0; ki < K; ++ki) {
            for (int kj = 0; kj < K; ++kj) {
              const int ii = i * S - P + ki, jj = j * S - P + kj;
              if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
              acc += x[(static_cast<int64_t>(c) * H + ii) * W + jj] *
                     w[((static_cast<int64_t>(oc) * C + c) * K + ki) * K + kj];
            }
          }
        }
        CHECK(out[(static_cast<int64_t>(oc) * HO + i) * WO + j] ==
              doctest::Approx(acc).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("deconv is the adjoint of conv") {
  Rng rng(2);
  const int C = 3, OC = 4, H = 8, W = 8;
  Tensor<double> x = rnd(rng, {2, C, H, W});
  Tensor<double> y = rnd(rng, {2, OC, H / 2, W / 2});
  // The same weight storage serves both readings: conv gathers with
  // (out,in,k,k), deconv scatters with (in,out,k,k), so the scatter is the
  // exact transpose of the gather.
  Tensor<double> w = rnd(rng, {OC, C, 4, 4});
  Tensor<double> b0c({OC}), b0d({C});

  dc::Tape<double> t;
  // Copies, not references: growing the tape reallocates its node storage.
  Tensor<double> cx = t.value(t.conv2d(t.leaf(x), t.leaf(w), t.leaf(b0c)));
  Tensor<double> dy = t.value(t.deconv2d(t.leaf(y), t.leaf(w), t.leaf(b0d)));
  REQUIRE(dy.shape() == x.shape());
  double lhs = 0.0, rhs = 0.0;
  for (int64_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
  for (int64_t i = 0; i < dy.size(); ++i) rhs += dy[i] * x[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("finite differences: dense") {
  Rng rng(3);
  double err = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        return t.sum_all(t.tanh_(t.dense(in[0], in[1], in[2])));
      },
      {rnd(rng, {3, 4}), rnd(rng, {4, 5}), rnd(rng, {5})});
  CHECK(err < kTol);
}

TEST_CASE("finite differences: conv2d") {
  Rng rng(4);
  double err = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        return t.sum_all(t.silu(t.conv2d(in[0], in[1], in[2])));
      },
      {rnd(rng, {2, 3, 8, 8}), rnd(rng, {4, 3, 4, 4}), rnd(rng, {4})});
  CHECK(err < kTol);
}

TEST_CASE("finite differences: deconv2d") {
  Rng rng(5);
  double err = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        return t.sum_all(t.tanh_(t.deconv2d(in[0], in[1], in[2])));
      },
      {rnd(rng, {2, 4, 4, 4}), rnd(rng, {4, 3, 4, 4}), rnd(rng, {3})});
  CHECK(err < kTol);
}

TEST_CASE("finite differences: arithmetic ops") {
  Rng rng(6);
  double err = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        Var<double> p = t.mul(t.add(in[0], in[1]), t.sub(in[0], in[1]));
        Var<double> q = t.add_scalar(t.mul(in[1], in[1]), 1.5);
        return t.sum_all(t.scale(t.div(p, q), -0.7));
      },
      {rnd(rng, {3, 5}, 0.2, 1.2), rnd(rng, {3, 5}, 0.2, 1.2)});
  CHECK(err < kTol);
}

TEST_CASE("finite differences: nonlinearities") {
  Rng rng(7);
  double e1 = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        return t.sum_all(t.log_(t.add_scalar(t.exp_(t.tanh_(in[0])), 0.5)));
      },
      {rnd(rng, {4, 4}, 0.3, 1.5)});
  CHECK(e1 < kTol);
  double e2 = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        return t.sum_all(t.softplus(t.sigmoid_(t.silu(in[0]))));
      },
      {rnd(rng, {4, 4}, -2.0, 2.0)});
  CHECK(e2 < kTol);
}

TEST_CASE("finite differences: reductions") {
  Rng rng(8);
  double err = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        Var<double> a = t.scale(t.mean_all(in[0]), 2.0);
        Var<double> b = t.sum_all(t.mul(in[0], in[0]));
        Var<double> c = t.mean_all(t.sum_last(t.mul(in[0], in[1])));
        return t.add(t.add(a, b), c);
      },
      {rnd(rng, {3, 4}), rnd(rng, {3, 4})});
  CHECK(err < kTol);
}

TEST_CASE("finite differences and masking: clamped max") {
  Rng rng(9);
  double err = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        return t.sum_all(t.cmax(in[0], 0.1));
      },
      {rnd(rng, {3, 3}, 0.2, 1.0)});
  CHECK(err < kTol);

  dc::Tape<double> t;
  Tensor<double> below({2, 2}, {-0.5, -0.2, 0.0, 0.05});
  below.requires_grad = true;
  Var<double> x = t.leaf(below);
  t.backward(t.sum_all(t.cmax(x, 0.1)));
  for (int i = 0; i < 4; ++i) CHECK(t.grad(x)[i] == 0.0);  // all below threshold
}

TEST_CASE("finite differences: concat and slice") {
  Rng rng(10);
  double e1 = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        Var<double> cat = t.concat_rows({in[0], in[1]});
        Var<double> mid = t.slice_rows(cat, 1, 4);
        return t.mean_all(t.mul(mid, mid));
      },
      {rnd(rng, {3, 4}), rnd(rng, {2, 4})});
  CHECK(e1 < kTol);
  double e2 = fd(
      [](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        Var<double> cat = t.concat_last(in[0], in[1]);
        return t.sum_all(t.tanh_(t.slice_last(cat, 1, 4)));
      },
      {rnd(rng, {2, 3}), rnd(rng, {2, 2})});
  CHECK(e2 < kTol);
}

TEST_CASE("finite differences: reshape and reparameterized sampling") {
  Rng rng(11);
  Tensor<double> noise = rnd(rng, {2, 3}, -1.0, 1.0, false);
  double err = fd(
      [noise](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        Var<double> flat = t.reshape(in[0], {2, 3});
        Var<double> s = t.gaussian_sample(flat, in[1], t.constant(noise));
        return t.sum_all(t.mul(s, s));
      },
      {rnd(rng, {6}), rnd(rng, {2, 3}, 0.5, 1.5)});
  CHECK(err < kTol);
}

TEST_CASE("finite differences: composite network") {
  Rng rng(12);
  Tensor<double> target = rnd(rng, {2, 4}, -0.5, 0.5, false);
  double err = fd(
      [target](dc::Tape<double>& t, const std::vector<Var<double>>& in) {
        Var<double> h = t.silu(t.conv2d(in[0], in[1], in[2]));
        Var<double> flat = t.reshape(h, {2, 2 * 4 * 4});
        Var<double> y = t.dense(t.tanh_(t.dense(flat, in[3], in[4])), in[5], in[6]);
        Var<double> d = t.sub(y, t.constant(target));
        return t.mean_all(t.mul(d, d));
      },
      {rnd(rng, {2, 1, 8, 8}), rnd(rng, {2, 1, 4, 4}), rnd(rng, {2}),
       rnd(rng, {32, 6}), rnd(rng, {6}), rnd(rng, {6, 4}), rnd(rng, {4})});
  CHECK(err < kTol);
}

TEST_CASE("gradients accumulate across repeated uses") {
  dc::Tape<double> t;
  Tensor<double> xv({2, 2}, {1, 2, 3, 4});
  xv.requires_grad = true;
  Var<double> x = t.leaf(xv);
  // y = x*x + x  ->  dy/dx = 2x + 1
  t.backward(t.sum_all(t.add(t.mul(x, x), x)));
  for (int i = 0; i < 4; ++i)
    CHECK(t.grad(x)[i] == doctest::Approx(2.0 * xv[i] + 1.0).epsilon(1e-12));

  dc::Tape<double> t2;
  Var<double> x2 = t2.leaf(xv);
  t2.backward(t2.sum_all(t2.concat_rows({x2, x2})));
  for (int i = 0; i < 4; ++i) CHECK(t2.grad(x2)[i] == 2.0);
}

TEST_CASE("detach blocks gradient flow") {
  dc::Tape<double> t;
  Tensor<double> xv({3}, {0.5, -1.0, 2.0});
  xv.requires_grad = true;
  Var<double> x = t.leaf(xv);
  t.backward(t.sum_all(t.mul(t.detach(x), x)));
  for (int i = 0; i < 3; ++i) CHECK(t.grad(x)[i] == xv[i]);
}

TEST_CASE("constants never receive gradients") {
  dc::Tape<double> t;
  Tensor<double> xv({2}, {1.0, 2.0});
  xv.requires_grad = true;
  Var<double> c = t.constant(xv);
  Tensor<double> yv({2}, {3.0, 4.0});
  yv.requires_grad = true;
  Var<double> y = t.leaf(yv);
  t.backward(t.sum_all(t.mul(c, y)));
  CHECK(!t.has_grad(c));
  CHECK(t.grad(y)[0] == 1.0);
  CHECK(t.grad(y)[1] == 2.0);
}

TEST_CASE("tape context binds each parameter to one node and freeze works") {
  dc::Tape<float> tape;
  TapeCtx<float> ctx(tape);
  Tensor<float> p({2}, {1.0f, 2.0f});
  p.requires_grad = true;
  Var<float> v1 = ctx.var(p);
  Var<float> v2 = ctx.var(p);
  CHECK(v1.id == v2.id);
  tape.backward(tape.sum_all(tape.add(v1, v2)));
  CHECK(tape.grad(v1)[0] == 2.0f);

  dc::Tape<float> tape2;
  TapeCtx<float> frozen(tape2, true);
  Var<float> f1 = frozen.var(p);
  Tensor<float> q({2}, {5.0f, 6.0f});
  q.requires_grad = true;
  TapeCtx<float> live(tape2);
  Var<float> l1 = live.var(q);
  tape2.backward(tape2.sum_all(tape2.mul(f1, l1)));
  CHECK(!tape2.has_grad(f1));
  CHECK(tape2.grad(l1)[0] == 1.0f);
}

TEST_CASE("registry returns zero grads for untouched parameters") {
  dc::Tape<float> tape;
  TapeCtx<float> ctx(tape);
  ParamRegistry<float> reg;
  // Tensors are shared handles; keep a copy, since the reference returned
  // by add() is only valid until the next add().
  Tensor<float> a = reg.add("a", Tensor<float>({2}, {1.0f, 1.0f}));
  reg.add("b", Tensor<float>({3}, {2.0f, 2.0f, 2.0f}));
  tape.backward(tape.sum_all(ctx.var(a)));
  std::vector<Tensor<float>> g = reg.grads(ctx);
  REQUIRE(g.size() == 2);
  CHECK(g[0][0] == 1.0f);
  CHECK(g[1].shape() == std::vector<int>{3});
  CHECK(g[1][0] == 0.0f);
  CHECK(reg.count() == 5);
}

TEST_CASE("tape rejects malformed graphs") {
  dc::Tape<double> t;
  Var<double> a = t.leaf(Tensor<double>({2, 2}, 1.0));
  Var<double> b = t.leaf(Tensor<double>({2, 3}, 1.0));
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);  // non-scalar loss
  CHECK_THROWS_AS(t.log_(t.leaf(Tensor<double>({1}, 0.0))),
                  std::invalid_argument);  // non-finite value
}

TEST_CASE("adam matches a reference implementation") {
  std::vector<Tensor<float>> params = {Tensor<float>({3}, {1.0f, -2.0f, 0.5f})};
  std::vector<Tensor<float>> grads = {Tensor<float>({3}, {0.3f, -0.1f, 0.8f})};
  dc::Adam opt(1e-3f);

  double p[3] = {1.0, -2.0, 0.5};
  double m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 1; step <= 5; ++step) {
    opt.step(params, grads);
    for (int i = 0; i < 3; ++i) {
      const double g = grads[0][i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, step));
      const double vh = v[i] / (1 - std::pow(b2, step));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
      CHECK(params[0][i] == doctest::Approx(p[i]).epsilon(1e-5));
    }
  }
  CHECK(opt.steps() == 5);
}

TEST_CASE("global-norm clipping") {
  std::vector<Tensor<float>> g = {Tensor<float>({2}, {6.0f, 0.0f}),
                                  Tensor<float>({1}, {8.0f})};
  float pre = dc::clip_global_norm(g, 5.0f);
  CHECK(pre == doctest::Approx(10.0f));
  CHECK(g[0][0] == doctest::Approx(3.0f));
  CHECK(g[1][0] == doctest::Approx(4.0f));

  std::vector<Tensor<float>> h = {Tensor<float>({2}, {0.6f, 0.8f})};
  float pre2 = dc::clip_global_norm(h, 5.0f);
  CHECK(pre2 == doctest::Approx(1.0f));
  CHECK(h[0][0] == doctest::Approx(0.6f));
}

TEST_CASE("initializers are bounded and reproducible") {
  Rng r1(13), r2(13);
  Tensor<float> w1 = glorot<float>(r1, {8, 4}, 8, 4);
  Tensor<float> w2 = glorot<float>(r2, {8, 4}, 8, 4);
  const float limit = std::sqrt(6.0f / 12.0f);
  bool all_same = true;
  for (int64_t i = 0; i < w1.size(); ++i) {
    CHECK(w1[i] == w2[i]);
    CHECK(std::abs(w1[i]) <= limit);
    if (w1[i] != w1[0]) all_same = false;
  }
  CHECK(!all_same);

  Rng r3(14);
  Tensor<float> n = randn<float>(r3, {100}, 0.01f);
  double mx = 0.0;
  for (int64_t i = 0; i < n.size(); ++i) mx = std::max(mx, std::abs(double(n[i])));
  CHECK(mx < 0.05);  // 0.01 scale keeps values small
  CHECK(mx > 0.0);
}
