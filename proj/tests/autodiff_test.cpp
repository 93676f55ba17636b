#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pserank/autodiff.hpp"
#include "pserank/rng.hpp"

using namespace pserank;
using namespace pserank::ad;

namespace {

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1e-6, std::fabs(a), std::fabs(b)});
}

Mat random_vec(int n, Rng& rng, double scale = 1.0) {
  Mat m = Mat::vec(n);
  for (auto& x : m.v) x = static_cast<Real>(scale * rng.uniform(-1.0, 1.0));
  return m;
}

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (auto& x : m.v) x = static_cast<Real>(scale * rng.uniform(-1.0, 1.0));
  return m;
}

// Compares tape gradients of a scalar function against central differences.
// build() maps input node ids to the loss node on the given tape.
void check_against_fd(const std::vector<Mat>& inputs,
                      const std::function<int(Tape&, const std::vector<int>&)>& build,
                      double tol) {
  Tape t;
  std::vector<int> ids;
  for (const auto& m : inputs) ids.push_back(t.constant(m));
  int loss = build(t, ids);
  REQUIRE(t.value(loss).is_scalar());
  t.backward(loss);

  auto f = [&](const std::vector<Mat>& xs) {
    Tape t2;
    std::vector<int> ids2;
    for (const auto& m : xs) ids2.push_back(t2.constant(m));
    return t2.scalar_value(build(t2, ids2));
  };
  auto fd = finite_difference(f, inputs, 1e-6);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Mat& g = t.grad(ids[k]);
    for (int i = 0; i < g.size(); ++i) {
      INFO("input ", k, " element ", i);
      CHECK(rel_err(g.v[i], fd[k].v[i]) < tol);
    }
  }
}

}  // namespace

TEST_CASE("gru_step forced values") {
  // All-zero weights: z = sigmoid(0) = 0.5, c = tanh(0) = 0, h = 0.5 * h_prev.
  Tape t;
  GruNodes g;
  g.W_r = t.constant(Mat(1, 2));
  g.V_r = t.constant(Mat(1, 1));
  g.W_z = t.constant(Mat(1, 2));
  g.V_z = t.constant(Mat(1, 1));
  g.W_c = t.constant(Mat(1, 2));
  g.V_c = t.constant(Mat(1, 1));
  Mat x = Mat::vec(2);
  x.v = {0.3, -0.7};
  Mat h0 = Mat::vec(1);
  h0.v = {1.0};
  int h = gru_step(t, g, t.constant(x), t.constant(h0));
  CHECK(t.value(h).v[0] == doctest::Approx(0.5).epsilon(1e-12));

  // Zero previous state is a fixed point of the zero-weight cell.
  int h2 = gru_step(t, g, t.constant(x), t.constant(Mat::vec(1)));
  CHECK(t.value(h2).v[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gru_step scalar hand recurrence") {
  // W_r = V_r = W_z = V_z = W = V = 1 (scalars), x = 1, h_prev = 0.5.
  auto sigma = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double x = 1.0, hp = 0.5;
  double r = sigma(x + hp);
  double z = sigma(x + hp);
  double c = std::tanh(x + r * hp);
  double expect = (1 - z) * hp + z * c;

  Tape t;
  Mat one(1, 1);
  one.v = {1.0};
  GruNodes g;
  g.W_r = t.constant(one);
  g.V_r = t.constant(one);
  g.W_z = t.constant(one);
  g.V_z = t.constant(one);
  g.W_c = t.constant(one);
  g.V_c = t.constant(one);
  Mat xm(1, 1), hm(1, 1);
  xm.v = {x};
  hm.v = {hp};
  int h = gru_step(t, g, t.constant(xm), t.constant(hm));
  CHECK(t.value(h).v[0] == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("gru_step output is a convex combination of h_prev and c") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    int in = rng.uniform_int(1, 4), hid = rng.uniform_int(1, 4);
    Mat W_r = random_mat(hid, in, rng), V_r = random_mat(hid, hid, rng);
    Mat W_z = random_mat(hid, in, rng), V_z = random_mat(hid, hid, rng);
    Mat W_c = random_mat(hid, in, rng), V_c = random_mat(hid, hid, rng);
    Mat x = random_vec(in, rng), hp = random_vec(hid, rng);

    // Plain-math reference for r, z, c.
    auto sigma = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    Mat r(hid, 1), z(hid, 1), c(hid, 1);
    for (int i = 0; i < hid; ++i) {
      double ar = 0, az = 0;
      for (int j = 0; j < in; ++j) {
        ar += W_r(i, j) * x.v[j];
        az += W_z(i, j) * x.v[j];
      }
      for (int j = 0; j < hid; ++j) {
        ar += V_r(i, j) * hp.v[j];
        az += V_z(i, j) * hp.v[j];
      }
      r.v[i] = static_cast<Real>(sigma(ar));
      z.v[i] = static_cast<Real>(sigma(az));
    }
    for (int i = 0; i < hid; ++i) {
      double ac = 0;
      for (int j = 0; j < in; ++j) ac += W_c(i, j) * x.v[j];
      for (int j = 0; j < hid; ++j) ac += V_c(i, j) * (r.v[j] * hp.v[j]);
      c.v[i] = static_cast<Real>(std::tanh(ac));
    }

    Tape t;
    GruNodes g{t.constant(W_r), t.constant(V_r), t.constant(W_z),
               t.constant(V_z), t.constant(W_c), t.constant(V_c)};
    int h = gru_step(t, g, t.constant(x), t.constant(hp));
    const Mat& hv = t.value(h);
    for (int i = 0; i < hid; ++i) {
      double lo = std::min<double>(hp.v[i], c.v[i]) - 1e-12;
      double hi = std::max<double>(hp.v[i], c.v[i]) + 1e-12;
      CHECK(hv.v[i] >= lo);
      CHECK(hv.v[i] <= hi);
      double expect = (1 - z.v[i]) * hp.v[i] + z.v[i] * c.v[i];
      CHECK(rel_err(hv.v[i], expect) < 1e-12);
    }
  }
}

TEST_CASE("mlp_forward closed forms") {
  Tape t;
  MlpNodes zero{t.constant(Mat(3, 2)), t.constant(Mat(3, 1)), t.constant(Mat(1, 3)),
                t.constant(Mat(1, 1))};
  Mat x = Mat::vec(2);
  x.v = {0.4, -1.1};
  CHECK(t.scalar_value(mlp_forward(t, zero, t.constant(x))) == 0.0);

  Mat one(1, 1);
  one.v = {1.0};
  MlpNodes unit{t.constant(one), t.constant(Mat(1, 1)), t.constant(one),
                t.constant(Mat(1, 1))};
  Mat x2(1, 1);
  x2.v = {0.5};
  CHECK(t.scalar_value(mlp_forward(t, unit, t.constant(x2))) ==
        doctest::Approx(std::tanh(0.5)).epsilon(1e-14));
}

TEST_CASE("softmax closed forms and stability") {
  Tape t;
  Mat equal = Mat::vec(4);
  equal.fill(2.5);
  const Mat& s1 = t.value(t.softmax_(t.constant(equal)));
  for (int i = 0; i < 4; ++i) CHECK(s1.v[i] == doctest::Approx(0.25).epsilon(1e-14));

  Mat big = Mat::vec(2);
  big.v = {1000.0, 0.0};
  const Mat& s2 = t.value(t.softmax_(t.constant(big)));
  CHECK(std::isfinite(s2.v[0]));
  CHECK(s2.v[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s2.v[1] == doctest::Approx(0.0).epsilon(1e-12));

  Mat ln3 = Mat::vec(2);
  ln3.v = {0.0, std::log(3.0)};
  const Mat& s3 = t.value(t.softmax_(t.constant(ln3)));
  CHECK(s3.v[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s3.v[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax properties: sum and shift invariance") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    int n = rng.uniform_int(1, 12);
    Mat s = random_vec(n, rng, 5.0);
    Tape t;
    const Mat& y = t.value(t.softmax_(t.constant(s)));
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      CHECK(y.v[i] > 0);
      sum += y.v[i];
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);

    Mat shifted = s;
    double c = rng.uniform(-100.0, 100.0);
    for (auto& v : shifted.v) v += static_cast<Real>(c);
    const Mat& y2 = t.value(t.softmax_(t.constant(shifted)));
    for (int i = 0; i < n; ++i) CHECK(rel_err(y.v[i], y2.v[i]) < 1e-9);
  }
}

TEST_CASE("cosine closed forms") {
  Rng rng(3);
  Tape t;
  Mat v = random_vec(5, rng);
  CHECK(t.scalar_value(t.cosine_(t.constant(v), t.constant(v))) ==
        doctest::Approx(1.0).epsilon(1e-12));

  Mat e1 = Mat::vec(2), e2 = Mat::vec(2);
  e1.v = {1.0, 0.0};
  e2.v = {0.0, 1.0};
  CHECK(t.scalar_value(t.cosine_(t.constant(e1), t.constant(e2))) == 0.0);

  // Degenerate-norm rule: zero vector scores 0 rather than NaN.
  CHECK(t.scalar_value(t.cosine_(t.constant(v), t.constant(Mat::vec(5)))) == 0.0);
}

TEST_CASE("backward on sum gives ones; misuse throws") {
  Tape t;
  Mat x = Mat::vec(4);
  x.v = {1.0, -2.0, 3.0, 0.5};
  int xi = t.constant(x);
  int loss = t.sum(xi);
  t.backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(t.grad(xi).v[i] == 1.0);
  CHECK_THROWS_AS(t.backward(loss), std::logic_error);

  Tape t2;
  int v = t2.constant(Mat::vec(3));
  CHECK_THROWS_AS(t2.backward(v), std::invalid_argument);
}

TEST_CASE("cosine gradient matches finite differences") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    int n = rng.uniform_int(2, 6);
    std::vector<Mat> inputs{random_vec(n, rng), random_vec(n, rng)};
    check_against_fd(inputs,
                     [](Tape& t, const std::vector<int>& ids) {
                       return t.cosine_(ids[0], ids[1]);
                     },
                     1e-6);
  }
}

TEST_CASE("gru chain of length 5 gradient matches finite differences") {
  Rng rng(23);
  int in = 3, hid = 2;
  std::vector<Mat> inputs;
  inputs.push_back(random_mat(hid, in, rng, 0.5));   // W_r
  inputs.push_back(random_mat(hid, hid, rng, 0.5));  // V_r
  inputs.push_back(random_mat(hid, in, rng, 0.5));   // W_z
  inputs.push_back(random_mat(hid, hid, rng, 0.5));  // V_z
  inputs.push_back(random_mat(hid, in, rng, 0.5));   // W_c
  inputs.push_back(random_mat(hid, hid, rng, 0.5));  // V_c
  for (int step = 0; step < 5; ++step) inputs.push_back(random_vec(in, rng));

  auto build = [&](Tape& t, const std::vector<int>& ids) {
    GruNodes g{ids[0], ids[1], ids[2], ids[3], ids[4], ids[5]};
    int h = t.constant(Mat::vec(2));
    for (int step = 0; step < 5; ++step) h = gru_step(t, g, ids[6 + step], h);
    return t.sum(h);
  };
  check_against_fd(inputs, build, 1e-5);
}

TEST_CASE("mlp gradient matches finite differences") {
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    int in = rng.uniform_int(1, 4), hid = rng.uniform_int(1, 5);
    std::vector<Mat> inputs{random_mat(hid, in, rng), random_vec(hid, rng),
                            random_mat(1, hid, rng), random_vec(1, rng),
                            random_vec(in, rng)};
    check_against_fd(inputs,
                     [](Tape& t, const std::vector<int>& ids) {
                       MlpNodes m{ids[0], ids[1], ids[2], ids[3]};
                       return mlp_forward(t, m, ids[4]);
                     },
                     1e-5);
  }
}

TEST_CASE("every primitive op passes finite differences over seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    int n = rng.uniform_int(2, 6);
    int m = rng.uniform_int(2, 5);
    std::vector<Mat> inputs{random_vec(n, rng), random_vec(n, rng),
                            random_mat(m, n, rng), random_vec(m, rng)};

    auto check1 = [&](const char* what,
                      std::function<int(Tape&, const std::vector<int>&)> b) {
      INFO("op ", what, " seed ", seed);
      check_against_fd(inputs, b, 1e-4);
    };
    check1("add+hadamard", [](Tape& t, const std::vector<int>& ids) {
      return t.sum(t.hadamard(t.add(ids[0], ids[1]), ids[1]));
    });
    check1("sub+one_minus", [](Tape& t, const std::vector<int>& ids) {
      return t.sum(t.one_minus(t.sub(ids[0], ids[1])));
    });
    check1("matvec+tanh", [](Tape& t, const std::vector<int>& ids) {
      return t.sum(t.tanh_(t.matvec(ids[2], ids[0])));
    });
    check1("matvec_t+sigmoid", [](Tape& t, const std::vector<int>& ids) {
      return t.sum(t.sigmoid(t.matvec_t(ids[2], ids[3])));
    });
    check1("concat+softmax+dot", [](Tape& t, const std::vector<int>& ids) {
      int sm = t.softmax_(t.concat(ids[0], ids[1]));
      return t.dot_(sm, sm);
    });
    check1("scale+log_clamped", [](Tape& t, const std::vector<int>& ids) {
      int pos = t.sigmoid(ids[0]);  // keep the log argument positive
      return t.sum(t.log_clamped(t.scale(pos, Real(0.5))));
    });
    check1("stack+weighted_sum", [](Tape& t, const std::vector<int>& ids) {
      std::vector<int> scalars{t.dot_(ids[0], ids[1]), t.sum(ids[0]), t.sum(ids[1])};
      int w = t.softmax_(t.stack(scalars));
      std::vector<int> states{ids[0], ids[1], t.hadamard(ids[0], ids[1])};
      return t.sum(t.weighted_sum(states, w));
    });
  }
}

TEST_CASE("param nodes accumulate gradients") {
  Param p("w", 2, 2);
  p.value.v = {1.0, 2.0, 3.0, 4.0};
  Mat x = Mat::vec(2);
  x.v = {1.0, -1.0};
  Tape t;
  int loss = t.sum(t.matvec(t.param(p), t.constant(x)));
  t.backward(loss);
  // d(sum(Wx))/dW = 1 * x^T per row
  CHECK(p.grad(0, 0) == 1.0);
  CHECK(p.grad(0, 1) == -1.0);
  CHECK(p.grad(1, 0) == 1.0);
  CHECK(p.grad(1, 1) == -1.0);
}

TEST_CASE("glorot init is seeded and in range") {
  Param a("a", 30, 20), b("b", 30, 20);
  Rng r1(42), r2(42);
  a.glorot_init(r1);
  b.glorot_init(r2);
  double bound = std::sqrt(6.0 / (30 + 20));
  for (int i = 0; i < a.value.size(); ++i) {
    CHECK(a.value.v[i] == b.value.v[i]);
    CHECK(std::fabs(a.value.v[i]) <= bound);
  }
}
