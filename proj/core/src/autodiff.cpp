#include "pserank/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace pserank::ad {

namespace {

constexpr Real kNormFloor = Real(1e-12);
constexpr Real kLogFloor = Real(1e-12);

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Real sigmoid_scalar(Real x) { return Real(1) / (Real(1) + std::exp(-x)); }

}  // namespace

void Param::glorot_init(Rng& rng) {
  // Bias vectors (cols == 1 with name suffix b) start at zero via fan rule
  // too; callers that want zeros just skip init.
  Real a = std::sqrt(Real(6) / Real(value.rows + value.cols));
  for (auto& x : value.v) x = static_cast<Real>(rng.uniform(-a, a));
  grad.zero();
}

int Tape::push(Node n) {
  n.grad = Mat(n.val.rows, n.val.cols);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::constant(Mat m) {
  Node n;
  n.op = Op::kConst;
  n.val = std::move(m);
  return push(std::move(n));
}

int Tape::param(Param& p) {
  Node n;
  n.op = Op::kParam;
  n.param = &p;
  n.val = p.value;
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  check(nodes_[a].val.same_shape(nodes_[b].val), "add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.val = nodes_[a].val;
  for (int i = 0; i < n.val.size(); ++i) n.val.v[i] += nodes_[b].val.v[i];
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  check(nodes_[a].val.same_shape(nodes_[b].val), "sub: shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.val = nodes_[a].val;
  for (int i = 0; i < n.val.size(); ++i) n.val.v[i] -= nodes_[b].val.v[i];
  return push(std::move(n));
}

int Tape::hadamard(int a, int b) {
  check(nodes_[a].val.same_shape(nodes_[b].val), "hadamard: shape mismatch");
  Node n;
  n.op = Op::kHadamard;
  n.a = a;
  n.b = b;
  n.val = nodes_[a].val;
  for (int i = 0; i < n.val.size(); ++i) n.val.v[i] *= nodes_[b].val.v[i];
  return push(std::move(n));
}

int Tape::one_minus(int a) {
  Node n;
  n.op = Op::kOneMinus;
  n.a = a;
  n.val = nodes_[a].val;
  for (auto& x : n.val.v) x = Real(1) - x;
  return push(std::move(n));
}

int Tape::matvec(int A, int x) {
  const Mat& Am = nodes_[A].val;
  const Mat& xm = nodes_[x].val;
  check(xm.cols == 1 && Am.cols == xm.rows, "matvec: shape mismatch");
  Node n;
  n.op = Op::kMatVec;
  n.a = A;
  n.b = x;
  n.val = Mat::vec(Am.rows);
  matvec_acc(Am, xm, n.val);
  return push(std::move(n));
}

int Tape::matvec_t(int A, int x) {
  const Mat& Am = nodes_[A].val;
  const Mat& xm = nodes_[x].val;
  check(xm.cols == 1 && Am.rows == xm.rows, "matvec_t: shape mismatch");
  Node n;
  n.op = Op::kMatTVec;
  n.a = A;
  n.b = x;
  n.val = Mat::vec(Am.cols);
  matvec_t_acc(Am, xm, n.val);
  return push(std::move(n));
}

int Tape::sigmoid(int a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a;
  n.val = nodes_[a].val;
  for (auto& x : n.val.v) x = sigmoid_scalar(x);
  return push(std::move(n));
}

int Tape::tanh_(int a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.val = nodes_[a].val;
  for (auto& x : n.val.v) x = std::tanh(x);
  return push(std::move(n));
}

int Tape::concat(int a, int b) {
  const Mat& am = nodes_[a].val;
  const Mat& bm = nodes_[b].val;
  check(am.cols == 1 && bm.cols == 1, "concat: vectors only");
  Node n;
  n.op = Op::kConcat2;
  n.a = a;
  n.b = b;
  n.val = Mat::vec(am.rows + bm.rows);
  for (int i = 0; i < am.rows; ++i) n.val.v[i] = am.v[i];
  for (int i = 0; i < bm.rows; ++i) n.val.v[am.rows + i] = bm.v[i];
  return push(std::move(n));
}

int Tape::scale(int a, Real c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = c;
  n.val = nodes_[a].val;
  for (auto& x : n.val.v) x *= c;
  return push(std::move(n));
}

int Tape::softmax_(int a) {
  const Mat& am = nodes_[a].val;
  check(am.cols == 1 && am.rows >= 1, "softmax: nonempty vector required");
  Node n;
  n.op = Op::kSoftmax;
  n.a = a;
  auto soft = softmax_values(std::span<const Real>(am.v.data(), am.v.size()));
  n.val = Mat::vec(am.rows);
  n.val.v = std::move(soft);
  return push(std::move(n));
}

int Tape::dot_(int a, int b) {
  check(nodes_[a].val.size() == nodes_[b].val.size(), "dot: size mismatch");
  Node n;
  n.op = Op::kDot;
  n.a = a;
  n.b = b;
  n.val = Mat(1, 1);
  n.val.v[0] = dot(nodes_[a].val, nodes_[b].val);
  return push(std::move(n));
}

int Tape::cosine_(int a, int b) {
  check(nodes_[a].val.size() == nodes_[b].val.size(), "cosine: size mismatch");
  Node n;
  n.op = Op::kCosine;
  n.a = a;
  n.b = b;
  n.val = Mat(1, 1);
  n.val.v[0] = cosine_value(nodes_[a].val, nodes_[b].val);
  return push(std::move(n));
}

int Tape::sum(int a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.val = Mat(1, 1);
  Real s = 0;
  for (Real x : nodes_[a].val.v) s += x;
  n.val.v[0] = s;
  return push(std::move(n));
}

int Tape::log_clamped(int a) {
  Node n;
  n.op = Op::kLogClamped;
  n.a = a;
  n.val = nodes_[a].val;
  for (auto& x : n.val.v) x = std::log(std::max(x, kLogFloor));
  return push(std::move(n));
}

int Tape::stack(const std::vector<int>& scalars) {
  check(!scalars.empty(), "stack: need at least one node");
  Node n;
  n.op = Op::kStack;
  n.many = scalars;
  n.val = Mat::vec(static_cast<int>(scalars.size()));
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    check(nodes_[scalars[i]].val.is_scalar(), "stack: scalar nodes required");
    n.val.v[i] = nodes_[scalars[i]].val.v[0];
  }
  return push(std::move(n));
}

int Tape::weighted_sum(const std::vector<int>& states, int weights) {
  check(!states.empty(), "weighted_sum: need at least one state");
  const Mat& wm = nodes_[weights].val;
  check(wm.rows == static_cast<int>(states.size()) && wm.cols == 1,
        "weighted_sum: weight length mismatch");
  Node n;
  n.op = Op::kWeightedSum;
  n.many = states;
  n.b = weights;
  n.val = Mat::vec(nodes_[states[0]].val.rows);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Mat& s = nodes_[states[i]].val;
    check(s.rows == n.val.rows && s.cols == 1, "weighted_sum: state shape mismatch");
    Real w = wm.v[i];
    for (int j = 0; j < n.val.rows; ++j) n.val.v[j] += w * s.v[j];
  }
  return push(std::move(n));
}

void Tape::backward(int loss_id) {
  if (backward_done_) throw std::logic_error("backward: tape already differentiated");
  check(loss_id >= 0 && loss_id < static_cast<int>(nodes_.size()), "backward: bad node id");
  if (!nodes_[loss_id].val.is_scalar())
    throw std::invalid_argument("backward: loss must be scalar");
  backward_done_ = true;

  nodes_[loss_id].grad.v[0] = Real(1);

  for (int id = loss_id; id >= 0; --id) {
    Node& n = nodes_[id];
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        for (int i = 0; i < g.size(); ++i) n.param->grad.v[i] += g.v[i];
        break;
      case Op::kAdd: {
        Mat& ga = nodes_[n.a].grad;
        Mat& gb = nodes_[n.b].grad;
        for (int i = 0; i < g.size(); ++i) {
          ga.v[i] += g.v[i];
          gb.v[i] += g.v[i];
        }
        break;
      }
      case Op::kSub: {
        Mat& ga = nodes_[n.a].grad;
        Mat& gb = nodes_[n.b].grad;
        for (int i = 0; i < g.size(); ++i) {
          ga.v[i] += g.v[i];
          gb.v[i] -= g.v[i];
        }
        break;
      }
      case Op::kHadamard: {
        Mat& ga = nodes_[n.a].grad;
        Mat& gb = nodes_[n.b].grad;
        const Mat& va = nodes_[n.a].val;
        const Mat& vb = nodes_[n.b].val;
        for (int i = 0; i < g.size(); ++i) {
          ga.v[i] += g.v[i] * vb.v[i];
          gb.v[i] += g.v[i] * va.v[i];
        }
        break;
      }
      case Op::kOneMinus: {
        Mat& ga = nodes_[n.a].grad;
        for (int i = 0; i < g.size(); ++i) ga.v[i] -= g.v[i];
        break;
      }
      case Op::kMatVec: {
        // y = A x: dA += g x^T, dx += A^T g
        outer_acc(g, nodes_[n.b].val, nodes_[n.a].grad);
        matvec_t_acc(nodes_[n.a].val, g, nodes_[n.b].grad);
        break;
      }
      case Op::kMatTVec: {
        // y = A^T x: dA += x g^T, dx += A g
        outer_acc(nodes_[n.b].val, g, nodes_[n.a].grad);
        matvec_acc(nodes_[n.a].val, g, nodes_[n.b].grad);
        break;
      }
      case Op::kSigmoid: {
        Mat& ga = nodes_[n.a].grad;
        for (int i = 0; i < g.size(); ++i) {
          Real y = n.val.v[i];
          ga.v[i] += g.v[i] * y * (Real(1) - y);
        }
        break;
      }
      case Op::kTanh: {
        Mat& ga = nodes_[n.a].grad;
        for (int i = 0; i < g.size(); ++i) {
          Real y = n.val.v[i];
          ga.v[i] += g.v[i] * (Real(1) - y * y);
        }
        break;
      }
      case Op::kConcat2: {
        Mat& ga = nodes_[n.a].grad;
        Mat& gb = nodes_[n.b].grad;
        for (int i = 0; i < ga.rows; ++i) ga.v[i] += g.v[i];
        for (int i = 0; i < gb.rows; ++i) gb.v[i] += g.v[ga.rows + i];
        break;
      }
      case Op::kScale: {
        Mat& ga = nodes_[n.a].grad;
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * n.scalar;
        break;
      }
      case Op::kSoftmax: {
        // dx_i = y_i * (g_i - sum_j y_j g_j)
        Mat& ga = nodes_[n.a].grad;
        Real gy = 0;
        for (int i = 0; i < g.size(); ++i) gy += g.v[i] * n.val.v[i];
        for (int i = 0; i < g.size(); ++i) ga.v[i] += n.val.v[i] * (g.v[i] - gy);
        break;
      }
      case Op::kDot: {
        Real g0 = g.v[0];
        Mat& ga = nodes_[n.a].grad;
        Mat& gb = nodes_[n.b].grad;
        const Mat& va = nodes_[n.a].val;
        const Mat& vb = nodes_[n.b].val;
        for (int i = 0; i < va.size(); ++i) {
          ga.v[i] += g0 * vb.v[i];
          gb.v[i] += g0 * va.v[i];
        }
        break;
      }
      case Op::kCosine: {
        const Mat& va = nodes_[n.a].val;
        const Mat& vb = nodes_[n.b].val;
        Real na = norm(va);
        Real nb = norm(vb);
        if (na < kNormFloor || nb < kNormFloor) break;  // defined 0, flat
        Real g0 = g.v[0];
        Real y = n.val.v[0];
        Mat& ga = nodes_[n.a].grad;
        Mat& gb = nodes_[n.b].grad;
        Real inv = Real(1) / (na * nb);
        for (int i = 0; i < va.size(); ++i) {
          ga.v[i] += g0 * (vb.v[i] * inv - y * va.v[i] / (na * na));
          gb.v[i] += g0 * (va.v[i] * inv - y * vb.v[i] / (nb * nb));
        }
        break;
      }
      case Op::kSum: {
        Mat& ga = nodes_[n.a].grad;
        Real g0 = g.v[0];
        for (int i = 0; i < ga.size(); ++i) ga.v[i] += g0;
        break;
      }
      case Op::kLogClamped: {
        Mat& ga = nodes_[n.a].grad;
        const Mat& va = nodes_[n.a].val;
        for (int i = 0; i < g.size(); ++i) {
          if (va.v[i] > kLogFloor) ga.v[i] += g.v[i] / va.v[i];
        }
        break;
      }
      case Op::kStack: {
        for (std::size_t i = 0; i < n.many.size(); ++i)
          nodes_[n.many[i]].grad.v[0] += g.v[i];
        break;
      }
      case Op::kWeightedSum: {
        const Mat& wm = nodes_[n.b].val;
        Mat& gw = nodes_[n.b].grad;
        for (std::size_t i = 0; i < n.many.size(); ++i) {
          const Mat& s = nodes_[n.many[i]].val;
          Mat& gs = nodes_[n.many[i]].grad;
          Real w = wm.v[i];
          Real acc = 0;
          for (int j = 0; j < g.size(); ++j) {
            gs.v[j] += w * g.v[j];
            acc += g.v[j] * s.v[j];
          }
          gw.v[i] += acc;
        }
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------

GruParams::GruParams(const std::string& prefix, int in, int h, bool bias)
    : input_dim(in),
      hidden_dim(h),
      use_bias(bias),
      W_r(prefix + ".W_r", h, in),
      V_r(prefix + ".V_r", h, h),
      W_z(prefix + ".W_z", h, in),
      V_z(prefix + ".V_z", h, h),
      W_c(prefix + ".W_c", h, in),
      V_c(prefix + ".V_c", h, h),
      b_r(prefix + ".b_r", h, 1),
      b_z(prefix + ".b_z", h, 1),
      b_c(prefix + ".b_c", h, 1) {}

void GruParams::init(Rng& rng) {
  W_r.glorot_init(rng);
  V_r.glorot_init(rng);
  W_z.glorot_init(rng);
  V_z.glorot_init(rng);
  W_c.glorot_init(rng);
  V_c.glorot_init(rng);
  // biases stay zero
}

std::vector<Param*> GruParams::params() {
  std::vector<Param*> out{&W_r, &V_r, &W_z, &V_z, &W_c, &V_c};
  if (use_bias) {
    out.push_back(&b_r);
    out.push_back(&b_z);
    out.push_back(&b_c);
  }
  return out;
}

MlpParams::MlpParams(const std::string& prefix, int in, int h, int out, bool bias)
    : input_dim(in),
      hidden_dim(h),
      output_dim(out),
      use_bias(bias),
      A1(prefix + ".A1", h, in),
      b1(prefix + ".b1", h, 1),
      A2(prefix + ".A2", out, h),
      b2(prefix + ".b2", out, 1) {}

void MlpParams::init(Rng& rng) {
  A1.glorot_init(rng);
  A2.glorot_init(rng);
}

std::vector<Param*> MlpParams::params() {
  std::vector<Param*> out{&A1, &A2};
  if (use_bias) {
    out.push_back(&b1);
    out.push_back(&b2);
  }
  return out;
}

GruNodes place(Tape& t, GruParams& p) {
  GruNodes n;
  n.W_r = t.param(p.W_r);
  n.V_r = t.param(p.V_r);
  n.W_z = t.param(p.W_z);
  n.V_z = t.param(p.V_z);
  n.W_c = t.param(p.W_c);
  n.V_c = t.param(p.V_c);
  if (p.use_bias) {
    n.b_r = t.param(p.b_r);
    n.b_z = t.param(p.b_z);
    n.b_c = t.param(p.b_c);
  }
  return n;
}

MlpNodes place(Tape& t, MlpParams& p) {
  MlpNodes n;
  n.A1 = t.param(p.A1);
  n.A2 = t.param(p.A2);
  if (p.use_bias) {
    n.b1 = t.param(p.b1);
    n.b2 = t.param(p.b2);
  }
  return n;
}

int gru_step(Tape& t, const GruNodes& g, int x, int h_prev) {
  auto affine = [&](int W, int V, int bias, int xin, int hin) {
    int s = t.add(t.matvec(W, xin), t.matvec(V, hin));
    return bias >= 0 ? t.add(s, bias) : s;
  };
  int r = t.sigmoid(affine(g.W_r, g.V_r, g.b_r, x, h_prev));
  int z = t.sigmoid(affine(g.W_z, g.V_z, g.b_z, x, h_prev));
  int rh = t.hadamard(r, h_prev);
  int c_pre = t.add(t.matvec(g.W_c, x), t.matvec(g.V_c, rh));
  if (g.b_c >= 0) c_pre = t.add(c_pre, g.b_c);
  int c = t.tanh_(c_pre);
  return t.add(t.hadamard(t.one_minus(z), h_prev), t.hadamard(z, c));
}

int mlp_forward(Tape& t, const MlpNodes& m, int x) {
  int h = t.matvec(m.A1, x);
  if (m.b1 >= 0) h = t.add(h, m.b1);
  h = t.tanh_(h);
  int out = t.matvec(m.A2, h);
  if (m.b2 >= 0) out = t.add(out, m.b2);
  return out;
}

std::vector<Mat> finite_difference(const std::function<Real(const std::vector<Mat>&)>& f,
                                   std::vector<Mat> xs, Real eps) {
  std::vector<Mat> grads;
  grads.reserve(xs.size());
  for (auto& x : xs) grads.emplace_back(x.rows, x.cols);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (int i = 0; i < xs[k].size(); ++i) {
      Real orig = xs[k].v[i];
      xs[k].v[i] = orig + eps;
      Real fp = f(xs);
      xs[k].v[i] = orig - eps;
      Real fm = f(xs);
      xs[k].v[i] = orig;
      grads[k].v[i] = (fp - fm) / (2 * eps);
    }
  }
  return grads;
}

}  // namespace pserank::ad
