#ifndef PSERANK_AUTODIFF_HPP_
#define PSERANK_AUTODIFF_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "pserank/linalg.hpp"
#include "pserank/rng.hpp"

namespace pserank::ad {

// A trainable tensor. Lives outside any tape; the tape references it through
// param() nodes and flushes gradients back into `grad` during backward().
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, int r, int c) : name(std::move(n)), value(r, c), grad(r, c) {}

  void zero_grad() { grad.zero(); }
  // Glorot-style uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
  void glorot_init(Rng& rng);
};

enum class Op : std::uint8_t {
  kConst,
  kParam,
  kAdd,
  kSub,
  kHadamard,
  kOneMinus,
  kMatVec,   // A(r x c) * x(c)      -> r
  kMatTVec,  // A(r x c)^T * x(r)    -> c
  kSigmoid,
  kTanh,
  kConcat2,
  kScale,       // a * constant
  kSoftmax,     // stable, max-subtracted
  kDot,         // scalar
  kCosine,      // scalar; 0 if either norm < 1e-12
  kSum,         // scalar
  kLogClamped,  // ln(max(x, 1e-12)) elementwise
  kStack,       // n scalar nodes -> vector(n)
  kWeightedSum  // sum_i w_i * s_i over state nodes; last input is the weight vector
};

struct Node {
  Op op;
  int a = -1;
  int b = -1;
  std::vector<int> many;  // only kStack / kWeightedSum
  Real scalar = 0;
  Param* param = nullptr;
  Mat val;
  Mat grad;
};

// Reverse-mode tape. Eager forward evaluation; one backward() per tape.
// Forward evaluation on distinct tapes is thread-safe; a single tape is not.
class Tape {
 public:
  int constant(Mat m);
  int param(Param& p);

  int add(int a, int b);
  int sub(int a, int b);
  int hadamard(int a, int b);
  int one_minus(int a);
  int matvec(int A, int x);
  int matvec_t(int A, int x);
  int sigmoid(int a);
  int tanh_(int a);
  int concat(int a, int b);
  int scale(int a, Real c);
  int softmax_(int a);
  int dot_(int a, int b);
  int cosine_(int a, int b);
  int sum(int a);
  int log_clamped(int a);
  int stack(const std::vector<int>& scalars);
  int weighted_sum(const std::vector<int>& states, int weights);

  const Mat& value(int id) const { return nodes_[id].val; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  Real scalar_value(int id) const { return nodes_[id].val.v[0]; }

  // Propagates d(loss)/d(node) for every node and accumulates into the
  // referenced Params' grad slots. loss must be scalar; calling twice on the
  // same tape throws.
  void backward(int loss_id);

  std::size_t size() const { return nodes_.size(); }

 private:
  int push(Node n);
  // Deque keeps value()/grad() references stable while the tape grows.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Recurrent cell and perceptron built on the tape.

// Gated recurrent cell parameters. W_* act on the input, V_* on the previous
// state. Biases are standard practice though optional (strict mode drops them).
struct GruParams {
  int input_dim = 0;
  int hidden_dim = 0;
  bool use_bias = true;
  Param W_r, V_r, W_z, V_z, W_c, V_c;
  Param b_r, b_z, b_c;

  GruParams() = default;
  GruParams(const std::string& prefix, int in, int h, bool bias = true);
  void init(Rng& rng);
  std::vector<Param*> params();
};

// Two-layer perceptron: out = A2 * tanh(A1 * x + b1) + b2.
struct MlpParams {
  int input_dim = 0, hidden_dim = 0, output_dim = 0;
  bool use_bias = true;
  Param A1, b1, A2, b2;

  MlpParams() = default;
  MlpParams(const std::string& prefix, int in, int h, int out, bool bias = true);
  void init(Rng& rng);
  std::vector<Param*> params();
};

// Node-id bundles for parameters placed on a tape (one placement per tape).
struct GruNodes {
  int W_r, V_r, W_z, V_z, W_c, V_c;
  int b_r = -1, b_z = -1, b_c = -1;
};
struct MlpNodes {
  int A1, b1 = -1, A2, b2 = -1;
};

GruNodes place(Tape& t, GruParams& p);
MlpNodes place(Tape& t, MlpParams& p);

// r = sigma(W_r x + V_r h); z = sigma(W_z x + V_z h);
// c = tanh(W x + V (r . h)); h' = (1 - z) . h + z . c
int gru_step(Tape& t, const GruNodes& g, int x, int h_prev);

int mlp_forward(Tape& t, const MlpNodes& m, int x);

// Central finite-difference gradient of f with respect to xs, step eps.
// Test oracle helper; deliberately independent of the tape internals.
std::vector<Mat> finite_difference(const std::function<Real(const std::vector<Mat>&)>& f,
                                   std::vector<Mat> xs, Real eps);

}  // namespace pserank::ad

#endif  // PSERANK_AUTODIFF_HPP_
