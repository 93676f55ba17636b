#ifndef PSERANK_TRAINING_HPP_
#define PSERANK_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pserank/hrnn.hpp"
#include "pserank/query_log.hpp"
#include "pserank/rng.hpp"

namespace pserank {

// Oriented (relevant, irrelevant) pair: indices into the event's impressions.
struct TrainingPair {
  int relevant = -1;    // sat
  int irrelevant = -1;  // non-sat
};

// Cross product of SAT x non-SAT impressions, uniformly subsampled to `cap`.
// Queries without a SAT click give an empty list.
std::vector<TrainingPair> generate_pairs(const QueryEvent& event, int cap, Rng& rng);

// p_ij = 1 / (1 + exp(-(score_i - score_j)))
double pairwise_probability(double score_i, double score_j);

// |AP(after swapping ranks i and j) - AP(before)| with binary labels in
// predicted-rank order.
double delta_map(const std::vector<bool>& relevant_at_rank, int i, int j);

// loss = (-pbar_ij log p_ij - pbar_ji log p_ji) * |delta|, log clamped at 1e-12.
double pair_loss(double p_ij, double pbar_ij, double delta);

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 50;
  int patience = 3;  // stop after this many epochs without a new best
  int pair_cap = 50;
  std::uint64_t seed = 1;
  bool use_adam = true;  // plain SGD otherwise
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  // Test seam: replaces the validation-loss evaluation when set.
  std::function<double(int epoch)> validation_override;
};

class Optimizer {
 public:
  Optimizer(std::vector<ad::Param*> params, const TrainConfig& cfg);
  void step();  // consumes grads, zeroes them afterwards

  long long t() const { return t_; }
  // Flat serialization of the moment buffers for resume.
  std::vector<Mat> moments_m() const { return m_; }
  std::vector<Mat> moments_v() const { return v_; }
  void restore(long long t, std::vector<Mat> m, std::vector<Mat> v);

 private:
  std::vector<ad::Param*> params_;
  TrainConfig cfg_;
  std::vector<Mat> m_, v_;
  long long t_ = 0;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double validation_loss = 0;
  int train_queries = 0;
  int validation_queries = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  int stopped_epoch = 0;
  double best_validation_loss = 0;
  double wall_seconds = 0;
  std::string to_json() const;
};

// Thrown when the loss leaves the reals; carries the offending location.
struct DivergenceError : std::runtime_error {
  DivergenceError(int epoch, const std::string& user, const std::string& qid);
  int epoch;
  std::string user, qid;
};

// One supervised user: prepared representations plus the session split.
struct TrainUser {
  const UserLog* log = nullptr;
  const PreparedUser* prepared = nullptr;
  DatasetSplit split;
};

struct TrainData {
  std::vector<TrainUser> users;
  const std::unordered_map<std::string, Mat>* doc_vecs = nullptr;
  FeatureContext features;
};

// Serializable optimizer/progress bundle for --resume.
struct TrainState {
  long long opt_t = 0;
  std::vector<Mat> opt_m, opt_v;
  std::vector<Mat> last_params;
  std::vector<Mat> best_params;
  int next_epoch = 1;
  double best_val = 0;
  bool has_best = false;
  int stale = 0;
  std::vector<EpochStats> history;
};

void save_train_state(const std::string& path, const TrainState& st);
TrainState load_train_state(const std::string& path);

// Per epoch: users in seeded shuffled order, sessions and queries in time
// order; one optimizer step per query over its accumulated pair losses.
// Stops when validation loss has not improved for `patience` consecutive
// epochs and leaves `model` at the best-validation parameters.
TrainReport train(ModelParams& model, const TrainData& data, const TrainConfig& cfg,
                  TrainState* state = nullptr);

}  // namespace pserank

#endif  // PSERANK_TRAINING_HPP_
