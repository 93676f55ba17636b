#ifndef PSERANK_HRNN_HPP_
#define PSERANK_HRNN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pserank/autodiff.hpp"
#include "pserank/baselines.hpp"
#include "pserank/linalg.hpp"
#include "pserank/query_log.hpp"
#include "pserank/text_repr.hpp"

namespace pserank {

struct ModelDims {
  int d_e = 300;   // text vector width
  int d_s1 = 300;  // session-level state width
  int d_s2 = 600;  // user-level state width
  int d_a = 1024;  // attention MLP hidden units
  int d_f = 64;    // feature MLP hidden units

  // Shrunk widths for fast desk-scale runs.
  static ModelDims desk() { return {50, 32, 64, 64, 16}; }
};

enum class ModelVariant {
  kHrnnQa,    // two-level encoder + query-aware attention
  kHrnn,      // two-level encoder, long-term vector = last user-level state
  kShortOnly, // session-level score + features only
  kLongOnly   // user-level score + features only
};
std::string to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& s);

struct ModelConfig {
  ModelDims dims;
  ModelVariant variant = ModelVariant::kHrnnQa;
  bool use_bias = true;
  std::uint64_t seed = 1;

  bool uses_long_term() const { return variant != ModelVariant::kShortOnly; }
  bool uses_short_term() const { return variant != ModelVariant::kLongOnly; }
  bool uses_attention() const { return variant == ModelVariant::kHrnnQa; }
};

// All trainable parameters. Word embeddings stay outside: they are frozen.
struct ModelParams {
  ModelConfig config;
  ad::GruParams session_gru;  // input [q; d], width d_s1
  ad::GruParams user_gru;     // input d_s1, width d_s2
  ad::MlpParams attn_mlp;     // input [q; h2], hidden d_a, output 1
  ad::Param W_S;              // d_s1 x d_e
  ad::Param W_L;              // d_s2 x d_e
  ad::MlpParams feat_mlp;     // input 4, hidden d_f, output 1

  explicit ModelParams(const ModelConfig& cfg);
  void init();  // seeded from config.seed
  // Parameters the variant actually uses, in checkpoint order.
  std::vector<ad::Param*> trainable();
  void zero_grads();
};

// Additional ranking features beside the two similarity scores.
struct FeatureVector {
  double reciprocal_position = 0;       // 1 / original position
  double log_user_doc_clicks = 0;       // log1p(user clicks on doc)
  double log_user_query_doc_clicks = 0; // log1p(user clicks on doc under this query)
  double query_click_entropy = 0;
  Mat to_vec() const;
};

struct FeatureContext {
  const ClickStore* clicks = nullptr;
  const std::unordered_map<std::string, double>* entropy = nullptr;
};
FeatureVector make_features(const FeatureContext& ctx, const std::string& user,
                            const std::string& query_key, const std::string& doc,
                            int original_position, std::int64_t query_ts);

// Per-event text vectors: the query and the mean SAT-clicked document vector
// (zero when nothing satisfied).
struct EventRepr {
  Mat query_vec;
  Mat sat_avg;
};
using SessionRepr = std::vector<EventRepr>;

struct PreparedUser {
  const UserLog* log = nullptr;
  std::vector<SessionRepr> sessions;
};
PreparedUser prepare_user(const UserLog& log, const Vocabulary& vocab,
                          const EmbeddingMatrix& emb,
                          const std::unordered_map<std::string, Mat>& doc_vecs);

// ---------------------------------------------------------------------------
// Tape-level builders. One placement of the parameters per tape.

struct PlacedModel {
  ad::GruNodes session_gru;
  ad::GruNodes user_gru;
  ad::MlpNodes attn_mlp;
  ad::MlpNodes feat_mlp;
  int W_S = -1, W_L = -1;
};
PlacedModel place(ad::Tape& t, ModelParams& p);

// Runs the session-level cell over (query, sat-avg) pairs starting from the
// zero state; returns every state. The last one is the session's short-term
// interest vector.
std::vector<int> encode_session(ad::Tape& t, const ad::GruNodes& gru, int state_dim,
                                const std::vector<const EventRepr*>& events);

// Runs the user-level cell over session vectors; empty history gives an
// empty list.
std::vector<int> encode_history(ad::Tape& t, const ad::GruNodes& gru, int state_dim,
                                const std::vector<int>& session_vectors);

// Query-aware attention: scores phi([q; h2_i]) through the MLP, softmaxes,
// and combines. Returns (attended node, weights node); empty history yields
// (zero-vector constant, -1).
std::pair<int, int> attend(ad::Tape& t, const ad::MlpNodes& mlp, int state_dim,
                           const Mat& query_vec, const std::vector<int>& long_states);

// ---------------------------------------------------------------------------
// Full per-query forward pass.

struct InterestState {
  Mat short_term;               // current h1 (zero-width when unused)
  std::vector<Mat> long_states; // h2 per past session
  Mat attended;                 // query-aware long-term vector
  std::vector<Real> attention_weights;
};

struct CandidateInput {
  Mat doc_vec;
  FeatureVector features;
};

// One query scored end to end on a fresh tape. `loss-ready`: every node that
// needs gradients is on the tape.
class QueryForward {
 public:
  // Training path: unrolls the whole history so gradients reach both cells.
  // `current_prefix` holds the current session's earlier events.
  QueryForward(ModelParams& params, const std::vector<const SessionRepr*>& history,
               const SessionRepr& current_prefix, const Mat& query_vec,
               const std::vector<CandidateInput>& candidates);

  // Evaluation path: past-session states enter as constants.
  QueryForward(ModelParams& params, const std::vector<Mat>& h2_values,
               const Mat& h1_prev_value, const Mat& query_vec,
               const std::vector<CandidateInput>& candidates);

  ad::Tape& tape() { return tape_; }
  const std::vector<double>& scores() const { return scores_; }
  int score_node(int candidate) const { return score_nodes_[candidate]; }
  InterestState interest_state() const;

 private:
  void finish(ModelParams& params, const Mat& query_vec,
              const std::vector<CandidateInput>& candidates);
  ad::Tape tape_;
  PlacedModel pm_;
  int h1_node_ = -1;
  std::vector<int> h2_nodes_;
  int long_term_node_ = -1;
  int attn_weights_node_ = -1;
  std::vector<int> score_nodes_;
  std::vector<double> scores_;
  const ModelConfig* cfg_ = nullptr;
};

// Plain-value scorer matching the spec contract; convenience over a throwaway
// tape.
double score_document_value(ModelParams& params, const InterestState& state,
                            const Mat& doc_vec, const FeatureVector& feats);

// Indices of candidates sorted by score descending, ties by original position
// ascending.
std::vector<int> rerank_order(const std::vector<double>& scores,
                              const std::vector<int>& original_positions);

// ---------------------------------------------------------------------------
// Frozen-parameter helpers used by evaluation.

// Next session-level state after consuming one event (plain values).
Mat advance_session_state(ModelParams& params, const Mat& h1_prev, const EventRepr& ev);

struct UserStateCache {
  // h1_after_event[m][j]: session-level state after events 0..j of session m.
  std::vector<std::vector<Mat>> h1_after_event;
  // h2_after[m]: user-level state after session m completes.
  std::vector<Mat> h2_after;
};
UserStateCache build_user_cache(ModelParams& params, const PreparedUser& user);

// ---------------------------------------------------------------------------
// Checkpoints: fixed little-endian binary layout, float32 arrays.

void save_checkpoint(const std::string& path, ModelParams& params,
                     std::uint64_t vocab_hash);
ModelParams load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash);
std::uint64_t checkpoint_vocab_hash(const std::string& path);

}  // namespace pserank

#endif  // PSERANK_HRNN_HPP_
