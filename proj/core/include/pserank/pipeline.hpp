#ifndef PSERANK_PIPELINE_HPP_
#define PSERANK_PIPELINE_HPP_

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pserank/baselines.hpp"
#include "pserank/evaluation.hpp"
#include "pserank/hrnn.hpp"
#include "pserank/query_log.hpp"
#include "pserank/synthlog.hpp"
#include "pserank/text_repr.hpp"
#include "pserank/training.hpp"

namespace pserank {

struct DatasetOptions {
  IngestOptions ingest;
  int min_sessions = 4;
  SplitConfig split;
  int vocab_min_count = 1;
  int embedding_dim = 300;
  std::string embeddings_path;  // empty: deterministic fallback vectors
};

// Everything derived from one (log, docs) pair: labeled and filtered logs,
// per-user splits, text representations, click statistics.
struct Dataset {
  std::vector<UserLog> logs;
  std::unordered_map<std::string, DatasetSplit> splits;
  std::vector<DocRecord> docs;
  Vocabulary vocab;
  EmbeddingMatrix emb;
  std::unordered_map<std::string, Mat> doc_vecs;
  ClickStore clicks;
  std::unordered_map<std::string, double> entropy;
  int embedding_dim = 0;

  FeatureContext feature_context() const { return {&clicks, &entropy}; }
};

Dataset load_dataset(const std::string& log_path, const std::string& docs_path,
                     const DatasetOptions& opts);
// Same assembly starting from in-memory synthetic output.
Dataset make_dataset(std::vector<UserLog> logs, std::vector<DocRecord> docs,
                     const DatasetOptions& opts);

std::vector<PreparedUser> prepare_users(const Dataset& ds);

TrainData build_train_data(const Dataset& ds, const std::vector<PreparedUser>& prepared);

// ---------------------------------------------------------------------------
// Test-split evaluation. Every driver scores the same query set: test-session
// events with at least one SAT click.

struct EvalOptions {
  int threads = 1;
};

using RankFn = std::function<std::vector<std::string>(
    const UserLog&, const DatasetSplit&, int session_idx, int event_idx)>;

ModelEvaluation evaluate_ranker(const std::string& name, const Dataset& ds,
                                const RankFn& rank, const EvalOptions& opts = {});

ModelEvaluation evaluate_original(const Dataset& ds, const EvalOptions& opts = {});
ModelEvaluation evaluate_pclick(const Dataset& ds, const ClickStore& store, double beta,
                                const EvalOptions& opts = {});
ModelEvaluation evaluate_ptm(const Dataset& ds, const TopicModel& tm, const DocPrior& prior,
                             const PtmConfig& cfg, const EvalOptions& opts = {});
ModelEvaluation evaluate_model(const Dataset& ds, const std::vector<PreparedUser>& prepared,
                               ModelParams& params, const EvalOptions& opts = {});

// Clicked-document corpus for the PTM topic model (non-test sessions only).
std::vector<TopicModel::ClickedDoc> clicked_corpus(const Dataset& ds);

// Attention inspection: weights over a user's past sessions for a query text.
struct AttentionRow {
  int session_index = 0;  // 1-based
  std::string representative_query;
  double weight = 0;
  bool below_display_threshold = false;  // weight < 0.01
};
std::vector<AttentionRow> attention_dump(const Dataset& ds, ModelParams& params,
                                         const std::string& user_id,
                                         const std::string& query_text,
                                         int history_limit = -1);

}  // namespace pserank

#endif  // PSERANK_PIPELINE_HPP_
