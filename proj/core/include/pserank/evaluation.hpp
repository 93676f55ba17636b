#ifndef PSERANK_EVALUATION_HPP_
#define PSERANK_EVALUATION_HPP_

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pserank/query_log.hpp"

namespace pserank {

// Binary-relevance average precision: mean over relevant docs of the
// precision at each relevant doc's rank. Empty relevant set gives 0 (such
// queries are excluded upstream).
double average_precision(const std::vector<std::string>& ranking,
                         const std::set<std::string>& relevant);
double average_precision_labels(const std::vector<bool>& relevant_at_rank);

double reciprocal_rank(const std::vector<std::string>& ranking,
                       const std::set<std::string>& relevant);
double precision_at_1(const std::vector<std::string>& ranking,
                      const std::set<std::string>& relevant);
// Mean re-ranked position of the docs in `clicked`.
double avg_click_position(const std::vector<std::string>& ranking,
                          const std::set<std::string>& clicked);

// A clicked document paired with each unclicked document originally ranked
// above it.
struct InversePair {
  std::string clicked_doc;
  std::string skipped_doc;
};
std::vector<InversePair> inverse_pairs(const QueryEvent& event);

// (#Better, total): a pair improves when the clicked doc ranks above the
// skipped doc in the personalized ranking.
std::pair<int, int> count_improved(const std::vector<InversePair>& pairs,
                                   const std::vector<std::string>& ranking);

// ---------------------------------------------------------------------------

struct PerQueryResult {
  std::string user, session_id, qid;
  int session_position = 1;  // 1-based index of the query within its session
  bool repeated = false;
  double click_entropy = 0;
  double ap = 0, rr = 0, p1 = 0, avg_click = 0;
  int n_pairs = 0, n_better = 0;
  double ap_original = 0;
};

struct MetricsSummary {
  int n_queries = 0;
  double map = 0, mrr = 0, p_at_1 = 0, avg_click = 0;
  long long better = 0, total_pairs = 0;
  double p_improve = 0;     // NaN marker when total_pairs == 0
  double delta_map = 0;     // MAP - MAP(original ranking) on the same queries
};
MetricsSummary summarize(std::span<const PerQueryResult> rows);

enum class Slicer { kClickEntropy, kRepeatedQuery, kSessionPosition };
// Keys: "entropy<1"/"entropy>=1"; "repeated"/"non-repeated"; "1".."4"/"5+".
// Empty slices are omitted.
std::map<std::string, MetricsSummary> slice_report(
    const std::vector<PerQueryResult>& rows, Slicer slicer);

// Two-sided paired t-test. p is computed from the Student t distribution via
// the regularized incomplete beta function.
struct TTest {
  double t = 0;
  double p = 1;
  int n = 0;
};
TTest paired_ttest(const std::vector<double>& x, const std::vector<double>& y);
double student_t_two_sided_p(double t, int df);

// ---------------------------------------------------------------------------

struct ModelEvaluation {
  std::string model;
  std::vector<PerQueryResult> queries;  // user, session, query order
  MetricsSummary overall;
  std::map<std::string, MetricsSummary> by_entropy, by_repeated, by_position;

  void finalize();  // fills overall and the slice maps from `queries`
};

std::string report_json(const ModelEvaluation& ev);
// CSV: user,session,qid,slice,ap,rr,p1,avg_click,n_pairs,n_better
std::string per_query_csv(const ModelEvaluation& ev);
// Aligned text table over all models plus pairwise significance on per-query AP.
std::string comparison_table(const std::vector<ModelEvaluation>& evals);
std::string comparison_json(const std::vector<ModelEvaluation>& evals);

}  // namespace pserank

#endif  // PSERANK_EVALUATION_HPP_
