#ifndef PSERANK_BASELINES_HPP_
#define PSERANK_BASELINES_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pserank/query_log.hpp"
#include "pserank/text_repr.hpp"

namespace pserank {

// Click history indexed for the personalization features and the P-Click
// baseline. Every lookup takes the scoring query's timestamp and counts only
// strictly earlier clicks, so future data can never leak into a score.
class ClickStore {
 public:
  void add_click(const std::string& user, const std::string& query_key,
                 const std::string& doc, std::int64_t ts, bool sat);
  void add_query_issued(const std::string& user, const std::string& query_key,
                        std::int64_t ts);
  static ClickStore build(const std::vector<UserLog>& logs);

  int clicks_under_query(const std::string& user, const std::string& query_key,
                         const std::string& doc, std::int64_t before_ts) const;
  int clicks_under_query_total(const std::string& user, const std::string& query_key,
                               std::int64_t before_ts) const;
  int user_clicks_on_doc(const std::string& user, const std::string& doc,
                         std::int64_t before_ts) const;
  // True when the user issued this exact normalized query earlier.
  bool query_seen_before(const std::string& user, const std::string& query_key,
                         std::int64_t before_ts) const;

  // Sorted TSV: user \t query \t doc \t ts \t sat, one click per row.
  std::string to_tsv() const;
  static ClickStore from_tsv(const std::string& tsv);

  struct ClickRec {
    std::int64_t ts;
    bool sat;
  };

 private:
  // (user, query, doc) -> click records; queried linearly (top-20 result
  // lists keep these tiny).
  std::map<std::string, std::vector<ClickRec>> by_uqd_;
  std::map<std::string, std::vector<ClickRec>> by_uq_;
  std::map<std::string, std::vector<ClickRec>> by_ud_;
  std::map<std::string, std::vector<std::int64_t>> query_issued_;  // user|query -> event ts
};

// score = |clicks(q,d,u)| / (|clicks(q,.,u)| + beta)
double pclick_score(const ClickStore& store, const std::string& user,
                    const std::string& query_key, const std::string& doc,
                    std::int64_t before_ts, double beta = 0.5);

// Borda fusion: points(d) = (K - rank_a(d)) + (K - rank_b(d)); sort by points
// descending, ties by position in `original` ascending. Both rankings must
// hold the same document set.
std::vector<std::string> borda_fuse(const std::vector<std::string>& ranking_a,
                                    const std::vector<std::string>& ranking_b,
                                    const std::vector<std::string>& original);

// Click entropy per normalized query text, from SAT clicks across all users:
//   H(q) = -sum_d P(d|q) log2 P(d|q).
// Computed over a fixed (training-period) slice of the log; unseen queries
// get entropy 0.
std::unordered_map<std::string, double> click_entropy_table(
    const std::vector<UserLog>& logs,
    const std::unordered_map<std::string, DatasetSplit>& splits);

// ---------------------------------------------------------------------------
// Topic model for the PTM baseline: collapsed Gibbs sampling over the clicked
// document corpus.

struct TopicModelConfig {
  int n_topics = 10;
  int iterations = 500;
  double alpha = -1.0;  // < 0 means 50 / K
  double beta = 0.01;
  double user_epsilon = 1e-6;  // additive mass for P(u|z)
  std::uint64_t seed = 1;
};

class TopicModel {
 public:
  // corpus: (doc tokens, SAT-clicking users) pairs over the clicked corpus.
  struct ClickedDoc {
    std::string doc_id;
    std::vector<std::string> tokens;
    std::vector<std::string> sat_users;
  };

  static TopicModel fit(const std::vector<ClickedDoc>& corpus, const Vocabulary& vocab,
                        const TopicModelConfig& cfg);

  int n_topics() const { return k_; }
  // P(w|z), P(z|d) (uniform for unseen docs), P(u|z) (epsilon floor for
  // unseen users).
  double p_word_given_topic(int word_idx, int z) const;
  std::vector<double> p_topic_given_doc(const std::string& doc_id) const;
  double p_user_given_topic(const std::string& user, int z) const;

  const std::vector<int>& assignments(const std::string& doc_id) const;

  // JSON header plus dense distribution arrays.
  std::string to_json() const;
  static TopicModel from_json(const std::string& text);

 private:
  friend struct TopicModelAccess;
  int k_ = 0;
  int vocab_size_ = 0;
  std::vector<double> phi_;                      // k x |V|, P(w|z)
  std::map<std::string, std::vector<double>> theta_;  // doc -> P(z|d)
  std::map<std::string, std::vector<double>> user_;   // user -> P(u|z) per topic
  std::map<std::string, std::vector<int>> assign_;
  double user_floor_ = 0.0;
};

struct PtmConfig {
  double lambda = 1.0;  // exponent on P(u|z)
  double sigma = 1.0;   // Dirichlet smoothing mass for P(d)
};

// Dirichlet-smoothed document prior over the collection.
class DocPrior {
 public:
  static DocPrior build(const std::vector<UserLog>& logs,
                        const std::unordered_map<std::string, DatasetSplit>& splits,
                        int collection_size, double sigma);
  double log_p(const std::string& doc) const;

 private:
  std::unordered_map<std::string, int> clicks_;
  double total_ = 0;
  double sigma_ = 1.0;
  int collection_ = 1;
};

// log score(d|q,u) = log P(d) + sum_{w in q} log sum_z P(w|z) P(u|z)^lambda P(z|d)
double ptm_score(const TopicModel& tm, const DocPrior& prior, const std::string& user,
                 const std::vector<std::string>& terms, const std::string& doc,
                 const Vocabulary& vocab, const PtmConfig& cfg = {});

}  // namespace pserank

#endif  // PSERANK_BASELINES_HPP_
