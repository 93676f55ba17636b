#ifndef PSERANK_SYNTHLOG_HPP_
#define PSERANK_SYNTHLOG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pserank/query_log.hpp"

namespace pserank {

// Fixed world the logs are drawn from: topical vocabulary, a document pool
// with known topics, and a position-bias examination curve. Ambiguous words
// carry mass in two topics, so queries built from them need the user profile
// to resolve.
struct World {
  int n_topics = 6;
  int words_per_topic = 30;
  int n_ambiguous = 48;
  int n_generic = 20;
  int docs_per_topic = 70;
  int doc_length = 30;
  int theme_min = 3, theme_max = 5;  // focus words per document
  double exam_exponent = 0.7;        // examination(pos) = 1 / pos^exponent
  double off_topic_relevance = 0.2;
  double sat_relevance = 0.45;  // docs at or above this satisfy the user
  std::uint64_t seed = 1;

  // Each document is built around a small theme drawn from its topic's word
  // pool plus a quality grade that breaks relevance ties.
  struct Doc {
    std::string id;
    int topic;
    double quality;  // in [0.55, 1.0]
    std::vector<std::string> theme;
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> tf;
  };
  std::vector<Doc> docs;
  std::vector<std::string> topical_words;    // n_topics * words_per_topic
  std::vector<std::string> ambiguous_words;  // paired topics below
  std::vector<std::pair<int, int>> ambiguous_topics;
  std::vector<std::string> generic_words;

  static World build(const World& shape);  // fills docs/words from the seed
  double examination(int position) const;
  // Strong containment: the fraction of query terms the doc repeats (tf >= 2),
  // so theme words dominate the match.
  double strong_match(const Doc& d, const std::vector<std::string>& terms) const;
  // relevance(d | query terms, intended topic) =
  //   strong_match * (topic match ? 1 : off_topic_relevance) * quality
  double relevance(const Doc& d, const std::vector<std::string>& terms,
                   int intended_topic) const;
};

struct GenConfig {
  int n_users = 50;
  int sessions_min = 16, sessions_max = 24;
  int queries_min = 2, queries_max = 5;
  int candidates = 20;
  double repeat_prob = 0.30;
  double ambiguous_fraction = 0.55;
  double drift_rate = 0.02;   // preference drift per session
  double base_noise = 0.30;   // sd of the noise in the unpersonalized ranker
  double click_noise = 0.03;  // chance of flipping a dwell bucket
  enum class HistoryMode { kMixed, kTwoBlock } history_mode = HistoryMode::kMixed;
};

struct GroundTruthRecord {
  std::string qid;
  int topic = 0;
  std::map<std::string, double> relevance;  // candidate doc -> true relevance
};

struct SynthOutput {
  std::vector<UserLog> logs;  // clicks and dwell set; SAT labels not yet applied
  std::vector<DocRecord> docs;
  std::vector<GroundTruthRecord> truth;
};

// Deterministic for a fixed (world.seed, config, seed); per-user streams are
// derived so generation can shard by user without changing output.
SynthOutput generate(const World& world, const GenConfig& config, std::uint64_t seed);

void write_synth(const SynthOutput& out, const std::string& log_path,
                 const std::string& docs_path, const std::string& truth_path);

std::vector<GroundTruthRecord> read_truth(const std::string& path);

}  // namespace pserank

#endif  // PSERANK_SYNTHLOG_HPP_
