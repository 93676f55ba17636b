#ifndef PSERANK_QUERY_LOG_HPP_
#define PSERANK_QUERY_LOG_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace pserank {

// One result slot of a query's top-K list.
struct Impression {
  std::string doc_id;
  int position = 0;  // original rank, 1-based
  bool clicked = false;
  std::int64_t click_ts = 0;  // 0 when not clicked
  double dwell_seconds = 0.0;
  bool is_last_click_in_session = false;
  bool sat = false;  // derived by label_sat_clicks
};

struct QueryEvent {
  std::string query_id;
  std::int64_t timestamp = 0;  // epoch seconds
  std::vector<std::string> terms;
  std::vector<Impression> impressions;  // ordered by position ascending

  bool has_sat_click() const;
  bool has_click() const;
  std::set<std::string> sat_docs() const;
  std::set<std::string> clicked_docs() const;
};

struct Session {
  std::string session_id;
  std::vector<QueryEvent> events;  // ordered by timestamp
};

struct UserLog {
  std::string user_id;
  std::vector<Session> sessions;  // ordered by first-event timestamp
};

// Per-user index sets into UserLog::sessions. Disjoint; union is everything.
// Test sessions are strictly later in time order than train sessions.
struct DatasetSplit {
  std::vector<int> profile_sessions;
  std::vector<int> train_sessions;
  std::vector<int> validation_sessions;
  std::vector<int> test_sessions;
};

// Lowercase, split on non-alphanumerics, drop stopwords and tokens shorter
// than 2 chars. Falls back to the unfiltered lowercase tokens when filtering
// would empty the query.
std::vector<std::string> tokenize(const std::string& text,
                                  const std::unordered_set<std::string>& stopwords);

const std::unordered_set<std::string>& default_stopwords();
std::unordered_set<std::string> load_stopwords(const std::string& path);

struct IngestOptions {
  std::unordered_set<std::string> stopwords = default_stopwords();
  // When true, records may omit the session id; events are then segmented
  // per user on a 30-minute inactivity gap.
  bool segment_sessions = false;
  std::int64_t session_gap_seconds = 1800;
};

// Parses the JSON-Lines click log. One record per query event:
//   {"user":str, "session":str, "qid":str, "ts":int, "query":str,
//    "results":[{"doc":str,"pos":int}], "clicks":[{"doc":str,"ts":int,"dwell":int}]}
// Output is sorted by user id; sessions by first-event timestamp; events by
// timestamp. Malformed input throws with the offending line number.
std::vector<UserLog> ingest_log(const std::string& path, const IngestOptions& opts = {});

// Canonical re-serialization of the data model (round-trips through ingest_log).
std::string serialize_log(const std::vector<UserLog>& logs);

// sat = clicked && (dwell > 30 || last click of the session).
UserLog label_sat_clicks(UserLog log);
void label_sat_clicks(std::vector<UserLog>& logs);

std::vector<UserLog> filter_users(std::vector<UserLog> logs, int min_sessions = 4);

struct SplitConfig {
  // Sessions in the first `profile_fraction` of the user's session list feed
  // the long-term profile only. A fixed boundary timestamp takes precedence
  // when >= 0.
  double profile_fraction = 0.5;
  std::int64_t profile_boundary_ts = -1;
};

// Non-profile sessions split 5:1 in time order into train-pool/test; the last
// ceil(pool/5) of the pool become validation. Users with fewer than two
// non-profile sessions keep everything in profile_sessions.
DatasetSplit split_sessions(const UserLog& log, const SplitConfig& cfg = {});

// Companion document file: {"doc":str, "tokens":[str]} per line.
struct DocRecord {
  std::string doc_id;
  std::vector<std::string> tokens;
};
std::vector<DocRecord> ingest_docs(const std::string& path,
                                   const std::unordered_set<std::string>& stopwords =
                                       default_stopwords());
std::string serialize_docs(const std::vector<DocRecord>& docs);

std::string join_terms(const std::vector<std::string>& terms);

}  // namespace pserank

#endif  // PSERANK_QUERY_LOG_HPP_
