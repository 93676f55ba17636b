#include "pserank/query_log.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pserank {

using nlohmann::ordered_json;

bool QueryEvent::has_sat_click() const {
  return std::any_of(impressions.begin(), impressions.end(),
                     [](const Impression& im) { return im.sat; });
}

bool QueryEvent::has_click() const {
  return std::any_of(impressions.begin(), impressions.end(),
                     [](const Impression& im) { return im.clicked; });
}

std::set<std::string> QueryEvent::sat_docs() const {
  std::set<std::string> out;
  for (const auto& im : impressions)
    if (im.sat) out.insert(im.doc_id);
  return out;
}

std::set<std::string> QueryEvent::clicked_docs() const {
  std::set<std::string> out;
  for (const auto& im : impressions)
    if (im.clicked) out.insert(im.doc_id);
  return out;
}

std::vector<std::string> tokenize(const std::string& text,
                                  const std::unordered_set<std::string>& stopwords) {
  std::vector<std::string> raw;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      raw.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) raw.push_back(cur);

  std::vector<std::string> filtered;
  for (const auto& t : raw) {
    if (t.size() < 2) continue;
    if (stopwords.count(t)) continue;
    filtered.push_back(t);
  }
  return filtered.empty() ? raw : filtered;
}

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> kStopwords{
      "a",    "an",   "and",  "are",   "as",    "at",    "be",   "but",  "by",
      "for",  "from", "had",  "has",   "have",  "he",    "her",  "his",  "how",
      "i",    "if",   "in",   "into",  "is",    "it",    "its",  "of",   "on",
      "or",   "our",  "she",  "so",    "than",  "that",  "the",  "their", "them",
      "then", "there", "these", "they", "this",  "to",    "was",  "we",   "were",
      "what", "when", "where", "which", "while", "who",   "why",  "will", "with",
      "you",  "your"};
  return kStopwords;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stopword file: " + path);
  std::unordered_set<std::string> out;
  std::string word;
  while (in >> word) {
    std::string lower;
    for (char c : word) lower.push_back(static_cast<char>(std::tolower(
        static_cast<unsigned char>(c))));
    out.insert(lower);
  }
  return out;
}

std::string join_terms(const std::vector<std::string>& terms) {
  std::string out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) out.push_back(' ');
    out += terms[i];
  }
  return out;
}

namespace {

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("log line " + std::to_string(line_no) + ": " + what);
}

const ordered_json& need_field(const ordered_json& j, const char* key,
                               std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end()) fail_line(line_no, std::string("missing field '") + key + "'");
  return *it;
}

struct RawRecord {
  std::string user, session, qid, query;
  std::int64_t ts = 0;
  std::vector<std::pair<std::string, int>> results;           // (doc, pos)
  std::vector<std::tuple<std::string, std::int64_t, double>> clicks;  // (doc, ts, dwell)
  std::size_t line_no = 0;
};

RawRecord parse_record(const std::string& line, std::size_t line_no, bool allow_no_session) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const ordered_json::parse_error& e) {
    fail_line(line_no, std::string("invalid JSON: ") + e.what());
  }
  RawRecord r;
  r.line_no = line_no;
  r.user = need_field(j, "user", line_no).get<std::string>();
  if (j.contains("session")) {
    r.session = j["session"].get<std::string>();
  } else if (!allow_no_session) {
    fail_line(line_no, "missing field 'session' (pass --segment-sessions for raw logs)");
  }
  r.qid = need_field(j, "qid", line_no).get<std::string>();
  r.ts = need_field(j, "ts", line_no).get<std::int64_t>();
  r.query = need_field(j, "query", line_no).get<std::string>();
  const auto& results = need_field(j, "results", line_no);
  if (!results.is_array() || results.empty())
    fail_line(line_no, "'results' must be a non-empty array");
  for (const auto& e : results) {
    r.results.emplace_back(need_field(e, "doc", line_no).get<std::string>(),
                           need_field(e, "pos", line_no).get<int>());
  }
  const auto& clicks = need_field(j, "clicks", line_no);
  if (!clicks.is_array()) fail_line(line_no, "'clicks' must be an array");
  for (const auto& e : clicks) {
    r.clicks.emplace_back(need_field(e, "doc", line_no).get<std::string>(),
                          need_field(e, "ts", line_no).get<std::int64_t>(),
                          need_field(e, "dwell", line_no).get<double>());
  }
  return r;
}

QueryEvent to_event(const RawRecord& r, const IngestOptions& opts) {
  QueryEvent ev;
  ev.query_id = r.qid;
  ev.timestamp = r.ts;
  ev.terms = tokenize(r.query, opts.stopwords);
  if (ev.terms.empty()) fail_line(r.line_no, "query has no usable terms: '" + r.query + "'");

  std::vector<std::pair<std::string, int>> results = r.results;
  std::sort(results.begin(), results.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  std::unordered_map<std::string, int> pos_of;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& [doc, pos] = results[i];
    if (pos != static_cast<int>(i) + 1)
      fail_line(r.line_no, "result positions must form 1..K");
    if (!pos_of.emplace(doc, pos).second)
      fail_line(r.line_no, "duplicate doc in results: " + doc);
    Impression im;
    im.doc_id = doc;
    im.position = pos;
    ev.impressions.push_back(std::move(im));
  }
  if (ev.impressions.size() > 20) fail_line(r.line_no, "more than 20 results");

  for (const auto& [doc, ts, dwell] : r.clicks) {
    auto it = pos_of.find(doc);
    if (it == pos_of.end()) fail_line(r.line_no, "click on doc not in results: " + doc);
    if (dwell < 0) fail_line(r.line_no, "negative dwell time");
    Impression& im = ev.impressions[it->second - 1];
    im.clicked = true;
    im.click_ts = ts;
    im.dwell_seconds = dwell;
  }
  return ev;
}

void mark_last_clicks(Session& s) {
  // The click with the largest timestamp in the session; ties resolved toward
  // the later event / larger position so the choice is deterministic.
  Impression* last = nullptr;
  std::int64_t best_ts = -1;
  for (auto& ev : s.events) {
    for (auto& im : ev.impressions) {
      im.is_last_click_in_session = false;
      if (im.clicked && im.click_ts >= best_ts) {
        best_ts = im.click_ts;
        last = &im;
      }
    }
  }
  if (last) last->is_last_click_in_session = true;
}

}  // namespace

std::vector<UserLog> ingest_log(const std::string& path, const IngestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log file: " + path);

  // user -> session -> events
  std::map<std::string, std::map<std::string, std::vector<QueryEvent>>> by_user;
  std::map<std::string, std::vector<std::pair<std::int64_t, QueryEvent>>> unsessioned;
  std::unordered_set<std::string> seen_keys;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    RawRecord r = parse_record(line, line_no, opts.segment_sessions);
    std::string key = r.user + "\x1f" + r.session + "\x1f" + r.qid;
    if (!seen_keys.insert(key).second)
      fail_line(line_no, "duplicate (user, session, qid): " + r.user + "/" + r.session +
                             "/" + r.qid);
    QueryEvent ev = to_event(r, opts);
    if (opts.segment_sessions && r.session.empty()) {
      unsessioned[r.user].emplace_back(ev.timestamp, std::move(ev));
    } else {
      by_user[r.user][r.session].push_back(std::move(ev));
    }
  }

  // Segment session-less events on the inactivity gap.
  for (auto& [user, evs] : unsessioned) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    int seg = 0;
    std::int64_t prev_ts = 0;
    for (std::size_t i = 0; i < evs.size(); ++i) {
      if (i > 0 && evs[i].first - prev_ts > opts.session_gap_seconds) ++seg;
      prev_ts = evs[i].first;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "seg%04d", seg);
      by_user[user][buf].push_back(std::move(evs[i].second));
    }
  }

  std::vector<UserLog> logs;
  for (auto& [user, sessions] : by_user) {
    UserLog ul;
    ul.user_id = user;
    for (auto& [sid, events] : sessions) {
      Session s;
      s.session_id = sid;
      s.events = std::move(events);
      std::stable_sort(s.events.begin(), s.events.end(),
                       [](const QueryEvent& a, const QueryEvent& b) {
                         return a.timestamp < b.timestamp;
                       });
      mark_last_clicks(s);
      ul.sessions.push_back(std::move(s));
    }
    std::stable_sort(ul.sessions.begin(), ul.sessions.end(),
                     [](const Session& a, const Session& b) {
                       return a.events.front().timestamp < b.events.front().timestamp;
                     });
    logs.push_back(std::move(ul));
  }
  return logs;  // std::map iteration already sorted by user_id
}

std::string serialize_log(const std::vector<UserLog>& logs) {
  std::ostringstream out;
  for (const auto& ul : logs) {
    for (const auto& s : ul.sessions) {
      for (const auto& ev : s.events) {
        ordered_json j;
        j["user"] = ul.user_id;
        j["session"] = s.session_id;
        j["qid"] = ev.query_id;
        j["ts"] = ev.timestamp;
        j["query"] = join_terms(ev.terms);
        ordered_json results = ordered_json::array();
        ordered_json clicks = ordered_json::array();
        for (const auto& im : ev.impressions) {
          results.push_back({{"doc", im.doc_id}, {"pos", im.position}});
          if (im.clicked) {
            clicks.push_back({{"doc", im.doc_id},
                              {"ts", im.click_ts},
                              {"dwell", static_cast<std::int64_t>(im.dwell_seconds)}});
          }
        }
        j["results"] = std::move(results);
        j["clicks"] = std::move(clicks);
        out << j.dump() << '\n';
      }
    }
  }
  return out.str();
}

UserLog label_sat_clicks(UserLog log) {
  for (auto& s : log.sessions) {
    for (auto& ev : s.events) {
      for (auto& im : ev.impressions) {
        im.sat = im.clicked && (im.dwell_seconds > 30.0 || im.is_last_click_in_session);
      }
    }
  }
  return log;
}

void label_sat_clicks(std::vector<UserLog>& logs) {
  for (auto& l : logs) l = label_sat_clicks(std::move(l));
}

std::vector<UserLog> filter_users(std::vector<UserLog> logs, int min_sessions) {
  if (min_sessions < 1) throw std::invalid_argument("min_sessions must be >= 1");
  std::erase_if(logs, [&](const UserLog& l) {
    return static_cast<int>(l.sessions.size()) < min_sessions;
  });
  return logs;
}

DatasetSplit split_sessions(const UserLog& log, const SplitConfig& cfg) {
  DatasetSplit out;
  int n = static_cast<int>(log.sessions.size());
  int profile_end = 0;  // first non-profile index
  if (cfg.profile_boundary_ts >= 0) {
    while (profile_end < n &&
           log.sessions[profile_end].events.front().timestamp < cfg.profile_boundary_ts)
      ++profile_end;
  } else {
    profile_end = static_cast<int>(n * cfg.profile_fraction);
  }
  for (int i = 0; i < profile_end; ++i) out.profile_sessions.push_back(i);

  int remaining = n - profile_end;
  if (remaining < 2) {
    // Too few supervised sessions; keep the user for profiles only.
    for (int i = profile_end; i < n; ++i) out.profile_sessions.push_back(i);
    return out;
  }
  // 5:1 train-pool : test, nearest split with at least one test session.
  int n_test = std::max(1, static_cast<int>(remaining / 6.0 + 0.5));
  int pool = remaining - n_test;
  int n_val = (pool + 4) / 5;  // ceil(pool / 5)
  int n_train = pool - n_val;
  for (int i = 0; i < n_train; ++i) out.train_sessions.push_back(profile_end + i);
  for (int i = 0; i < n_val; ++i) out.validation_sessions.push_back(profile_end + n_train + i);
  for (int i = 0; i < n_test; ++i) out.test_sessions.push_back(profile_end + pool + i);
  return out;
}

std::vector<DocRecord> ingest_docs(const std::string& path,
                                   const std::unordered_set<std::string>& stopwords) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open docs file: " + path);
  std::vector<DocRecord> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
      throw std::runtime_error("docs line " + std::to_string(line_no) +
                               ": invalid JSON: " + e.what());
    }
    DocRecord d;
    d.doc_id = need_field(j, "doc", line_no).get<std::string>();
    if (!seen.insert(d.doc_id).second)
      throw std::runtime_error("docs line " + std::to_string(line_no) +
                               ": duplicate doc id " + d.doc_id);
    for (const auto& t : need_field(j, "tokens", line_no)) {
      for (auto& tok : tokenize(t.get<std::string>(), stopwords)) d.tokens.push_back(tok);
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

std::string serialize_docs(const std::vector<DocRecord>& docs) {
  std::ostringstream out;
  for (const auto& d : docs) {
    ordered_json j;
    j["doc"] = d.doc_id;
    j["tokens"] = d.tokens;
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace pserank
