#include "pserank/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pserank/rng.hpp"

namespace pserank {

using nlohmann::ordered_json;

namespace {

std::string uqd_key(const std::string& u, const std::string& q, const std::string& d) {
  return u + "\x1f" + q + "\x1f" + d;
}
std::string uq_key(const std::string& u, const std::string& q) { return u + "\x1f" + q; }

}  // namespace

void ClickStore::add_click(const std::string& user, const std::string& query_key,
                           const std::string& doc, std::int64_t ts, bool sat) {
  by_uqd_[uqd_key(user, query_key, doc)].push_back({ts, sat});
  by_uq_[uq_key(user, query_key)].push_back({ts, sat});
  by_ud_[uq_key(user, doc)].push_back({ts, sat});
}

void ClickStore::add_query_issued(const std::string& user, const std::string& query_key,
                                  std::int64_t ts) {
  query_issued_[uq_key(user, query_key)].push_back(ts);
}

ClickStore ClickStore::build(const std::vector<UserLog>& logs) {
  ClickStore s;
  for (const auto& ul : logs) {
    for (const auto& sess : ul.sessions) {
      for (const auto& ev : sess.events) {
        std::string qkey = join_terms(ev.terms);
        s.add_query_issued(ul.user_id, qkey, ev.timestamp);
        for (const auto& im : ev.impressions) {
          if (im.clicked) s.add_click(ul.user_id, qkey, im.doc_id, im.click_ts, im.sat);
        }
      }
    }
  }
  return s;
}

int ClickStore::clicks_under_query(const std::string& user, const std::string& query_key,
                                   const std::string& doc, std::int64_t before_ts) const {
  auto it = by_uqd_.find(uqd_key(user, query_key, doc));
  if (it == by_uqd_.end()) return 0;
  int n = 0;
  for (const auto& r : it->second)
    if (r.ts < before_ts) ++n;
  return n;
}

int ClickStore::clicks_under_query_total(const std::string& user,
                                         const std::string& query_key,
                                         std::int64_t before_ts) const {
  auto it = by_uq_.find(uq_key(user, query_key));
  if (it == by_uq_.end()) return 0;
  int n = 0;
  for (const auto& r : it->second)
    if (r.ts < before_ts) ++n;
  return n;
}

int ClickStore::user_clicks_on_doc(const std::string& user, const std::string& doc,
                                   std::int64_t before_ts) const {
  auto it = by_ud_.find(uq_key(user, doc));
  if (it == by_ud_.end()) return 0;
  int n = 0;
  for (const auto& r : it->second)
    if (r.ts < before_ts) ++n;
  return n;
}

bool ClickStore::query_seen_before(const std::string& user, const std::string& query_key,
                                   std::int64_t before_ts) const {
  auto it = query_issued_.find(uq_key(user, query_key));
  if (it == query_issued_.end()) return false;
  for (auto ts : it->second)
    if (ts < before_ts) return true;
  return false;
}

std::string ClickStore::to_tsv() const {
  // Rebuild rows from the (user, query, doc) index so output is sorted and
  // diffable.
  std::ostringstream out;
  for (const auto& [key, recs] : by_uqd_) {
    std::string k = key;
    std::replace(k.begin(), k.end(), '\x1f', '\t');
    for (const auto& r : recs)
      out << k << '\t' << r.ts << '\t' << (r.sat ? 1 : 0) << '\n';
  }
  // Query-issue events ride along so repeated-query checks survive the dump.
  for (const auto& [key, tss] : query_issued_) {
    std::string k = key;
    std::replace(k.begin(), k.end(), '\x1f', '\t');
    for (auto ts : tss) out << "#query\t" << k << '\t' << ts << '\n';
  }
  return out.str();
}

ClickStore ClickStore::from_tsv(const std::string& tsv) {
  ClickStore s;
  std::istringstream in(tsv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols[0] == "#query") {
      if (cols.size() != 4) throw std::runtime_error("bad click-store row: " + line);
      s.add_query_issued(cols[1], cols[2], std::stoll(cols[3]));
    } else {
      if (cols.size() != 5) throw std::runtime_error("bad click-store row: " + line);
      s.add_click(cols[0], cols[1], cols[2], std::stoll(cols[3]), cols[4] == "1");
    }
  }
  return s;
}

double pclick_score(const ClickStore& store, const std::string& user,
                    const std::string& query_key, const std::string& doc,
                    std::int64_t before_ts, double beta) {
  if (beta <= 0) throw std::invalid_argument("pclick: beta must be > 0");
  int on_doc = store.clicks_under_query(user, query_key, doc, before_ts);
  int total = store.clicks_under_query_total(user, query_key, before_ts);
  return static_cast<double>(on_doc) / (total + beta);
}

std::vector<std::string> borda_fuse(const std::vector<std::string>& ranking_a,
                                    const std::vector<std::string>& ranking_b,
                                    const std::vector<std::string>& original) {
  if (ranking_a.size() != ranking_b.size())
    throw std::invalid_argument("borda_fuse: rankings differ in size");
  const int k = static_cast<int>(ranking_a.size());
  std::unordered_map<std::string, int> rank_a, rank_b, orig_pos;
  for (int i = 0; i < k; ++i) rank_a[ranking_a[i]] = i + 1;
  for (int i = 0; i < k; ++i) rank_b[ranking_b[i]] = i + 1;
  for (std::size_t i = 0; i < original.size(); ++i)
    orig_pos[original[i]] = static_cast<int>(i) + 1;
  if (rank_b.size() != rank_a.size())
    throw std::invalid_argument("borda_fuse: rankings hold different documents");
  for (const auto& [doc, _] : rank_a)
    if (!rank_b.count(doc))
      throw std::invalid_argument("borda_fuse: rankings hold different documents");

  std::vector<std::string> fused = ranking_a;
  std::sort(fused.begin(), fused.end(), [&](const std::string& x, const std::string& y) {
    int px = (k - rank_a[x]) + (k - rank_b[x]);
    int py = (k - rank_a[y]) + (k - rank_b[y]);
    if (px != py) return px > py;
    return orig_pos[x] < orig_pos[y];
  });
  return fused;
}

std::unordered_map<std::string, double> click_entropy_table(
    const std::vector<UserLog>& logs,
    const std::unordered_map<std::string, DatasetSplit>& splits) {
  // SAT clicks from non-test sessions only.
  std::unordered_map<std::string, std::unordered_map<std::string, int>> counts;
  for (const auto& ul : logs) {
    auto sit = splits.find(ul.user_id);
    std::set<int> test_idx;
    if (sit != splits.end())
      test_idx.insert(sit->second.test_sessions.begin(), sit->second.test_sessions.end());
    for (std::size_t si = 0; si < ul.sessions.size(); ++si) {
      if (test_idx.count(static_cast<int>(si))) continue;
      for (const auto& ev : ul.sessions[si].events) {
        std::string qkey = join_terms(ev.terms);
        for (const auto& im : ev.impressions)
          if (im.sat) ++counts[qkey][im.doc_id];
      }
    }
  }
  std::unordered_map<std::string, double> table;
  for (const auto& [q, docs] : counts) {
    double total = 0;
    for (const auto& [_, c] : docs) total += c;
    double h = 0;
    for (const auto& [_, c] : docs) {
      double p = c / total;
      h -= p * std::log2(p);
    }
    table[q] = h;
  }
  return table;
}

// ---------------------------------------------------------------------------

TopicModel TopicModel::fit(const std::vector<ClickedDoc>& corpus, const Vocabulary& vocab,
                           const TopicModelConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("fit_topics: empty corpus");
  if (cfg.n_topics < 1) throw std::invalid_argument("fit_topics: K must be >= 1");
  if (cfg.n_topics > vocab.size())
    throw std::invalid_argument("fit_topics: K exceeds vocabulary size");

  const int K = cfg.n_topics;
  const int V = vocab.size();
  const double alpha = cfg.alpha < 0 ? 50.0 / K : cfg.alpha;
  const double beta = cfg.beta;

  // Token streams restricted to in-vocabulary words.
  std::vector<std::vector<int>> words(corpus.size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& t : corpus[d].tokens) {
      int idx = vocab.index_of(t);
      if (idx >= 0) words[d].push_back(idx);
    }
  }

  std::vector<std::vector<int>> z(corpus.size());
  std::vector<int> n_z(K, 0);                       // tokens per topic
  std::vector<std::vector<int>> n_zw(K, std::vector<int>(V, 0));
  std::vector<std::vector<int>> n_dz(corpus.size(), std::vector<int>(K, 0));

  Rng rng(cfg.seed);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    z[d].resize(words[d].size());
    for (std::size_t i = 0; i < words[d].size(); ++i) {
      int t = static_cast<int>(rng.below(K));
      z[d][i] = t;
      ++n_z[t];
      ++n_zw[t][words[d][i]];
      ++n_dz[d][t];
    }
  }

  std::vector<double> p(K);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      const int nd = static_cast<int>(words[d].size());
      for (int i = 0; i < nd; ++i) {
        int w = words[d][i];
        int t = z[d][i];
        --n_z[t];
        --n_zw[t][w];
        --n_dz[d][t];
        double sum = 0;
        for (int k = 0; k < K; ++k) {
          p[k] = (n_zw[k][w] + beta) / (n_z[k] + beta * V) * (n_dz[d][k] + alpha);
          sum += p[k];
        }
        double r = rng.uniform() * sum;
        int nt = K - 1;
        for (int k = 0; k < K; ++k) {
          r -= p[k];
          if (r <= 0) {
            nt = k;
            break;
          }
        }
        z[d][i] = nt;
        ++n_z[nt];
        ++n_zw[nt][w];
        ++n_dz[d][nt];
      }
    }
  }

  TopicModel tm;
  tm.k_ = K;
  tm.vocab_size_ = V;
  tm.phi_.assign(static_cast<std::size_t>(K) * V, 0.0);
  for (int k = 0; k < K; ++k)
    for (int w = 0; w < V; ++w)
      tm.phi_[static_cast<std::size_t>(k) * V + w] =
          (n_zw[k][w] + beta) / (n_z[k] + beta * V);

  for (std::size_t d = 0; d < corpus.size(); ++d) {
    std::vector<double> theta(K);
    int nd = static_cast<int>(words[d].size());
    for (int k = 0; k < K; ++k) theta[k] = (n_dz[d][k] + alpha) / (nd + K * alpha);
    tm.theta_[corpus[d].doc_id] = std::move(theta);
    tm.assign_[corpus[d].doc_id] = z[d];
  }

  // P(u|z): topic-assignment mass of each user's SAT-clicked docs, epsilon
  // smoothed and normalized over users.
  std::map<std::string, std::vector<double>> user_counts;
  std::set<std::string> all_users;
  for (std::size_t d = 0; d < corpus.size(); ++d)
    for (const auto& u : corpus[d].sat_users) all_users.insert(u);
  for (const auto& u : all_users) user_counts[u].assign(K, 0.0);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& u : corpus[d].sat_users)
      for (int t : z[d]) user_counts[u][static_cast<std::size_t>(t)] += 1.0;
  }
  std::vector<double> topic_total(K, 0.0);
  for (const auto& [u, counts] : user_counts)
    for (int k = 0; k < K; ++k) topic_total[k] += counts[k] + cfg.user_epsilon;
  for (auto& [u, counts] : user_counts) {
    std::vector<double> pu(K);
    for (int k = 0; k < K; ++k) pu[k] = (counts[k] + cfg.user_epsilon) / topic_total[k];
    tm.user_[u] = std::move(pu);
  }
  double n_users = std::max<std::size_t>(1, all_users.size());
  tm.user_floor_ = cfg.user_epsilon /
                   (n_users * cfg.user_epsilon + 1.0);  // unseen-user fallback, order of magnitude
  return tm;
}

double TopicModel::p_word_given_topic(int word_idx, int z) const {
  if (word_idx < 0 || word_idx >= vocab_size_) return 0.0;
  return phi_[static_cast<std::size_t>(z) * vocab_size_ + word_idx];
}

std::vector<double> TopicModel::p_topic_given_doc(const std::string& doc_id) const {
  auto it = theta_.find(doc_id);
  if (it != theta_.end()) return it->second;
  return std::vector<double>(k_, 1.0 / k_);  // never-clicked doc: uniform
}

double TopicModel::p_user_given_topic(const std::string& user, int z) const {
  auto it = user_.find(user);
  if (it == user_.end()) return user_floor_;
  return it->second[static_cast<std::size_t>(z)];
}

const std::vector<int>& TopicModel::assignments(const std::string& doc_id) const {
  static const std::vector<int> kEmpty;
  auto it = assign_.find(doc_id);
  return it == assign_.end() ? kEmpty : it->second;
}

std::string TopicModel::to_json() const {
  ordered_json j;
  j["n_topics"] = k_;
  j["vocab_size"] = vocab_size_;
  j["user_floor"] = user_floor_;
  j["phi"] = phi_;
  ordered_json theta = ordered_json::object();
  for (const auto& [d, v] : theta_) theta[d] = v;
  j["theta"] = std::move(theta);
  ordered_json user = ordered_json::object();
  for (const auto& [u, v] : user_) user[u] = v;
  j["user"] = std::move(user);
  return j.dump();
}

TopicModel TopicModel::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  TopicModel tm;
  tm.k_ = j.at("n_topics").get<int>();
  tm.vocab_size_ = j.at("vocab_size").get<int>();
  tm.user_floor_ = j.at("user_floor").get<double>();
  tm.phi_ = j.at("phi").get<std::vector<double>>();
  for (auto& [d, v] : j.at("theta").items()) tm.theta_[d] = v.get<std::vector<double>>();
  for (auto& [u, v] : j.at("user").items()) tm.user_[u] = v.get<std::vector<double>>();
  return tm;
}

DocPrior DocPrior::build(const std::vector<UserLog>& logs,
                         const std::unordered_map<std::string, DatasetSplit>& splits,
                         int collection_size, double sigma) {
  DocPrior p;
  p.sigma_ = sigma;
  p.collection_ = std::max(1, collection_size);
  for (const auto& ul : logs) {
    auto sit = splits.find(ul.user_id);
    std::set<int> test_idx;
    if (sit != splits.end())
      test_idx.insert(sit->second.test_sessions.begin(), sit->second.test_sessions.end());
    for (std::size_t si = 0; si < ul.sessions.size(); ++si) {
      if (test_idx.count(static_cast<int>(si))) continue;
      for (const auto& ev : ul.sessions[si].events)
        for (const auto& im : ev.impressions)
          if (im.clicked) {
            ++p.clicks_[im.doc_id];
            p.total_ += 1.0;
          }
    }
  }
  return p;
}

double DocPrior::log_p(const std::string& doc) const {
  auto it = clicks_.find(doc);
  double c = it == clicks_.end() ? 0.0 : it->second;
  return std::log((c + sigma_ / collection_) / (total_ + sigma_));
}

double ptm_score(const TopicModel& tm, const DocPrior& prior, const std::string& user,
                 const std::vector<std::string>& terms, const std::string& doc,
                 const Vocabulary& vocab, const PtmConfig& cfg) {
  double log_score = prior.log_p(doc);
  std::vector<double> theta = tm.p_topic_given_doc(doc);
  for (const auto& w : terms) {
    int idx = vocab.index_of(w);
    if (idx < 0) continue;  // OOV terms carry no signal
    double s = 0;
    for (int z = 0; z < tm.n_topics(); ++z) {
      s += tm.p_word_given_topic(idx, z) *
           std::pow(tm.p_user_given_topic(user, z), cfg.lambda) * theta[z];
    }
    log_score += std::log(std::max(s, 1e-300));
  }
  return log_score;
}

}  // namespace pserank
