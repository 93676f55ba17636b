#include "pserank/synthlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "pserank/rng.hpp"

namespace pserank {

using nlohmann::ordered_json;

double World::examination(int position) const {
  return 1.0 / std::pow(static_cast<double>(position), exam_exponent);
}

double World::strong_match(const Doc& d, const std::vector<std::string>& terms) const {
  if (terms.empty()) return 0;
  int hit = 0;
  for (const auto& t : terms) {
    auto it = d.tf.find(t);
    if (it != d.tf.end() && it->second >= 2) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(terms.size());
}

double World::relevance(const Doc& d, const std::vector<std::string>& terms,
                        int intended_topic) const {
  double topic_mult = d.topic == intended_topic ? 1.0 : off_topic_relevance;
  return strong_match(d, terms) * topic_mult * d.quality;
}

World World::build(const World& shape) {
  World w = shape;
  w.docs.clear();
  w.topical_words.clear();
  w.ambiguous_words.clear();
  w.ambiguous_topics.clear();
  w.generic_words.clear();

  char buf[32];
  for (int k = 0; k < w.n_topics; ++k) {
    for (int i = 0; i < w.words_per_topic; ++i) {
      std::snprintf(buf, sizeof(buf), "t%dw%02d", k, i);
      w.topical_words.push_back(buf);
    }
  }
  for (int j = 0; j < w.n_ambiguous; ++j) {
    std::snprintf(buf, sizeof(buf), "amb%02d", j);
    w.ambiguous_words.push_back(buf);
    int a = j % w.n_topics;
    int b = (a + 1 + (j / w.n_topics) % (w.n_topics - 1)) % w.n_topics;
    w.ambiguous_topics.emplace_back(a, b);
  }
  for (int i = 0; i < w.n_generic; ++i) {
    std::snprintf(buf, sizeof(buf), "gen%02d", i);
    w.generic_words.push_back(buf);
  }

  Rng rng = Rng(w.seed).fork("world-docs");
  for (int k = 0; k < w.n_topics; ++k) {
    // Theme pool: this topic's words plus the ambiguous words tied to it.
    std::vector<std::string> pool;
    for (int i = 0; i < w.words_per_topic; ++i)
      pool.push_back(w.topical_words[k * w.words_per_topic + i]);
    std::vector<std::string> amb_of_topic;
    for (int j = 0; j < w.n_ambiguous; ++j)
      if (w.ambiguous_topics[j].first == k || w.ambiguous_topics[j].second == k) {
        pool.push_back(w.ambiguous_words[j]);
        amb_of_topic.push_back(w.ambiguous_words[j]);
      }

    for (int i = 0; i < w.docs_per_topic; ++i) {
      World::Doc d;
      std::snprintf(buf, sizeof(buf), "d%d_%03d", k, i);
      d.id = buf;
      d.topic = k;
      d.quality = rng.uniform(0.55, 1.0);
      int theme_size = rng.uniform_int(w.theme_min, w.theme_max);
      std::vector<std::string> shuffled = pool;
      rng.shuffle(shuffled);
      d.theme.assign(shuffled.begin(), shuffled.begin() + theme_size);

      // Two guaranteed repeats per theme word keep the theme above the
      // strong-containment threshold; the rest is background.
      for (const auto& word : d.theme) {
        d.tokens.push_back(word);
        d.tokens.push_back(word);
      }
      while (static_cast<int>(d.tokens.size()) < w.doc_length) {
        double u = rng.uniform();
        if (u < 0.35) {
          d.tokens.push_back(d.theme[rng.below(d.theme.size())]);
        } else if (u < 0.80) {
          int wi = static_cast<int>(rng.below(w.words_per_topic));
          d.tokens.push_back(w.topical_words[k * w.words_per_topic + wi]);
        } else if (u < 0.92 && !amb_of_topic.empty()) {
          d.tokens.push_back(amb_of_topic[rng.below(amb_of_topic.size())]);
        } else {
          d.tokens.push_back(w.generic_words[rng.below(w.generic_words.size())]);
        }
      }
      rng.shuffle(d.tokens);
      for (const auto& tok : d.tokens) ++d.tf[tok];
      w.docs.push_back(std::move(d));
    }
  }
  return w;
}

namespace {

struct QuerySpec {
  std::vector<std::string> terms;
  int topic = 0;
};

std::vector<double> normalize(std::vector<double> v) {
  double s = 0;
  for (double x : v) s += x;
  for (double& x : v) x /= s;
  return v;
}

int sample_categorical(const std::vector<double>& p, Rng& rng) {
  double r = rng.uniform();
  for (std::size_t i = 0; i < p.size(); ++i) {
    r -= p[i];
    if (r <= 0) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

bool is_ambiguous_word(const std::string& w) { return w.rfind("amb", 0) == 0; }

// Queries aim at a concrete target document of the session topic, drawing
// terms from its theme so at least one strong answer exists.
QuerySpec make_query(const World& w, int session_topic, bool ambiguous,
                     const std::vector<int>& topic_docs, Rng& rng) {
  QuerySpec spec;
  spec.topic = session_topic;
  for (int attempt = 0; attempt < 12; ++attempt) {
    const World::Doc& target = w.docs[topic_docs[rng.below(topic_docs.size())]];
    std::vector<std::string> amb_theme, topical_theme;
    for (const auto& word : target.theme)
      (is_ambiguous_word(word) ? amb_theme : topical_theme).push_back(word);
    if (ambiguous && !amb_theme.empty()) {
      // One shared word: both topics of its pair match equally well, so only
      // the user profile can resolve the intent.
      spec.terms.assign(1, amb_theme[rng.below(amb_theme.size())]);
      break;
    }
    if (!ambiguous && topical_theme.size() >= 2) {
      int n = std::min<int>(rng.uniform_int(2, 3), static_cast<int>(topical_theme.size()));
      rng.shuffle(topical_theme);
      spec.terms.assign(topical_theme.begin(), topical_theme.begin() + n);
      break;
    }
  }
  if (spec.terms.empty()) {
    // Degenerate fallback: one topical word.
    int wi = static_cast<int>(rng.below(w.words_per_topic));
    spec.terms.push_back(w.topical_words[session_topic * w.words_per_topic + wi]);
  }
  std::sort(spec.terms.begin(), spec.terms.end());
  spec.terms.erase(std::unique(spec.terms.begin(), spec.terms.end()), spec.terms.end());
  return spec;
}

struct UserGen {
  UserLog log;
  std::vector<GroundTruthRecord> truth;
};

UserGen generate_user(const World& w, const GenConfig& cfg, int user_idx, Rng rng,
                      const std::vector<std::vector<int>>& docs_by_topic) {
  UserGen out;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "u%04d", user_idx);
  out.log.user_id = buf;

  const int K = w.n_topics;
  int n_sessions = rng.uniform_int(cfg.sessions_min, cfg.sessions_max);

  // Topic preference: two dominant topics, slow drift.
  int primary = static_cast<int>(rng.below(K));
  int secondary = (primary + 1 + static_cast<int>(rng.below(K - 1))) % K;
  std::vector<double> pref(K, 0.05 / std::max(1, K - 2));
  pref[primary] = 0.75;
  pref[secondary] = 0.20;
  pref = normalize(pref);

  // Two-block mode: first half of the history is pure topic A, second half
  // pure topic B; the trailing (test) sessions draw from both.
  int block_a = primary, block_b = secondary;
  int tail_start = n_sessions - std::max(2, n_sessions / 8);

  std::int64_t ts = 1600000000LL + static_cast<std::int64_t>(user_idx) * 100000;
  std::vector<QuerySpec> past_queries;
  int qid_counter = 0;

  for (int s = 0; s < n_sessions; ++s) {
    Session session;
    std::snprintf(buf, sizeof(buf), "s%03d", s);
    session.session_id = buf;
    ts += rng.uniform_int(21600, 172800);  // 6h..48h between sessions

    int session_topic;
    if (cfg.history_mode == GenConfig::HistoryMode::kTwoBlock) {
      if (s >= tail_start)
        session_topic = rng.bernoulli(0.5) ? block_a : block_b;
      else
        session_topic = (s < tail_start / 2) ? block_a : block_b;
    } else {
      session_topic = sample_categorical(pref, rng);
    }

    int n_queries = rng.uniform_int(cfg.queries_min, cfg.queries_max);
    for (int q = 0; q < n_queries; ++q) {
      ts += rng.uniform_int(60, 600);

      QuerySpec spec;
      bool repeated = !past_queries.empty() && rng.bernoulli(cfg.repeat_prob);
      if (repeated) {
        spec = past_queries[rng.below(past_queries.size())];
      } else {
        bool ambiguous = rng.bernoulli(cfg.ambiguous_fraction);
        spec = make_query(w, session_topic, ambiguous, docs_by_topic[session_topic], rng);
        past_queries.push_back(spec);
      }

      // Unpersonalized base ranking: term match plus noise, topic-blind.
      std::vector<std::pair<double, int>> scored;
      scored.reserve(256);
      for (std::size_t di = 0; di < w.docs.size(); ++di) {
        const World::Doc& doc = w.docs[di];
        double match = w.strong_match(doc, spec.terms);
        // Weak (single-occurrence) hits count at half strength for the base
        // ranker only; relevance ignores them.
        if (match == 0) {
          int weak = 0;
          for (const auto& t : spec.terms) weak += doc.tf.count(t) ? 1 : 0;
          match = 0.5 * weak / static_cast<double>(spec.terms.size());
        }
        if (match == 0 && !rng.bernoulli(0.04)) continue;  // thin out non-matching docs
        scored.emplace_back(match + cfg.base_noise * rng.normal(), static_cast<int>(di));
      }
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      int k = std::min<int>(cfg.candidates, static_cast<int>(scored.size()));
      if (k < 2) continue;

      QueryEvent ev;
      std::snprintf(buf, sizeof(buf), "u%04d_q%05d", user_idx, qid_counter++);
      ev.query_id = buf;
      ev.timestamp = ts;
      ev.terms = spec.terms;

      GroundTruthRecord gt;
      gt.qid = ev.query_id;
      gt.topic = spec.topic;

      std::int64_t click_ts = ts;
      for (int pos = 1; pos <= k; ++pos) {
        const World::Doc& doc = w.docs[scored[pos - 1].second];
        double rel = w.relevance(doc, spec.terms, spec.topic);
        gt.relevance[doc.id] = rel;

        Impression im;
        im.doc_id = doc.id;
        im.position = pos;

        // Attraction grows with true relevance inside the satisfying band, so
        // clicks concentrate on the genuinely best documents.
        double p_click = rel >= w.sat_relevance ? 0.9 * rel * rel
                                                : (rel >= 0.25 ? 0.08 : 0.015);
        if (rng.bernoulli(w.examination(pos) * p_click)) {
          im.clicked = true;
          click_ts += rng.uniform_int(5, 30);
          im.click_ts = click_ts;
          bool satisfied = rel >= w.sat_relevance;
          if (rng.bernoulli(cfg.click_noise)) satisfied = !satisfied;
          im.dwell_seconds = satisfied
                                 ? 31.0 + std::floor(rng.exponential(30.0))
                                 : static_cast<double>(rng.uniform_int(2, 25));
        }
        ev.impressions.push_back(std::move(im));
      }
      session.events.push_back(std::move(ev));
      out.truth.push_back(std::move(gt));
      ts = click_ts + rng.uniform_int(5, 60);
    }

    if (!session.events.empty()) out.log.sessions.push_back(std::move(session));

    // Preference drift toward a random corner of the simplex.
    std::vector<double> dir(K, 0.0);
    dir[rng.below(K)] = 1.0;
    for (int k2 = 0; k2 < K; ++k2)
      pref[k2] = (1.0 - cfg.drift_rate) * pref[k2] + cfg.drift_rate * dir[k2];
    pref = normalize(pref);
  }
  return out;
}

}  // namespace

SynthOutput generate(const World& world, const GenConfig& config, std::uint64_t seed) {
  const World w = world.docs.empty() ? World::build(world) : world;

  std::vector<std::vector<int>> docs_by_topic(w.n_topics);
  for (std::size_t i = 0; i < w.docs.size(); ++i)
    docs_by_topic[w.docs[i].topic].push_back(static_cast<int>(i));

  SynthOutput out;
  out.docs.reserve(w.docs.size());
  for (const auto& d : w.docs) out.docs.push_back({d.id, d.tokens});

  Rng master(seed);
  for (int u = 0; u < config.n_users; ++u) {
    UserGen ug = generate_user(w, config, u, master.fork(static_cast<std::uint64_t>(u)),
                               docs_by_topic);
    if (ug.log.sessions.empty()) continue;
    out.logs.push_back(std::move(ug.log));
    for (auto& t : ug.truth) out.truth.push_back(std::move(t));
  }

  // Derive the last-click flags the same way ingestion would.
  for (auto& log : out.logs) {
    for (auto& s : log.sessions) {
      Impression* last = nullptr;
      std::int64_t best_ts = -1;
      for (auto& ev : s.events)
        for (auto& im : ev.impressions)
          if (im.clicked && im.click_ts >= best_ts) {
            best_ts = im.click_ts;
            last = &im;
          }
      if (last) last->is_last_click_in_session = true;
    }
  }
  return out;
}

void write_synth(const SynthOutput& out, const std::string& log_path,
                 const std::string& docs_path, const std::string& truth_path) {
  {
    std::ofstream f(log_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + log_path);
    f << serialize_log(out.logs);
  }
  {
    std::ofstream f(docs_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + docs_path);
    f << serialize_docs(out.docs);
  }
  {
    std::ofstream f(truth_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + truth_path);
    for (const auto& t : out.truth) {
      ordered_json j;
      j["qid"] = t.qid;
      j["topic"] = t.topic;
      ordered_json rel = ordered_json::object();
      for (const auto& [doc, r] : t.relevance) rel[doc] = r;
      j["relevance"] = std::move(rel);
      f << j.dump() << '\n';
    }
  }
}

std::vector<GroundTruthRecord> read_truth(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<GroundTruthRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    GroundTruthRecord t;
    t.qid = j.at("qid").get<std::string>();
    t.topic = j.at("topic").get<int>();
    for (auto& [doc, r] : j.at("relevance").items())
      t.relevance[doc] = r.get<double>();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace pserank
