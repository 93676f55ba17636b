#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "pserank/baselines.hpp"
#include "pserank/rng.hpp"

using namespace pserank;

TEST_CASE("pclick formula with the paper smoothing") {
  ClickStore s;
  for (int i = 0; i < 3; ++i) s.add_click("u", "red shoes", "d1", 100 + i, true);
  s.add_click("u", "red shoes", "d2", 103, false);

  // 3 clicks on d1 of 4 total: 3 / (4 + 0.5)
  CHECK(pclick_score(s, "u", "red shoes", "d1", 1000, 0.5) ==
        doctest::Approx(3.0 / 4.5).epsilon(1e-12));
  // unseen query -> 0
  CHECK(pclick_score(s, "u", "blue shoes", "d1", 1000, 0.5) == 0.0);
  // 1 of 1: 1 / 1.5
  ClickStore one;
  one.add_click("u", "q", "d", 5, true);
  CHECK(pclick_score(one, "u", "q", "d", 10, 0.5) ==
        doctest::Approx(1.0 / 1.5).epsilon(1e-12));
  CHECK_THROWS(pclick_score(one, "u", "q", "d", 10, 0.0));
}

TEST_CASE("pclick scores stay in [0, 1)") {
  Rng rng(5);
  ClickStore s;
  for (int i = 0; i < 200; ++i) {
    s.add_click("u" + std::to_string(rng.below(3)), "q" + std::to_string(rng.below(4)),
                "d" + std::to_string(rng.below(5)), i, rng.bernoulli(0.5));
  }
  for (int u = 0; u < 3; ++u)
    for (int q = 0; q < 4; ++q)
      for (int d = 0; d < 5; ++d) {
        double sc = pclick_score(s, "u" + std::to_string(u), "q" + std::to_string(q),
                                 "d" + std::to_string(d), 500, 0.5);
        CHECK(sc >= 0.0);
        CHECK(sc < 1.0);
      }
}

TEST_CASE("click store enforces temporal hygiene") {
  ClickStore s;
  s.add_click("u", "q", "d", 100, true);
  double base = pclick_score(s, "u", "q", "d", 150, 0.5);
  CHECK(base > 0);
  // Inject a strictly future click: score at the same timestamp is unchanged.
  s.add_click("u", "q", "d", 150, true);
  s.add_click("u", "q", "d", 99999, true);
  CHECK(pclick_score(s, "u", "q", "d", 150, 0.5) == doctest::Approx(base));
  CHECK(s.user_clicks_on_doc("u", "d", 150) == 1);
  CHECK(s.clicks_under_query_total("u", "q", 150) == 1);
  CHECK_FALSE(s.query_seen_before("u", "other", 1000));
  CHECK(s.query_seen_before("u", "q", 1000) == false);  // clicks are not issuances
  s.add_query_issued("u", "q", 100);
  CHECK(s.query_seen_before("u", "q", 101));
  CHECK_FALSE(s.query_seen_before("u", "q", 100));
}

TEST_CASE("click store TSV round trip") {
  ClickStore s;
  s.add_click("u1", "alpha beta", "d1", 10, true);
  s.add_click("u2", "gamma", "d2", 20, false);
  s.add_query_issued("u1", "alpha beta", 9);
  ClickStore s2 = ClickStore::from_tsv(s.to_tsv());
  CHECK(s2.to_tsv() == s.to_tsv());
  CHECK(s2.clicks_under_query("u1", "alpha beta", "d1", 100) == 1);
  CHECK(s2.query_seen_before("u1", "alpha beta", 10));
}

TEST_CASE("borda fusion") {
  std::vector<std::string> orig{"d1", "d2"};
  // identical rankings are a fixed point
  CHECK(borda_fuse(orig, orig, orig) == orig);
  // symmetric disagreement falls back to original order
  std::vector<std::string> rev{"d2", "d1"};
  CHECK(borda_fuse(orig, rev, orig) == orig);
  // mismatched documents are rejected
  CHECK_THROWS(borda_fuse(orig, {"d1", "d9"}, orig));
}

TEST_CASE("borda fusion matches brute-force point tally on random lists") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    int k = 5;
    std::vector<std::string> docs;
    for (int i = 0; i < k; ++i) docs.push_back("d" + std::to_string(i));
    std::vector<std::string> a = docs, b = docs, orig = docs;
    rng.shuffle(a);
    rng.shuffle(b);

    auto fused = borda_fuse(a, b, orig);

    std::map<std::string, int> points;
    for (int i = 0; i < k; ++i) {
      points[a[i]] += k - (i + 1);
      points[b[i]] += k - (i + 1);
    }
    std::vector<std::string> expect = docs;
    std::stable_sort(expect.begin(), expect.end(),
                     [&](const std::string& x, const std::string& y) {
                       if (points[x] != points[y]) return points[x] > points[y];
                       return std::find(orig.begin(), orig.end(), x) <
                              std::find(orig.begin(), orig.end(), y);
                     });
    CHECK(fused == expect);

    // permutation property
    auto sorted = fused;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == docs);
  }
}

namespace {

Vocabulary two_group_vocab(int words_per_group,
                           std::vector<TopicModel::ClickedDoc>& corpus, Rng& rng,
                           int docs_per_group, int doc_len) {
  std::vector<DocRecord> vocab_docs;
  auto word = [&](int g, int i) { return "g" + std::to_string(g) + "w" + std::to_string(i); };
  DocRecord all;
  all.doc_id = "vocab";
  for (int g = 0; g < 2; ++g)
    for (int i = 0; i < words_per_group; ++i) all.tokens.push_back(word(g, i));
  vocab_docs.push_back(all);

  corpus.clear();
  for (int g = 0; g < 2; ++g) {
    for (int d = 0; d < docs_per_group; ++d) {
      TopicModel::ClickedDoc cd;
      cd.doc_id = "doc" + std::to_string(g) + "_" + std::to_string(d);
      for (int t = 0; t < doc_len; ++t)
        cd.tokens.push_back(word(g, rng.uniform_int(0, words_per_group - 1)));
      cd.sat_users = {g == 0 ? "alice" : "bob"};
      corpus.push_back(cd);
    }
  }
  return Vocabulary::build(vocab_docs, 1);
}

}  // namespace

TEST_CASE("single-topic model degenerates as expected") {
  Rng rng(2);
  std::vector<TopicModel::ClickedDoc> corpus;
  Vocabulary vocab = two_group_vocab(5, corpus, rng, 4, 12);
  TopicModelConfig cfg;
  cfg.n_topics = 1;
  cfg.iterations = 10;
  TopicModel tm = TopicModel::fit(corpus, vocab, cfg);
  for (const auto& cd : corpus) {
    auto theta = tm.p_topic_given_doc(cd.doc_id);
    REQUIRE(theta.size() == 1);
    CHECK(theta[0] == doctest::Approx(1.0));
  }
  double phi_sum = 0;
  for (int w = 0; w < vocab.size(); ++w) phi_sum += tm.p_word_given_topic(w, 0);
  CHECK(phi_sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gibbs sampling recovers a planted two-topic partition") {
  // Two disjoint vocabularies; topic purity must reach 0.9 on >= 8/10 seeds.
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 77);
    std::vector<TopicModel::ClickedDoc> corpus;
    Vocabulary vocab = two_group_vocab(12, corpus, rng, 10, 25);
    TopicModelConfig cfg;
    cfg.n_topics = 2;
    cfg.iterations = 200;
    cfg.seed = seed;
    TopicModel tm = TopicModel::fit(corpus, vocab, cfg);

    // Majority topic per planted group must cover >= 90% of the group's docs.
    std::map<int, std::map<int, int>> counts;  // group -> topic -> docs
    for (const auto& cd : corpus) {
      auto theta = tm.p_topic_given_doc(cd.doc_id);
      int dominant = theta[0] > theta[1] ? 0 : 1;
      int group = cd.doc_id.find("doc0") == 0 ? 0 : 1;
      counts[group][dominant]++;
    }
    int total = 0, agree = 0;
    for (int g = 0; g < 2; ++g) {
      int best = 0;
      for (auto& [t, c] : counts[g]) best = std::max(best, c);
      int sz = 0;
      for (auto& [t, c] : counts[g]) sz += c;
      total += sz;
      agree += best;
    }
    double purity = static_cast<double>(agree) / total;
    if (purity >= 0.9) ++good;
  }
  CHECK(good >= 8);
}

TEST_CASE("gibbs sampling is deterministic for a fixed seed") {
  Rng rng(4);
  std::vector<TopicModel::ClickedDoc> corpus;
  Vocabulary vocab = two_group_vocab(8, corpus, rng, 6, 15);
  TopicModelConfig cfg;
  cfg.n_topics = 3;
  cfg.iterations = 50;
  cfg.seed = 123;
  TopicModel a = TopicModel::fit(corpus, vocab, cfg);
  TopicModel b = TopicModel::fit(corpus, vocab, cfg);
  for (const auto& cd : corpus) CHECK(a.assignments(cd.doc_id) == b.assignments(cd.doc_id));
  CHECK(a.to_json() == b.to_json());
  CHECK_THROWS(TopicModel::fit(corpus, vocab, {vocab.size() + 1, 10}));
}

TEST_CASE("topic model distributions are normalized and serialize") {
  Rng rng(6);
  std::vector<TopicModel::ClickedDoc> corpus;
  Vocabulary vocab = two_group_vocab(10, corpus, rng, 8, 20);
  TopicModelConfig cfg;
  cfg.n_topics = 4;
  cfg.iterations = 60;
  TopicModel tm = TopicModel::fit(corpus, vocab, cfg);

  for (int z = 0; z < tm.n_topics(); ++z) {
    double sum = 0;
    for (int w = 0; w < vocab.size(); ++w) sum += tm.p_word_given_topic(w, z);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (const auto& cd : corpus) {
    auto theta = tm.p_topic_given_doc(cd.doc_id);
    double sum = 0;
    for (double x : theta) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  // P(u|z) normalizes over users per topic.
  for (int z = 0; z < tm.n_topics(); ++z) {
    double sum = tm.p_user_given_topic("alice", z) + tm.p_user_given_topic("bob", z);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }

  TopicModel rt = TopicModel::from_json(tm.to_json());
  CHECK(rt.n_topics() == tm.n_topics());
  CHECK(rt.p_word_given_topic(0, 0) == doctest::Approx(tm.p_word_given_topic(0, 0)));
}

TEST_CASE("ptm score matches a hand-built two-topic evaluation") {
  // Hand-built model via JSON: 2 topics, 3 words, 1 doc with known theta.
  Vocabulary vocab = Vocabulary::build({{"v", {"w0", "w1", "w2"}}}, 1);
  TopicModel tm = TopicModel::from_json(R"({
    "n_topics": 2, "vocab_size": 3, "user_floor": 0.001,
    "phi": [0.7, 0.2, 0.1,   0.1, 0.3, 0.6],
    "theta": {"docA": [0.8, 0.2], "docB": [0.3, 0.7]},
    "user": {"u": [0.9, 0.4]}
  })");

  // No clicks anywhere: P(d) = 1/|D| for every doc.
  DocPrior prior = DocPrior::build({}, {}, 4, 1.0);
  CHECK(prior.log_p("docA") == doctest::Approx(std::log(0.25)));
  CHECK(prior.log_p("docB") == doctest::Approx(prior.log_p("docA")));

  PtmConfig cfg;
  cfg.lambda = 1.0;
  double got = ptm_score(tm, prior, "u", {"w0", "w2"}, "docA", vocab, cfg);
  // Straight evaluation of log P(d) + sum_w log sum_z phi * P(u|z)^l * theta.
  double w0 = 0.7 * 0.9 * 0.8 + 0.1 * 0.4 * 0.2;
  double w2 = 0.1 * 0.9 * 0.8 + 0.6 * 0.4 * 0.2;
  double expect = std::log(0.25) + std::log(w0) + std::log(w2);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));

  // K=1 degeneracy: the user term is constant, ranking reduces to P(d)*prod P(w|z).
  TopicModel k1 = TopicModel::from_json(R"({
    "n_topics": 1, "vocab_size": 3, "user_floor": 0.5,
    "phi": [0.5, 0.3, 0.2],
    "theta": {"docA": [1.0], "docB": [1.0]},
    "user": {"u": [1.0]}
  })");
  double a = ptm_score(k1, prior, "u", {"w0"}, "docA", vocab, cfg);
  double b = ptm_score(k1, prior, "stranger", {"w0"}, "docA", vocab, cfg);
  CHECK(a - b == doctest::Approx(std::log(1.0) - std::log(0.5)).epsilon(1e-9));

  // Unclicked doc gets the uniform topic distribution.
  auto theta = tm.p_topic_given_doc("unknown-doc");
  CHECK(theta[0] == doctest::Approx(0.5));
}

TEST_CASE("click entropy table from sat clicks") {
  // Two users, one query text, clicks split between two docs -> 1 bit.
  UserLog u1, u2;
  u1.user_id = "u1";
  u2.user_id = "u2";
  auto mk_session = [](const std::string& doc) {
    Session s;
    s.session_id = "s";
    QueryEvent ev;
    ev.query_id = "q";
    ev.timestamp = 100;
    ev.terms = {"news"};
    Impression im;
    im.doc_id = doc;
    im.position = 1;
    im.clicked = true;
    im.sat = true;
    ev.impressions.push_back(im);
    s.events.push_back(ev);
    return s;
  };
  u1.sessions.push_back(mk_session("d1"));
  u2.sessions.push_back(mk_session("d2"));

  std::unordered_map<std::string, DatasetSplit> splits;  // no test sessions
  auto table = click_entropy_table({u1, u2}, splits);
  CHECK(table.at("news") == doctest::Approx(1.0).epsilon(1e-12));

  // Navigational query: all clicks on one doc -> entropy 0.
  UserLog u3 = u1;
  u3.user_id = "u3";
  auto table2 = click_entropy_table({u1, u3}, splits);
  CHECK(table2.at("news") == doctest::Approx(0.0));
}
