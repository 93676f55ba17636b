#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "pserank/rng.hpp"
#include "pserank/text_repr.hpp"

using namespace pserank;

TEST_CASE("build_vocab counts and thresholds") {
  std::vector<DocRecord> docs{{"d1", {"a", "b"}}, {"d2", {"b"}}};
  Vocabulary v = Vocabulary::build(docs, 1);
  CHECK(v.size() == 2);
  CHECK(v.df("a") == 1);
  CHECK(v.df("b") == 2);
  CHECK(v.doc_count() == 2);

  Vocabulary v2 = Vocabulary::build(docs, 2);
  CHECK(v2.size() == 1);
  CHECK(v2.index_of("b") >= 0);
  CHECK(v2.index_of("a") == -1);

  CHECK_THROWS(Vocabulary::build({}, 1));
}

TEST_CASE("build_vocab df matches brute-force recount on synthetic corpus") {
  Rng rng(5);
  std::vector<DocRecord> docs;
  char word[8];
  for (int d = 0; d < 100; ++d) {
    DocRecord rec;
    rec.doc_id = "doc" + std::to_string(d);
    int len = rng.uniform_int(3, 15);
    for (int i = 0; i < len; ++i) {
      std::snprintf(word, sizeof(word), "w%02d", rng.uniform_int(0, 30));
      rec.tokens.push_back(word);
    }
    docs.push_back(rec);
  }
  Vocabulary v = Vocabulary::build(docs, 1);

  // Independent recount.
  std::map<std::string, int> df;
  for (const auto& d : docs) {
    std::set<std::string> uniq(d.tokens.begin(), d.tokens.end());
    for (const auto& w : uniq) ++df[w];
  }
  CHECK(v.size() == static_cast<int>(df.size()));
  for (const auto& [w, n] : df) CHECK(v.df(w) == n);
}

TEST_CASE("vocabulary tsv round-trip and hash stability") {
  std::vector<DocRecord> docs{{"d1", {"alpha", "beta"}}, {"d2", {"beta", "gamma"}}};
  Vocabulary v = Vocabulary::build(docs, 1);
  Vocabulary v2 = Vocabulary::from_tsv(v.to_tsv(), v.doc_count());
  CHECK(v2.size() == v.size());
  CHECK(v2.content_hash() == v.content_hash());
  CHECK(v2.df("beta") == 2);
}

TEST_CASE("fallback embeddings are reproducible and scaled") {
  Mat a = fallback_embedding("keyboard", 50);
  Mat b = fallback_embedding("keyboard", 50);
  Mat c = fallback_embedding("keyboards", 50);
  CHECK(a.v == b.v);
  CHECK(a.v != c.v);
  // 0.1-scaled unit-variance entries: sample variance should sit near 0.01.
  double var = 0;
  for (auto x : a.v) var += x * x;
  var /= a.size();
  CHECK(var > 0.002);
  CHECK(var < 0.05);
}

TEST_CASE("load_embeddings reads word2vec text format") {
  std::vector<DocRecord> docs{{"d1", {"apple", "banana"}}};
  Vocabulary v = Vocabulary::build(docs, 1);

  std::string path = "emb_test.txt";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("2 3\napple 1.0 2.0 3.0\ncherry 9.0 9.0 9.0\n", f);
    std::fclose(f);
  }
  EmbeddingMatrix m = EmbeddingMatrix::load(path, v, 3);
  Mat apple = m.row(v.index_of("apple"));
  CHECK(apple.v[0] == doctest::Approx(1.0));
  CHECK(apple.v[1] == doctest::Approx(2.0));
  CHECK(apple.v[2] == doctest::Approx(3.0));
  // banana is not in the file: deterministic fallback row.
  Mat banana = m.row(v.index_of("banana"));
  CHECK(banana.v == fallback_embedding("banana", 3).v);

  CHECK_THROWS(EmbeddingMatrix::load(path, v, 300));  // header says 3
  std::remove(path.c_str());
}

TEST_CASE("represent: single word, OOV, and hand-computed weighted mean") {
  // Corpus: d1=[apple banana], d2=[banana cherry], d3=[banana]
  std::vector<DocRecord> docs{
      {"d1", {"apple", "banana"}}, {"d2", {"banana", "cherry"}}, {"d3", {"banana"}}};
  Vocabulary v = Vocabulary::build(docs, 1);

  // Hand-set embeddings: apple=(1,0), banana=(0,1), cherry=(1,1).
  std::vector<Mat> rows(v.size());
  Mat ea = Mat::vec(2), eb = Mat::vec(2), ec = Mat::vec(2);
  ea.v = {1.0, 0.0};
  eb.v = {0.0, 1.0};
  ec.v = {1.0, 1.0};
  rows[v.index_of("apple")] = ea;
  rows[v.index_of("banana")] = eb;
  rows[v.index_of("cherry")] = ec;
  EmbeddingMatrix emb = EmbeddingMatrix::from_rows(rows);

  // Single in-vocab word: weights cancel, exact row.
  Mat single = represent({"apple"}, v, emb);
  CHECK(single.v[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(single.v[1] == doctest::Approx(0.0).epsilon(1e-14));

  // All tokens OOV: zero vector.
  Mat oov = represent({"zzz", "qqq"}, v, emb);
  CHECK(oov.v[0] == 0.0);
  CHECK(oov.v[1] == 0.0);

  // Hand evaluation for ["apple", "banana", "banana"]:
  // idf(w) = ln((N+1)/(df+1)) + 1 with N=3; df(apple)=1, df(banana)=3.
  double idf_apple = std::log(4.0 / 2.0) + 1.0;
  double idf_banana = std::log(4.0 / 4.0) + 1.0;
  double w_apple = 1.0 * idf_apple;
  double w_banana = 2.0 * idf_banana;
  double denom = w_apple + w_banana;
  Mat got = represent({"apple", "banana", "banana"}, v, emb);
  CHECK(got.v[0] == doctest::Approx(w_apple / denom).epsilon(1e-12));
  CHECK(got.v[1] == doctest::Approx(w_banana / denom).epsilon(1e-12));
}

TEST_CASE("represent is invariant to duplicating the token sequence") {
  std::vector<DocRecord> docs{{"d1", {"red", "green", "blue"}},
                              {"d2", {"green", "blue"}},
                              {"d3", {"blue", "yellow"}}};
  Vocabulary v = Vocabulary::build(docs, 1);
  EmbeddingMatrix emb = EmbeddingMatrix::fallback(v, 8);

  Rng rng(17);
  std::vector<std::string> pool{"red", "green", "blue", "yellow", "oov1"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> text;
    int len = rng.uniform_int(1, 6);
    for (int i = 0; i < len; ++i) text.push_back(pool[rng.below(pool.size())]);
    std::vector<std::string> doubled = text;
    doubled.insert(doubled.end(), text.begin(), text.end());
    Mat a = represent(text, v, emb);
    Mat b = represent(doubled, v, emb);
    for (int i = 0; i < a.size(); ++i)
      CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("represent output stays in the convex hull coordinate bounds") {
  std::vector<DocRecord> docs{{"d1", {"aa", "bb"}}, {"d2", {"bb", "cc"}}};
  Vocabulary v = Vocabulary::build(docs, 1);
  EmbeddingMatrix emb = EmbeddingMatrix::fallback(v, 6);
  Mat got = represent({"aa", "bb", "cc", "bb"}, v, emb);
  for (int i = 0; i < got.size(); ++i) {
    double lo = 1e9, hi = -1e9;
    for (const char* w : {"aa", "bb", "cc"}) {
      double x = emb.row(v.index_of(w)).v[i];
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    CHECK(got.v[i] >= lo - 1e-12);
    CHECK(got.v[i] <= hi + 1e-12);
  }
}

TEST_CASE("sat_doc_average") {
  CHECK(sat_doc_average({}, 3).v == std::vector<Real>{0, 0, 0});

  Mat a = Mat::vec(2), b = Mat::vec(2);
  a.v = {1.0, 0.0};
  b.v = {0.0, 1.0};
  Mat one = sat_doc_average({a}, 2);
  CHECK(one.v[0] == 1.0);
  CHECK(one.v[1] == 0.0);
  Mat mean = sat_doc_average({a, b}, 2);
  CHECK(mean.v[0] == doctest::Approx(0.5));
  CHECK(mean.v[1] == doctest::Approx(0.5));
}
