#ifndef PSERANK_TEXT_REPR_HPP_
#define PSERANK_TEXT_REPR_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pserank/linalg.hpp"
#include "pserank/query_log.hpp"

namespace pserank {

class Vocabulary {
 public:
  // Words with corpus frequency >= min_count, indexed densely in first-seen
  // order; document frequency counted per document.
  static Vocabulary build(const std::vector<DocRecord>& docs, int min_count = 1);

  int index_of(const std::string& word) const;  // -1 when out of vocabulary
  int size() const { return static_cast<int>(words_.size()); }
  int doc_count() const { return n_docs_; }
  int df(const std::string& word) const;
  const std::string& word(int idx) const { return words_[idx]; }

  // idf(w) = ln((N_docs + 1) / (df(w) + 1)) + 1
  double idf(const std::string& word) const;

  // TSV dump: word \t index \t df, one row per word in index order.
  std::string to_tsv() const;
  static Vocabulary from_tsv(const std::string& tsv, int n_docs);

  // FNV-1a over the TSV dump plus the document count; pins checkpoints to the
  // vocabulary they were trained with.
  std::uint64_t content_hash() const;

 private:
  std::vector<std::string> words_;
  std::vector<int> df_;
  std::unordered_map<std::string, int> index_;
  int n_docs_ = 0;
};

class EmbeddingMatrix {
 public:
  // word2vec text format: header "count dim", then "word v1 ... vd" lines.
  // Vocabulary words absent from the file get the deterministic fallback.
  static EmbeddingMatrix load(const std::string& path, const Vocabulary& vocab, int dim);
  // All-fallback matrix for runs without a pretrained file.
  static EmbeddingMatrix fallback(const Vocabulary& vocab, int dim);
  static EmbeddingMatrix from_rows(std::vector<Mat> rows);

  int dim() const { return dim_; }
  int rows() const { return static_cast<int>(data_.size()) / std::max(1, dim_); }
  // Row view as a vector copy.
  Mat row(int idx) const;

 private:
  std::vector<Real> data_;
  int dim_ = 0;
};

// Unit-variance pseudo-normal vector seeded by a stable 64-bit hash of the
// word, scaled by 0.1. Identical across processes.
Mat fallback_embedding(const std::string& word, int dim);

// TF-IDF weighted mean of in-vocabulary token embeddings:
//   v = sum_w tfidf(w) e(w) / sum_w tfidf(w), tf = raw count in the text.
// Empty or all-OOV text gives the zero vector.
Mat represent(const std::vector<std::string>& tokens, const Vocabulary& vocab,
              const EmbeddingMatrix& emb);

// Element-wise mean of the given vectors; empty input gives the zero vector.
Mat sat_doc_average(const std::vector<Mat>& docs, int dim);

// Precomputed doc-id -> vector map for a corpus.
std::unordered_map<std::string, Mat> represent_corpus(const std::vector<DocRecord>& docs,
                                                      const Vocabulary& vocab,
                                                      const EmbeddingMatrix& emb);

}  // namespace pserank

#endif  // PSERANK_TEXT_REPR_HPP_
