#include "pserank/text_repr.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "pserank/rng.hpp"

namespace pserank {

Vocabulary Vocabulary::build(const std::vector<DocRecord>& docs, int min_count) {
  if (docs.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  Vocabulary v;
  v.n_docs_ = static_cast<int>(docs.size());

  std::unordered_map<std::string, int> count;
  std::unordered_map<std::string, int> df;
  std::vector<std::string> order;  // first-seen order for stable indices
  for (const auto& d : docs) {
    std::unordered_set<std::string> uniq;
    for (const auto& t : d.tokens) {
      auto [it, inserted] = count.emplace(t, 0);
      if (inserted) order.push_back(t);
      ++it->second;
      uniq.insert(t);
    }
    for (const auto& t : uniq) ++df[t];
  }
  for (const auto& w : order) {
    if (count[w] < min_count) continue;
    v.index_.emplace(w, static_cast<int>(v.words_.size()));
    v.words_.push_back(w);
    v.df_.push_back(df[w]);
  }
  return v;
}

int Vocabulary::index_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? -1 : it->second;
}

int Vocabulary::df(const std::string& word) const {
  int idx = index_of(word);
  return idx < 0 ? 0 : df_[idx];
}

double Vocabulary::idf(const std::string& word) const {
  return std::log(static_cast<double>(n_docs_ + 1) / (df(word) + 1)) + 1.0;
}

std::string Vocabulary::to_tsv() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < words_.size(); ++i)
    out << words_[i] << '\t' << i << '\t' << df_[i] << '\n';
  return out.str();
}

Vocabulary Vocabulary::from_tsv(const std::string& tsv, int n_docs) {
  Vocabulary v;
  v.n_docs_ = n_docs;
  std::istringstream in(tsv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    int idx, df;
    if (!(ls >> word >> idx >> df)) throw std::runtime_error("bad vocabulary TSV row: " + line);
    if (idx != static_cast<int>(v.words_.size()))
      throw std::runtime_error("vocabulary TSV indices must be dense");
    v.index_.emplace(word, idx);
    v.words_.push_back(word);
    v.df_.push_back(df);
  }
  return v;
}

std::uint64_t Vocabulary::content_hash() const {
  return fnv1a64(to_tsv() + "#docs=" + std::to_string(n_docs_));
}

Mat fallback_embedding(const std::string& word, int dim) {
  Rng rng(fnv1a64(word));
  Mat v = Mat::vec(dim);
  for (int i = 0; i < dim; ++i) v.v[i] = static_cast<Real>(0.1 * rng.normal());
  return v;
}

EmbeddingMatrix EmbeddingMatrix::fallback(const Vocabulary& vocab, int dim) {
  EmbeddingMatrix m;
  m.dim_ = dim;
  m.data_.resize(static_cast<std::size_t>(vocab.size()) * dim);
  for (int i = 0; i < vocab.size(); ++i) {
    Mat row = fallback_embedding(vocab.word(i), dim);
    std::copy(row.v.begin(), row.v.end(), m.data_.begin() + static_cast<std::size_t>(i) * dim);
  }
  return m;
}

EmbeddingMatrix EmbeddingMatrix::from_rows(std::vector<Mat> rows) {
  EmbeddingMatrix m;
  if (rows.empty()) return m;
  m.dim_ = rows[0].rows;
  m.data_.resize(rows.size() * static_cast<std::size_t>(m.dim_));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].rows != m.dim_ || rows[i].cols != 1)
      throw std::invalid_argument("from_rows: inconsistent row shapes");
    std::copy(rows[i].v.begin(), rows[i].v.end(), m.data_.begin() + i * m.dim_);
  }
  return m;
}

EmbeddingMatrix EmbeddingMatrix::load(const std::string& path, const Vocabulary& vocab,
                                      int dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path);
  std::size_t count = 0;
  int file_dim = 0;
  if (!(in >> count >> file_dim))
    throw std::runtime_error("embedding file: bad header (expect 'count dim')");
  if (file_dim != dim)
    throw std::runtime_error("embedding dimension mismatch: file has " +
                             std::to_string(file_dim) + ", configured " +
                             std::to_string(dim));

  EmbeddingMatrix m = fallback(vocab, dim);
  std::string word;
  for (std::size_t r = 0; r < count; ++r) {
    if (!(in >> word)) throw std::runtime_error("embedding file: truncated at row " +
                                                std::to_string(r));
    int idx = vocab.index_of(word);
    for (int c = 0; c < dim; ++c) {
      double x;
      if (!(in >> x))
        throw std::runtime_error("embedding file: truncated vector for '" + word + "'");
      if (idx >= 0) m.data_[static_cast<std::size_t>(idx) * dim + c] = static_cast<Real>(x);
    }
  }
  return m;
}

Mat EmbeddingMatrix::row(int idx) const {
  Mat out = Mat::vec(dim_);
  std::copy(data_.begin() + static_cast<std::size_t>(idx) * dim_,
            data_.begin() + static_cast<std::size_t>(idx + 1) * dim_, out.v.begin());
  return out;
}

Mat represent(const std::vector<std::string>& tokens, const Vocabulary& vocab,
              const EmbeddingMatrix& emb) {
  Mat out = Mat::vec(emb.dim());
  std::unordered_map<int, int> tf;
  for (const auto& t : tokens) {
    int idx = vocab.index_of(t);
    if (idx >= 0) ++tf[idx];
  }
  double weight_sum = 0;
  for (const auto& [idx, count] : tf) {
    double w = count * vocab.idf(vocab.word(idx));
    weight_sum += w;
    Mat row = emb.row(idx);
    for (int i = 0; i < out.rows; ++i) out.v[i] += static_cast<Real>(w) * row.v[i];
  }
  if (weight_sum <= 0) return Mat::vec(emb.dim());
  for (auto& x : out.v) x /= static_cast<Real>(weight_sum);
  return out;
}

Mat sat_doc_average(const std::vector<Mat>& docs, int dim) {
  Mat out = Mat::vec(dim);
  if (docs.empty()) return out;
  for (const auto& d : docs)
    for (int i = 0; i < dim; ++i) out.v[i] += d.v[i];
  for (auto& x : out.v) x /= static_cast<Real>(docs.size());
  return out;
}

std::unordered_map<std::string, Mat> represent_corpus(const std::vector<DocRecord>& docs,
                                                      const Vocabulary& vocab,
                                                      const EmbeddingMatrix& emb) {
  std::unordered_map<std::string, Mat> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.emplace(d.doc_id, represent(d.tokens, vocab, emb));
  return out;
}

}  // namespace pserank
