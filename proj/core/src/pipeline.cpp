#include "pserank/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <stdexcept>
#include <thread>

namespace pserank {

Dataset make_dataset(std::vector<UserLog> logs, std::vector<DocRecord> docs,
                     const DatasetOptions& opts) {
  Dataset ds;
  label_sat_clicks(logs);
  ds.logs = filter_users(std::move(logs), opts.min_sessions);
  for (const auto& ul : ds.logs) ds.splits[ul.user_id] = split_sessions(ul, opts.split);
  ds.docs = std::move(docs);
  ds.vocab = Vocabulary::build(ds.docs, opts.vocab_min_count);
  ds.embedding_dim = opts.embedding_dim;
  ds.emb = opts.embeddings_path.empty()
               ? EmbeddingMatrix::fallback(ds.vocab, opts.embedding_dim)
               : EmbeddingMatrix::load(opts.embeddings_path, ds.vocab, opts.embedding_dim);
  ds.doc_vecs = represent_corpus(ds.docs, ds.vocab, ds.emb);
  ds.clicks = ClickStore::build(ds.logs);
  ds.entropy = click_entropy_table(ds.logs, ds.splits);
  return ds;
}

Dataset load_dataset(const std::string& log_path, const std::string& docs_path,
                     const DatasetOptions& opts) {
  return make_dataset(ingest_log(log_path, opts.ingest),
                      ingest_docs(docs_path, opts.ingest.stopwords), opts);
}

std::vector<PreparedUser> prepare_users(const Dataset& ds) {
  std::vector<PreparedUser> out(ds.logs.size());
  for (std::size_t i = 0; i < ds.logs.size(); ++i)
    out[i] = prepare_user(ds.logs[i], ds.vocab, ds.emb, ds.doc_vecs);
  return out;
}

TrainData build_train_data(const Dataset& ds, const std::vector<PreparedUser>& prepared) {
  TrainData td;
  td.doc_vecs = &ds.doc_vecs;
  td.features = ds.feature_context();
  for (std::size_t i = 0; i < ds.logs.size(); ++i) {
    TrainUser u;
    u.log = &ds.logs[i];
    u.prepared = &prepared[i];
    u.split = ds.splits.at(ds.logs[i].user_id);
    if (u.split.train_sessions.empty() && u.split.validation_sessions.empty()) continue;
    td.users.push_back(std::move(u));
  }
  return td;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
void parallel_over_users(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  int n_threads = std::min<std::size_t>(threads, n);
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&]() {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

ModelEvaluation evaluate_ranker(const std::string& name, const Dataset& ds,
                                const RankFn& rank, const EvalOptions& opts) {
  ModelEvaluation ev;
  ev.model = name;

  std::vector<std::vector<PerQueryResult>> per_user(ds.logs.size());
  parallel_over_users(ds.logs.size(), opts.threads, [&](std::size_t ui) {
    const UserLog& ul = ds.logs[ui];
    const DatasetSplit& split = ds.splits.at(ul.user_id);
    for (int si : split.test_sessions) {
      const Session& session = ul.sessions[si];
      for (std::size_t ei = 0; ei < session.events.size(); ++ei) {
        const QueryEvent& event = session.events[ei];
        std::set<std::string> relevant = event.sat_docs();
        if (relevant.empty()) continue;  // metrics undefined without a SAT click

        std::vector<std::string> ranking = rank(ul, split, si, static_cast<int>(ei));

        PerQueryResult r;
        r.user = ul.user_id;
        r.session_id = session.session_id;
        r.qid = event.query_id;
        r.session_position = static_cast<int>(ei) + 1;
        std::string qkey = join_terms(event.terms);
        r.repeated = ds.clicks.query_seen_before(ul.user_id, qkey, event.timestamp);
        auto eit = ds.entropy.find(qkey);
        r.click_entropy = eit == ds.entropy.end() ? 0.0 : eit->second;

        r.ap = average_precision(ranking, relevant);
        r.rr = reciprocal_rank(ranking, relevant);
        r.p1 = precision_at_1(ranking, relevant);
        r.avg_click = avg_click_position(ranking, relevant);

        std::vector<std::string> original;
        for (const auto& im : event.impressions) original.push_back(im.doc_id);
        r.ap_original = average_precision(original, relevant);

        auto pairs = inverse_pairs(event);
        auto [better, total] = count_improved(pairs, ranking);
        r.n_better = better;
        r.n_pairs = total;

        per_user[ui].push_back(std::move(r));
      }
    }
  });

  for (auto& rows : per_user)
    for (auto& r : rows) ev.queries.push_back(std::move(r));
  ev.finalize();
  return ev;
}

ModelEvaluation evaluate_original(const Dataset& ds, const EvalOptions& opts) {
  return evaluate_ranker(
      "original", ds,
      [](const UserLog& ul, const DatasetSplit&, int si, int ei) {
        std::vector<std::string> docs;
        for (const auto& im : ul.sessions[si].events[ei].impressions)
          docs.push_back(im.doc_id);
        return docs;
      },
      opts);
}

ModelEvaluation evaluate_pclick(const Dataset& ds, const ClickStore& store, double beta,
                                const EvalOptions& opts) {
  return evaluate_ranker(
      "pclick", ds,
      [&](const UserLog& ul, const DatasetSplit&, int si, int ei) {
        const QueryEvent& event = ul.sessions[si].events[ei];
        std::string qkey = join_terms(event.terms);
        std::vector<std::string> original;
        std::vector<double> scores;
        std::vector<int> positions;
        for (const auto& im : event.impressions) {
          original.push_back(im.doc_id);
          scores.push_back(pclick_score(store, ul.user_id, qkey, im.doc_id,
                                        event.timestamp, beta));
          positions.push_back(im.position);
        }
        std::vector<int> order = rerank_order(scores, positions);
        std::vector<std::string> by_click;
        for (int idx : order) by_click.push_back(original[idx]);
        return borda_fuse(by_click, original, original);
      },
      opts);
}

ModelEvaluation evaluate_ptm(const Dataset& ds, const TopicModel& tm, const DocPrior& prior,
                             const PtmConfig& cfg, const EvalOptions& opts) {
  return evaluate_ranker(
      "ptm", ds,
      [&](const UserLog& ul, const DatasetSplit&, int si, int ei) {
        const QueryEvent& event = ul.sessions[si].events[ei];
        std::vector<std::string> original;
        std::vector<double> scores;
        std::vector<int> positions;
        for (const auto& im : event.impressions) {
          original.push_back(im.doc_id);
          scores.push_back(ptm_score(tm, prior, ul.user_id, event.terms, im.doc_id,
                                     ds.vocab, cfg));
          positions.push_back(im.position);
        }
        std::vector<int> order = rerank_order(scores, positions);
        std::vector<std::string> out;
        for (int idx : order) out.push_back(original[idx]);
        return out;
      },
      opts);
}

ModelEvaluation evaluate_model(const Dataset& ds, const std::vector<PreparedUser>& prepared,
                               ModelParams& params, const EvalOptions& opts) {
  // Frozen parameters: session/user states are computed once per user and
  // shared across that user's test queries.
  std::vector<std::unique_ptr<UserStateCache>> caches(ds.logs.size());
  std::unordered_map<std::string, std::size_t> user_index;
  for (std::size_t i = 0; i < ds.logs.size(); ++i) user_index[ds.logs[i].user_id] = i;

  parallel_over_users(ds.logs.size(), opts.threads, [&](std::size_t ui) {
    if (!ds.splits.at(ds.logs[ui].user_id).test_sessions.empty())
      caches[ui] = std::make_unique<UserStateCache>(build_user_cache(params, prepared[ui]));
  });

  return evaluate_ranker(
      to_string(params.config.variant), ds,
      [&](const UserLog& ul, const DatasetSplit&, int si, int ei) {
        std::size_t ui = user_index.at(ul.user_id);
        const UserStateCache& cache = *caches[ui];
        const QueryEvent& event = ul.sessions[si].events[ei];
        const SessionRepr& srepr = prepared[ui].sessions[si];

        std::vector<Mat> h2_prefix(cache.h2_after.begin(),
                                   cache.h2_after.begin() +
                                       (params.config.uses_long_term() ? si : 0));
        // Running state after the session's earlier events.
        Mat h1_prev = ei > 0 ? cache.h1_after_event[si][ei - 1]
                             : Mat::vec(params.config.dims.d_s1);

        std::string qkey = join_terms(event.terms);
        std::vector<CandidateInput> candidates;
        std::vector<int> positions;
        std::vector<std::string> original;
        for (const auto& im : event.impressions) {
          CandidateInput c;
          auto it = ds.doc_vecs.find(im.doc_id);
          c.doc_vec = it == ds.doc_vecs.end() ? Mat::vec(ds.embedding_dim) : it->second;
          c.features = make_features(ds.feature_context(), ul.user_id, qkey, im.doc_id,
                                     im.position, event.timestamp);
          candidates.push_back(std::move(c));
          positions.push_back(im.position);
          original.push_back(im.doc_id);
        }
        QueryForward fwd(params, h2_prefix, h1_prev, srepr[ei].query_vec, candidates);
        std::vector<int> order = rerank_order(fwd.scores(), positions);
        std::vector<std::string> out;
        for (int idx : order) out.push_back(original[idx]);
        return out;
      },
      opts);
}

std::vector<TopicModel::ClickedDoc> clicked_corpus(const Dataset& ds) {
  std::map<std::string, std::set<std::string>> sat_users;  // doc -> users
  std::set<std::string> clicked;
  for (const auto& ul : ds.logs) {
    const DatasetSplit& split = ds.splits.at(ul.user_id);
    std::set<int> test_idx(split.test_sessions.begin(), split.test_sessions.end());
    for (std::size_t si = 0; si < ul.sessions.size(); ++si) {
      if (test_idx.count(static_cast<int>(si))) continue;
      for (const auto& ev : ul.sessions[si].events) {
        for (const auto& im : ev.impressions) {
          if (im.clicked) clicked.insert(im.doc_id);
          if (im.sat) sat_users[im.doc_id].insert(ul.user_id);
        }
      }
    }
  }
  std::unordered_map<std::string, const DocRecord*> by_id;
  for (const auto& d : ds.docs) by_id[d.doc_id] = &d;
  std::vector<TopicModel::ClickedDoc> corpus;
  for (const auto& doc_id : clicked) {
    auto it = by_id.find(doc_id);
    if (it == by_id.end()) continue;
    TopicModel::ClickedDoc cd;
    cd.doc_id = doc_id;
    cd.tokens = it->second->tokens;
    auto su = sat_users.find(doc_id);
    if (su != sat_users.end()) cd.sat_users.assign(su->second.begin(), su->second.end());
    corpus.push_back(std::move(cd));
  }
  return corpus;
}

std::vector<AttentionRow> attention_dump(const Dataset& ds, ModelParams& params,
                                         const std::string& user_id,
                                         const std::string& query_text,
                                         int history_limit) {
  auto it = std::find_if(ds.logs.begin(), ds.logs.end(),
                         [&](const UserLog& l) { return l.user_id == user_id; });
  if (it == ds.logs.end()) throw std::runtime_error("unknown user: " + user_id);
  if (!params.config.uses_attention())
    throw std::runtime_error("attention dump needs an attention-enabled model");

  PreparedUser prepared = prepare_user(*it, ds.vocab, ds.emb, ds.doc_vecs);
  UserStateCache cache = build_user_cache(params, prepared);
  int n_hist = static_cast<int>(cache.h2_after.size());
  if (history_limit >= 0) n_hist = std::min(n_hist, history_limit);

  std::vector<AttentionRow> rows;
  if (n_hist == 0) return rows;

  Mat qvec = represent(tokenize(query_text, default_stopwords()), ds.vocab, ds.emb);
  ad::Tape tape;
  ad::MlpNodes mlp = ad::place(tape, params.attn_mlp);
  std::vector<int> states;
  for (int m = 0; m < n_hist; ++m) states.push_back(tape.constant(cache.h2_after[m]));
  auto [attended, weights] = attend(tape, mlp, params.config.dims.d_s2, qvec, states);
  (void)attended;
  const Mat& w = tape.value(weights);

  for (int m = 0; m < n_hist; ++m) {
    AttentionRow row;
    row.session_index = m + 1;
    row.weight = static_cast<double>(w.v[m]);
    row.below_display_threshold = row.weight < 0.01;
    // Most frequent normalized query of the session, earliest on ties.
    std::map<std::string, int> freq;
    std::vector<std::string> order;
    for (const auto& ev : it->sessions[m].events) {
      std::string key = join_terms(ev.terms);
      if (freq.emplace(key, 0).second) order.push_back(key);
      ++freq[key];
    }
    int best = -1;
    for (const auto& key : order) {
      if (freq[key] > best) {
        best = freq[key];
        row.representative_query = key;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace pserank
