#include "pserank/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "pserank/evaluation.hpp"

namespace pserank {

using nlohmann::ordered_json;

std::vector<TrainingPair> generate_pairs(const QueryEvent& event, int cap, Rng& rng) {
  std::vector<int> rel, irr;
  for (std::size_t i = 0; i < event.impressions.size(); ++i) {
    if (event.impressions[i].sat)
      rel.push_back(static_cast<int>(i));
    else
      irr.push_back(static_cast<int>(i));
  }
  if (rel.empty() || irr.empty()) return {};

  std::vector<TrainingPair> all;
  all.reserve(rel.size() * irr.size());
  for (int r : rel)
    for (int j : irr) all.push_back({r, j});
  if (static_cast<int>(all.size()) <= cap) return all;

  // Partial Fisher-Yates: the first `cap` draws, in draw order.
  std::vector<TrainingPair> out;
  out.reserve(cap);
  for (int k = 0; k < cap; ++k) {
    std::size_t j = k + static_cast<std::size_t>(rng.below(all.size() - k));
    std::swap(all[k], all[j]);
    out.push_back(all[k]);
  }
  return out;
}

double pairwise_probability(double score_i, double score_j) {
  return 1.0 / (1.0 + std::exp(-(score_i - score_j)));
}

double delta_map(const std::vector<bool>& relevant_at_rank, int i, int j) {
  double before = average_precision_labels(relevant_at_rank);
  std::vector<bool> swapped = relevant_at_rank;
  bool tmp = swapped[i];
  swapped[i] = swapped[j];
  swapped[j] = tmp;
  return std::fabs(average_precision_labels(swapped) - before);
}

double pair_loss(double p_ij, double pbar_ij, double delta) {
  double lo = 1e-12;
  double loss = -pbar_ij * std::log(std::max(p_ij, lo)) -
                (1.0 - pbar_ij) * std::log(std::max(1.0 - p_ij, lo));
  return loss * std::fabs(delta);
}

Optimizer::Optimizer(std::vector<ad::Param*> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.rows, p->value.cols);
    v_.emplace_back(p->value.rows, p->value.cols);
  }
}

void Optimizer::step() {
  ++t_;
  const double lr = cfg_.learning_rate;
  if (!cfg_.use_adam) {
    for (auto* p : params_) {
      for (int i = 0; i < p->value.size(); ++i)
        p->value.v[i] -= static_cast<Real>(lr) * p->grad.v[i];
      p->zero_grad();
    }
    return;
  }
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2, eps = cfg_.adam_eps;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::Param* p = params_[k];
    Mat& m = m_[k];
    Mat& v = v_[k];
    for (int i = 0; i < p->value.size(); ++i) {
      double g = static_cast<double>(p->grad.v[i]);
      double mi = b1 * m.v[i] + (1 - b1) * g;
      double vi = b2 * v.v[i] + (1 - b2) * g * g;
      m.v[i] = static_cast<Real>(mi);
      v.v[i] = static_cast<Real>(vi);
      p->value.v[i] -=
          static_cast<Real>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
    p->zero_grad();
  }
}

void Optimizer::restore(long long t, std::vector<Mat> m, std::vector<Mat> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw std::invalid_argument("optimizer restore: moment count mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

DivergenceError::DivergenceError(int e, const std::string& u, const std::string& q)
    : std::runtime_error("non-finite loss at epoch " + std::to_string(e) + ", user " + u +
                         ", query " + q),
      epoch(e),
      user(u),
      qid(q) {}

std::string TrainReport::to_json() const {
  ordered_json j;
  ordered_json eps = ordered_json::array();
  for (const auto& e : epochs) {
    ordered_json je;
    je["epoch"] = e.epoch;
    je["train_loss"] = e.train_loss;
    je["validation_loss"] = e.validation_loss;
    je["train_queries"] = e.train_queries;
    je["validation_queries"] = e.validation_queries;
    eps.push_back(std::move(je));
  }
  j["epochs"] = std::move(eps);
  j["best_epoch"] = best_epoch;
  j["stopped_epoch"] = stopped_epoch;
  j["best_validation_loss"] = best_validation_loss;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

namespace {

struct QueryLoss {
  double loss = 0;
  int pairs = 0;
  bool trained = false;
};

// Builds the forward pass and the LambdaRank loss for one query; when `opt`
// is non-null, also backpropagates and applies one optimizer step.
QueryLoss process_query(ModelParams& model, const TrainData& data, const TrainUser& user,
                        int session_idx, int event_idx, int pair_cap, Rng pair_rng,
                        Optimizer* opt) {
  QueryLoss out;
  const Session& session = user.log->sessions[session_idx];
  const QueryEvent& event = session.events[event_idx];

  std::vector<TrainingPair> pairs = generate_pairs(event, pair_cap, pair_rng);
  if (pairs.empty()) return out;

  // Full-history forward so gradients reach both recurrent cells.
  std::vector<const SessionRepr*> history;
  history.reserve(session_idx);
  for (int m = 0; m < session_idx; ++m) history.push_back(&user.prepared->sessions[m]);
  SessionRepr prefix(user.prepared->sessions[session_idx].begin(),
                     user.prepared->sessions[session_idx].begin() + event_idx);
  const Mat& query_vec = user.prepared->sessions[session_idx][event_idx].query_vec;

  std::string qkey = join_terms(event.terms);
  std::vector<CandidateInput> candidates;
  std::vector<int> positions;
  candidates.reserve(event.impressions.size());
  for (const auto& im : event.impressions) {
    CandidateInput c;
    auto it = data.doc_vecs->find(im.doc_id);
    c.doc_vec = it == data.doc_vecs->end()
                    ? Mat::vec(model.config.dims.d_e)
                    : it->second;
    c.features = make_features(data.features, user.log->user_id, qkey, im.doc_id,
                               im.position, event.timestamp);
    candidates.push_back(std::move(c));
    positions.push_back(im.position);
  }

  QueryForward fwd(model, history, prefix, query_vec, candidates);

  // Predicted ranking for the metric weight of each pair.
  std::vector<int> order = rerank_order(fwd.scores(), positions);
  std::vector<int> rank_of(order.size());
  std::vector<bool> labels(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    rank_of[order[r]] = static_cast<int>(r);
    labels[r] = event.impressions[order[r]].sat;
  }

  ad::Tape& tape = fwd.tape();
  int loss_node = -1;
  for (const auto& pr : pairs) {
    double delta = delta_map(labels, rank_of[pr.relevant], rank_of[pr.irrelevant]);
    if (delta == 0) continue;
    int diff = tape.sub(fwd.score_node(pr.relevant), fwd.score_node(pr.irrelevant));
    int term = tape.scale(tape.log_clamped(tape.sigmoid(diff)), static_cast<Real>(-delta));
    loss_node = loss_node < 0 ? term : tape.add(loss_node, term);
    ++out.pairs;
  }
  if (loss_node < 0) return out;

  out.loss = static_cast<double>(tape.scalar_value(loss_node));
  out.trained = true;
  if (!std::isfinite(out.loss)) throw std::runtime_error("non-finite");

  if (opt) {
    tape.backward(loss_node);
    opt->step();
  }
  return out;
}

std::vector<Mat> snapshot(ModelParams& model) {
  std::vector<Mat> out;
  for (const ad::Param* p : model.trainable()) out.push_back(p->value);
  return out;
}

void restore(ModelParams& model, const std::vector<Mat>& snap) {
  auto params = model.trainable();
  if (snap.size() != params.size())
    throw std::invalid_argument("parameter snapshot mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

}  // namespace

TrainReport train(ModelParams& model, const TrainData& data, const TrainConfig& cfg,
                  TrainState* state) {
  auto t0 = std::chrono::steady_clock::now();
  TrainReport report;

  Optimizer opt(model.trainable(), cfg);
  double best_val = std::numeric_limits<double>::infinity();
  bool has_best = false;
  int stale = 0;
  int best_epoch = 0;
  std::vector<Mat> best_params;
  int first_epoch = 1;

  if (state && state->next_epoch > 1) {
    restore(model, state->last_params);
    opt.restore(state->opt_t, state->opt_m, state->opt_v);
    best_val = state->best_val;
    has_best = state->has_best;
    if (has_best) best_params = state->best_params;
    stale = state->stale;
    first_epoch = state->next_epoch;
    report.epochs = state->history;
    for (const auto& e : state->history)
      if (has_best && e.validation_loss == best_val) best_epoch = e.epoch;
  }

  std::vector<int> user_order(data.users.size());
  for (std::size_t i = 0; i < user_order.size(); ++i) user_order[i] = static_cast<int>(i);

  Rng base(cfg.seed);

  int epoch = first_epoch;
  for (; epoch <= cfg.max_epochs; ++epoch) {
    // Seeded shuffle of users; sessions and queries stay in time order.
    Rng shuffle_rng = base.fork("user-shuffle").fork(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(user_order);

    EpochStats stats;
    stats.epoch = epoch;
    for (int ui : user_order) {
      const TrainUser& user = data.users[ui];
      for (int si : user.split.train_sessions) {
        const Session& session = user.log->sessions[si];
        for (std::size_t ei = 0; ei < session.events.size(); ++ei) {
          Rng pair_rng = base.fork(fnv1a64(user.log->user_id))
                             .fork(fnv1a64(session.session_id))
                             .fork(fnv1a64(session.events[ei].query_id))
                             .fork(static_cast<std::uint64_t>(epoch));
          QueryLoss ql;
          try {
            ql = process_query(model, data, user, si, static_cast<int>(ei),
                               cfg.pair_cap, pair_rng, &opt);
          } catch (const std::runtime_error&) {
            throw DivergenceError(epoch, user.log->user_id, session.events[ei].query_id);
          }
          if (ql.trained) {
            stats.train_loss += ql.loss;
            ++stats.train_queries;
          }
        }
      }
    }
    if (stats.train_queries > 0) stats.train_loss /= stats.train_queries;

    if (cfg.validation_override) {
      stats.validation_loss = cfg.validation_override(epoch);
    } else {
      // Mean per-pair validation loss: normalizing by pair count keeps the
      // early-stop signal from being dominated by click-heavy queries.
      long long val_pairs = 0;
      for (const TrainUser& user : data.users) {
        for (int si : user.split.validation_sessions) {
          const Session& session = user.log->sessions[si];
          for (std::size_t ei = 0; ei < session.events.size(); ++ei) {
            // Epoch-independent pair seed keeps validation comparable.
            Rng pair_rng = base.fork("validation")
                               .fork(fnv1a64(user.log->user_id))
                               .fork(fnv1a64(session.events[ei].query_id));
            QueryLoss ql;
            try {
              ql = process_query(model, data, user, si, static_cast<int>(ei),
                                 cfg.pair_cap, pair_rng, nullptr);
            } catch (const std::runtime_error&) {
              throw DivergenceError(epoch, user.log->user_id,
                                    session.events[ei].query_id);
            }
            if (ql.trained) {
              stats.validation_loss += ql.loss;
              val_pairs += ql.pairs;
              ++stats.validation_queries;
            }
          }
        }
      }
      if (val_pairs > 0) stats.validation_loss /= static_cast<double>(val_pairs);
    }
    if (!std::isfinite(stats.validation_loss))
      throw DivergenceError(epoch, "(validation)", "(aggregate)");

    report.epochs.push_back(stats);

    if (!has_best || stats.validation_loss < best_val) {
      best_val = stats.validation_loss;
      has_best = true;
      best_epoch = epoch;
      best_params = snapshot(model);
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) break;
  }

  report.stopped_epoch = std::min(epoch, cfg.max_epochs);
  report.best_epoch = best_epoch;
  report.best_validation_loss = best_val;

  if (state) {
    state->opt_t = opt.t();
    state->opt_m = opt.moments_m();
    state->opt_v = opt.moments_v();
    state->last_params = snapshot(model);
    state->best_params = best_params;
    state->next_epoch = report.stopped_epoch + 1;
    state->best_val = best_val;
    state->has_best = has_best;
    state->stale = stale;
    state->history = report.epochs;
  }

  if (has_best) restore(model, best_params);

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// TrainState serialization: little-endian, full-precision doubles.

namespace {

void put_i64(std::string& out, std::int64_t x) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(x) >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_i64(out, static_cast<std::int64_t>(bits));
}
void put_mats(std::string& out, const std::vector<Mat>& ms) {
  put_i64(out, static_cast<std::int64_t>(ms.size()));
  for (const auto& m : ms) {
    put_i64(out, m.rows);
    put_i64(out, m.cols);
    for (Real x : m.v) put_f64(out, static_cast<double>(x));
  }
}

struct StateReader {
  std::ifstream f;
  explicit StateReader(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw std::runtime_error("cannot open train state: " + path);
  }
  std::int64_t i64() {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    if (f.gcount() != 8) throw std::runtime_error("train state: truncated");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<std::int64_t>(x);
  }
  double f64() {
    std::uint64_t bits = static_cast<std::uint64_t>(i64());
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
  }
  std::vector<Mat> mats() {
    std::int64_t n = i64();
    std::vector<Mat> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
      int rows = static_cast<int>(i64());
      int cols = static_cast<int>(i64());
      Mat m(rows, cols);
      for (auto& x : m.v) x = static_cast<Real>(f64());
      out.push_back(std::move(m));
    }
    return out;
  }
};

constexpr char kStateMagic[] = "PSRSTAT1";

}  // namespace

void save_train_state(const std::string& path, const TrainState& st) {
  std::string out;
  out.append(kStateMagic, 8);
  put_i64(out, st.opt_t);
  put_mats(out, st.opt_m);
  put_mats(out, st.opt_v);
  put_mats(out, st.last_params);
  put_mats(out, st.best_params);
  put_i64(out, st.next_epoch);
  put_f64(out, st.best_val);
  put_i64(out, st.has_best ? 1 : 0);
  put_i64(out, st.stale);
  put_i64(out, static_cast<std::int64_t>(st.history.size()));
  for (const auto& e : st.history) {
    put_i64(out, e.epoch);
    put_f64(out, e.train_loss);
    put_f64(out, e.validation_loss);
    put_i64(out, e.train_queries);
    put_i64(out, e.validation_queries);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write train state: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

TrainState load_train_state(const std::string& path) {
  StateReader r(path);
  char magic[8];
  r.f.read(magic, 8);
  if (r.f.gcount() != 8 || std::memcmp(magic, kStateMagic, 8) != 0)
    throw std::runtime_error("bad train state file: " + path);
  TrainState st;
  st.opt_t = r.i64();
  st.opt_m = r.mats();
  st.opt_v = r.mats();
  st.last_params = r.mats();
  st.best_params = r.mats();
  st.next_epoch = static_cast<int>(r.i64());
  st.best_val = r.f64();
  st.has_best = r.i64() != 0;
  st.stale = static_cast<int>(r.i64());
  std::int64_t n = r.i64();
  for (std::int64_t k = 0; k < n; ++k) {
    EpochStats e;
    e.epoch = static_cast<int>(r.i64());
    e.train_loss = r.f64();
    e.validation_loss = r.f64();
    e.train_queries = static_cast<int>(r.i64());
    e.validation_queries = static_cast<int>(r.i64());
    st.history.push_back(e);
  }
  return st;
}

}  // namespace pserank
