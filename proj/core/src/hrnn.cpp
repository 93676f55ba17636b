#include "pserank/hrnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace pserank {

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::kHrnnQa: return "hrnn-qa";
    case ModelVariant::kHrnn: return "hrnn";
    case ModelVariant::kShortOnly: return "short";
    case ModelVariant::kLongOnly: return "long";
  }
  return "?";
}

ModelVariant variant_from_string(const std::string& s) {
  if (s == "hrnn-qa") return ModelVariant::kHrnnQa;
  if (s == "hrnn") return ModelVariant::kHrnn;
  if (s == "short") return ModelVariant::kShortOnly;
  if (s == "long") return ModelVariant::kLongOnly;
  throw std::invalid_argument("unknown model variant: " + s);
}

ModelParams::ModelParams(const ModelConfig& cfg)
    : config(cfg),
      session_gru("session_gru", 2 * cfg.dims.d_e, cfg.dims.d_s1, cfg.use_bias),
      user_gru("user_gru", cfg.dims.d_s1, cfg.dims.d_s2, cfg.use_bias),
      attn_mlp("attn_mlp", cfg.dims.d_e + cfg.dims.d_s2, cfg.dims.d_a, 1, cfg.use_bias),
      W_S("W_S", cfg.dims.d_s1, cfg.dims.d_e),
      W_L("W_L", cfg.dims.d_s2, cfg.dims.d_e),
      feat_mlp("feat_mlp", 4, cfg.dims.d_f, 1, cfg.use_bias) {}

void ModelParams::init() {
  Rng rng(config.seed);
  session_gru.init(rng);
  user_gru.init(rng);
  attn_mlp.init(rng);
  W_S.glorot_init(rng);
  W_L.glorot_init(rng);
  feat_mlp.init(rng);
}

std::vector<ad::Param*> ModelParams::trainable() {
  std::vector<ad::Param*> out;
  auto append = [&](std::vector<ad::Param*> ps) {
    out.insert(out.end(), ps.begin(), ps.end());
  };
  append(session_gru.params());
  if (config.uses_long_term()) append(user_gru.params());
  if (config.uses_attention()) append(attn_mlp.params());
  if (config.uses_short_term()) out.push_back(&W_S);
  if (config.uses_long_term()) out.push_back(&W_L);
  append(feat_mlp.params());
  return out;
}

void ModelParams::zero_grads() {
  for (auto* p : trainable()) p->zero_grad();
}

Mat FeatureVector::to_vec() const {
  Mat v = Mat::vec(4);
  v.v[0] = static_cast<Real>(reciprocal_position);
  v.v[1] = static_cast<Real>(log_user_doc_clicks);
  v.v[2] = static_cast<Real>(log_user_query_doc_clicks);
  v.v[3] = static_cast<Real>(query_click_entropy);
  return v;
}

FeatureVector make_features(const FeatureContext& ctx, const std::string& user,
                            const std::string& query_key, const std::string& doc,
                            int original_position, std::int64_t query_ts) {
  FeatureVector f;
  f.reciprocal_position = 1.0 / original_position;
  if (ctx.clicks) {
    f.log_user_doc_clicks =
        std::log1p(ctx.clicks->user_clicks_on_doc(user, doc, query_ts));
    f.log_user_query_doc_clicks =
        std::log1p(ctx.clicks->clicks_under_query(user, query_key, doc, query_ts));
  }
  if (ctx.entropy) {
    auto it = ctx.entropy->find(query_key);
    if (it != ctx.entropy->end()) f.query_click_entropy = it->second;
  }
  return f;
}

PreparedUser prepare_user(const UserLog& log, const Vocabulary& vocab,
                          const EmbeddingMatrix& emb,
                          const std::unordered_map<std::string, Mat>& doc_vecs) {
  PreparedUser out;
  out.log = &log;
  out.sessions.reserve(log.sessions.size());
  for (const auto& s : log.sessions) {
    SessionRepr sr;
    sr.reserve(s.events.size());
    for (const auto& ev : s.events) {
      EventRepr er;
      er.query_vec = represent(ev.terms, vocab, emb);
      std::vector<Mat> sat;
      for (const auto& im : ev.impressions) {
        if (!im.sat) continue;
        auto it = doc_vecs.find(im.doc_id);
        sat.push_back(it == doc_vecs.end() ? Mat::vec(emb.dim()) : it->second);
      }
      er.sat_avg = sat_doc_average(sat, emb.dim());
      sr.push_back(std::move(er));
    }
    out.sessions.push_back(std::move(sr));
  }
  return out;
}

PlacedModel place(ad::Tape& t, ModelParams& p) {
  PlacedModel pm;
  pm.session_gru = place(t, p.session_gru);
  if (p.config.uses_long_term()) pm.user_gru = place(t, p.user_gru);
  if (p.config.uses_attention()) pm.attn_mlp = place(t, p.attn_mlp);
  if (p.config.uses_short_term()) pm.W_S = t.param(p.W_S);
  if (p.config.uses_long_term()) pm.W_L = t.param(p.W_L);
  pm.feat_mlp = place(t, p.feat_mlp);
  return pm;
}

std::vector<int> encode_session(ad::Tape& t, const ad::GruNodes& gru, int state_dim,
                                const std::vector<const EventRepr*>& events) {
  std::vector<int> states;
  states.reserve(events.size());
  int h = t.constant(Mat::vec(state_dim));
  for (const EventRepr* ev : events) {
    int q = t.constant(ev->query_vec);
    int d = t.constant(ev->sat_avg);
    h = ad::gru_step(t, gru, t.concat(q, d), h);
    states.push_back(h);
  }
  return states;
}

std::vector<int> encode_history(ad::Tape& t, const ad::GruNodes& gru, int state_dim,
                                const std::vector<int>& session_vectors) {
  std::vector<int> states;
  states.reserve(session_vectors.size());
  int h = t.constant(Mat::vec(state_dim));
  for (int sv : session_vectors) {
    h = ad::gru_step(t, gru, sv, h);
    states.push_back(h);
  }
  return states;
}

std::pair<int, int> attend(ad::Tape& t, const ad::MlpNodes& mlp, int state_dim,
                           const Mat& query_vec, const std::vector<int>& long_states) {
  if (long_states.empty()) return {t.constant(Mat::vec(state_dim)), -1};
  int q = t.constant(query_vec);
  std::vector<int> scores;
  scores.reserve(long_states.size());
  for (int h2 : long_states)
    scores.push_back(ad::mlp_forward(t, mlp, t.concat(q, h2)));
  int weights = t.softmax_(t.stack(scores));
  return {t.weighted_sum(long_states, weights), weights};
}

// ---------------------------------------------------------------------------

QueryForward::QueryForward(ModelParams& params,
                           const std::vector<const SessionRepr*>& history,
                           const SessionRepr& current_prefix, const Mat& query_vec,
                           const std::vector<CandidateInput>& candidates)
    : cfg_(&params.config) {
  const ModelDims& d = params.config.dims;
  pm_ = place(tape_, params);

  if (params.config.uses_long_term()) {
    std::vector<int> session_vecs;
    session_vecs.reserve(history.size());
    for (const SessionRepr* sr : history) {
      std::vector<const EventRepr*> evs;
      evs.reserve(sr->size());
      for (const auto& e : *sr) evs.push_back(&e);
      auto states = encode_session(tape_, pm_.session_gru, d.d_s1, evs);
      if (!states.empty()) session_vecs.push_back(states.back());
    }
    h2_nodes_ = encode_history(tape_, pm_.user_gru, d.d_s2, session_vecs);
  }

  // Current session: earlier events, then the current query with a zero
  // document vector (its clicks are unknown at ranking time).
  std::vector<const EventRepr*> evs;
  evs.reserve(current_prefix.size() + 1);
  for (const auto& e : current_prefix) evs.push_back(&e);
  EventRepr current;
  current.query_vec = query_vec;
  current.sat_avg = Mat::vec(d.d_e);
  evs.push_back(&current);
  h1_node_ = encode_session(tape_, pm_.session_gru, d.d_s1, evs).back();

  finish(params, query_vec, candidates);
}

QueryForward::QueryForward(ModelParams& params, const std::vector<Mat>& h2_values,
                           const Mat& h1_prev_value, const Mat& query_vec,
                           const std::vector<CandidateInput>& candidates)
    : cfg_(&params.config) {
  const ModelDims& d = params.config.dims;
  pm_ = place(tape_, params);

  if (params.config.uses_long_term()) {
    h2_nodes_.reserve(h2_values.size());
    for (const Mat& h2 : h2_values) h2_nodes_.push_back(tape_.constant(h2));
  }

  EventRepr current;
  current.query_vec = query_vec;
  current.sat_avg = Mat::vec(d.d_e);
  int q = tape_.constant(current.query_vec);
  int dv = tape_.constant(current.sat_avg);
  h1_node_ = ad::gru_step(tape_, pm_.session_gru, tape_.concat(q, dv),
                          tape_.constant(h1_prev_value));

  finish(params, query_vec, candidates);
}

void QueryForward::finish(ModelParams& params, const Mat& query_vec,
                          const std::vector<CandidateInput>& candidates) {
  const ModelConfig& cfg = params.config;
  const ModelDims& d = cfg.dims;

  if (cfg.uses_long_term()) {
    if (cfg.uses_attention()) {
      auto [attended, weights] = attend(tape_, pm_.attn_mlp, d.d_s2, query_vec, h2_nodes_);
      long_term_node_ = attended;
      attn_weights_node_ = weights;
    } else {
      long_term_node_ =
          h2_nodes_.empty() ? tape_.constant(Mat::vec(d.d_s2)) : h2_nodes_.back();
    }
  }

  int proj_s = cfg.uses_short_term() ? tape_.matvec_t(pm_.W_S, h1_node_) : -1;
  int proj_l = cfg.uses_long_term() ? tape_.matvec_t(pm_.W_L, long_term_node_) : -1;

  score_nodes_.reserve(candidates.size());
  scores_.reserve(candidates.size());
  for (const auto& c : candidates) {
    int doc = tape_.constant(c.doc_vec);
    int score = ad::mlp_forward(tape_, pm_.feat_mlp, tape_.constant(c.features.to_vec()));
    if (proj_l >= 0) score = tape_.add(score, tape_.cosine_(proj_l, doc));
    if (proj_s >= 0) score = tape_.add(score, tape_.cosine_(proj_s, doc));
    score_nodes_.push_back(score);
    scores_.push_back(static_cast<double>(tape_.scalar_value(score)));
  }
}

InterestState QueryForward::interest_state() const {
  InterestState st;
  st.short_term = tape_.value(h1_node_);
  for (int id : h2_nodes_) st.long_states.push_back(tape_.value(id));
  if (long_term_node_ >= 0) st.attended = tape_.value(long_term_node_);
  if (attn_weights_node_ >= 0) {
    const Mat& w = tape_.value(attn_weights_node_);
    st.attention_weights.assign(w.v.begin(), w.v.end());
  }
  return st;
}

double score_document_value(ModelParams& params, const InterestState& state,
                            const Mat& doc_vec, const FeatureVector& feats) {
  const ModelConfig& cfg = params.config;
  ad::Tape t;
  PlacedModel pm = place(t, params);
  int score = ad::mlp_forward(t, pm.feat_mlp, t.constant(feats.to_vec()));
  int doc = t.constant(doc_vec);
  if (cfg.uses_long_term()) {
    int proj_l = t.matvec_t(pm.W_L, t.constant(state.attended));
    score = t.add(score, t.cosine_(proj_l, doc));
  }
  if (cfg.uses_short_term()) {
    int proj_s = t.matvec_t(pm.W_S, t.constant(state.short_term));
    score = t.add(score, t.cosine_(proj_s, doc));
  }
  return static_cast<double>(t.scalar_value(score));
}

std::vector<int> rerank_order(const std::vector<double>& scores,
                              const std::vector<int>& original_positions) {
  if (scores.size() != original_positions.size())
    throw std::invalid_argument("rerank: size mismatch");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return original_positions[a] < original_positions[b];
  });
  return idx;
}

Mat advance_session_state(ModelParams& params, const Mat& h1_prev, const EventRepr& ev) {
  ad::Tape t;
  ad::GruNodes gru = ad::place(t, params.session_gru);
  int q = t.constant(ev.query_vec);
  int d = t.constant(ev.sat_avg);
  int h = ad::gru_step(t, gru, t.concat(q, d), t.constant(h1_prev));
  return t.value(h);
}

UserStateCache build_user_cache(ModelParams& params, const PreparedUser& user) {
  const ModelDims& d = params.config.dims;
  UserStateCache cache;
  cache.h1_after_event.resize(user.sessions.size());

  std::vector<Mat> session_finals;
  for (std::size_t m = 0; m < user.sessions.size(); ++m) {
    Mat h1 = Mat::vec(d.d_s1);
    for (const auto& ev : user.sessions[m]) {
      h1 = advance_session_state(params, h1, ev);
      cache.h1_after_event[m].push_back(h1);
    }
    session_finals.push_back(std::move(h1));
  }

  if (params.config.uses_long_term()) {
    ad::Tape t;
    ad::GruNodes gru = ad::place(t, params.user_gru);
    int h = t.constant(Mat::vec(d.d_s2));
    for (const Mat& sv : session_finals) {
      h = ad::gru_step(t, gru, t.constant(sv), h);
      cache.h2_after.push_back(t.value(h));
    }
  }
  return cache;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O. Layout (all little-endian):
//   magic "PSRCKPT1"
//   u32 d_e, d_s1, d_s2, d_a, d_f
//   u8 variant, u8 use_bias
//   u64 vocab_hash, u64 seed
//   u32 n_arrays, then per array:
//     u16 name length, name bytes, u32 rows, u32 cols, rows*cols float32

namespace {

void put_u16(std::string& out, std::uint16_t x) {
  out.push_back(static_cast<char>(x & 0xff));
  out.push_back(static_cast<char>((x >> 8) & 0xff));
}
void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float x) {
  std::uint32_t bits;
  std::memcpy(&bits, &x, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t x = static_cast<unsigned char>(buf[pos]) |
                      (static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos + 1])) << 8);
    pos += 2;
    return x;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i)
      x |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return x;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i)
      x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return x;
  }
  float f32() {
    std::uint32_t bits = u32();
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

constexpr char kMagic[] = "PSRCKPT1";

}  // namespace

void save_checkpoint(const std::string& path, ModelParams& params,
                     std::uint64_t vocab_hash) {
  std::string out;
  out.append(kMagic, 8);
  const ModelDims& d = params.config.dims;
  put_u32(out, d.d_e);
  put_u32(out, d.d_s1);
  put_u32(out, d.d_s2);
  put_u32(out, d.d_a);
  put_u32(out, d.d_f);
  out.push_back(static_cast<char>(params.config.variant));
  out.push_back(params.config.use_bias ? 1 : 0);
  put_u64(out, vocab_hash);
  put_u64(out, params.config.seed);

  auto arrays = params.trainable();
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const ad::Param* p : arrays) {
    put_u16(out, static_cast<std::uint16_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->value.rows));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols));
    for (Real x : p->value.v) put_f32(out, static_cast<float>(x));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

ModelParams load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(buf);
  if (r.bytes(8) != std::string(kMagic, 8))
    throw std::runtime_error("checkpoint: bad magic in " + path);

  ModelConfig cfg;
  cfg.dims.d_e = static_cast<int>(r.u32());
  cfg.dims.d_s1 = static_cast<int>(r.u32());
  cfg.dims.d_s2 = static_cast<int>(r.u32());
  cfg.dims.d_a = static_cast<int>(r.u32());
  cfg.dims.d_f = static_cast<int>(r.u32());
  cfg.variant = static_cast<ModelVariant>(r.bytes(1)[0]);
  cfg.use_bias = r.bytes(1)[0] != 0;
  std::uint64_t vocab_hash = r.u64();
  cfg.seed = r.u64();
  if (expected_vocab_hash != 0 && vocab_hash != expected_vocab_hash)
    throw std::runtime_error("checkpoint: vocabulary hash mismatch (model trained on a "
                             "different corpus)");

  ModelParams params(cfg);
  auto arrays = params.trainable();
  std::uint32_t n = r.u32();
  if (n != arrays.size())
    throw std::runtime_error("checkpoint: expected " + std::to_string(arrays.size()) +
                             " arrays, found " + std::to_string(n));
  for (ad::Param* p : arrays) {
    std::string name = r.bytes(r.u16());
    if (name != p->name)
      throw std::runtime_error("checkpoint: array '" + name + "' where '" + p->name +
                               "' expected");
    int rows = static_cast<int>(r.u32());
    int cols = static_cast<int>(r.u32());
    if (rows != p->value.rows || cols != p->value.cols)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    for (auto& x : p->value.v) x = static_cast<Real>(r.f32());
  }
  return params;
}

std::uint64_t checkpoint_vocab_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string head(8 + 20 + 2 + 8, '\0');
  f.read(head.data(), static_cast<std::streamsize>(head.size()));
  if (f.gcount() != static_cast<std::streamsize>(head.size()))
    throw std::runtime_error("checkpoint: truncated header");
  Reader r(head);
  r.bytes(8);
  for (int i = 0; i < 5; ++i) r.u32();
  r.bytes(2);
  return r.u64();
}

}  // namespace pserank
