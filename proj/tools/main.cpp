// pserank: personalized search re-ranking over click logs.
//
// Subcommands: synth, ingest, train, evaluate, rerank, baseline, attention.
// Exit codes: 0 success, 2 usage/validation error, 3 training divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pserank/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace pserank;

namespace {

struct CommonOpts {
  std::string log_path, docs_path, out_dir = "out";
  std::string stopwords_path;
  bool segment_sessions = false;
  int min_sessions = 4;
  double profile_fraction = 0.5;
  std::int64_t profile_boundary_ts = -1;
  int vocab_min_count = 1;
  std::string embeddings_path;
  int threads = 1;
  std::uint64_t seed = 1;

  // Model widths; the flag defaults mirror the reference configuration.
  int d_e = 300, d_s1 = 300, d_s2 = 600, d_a = 1024, d_f = 64;
  std::string preset;

  void apply_preset() {
    if (preset.empty()) return;
    if (preset == "desk") {
      ModelDims d = ModelDims::desk();
      d_e = d.d_e;
      d_s1 = d.d_s1;
      d_s2 = d.d_s2;
      d_a = d.d_a;
      d_f = d.d_f;
    } else if (preset == "paper") {
      d_e = 300;
      d_s1 = 300;
      d_s2 = 600;
      d_a = 1024;
      d_f = 64;
    } else {
      throw std::runtime_error("--preset must be 'desk' or 'paper'");
    }
  }

  ModelDims dims() const { return {d_e, d_s1, d_s2, d_a, d_f}; }

  DatasetOptions dataset_options() const {
    DatasetOptions o;
    if (!stopwords_path.empty()) o.ingest.stopwords = load_stopwords(stopwords_path);
    o.ingest.segment_sessions = segment_sessions;
    o.min_sessions = min_sessions;
    o.split.profile_fraction = profile_fraction;
    o.split.profile_boundary_ts = profile_boundary_ts;
    o.vocab_min_count = vocab_min_count;
    o.embedding_dim = d_e;
    o.embeddings_path = embeddings_path;
    return o;
  }
};

void add_data_flags(CLI::App* cmd, CommonOpts& o, bool need_log = true) {
  cmd->add_option("--log", o.log_path, "Query log (JSON-Lines)")
      ->required(need_log)
      ->check(CLI::ExistingFile);
  cmd->add_option("--docs", o.docs_path, "Document contents (JSON-Lines)")
      ->required(need_log)
      ->check(CLI::ExistingFile);
  cmd->add_option("--stopwords", o.stopwords_path, "Stopword list file")
      ->check(CLI::ExistingFile);
  cmd->add_flag("--segment-sessions", o.segment_sessions,
                "Segment session-less logs on a 30-minute inactivity gap");
  cmd->add_option("--min-sessions", o.min_sessions, "Drop users with fewer sessions")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--profile-fraction", o.profile_fraction,
                  "Leading fraction of sessions reserved for the long-term profile")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--profile-boundary-ts", o.profile_boundary_ts,
                  "Profile boundary as an epoch timestamp (overrides the fraction)");
  cmd->add_option("--min-count", o.vocab_min_count, "Vocabulary frequency threshold");
  cmd->add_option("--embeddings", o.embeddings_path,
                  "word2vec text embeddings (default: deterministic fallback vectors)")
      ->check(CLI::ExistingFile);
}

void add_model_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--preset", o.preset, "Width preset: desk or paper");
  cmd->add_option("--d-e", o.d_e, "Text vector width");
  cmd->add_option("--d-s1", o.d_s1, "Session-level state width");
  cmd->add_option("--d-s2", o.d_s2, "User-level state width");
  cmd->add_option("--d-a", o.d_a, "Attention MLP hidden width");
  cmd->add_option("--d-f", o.d_f, "Feature MLP hidden width");
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

void ensure_out(const std::string& dir) { fs::create_directories(dir); }

int run_synth(const CommonOpts& common, const GenConfig& gen, const World& world_shape) {
  ensure_out(common.out_dir);
  World world = world_shape;
  world.seed = common.seed;
  SynthOutput out = generate(world, gen, common.seed);
  fs::path dir(common.out_dir);
  write_synth(out, (dir / "log.jsonl").string(), (dir / "docs.jsonl").string(),
              (dir / "truth.jsonl").string());
  std::size_t n_queries = 0, n_clicks = 0;
  for (const auto& ul : out.logs)
    for (const auto& s : ul.sessions)
      for (const auto& ev : s.events) {
        ++n_queries;
        for (const auto& im : ev.impressions) n_clicks += im.clicked ? 1 : 0;
      }
  std::cerr << "synth: " << out.logs.size() << " users, " << n_queries << " queries, "
            << n_clicks << " clicks -> " << common.out_dir << "\n";
  return 0;
}

int run_ingest(const CommonOpts& common, const std::string& emit_path) {
  ensure_out(common.out_dir);
  Dataset ds = load_dataset(common.log_path, common.docs_path, common.dataset_options());

  ordered_json stats;
  stats["users"] = ds.logs.size();
  std::size_t sessions = 0, queries = 0, sat_clicks = 0;
  for (const auto& ul : ds.logs) {
    sessions += ul.sessions.size();
    for (const auto& s : ul.sessions)
      for (const auto& ev : s.events) {
        ++queries;
        for (const auto& im : ev.impressions) sat_clicks += im.sat ? 1 : 0;
      }
  }
  stats["sessions"] = sessions;
  stats["queries"] = queries;
  stats["sat_clicks"] = sat_clicks;
  stats["vocabulary"] = ds.vocab.size();
  stats["documents"] = ds.docs.size();
  ordered_json split_stats;
  std::size_t train = 0, val = 0, test = 0, profile = 0;
  for (const auto& [u, sp] : ds.splits) {
    train += sp.train_sessions.size();
    val += sp.validation_sessions.size();
    test += sp.test_sessions.size();
    profile += sp.profile_sessions.size();
  }
  split_stats["profile_sessions"] = profile;
  split_stats["train_sessions"] = train;
  split_stats["validation_sessions"] = val;
  split_stats["test_sessions"] = test;
  stats["split"] = std::move(split_stats);

  fs::path dir(common.out_dir);
  write_file(dir / "stats.json", stats.dump(2) + "\n");
  write_file(dir / "vocab.tsv", ds.vocab.to_tsv());
  if (!emit_path.empty()) write_file(emit_path, serialize_log(ds.logs));
  std::cout << stats.dump(2) << "\n";
  return 0;
}

struct TrainCliOpts {
  std::string model = "hrnn-qa";
  double lr = 1e-3;
  int max_epochs = 50;
  int patience = 3;
  int pair_cap = 50;
  bool sgd = false;
  bool no_bias = false;
  bool resume = false;
};

int run_train(const CommonOpts& common, const TrainCliOpts& t) {
  ensure_out(common.out_dir);
  Dataset ds = load_dataset(common.log_path, common.docs_path, common.dataset_options());
  std::vector<PreparedUser> prepared = prepare_users(ds);
  TrainData data = build_train_data(ds, prepared);
  if (data.users.empty()) {
    std::cerr << "train: no supervised users after filtering/splitting\n";
    return 2;
  }

  ModelConfig cfg;
  cfg.dims = common.dims();
  cfg.variant = variant_from_string(t.model);
  cfg.use_bias = !t.no_bias;
  cfg.seed = common.seed;
  ModelParams model(cfg);
  model.init();

  TrainConfig tc;
  tc.learning_rate = t.lr;
  tc.max_epochs = t.max_epochs;
  tc.patience = t.patience;
  tc.pair_cap = t.pair_cap;
  tc.seed = common.seed;
  tc.use_adam = !t.sgd;

  fs::path dir(common.out_dir);
  fs::path ckpt = dir / (t.model + ".ckpt");
  fs::path state_path = dir / (t.model + ".ckpt.state");

  TrainState state;
  if (t.resume) {
    if (!fs::exists(state_path)) {
      std::cerr << "train: --resume needs " << state_path << "\n";
      return 2;
    }
    state = load_train_state(state_path.string());
    std::cerr << "train: resuming from epoch " << state.next_epoch << "\n";
  }

  try {
    TrainReport report = train(model, data, tc, &state);
    save_checkpoint(ckpt.string(), model, ds.vocab.content_hash());
    save_train_state(state_path.string(), state);
    write_file(dir / (t.model + "_train_report.json"), report.to_json());
    write_file(dir / "vocab.tsv", ds.vocab.to_tsv());
    std::cerr << "train: best epoch " << report.best_epoch << " (val loss "
              << report.best_validation_loss << "), checkpoint " << ckpt << "\n";
  } catch (const DivergenceError& e) {
    std::cerr << "train: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

struct EvalCliOpts {
  std::vector<std::string> models{"original"};
  std::map<std::string, std::string> checkpoints;  // variant -> path
  std::string pclick_store;
  std::string ptm_model;
  double pclick_beta = 0.5;
  double ptm_lambda = 1.0;
  double ptm_sigma = 1.0;
};

int run_evaluate(const CommonOpts& common, const EvalCliOpts& e) {
  ensure_out(common.out_dir);
  Dataset ds = load_dataset(common.log_path, common.docs_path, common.dataset_options());
  EvalOptions eopts;
  eopts.threads = common.threads;

  std::vector<ModelEvaluation> evals;
  ordered_json errors = ordered_json::object();
  std::vector<PreparedUser> prepared;  // built lazily for neural models

  for (const std::string& name : e.models) {
    try {
      if (name == "original") {
        evals.push_back(evaluate_original(ds, eopts));
      } else if (name == "pclick") {
        if (e.pclick_store.empty())
          throw std::runtime_error("missing --pclick-store artifact");
        std::ifstream f(e.pclick_store);
        if (!f) throw std::runtime_error("cannot open " + e.pclick_store);
        std::string tsv((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
        ClickStore store = ClickStore::from_tsv(tsv);
        evals.push_back(evaluate_pclick(ds, store, e.pclick_beta, eopts));
      } else if (name == "ptm") {
        if (e.ptm_model.empty()) throw std::runtime_error("missing --ptm-model artifact");
        std::ifstream f(e.ptm_model);
        if (!f) throw std::runtime_error("cannot open " + e.ptm_model);
        std::string js((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
        TopicModel tm = TopicModel::from_json(js);
        DocPrior prior = DocPrior::build(ds.logs, ds.splits,
                                         static_cast<int>(ds.docs.size()), e.ptm_sigma);
        PtmConfig pc;
        pc.lambda = e.ptm_lambda;
        pc.sigma = e.ptm_sigma;
        evals.push_back(evaluate_ptm(ds, tm, prior, pc, eopts));
      } else {
        auto it = e.checkpoints.find(name);
        if (it == e.checkpoints.end())
          throw std::runtime_error("missing --checkpoint " + name + "=PATH artifact");
        ModelParams params = load_checkpoint(it->second, ds.vocab.content_hash());
        if (to_string(params.config.variant) != name)
          throw std::runtime_error("checkpoint holds variant '" +
                                   to_string(params.config.variant) + "', not '" + name +
                                   "'");
        if (prepared.empty()) prepared = prepare_users(ds);
        evals.push_back(evaluate_model(ds, prepared, params, eopts));
      }
    } catch (const std::exception& ex) {
      errors[name] = ex.what();
      std::cerr << "evaluate: " << name << ": " << ex.what() << " (skipped)\n";
    }
  }

  fs::path dir(common.out_dir);
  for (const auto& ev : evals) {
    write_file(dir / ("report_" + ev.model + ".json"), report_json(ev));
    write_file(dir / ("per_query_" + ev.model + ".csv"), per_query_csv(ev));
  }
  std::string table = comparison_table(evals);
  write_file(dir / "comparison.txt", table);
  ordered_json cmp = ordered_json::parse(comparison_json(evals));
  if (!errors.empty()) cmp["errors"] = errors;
  write_file(dir / "comparison.json", cmp.dump(2) + "\n");
  std::cout << table;
  return 0;
}

int run_rerank(const CommonOpts& common, const std::string& checkpoint) {
  ensure_out(common.out_dir);
  Dataset ds = load_dataset(common.log_path, common.docs_path, common.dataset_options());
  ModelParams params = load_checkpoint(checkpoint, ds.vocab.content_hash());
  std::vector<PreparedUser> prepared = prepare_users(ds);

  std::ofstream out(fs::path(common.out_dir) / "rankings.jsonl", std::ios::trunc);
  for (std::size_t i = 0; i < ds.logs.size(); ++i) {
    const UserLog& ul = ds.logs[i];
    const DatasetSplit& split = ds.splits.at(ul.user_id);
    if (split.test_sessions.empty()) continue;
    UserStateCache cache = build_user_cache(params, prepared[i]);
    for (int si : split.test_sessions) {
      const Session& session = ul.sessions[si];
      for (std::size_t ei = 0; ei < session.events.size(); ++ei) {
        const QueryEvent& event = session.events[ei];
        std::vector<Mat> h2(cache.h2_after.begin(),
                            cache.h2_after.begin() +
                                (params.config.uses_long_term() ? si : 0));
        Mat h1 = ei > 0 ? cache.h1_after_event[si][ei - 1]
                        : Mat::vec(params.config.dims.d_s1);
        std::string qkey = join_terms(event.terms);
        std::vector<CandidateInput> cands;
        std::vector<int> positions;
        std::vector<std::string> docs;
        for (const auto& im : event.impressions) {
          CandidateInput c;
          auto dit = ds.doc_vecs.find(im.doc_id);
          c.doc_vec = dit == ds.doc_vecs.end() ? Mat::vec(ds.embedding_dim) : dit->second;
          c.features = make_features(ds.feature_context(), ul.user_id, qkey, im.doc_id,
                                     im.position, event.timestamp);
          cands.push_back(std::move(c));
          positions.push_back(im.position);
          docs.push_back(im.doc_id);
        }
        QueryForward fwd(params, h2, h1, prepared[i].sessions[si][ei].query_vec, cands);
        auto order = rerank_order(fwd.scores(), positions);
        ordered_json j;
        j["user"] = ul.user_id;
        j["session"] = session.session_id;
        j["qid"] = event.query_id;
        ordered_json ranking = ordered_json::array();
        for (int idx : order) ranking.push_back(docs[idx]);
        j["ranking"] = std::move(ranking);
        out << j.dump() << '\n';
      }
    }
  }
  std::cerr << "rerank: wrote rankings.jsonl\n";
  return 0;
}

struct BaselineCliOpts {
  std::string type = "pclick";
  int topics = 10;
  int iterations = 500;
  double alpha = -1.0;
  double beta_lda = 0.01;
};

int run_baseline(const CommonOpts& common, const BaselineCliOpts& b) {
  ensure_out(common.out_dir);
  Dataset ds = load_dataset(common.log_path, common.docs_path, common.dataset_options());
  fs::path dir(common.out_dir);
  if (b.type == "pclick") {
    write_file(dir / "pclick_store.tsv", ds.clicks.to_tsv());
    std::cerr << "baseline: wrote pclick_store.tsv\n";
    return 0;
  }
  if (b.type == "ptm") {
    auto corpus = clicked_corpus(ds);
    if (corpus.empty()) {
      std::cerr << "baseline: no clicked documents to fit topics on\n";
      return 2;
    }
    TopicModelConfig cfg;
    cfg.n_topics = b.topics;
    cfg.iterations = b.iterations;
    cfg.alpha = b.alpha;
    cfg.beta = b.beta_lda;
    cfg.seed = common.seed;
    TopicModel tm = TopicModel::fit(corpus, ds.vocab, cfg);
    write_file(dir / "ptm_model.json", tm.to_json() + "\n");
    std::cerr << "baseline: wrote ptm_model.json (" << corpus.size() << " clicked docs)\n";
    return 0;
  }
  std::cerr << "baseline: unknown --type " << b.type << "\n";
  return 2;
}

int run_attention(const CommonOpts& common, const std::string& checkpoint,
                  const std::string& user, const std::string& query) {
  ensure_out(common.out_dir);
  Dataset ds = load_dataset(common.log_path, common.docs_path, common.dataset_options());
  ModelParams params = load_checkpoint(checkpoint, ds.vocab.content_hash());
  auto rows = attention_dump(ds, params, user, query);

  std::ostringstream out;
  out << "session\tweight\tflagged\trepresentative_query\n";
  double sum = 0;
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", r.weight);
    out << r.session_index << '\t' << buf << '\t'
        << (r.below_display_threshold ? "1" : "0") << '\t' << r.representative_query
        << '\n';
    sum += r.weight;
  }
  if (rows.empty()) out << "# user has no past sessions; nothing to attend to\n";
  write_file(fs::path(common.out_dir) / "attention.tsv", out.str());
  std::cout << out.str();
  if (!rows.empty()) std::cerr << "attention: weight sum " << sum << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized search re-ranking from query logs"};
  app.require_subcommand(1);

  CommonOpts common;
  TrainCliOpts train_opts;
  EvalCliOpts eval_opts;
  BaselineCliOpts baseline_opts;
  GenConfig gen;
  World world_shape;
  std::string emit_path, checkpoint, attn_user, attn_query;
  std::vector<std::string> checkpoint_kv;
  std::string history_mode = "mixed";

  auto* synth = app.add_subcommand("synth", "Generate a synthetic click log");
  synth->add_option("--users", gen.n_users, "Number of users")->check(CLI::PositiveNumber);
  synth->add_option("--sessions-min", gen.sessions_min, "Min sessions per user");
  synth->add_option("--sessions-max", gen.sessions_max, "Max sessions per user");
  synth->add_option("--queries-min", gen.queries_min, "Min queries per session");
  synth->add_option("--queries-max", gen.queries_max, "Max queries per session");
  synth->add_option("--repeat-prob", gen.repeat_prob, "Repeated-query probability")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--ambiguous", gen.ambiguous_fraction, "Ambiguous-query fraction")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--drift", gen.drift_rate, "Per-session preference drift")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--base-noise", gen.base_noise, "Base-ranker noise sd");
  synth->add_option("--topics", world_shape.n_topics, "Number of world topics")
      ->check(CLI::PositiveNumber);
  synth->add_option("--history-mode", history_mode, "mixed or two-block");
  synth->add_option("--seed", common.seed, "Master seed");
  synth->add_option("--out", common.out_dir, "Output directory");

  auto* ingest = app.add_subcommand("ingest", "Parse, label, filter, and split a log");
  add_data_flags(ingest, common);
  ingest->add_option("--emit", emit_path, "Also write the canonical re-serialized log");
  ingest->add_option("--out", common.out_dir, "Output directory");

  auto* train_cmd = app.add_subcommand("train", "Train a re-ranking model");
  add_data_flags(train_cmd, common);
  add_model_flags(train_cmd, common);
  train_cmd->add_option("--model", train_opts.model,
                        "Variant: hrnn-qa, hrnn, short, long");
  train_cmd->add_option("--lr", train_opts.lr, "Learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", train_opts.max_epochs, "Max epochs")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--patience", train_opts.patience, "Early-stop patience")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--pair-cap", train_opts.pair_cap, "Pair cap per query")
      ->check(CLI::PositiveNumber);
  train_cmd->add_flag("--sgd", train_opts.sgd, "Plain SGD instead of Adam");
  train_cmd->add_flag("--no-bias", train_opts.no_bias,
                      "Drop bias terms (strict formulation)");
  train_cmd->add_flag("--resume", train_opts.resume, "Continue from the saved state");
  train_cmd->add_option("--seed", common.seed, "Training seed");
  train_cmd->add_option("--threads", common.threads, "Worker threads (1 = reproducible)");
  train_cmd->add_option("--out", common.out_dir, "Output directory");

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate models on the test split");
  add_data_flags(eval_cmd, common);
  add_model_flags(eval_cmd, common);
  eval_cmd->add_option("--models", eval_opts.models,
                       "Models: original pclick ptm hrnn hrnn-qa short long")
      ->delimiter(',');
  eval_cmd->add_option("--checkpoint", checkpoint_kv,
                       "Checkpoint per neural model, as variant=path")
      ->delimiter(',');
  eval_cmd->add_option("--pclick-store", eval_opts.pclick_store, "P-Click TSV store");
  eval_cmd->add_option("--pclick-beta", eval_opts.pclick_beta, "P-Click smoothing");
  eval_cmd->add_option("--ptm-model", eval_opts.ptm_model, "Topic model JSON");
  eval_cmd->add_option("--ptm-lambda", eval_opts.ptm_lambda, "User-affinity exponent");
  eval_cmd->add_option("--ptm-sigma", eval_opts.ptm_sigma, "Doc-prior smoothing mass");
  eval_cmd->add_option("--threads", common.threads, "Worker threads (1 = reproducible)");
  eval_cmd->add_option("--seed", common.seed, "Seed");
  eval_cmd->add_option("--out", common.out_dir, "Output directory");

  auto* rerank_cmd = app.add_subcommand("rerank", "Emit personalized rankings");
  add_data_flags(rerank_cmd, common);
  add_model_flags(rerank_cmd, common);
  rerank_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  rerank_cmd->add_option("--threads", common.threads, "Worker threads");
  rerank_cmd->add_option("--out", common.out_dir, "Output directory");

  auto* baseline_cmd = app.add_subcommand("baseline", "Build baseline artifacts");
  add_data_flags(baseline_cmd, common);
  baseline_cmd->add_option("--type", baseline_opts.type, "pclick or ptm");
  baseline_cmd->add_option("--topics", baseline_opts.topics, "Topic count (ptm)")
      ->check(CLI::PositiveNumber);
  baseline_cmd->add_option("--iterations", baseline_opts.iterations,
                           "Gibbs iterations (ptm)")
      ->check(CLI::PositiveNumber);
  baseline_cmd->add_option("--lda-alpha", baseline_opts.alpha,
                           "Dirichlet alpha (ptm; default 50/K)");
  baseline_cmd->add_option("--lda-beta", baseline_opts.beta_lda, "Dirichlet beta (ptm)");
  baseline_cmd->add_option("--seed", common.seed, "Seed");
  baseline_cmd->add_option("--out", common.out_dir, "Output directory");

  auto* attn_cmd = app.add_subcommand("attention",
                                      "Dump attention weights over past sessions");
  add_data_flags(attn_cmd, common);
  add_model_flags(attn_cmd, common);
  attn_cmd->add_option("--checkpoint", checkpoint, "Attention-model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  attn_cmd->add_option("--user", attn_user, "User id")->required();
  attn_cmd->add_option("--query", attn_query, "Query text")->required();
  attn_cmd->add_option("--out", common.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    common.apply_preset();
    if (synth->parsed()) {
      if (history_mode == "two-block")
        gen.history_mode = GenConfig::HistoryMode::kTwoBlock;
      else if (history_mode != "mixed")
        throw std::runtime_error("--history-mode must be 'mixed' or 'two-block'");
      return run_synth(common, gen, world_shape);
    }
    if (ingest->parsed()) return run_ingest(common, emit_path);
    if (train_cmd->parsed()) return run_train(common, train_opts);
    if (eval_cmd->parsed()) {
      for (const auto& kv : checkpoint_kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw std::runtime_error("--checkpoint expects variant=path, got " + kv);
        eval_opts.checkpoints[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      return run_evaluate(common, eval_opts);
    }
    if (rerank_cmd->parsed()) return run_rerank(common, checkpoint);
    if (baseline_cmd->parsed()) return run_baseline(common, baseline_opts);
    if (attn_cmd->parsed()) return run_attention(common, checkpoint, attn_user, attn_query);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
