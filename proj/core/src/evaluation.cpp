#include "pserank/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace pserank {

using nlohmann::ordered_json;

double average_precision(const std::vector<std::string>& ranking,
                         const std::set<std::string>& relevant) {
  if (relevant.empty()) return 0.0;
  double ap = 0;
  int hits = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (relevant.count(ranking[i])) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return ap / static_cast<double>(relevant.size());
}

double average_precision_labels(const std::vector<bool>& relevant_at_rank) {
  int total = 0;
  for (bool r : relevant_at_rank) total += r ? 1 : 0;
  if (total == 0) return 0.0;
  double ap = 0;
  int hits = 0;
  for (std::size_t i = 0; i < relevant_at_rank.size(); ++i) {
    if (relevant_at_rank[i]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return ap / total;
}

double reciprocal_rank(const std::vector<std::string>& ranking,
                       const std::set<std::string>& relevant) {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (relevant.count(ranking[i])) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

double precision_at_1(const std::vector<std::string>& ranking,
                      const std::set<std::string>& relevant) {
  return !ranking.empty() && relevant.count(ranking[0]) ? 1.0 : 0.0;
}

double avg_click_position(const std::vector<std::string>& ranking,
                          const std::set<std::string>& clicked) {
  if (clicked.empty()) return 0.0;
  double sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (clicked.count(ranking[i])) {
      sum += static_cast<double>(i + 1);
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

std::vector<InversePair> inverse_pairs(const QueryEvent& event) {
  std::vector<InversePair> pairs;
  for (const auto& clicked : event.impressions) {
    if (!clicked.clicked) continue;
    for (const auto& skipped : event.impressions) {
      if (skipped.clicked) continue;
      if (skipped.position < clicked.position)
        pairs.push_back({clicked.doc_id, skipped.doc_id});
    }
  }
  return pairs;
}

std::pair<int, int> count_improved(const std::vector<InversePair>& pairs,
                                   const std::vector<std::string>& ranking) {
  std::unordered_map<std::string, int> rank;
  for (std::size_t i = 0; i < ranking.size(); ++i) rank[ranking[i]] = static_cast<int>(i);
  int better = 0;
  for (const auto& p : pairs) {
    auto c = rank.find(p.clicked_doc);
    auto s = rank.find(p.skipped_doc);
    if (c != rank.end() && s != rank.end() && c->second < s->second) ++better;
  }
  return {better, static_cast<int>(pairs.size())};
}

MetricsSummary summarize(std::span<const PerQueryResult> rows) {
  MetricsSummary s;
  if (rows.empty()) {
    s.p_improve = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double map_orig = 0;
  for (const auto& r : rows) {
    s.map += r.ap;
    s.mrr += r.rr;
    s.p_at_1 += r.p1;
    s.avg_click += r.avg_click;
    s.better += r.n_better;
    s.total_pairs += r.n_pairs;
    map_orig += r.ap_original;
  }
  s.n_queries = static_cast<int>(rows.size());
  s.map /= s.n_queries;
  s.mrr /= s.n_queries;
  s.p_at_1 /= s.n_queries;
  s.avg_click /= s.n_queries;
  s.delta_map = s.map - map_orig / s.n_queries;
  s.p_improve = s.total_pairs == 0
                    ? std::numeric_limits<double>::quiet_NaN()
                    : static_cast<double>(s.better) / static_cast<double>(s.total_pairs);
  return s;
}

std::map<std::string, MetricsSummary> slice_report(
    const std::vector<PerQueryResult>& rows, Slicer slicer) {
  std::map<std::string, std::vector<PerQueryResult>> groups;
  for (const auto& r : rows) {
    std::string key;
    switch (slicer) {
      case Slicer::kClickEntropy:
        key = r.click_entropy < 1.0 ? "entropy<1" : "entropy>=1";
        break;
      case Slicer::kRepeatedQuery:
        key = r.repeated ? "repeated" : "non-repeated";
        break;
      case Slicer::kSessionPosition:
        key = r.session_position >= 5 ? "5+" : std::to_string(r.session_position);
        break;
    }
    groups[key].push_back(r);
  }
  std::map<std::string, MetricsSummary> out;
  for (const auto& [key, g] : groups) out[key] = summarize(g);
  return out;
}

// Regularized incomplete beta via Lentz's continued fraction.
namespace {

double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                 a * std::log(x) + b * std::log(1.0 - x);
  double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_two_sided_p(double t, int df) {
  if (df <= 0) return 1.0;
  double x = df / (df + t * t);
  return reg_inc_beta(df / 2.0, 0.5, x);
}

TTest paired_ttest(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("paired_ttest: size mismatch");
  TTest r;
  r.n = static_cast<int>(x.size());
  if (r.n < 2) return r;
  double mean = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mean += x[i] - y[i];
  mean /= r.n;
  double var = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = (x[i] - y[i]) - mean;
    var += d * d;
  }
  var /= (r.n - 1);
  if (var <= 0) {
    r.t = mean == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p = mean == 0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / std::sqrt(var / r.n);
  r.p = student_t_two_sided_p(r.t, r.n - 1);
  return r;
}

// ---------------------------------------------------------------------------

void ModelEvaluation::finalize() {
  overall = summarize(queries);
  by_entropy = slice_report(queries, Slicer::kClickEntropy);
  by_repeated = slice_report(queries, Slicer::kRepeatedQuery);
  by_position = slice_report(queries, Slicer::kSessionPosition);
}

namespace {

ordered_json summary_json(const MetricsSummary& s) {
  ordered_json j;
  j["n_queries"] = s.n_queries;
  j["map"] = s.map;
  j["mrr"] = s.mrr;
  j["p_at_1"] = s.p_at_1;
  j["avg_click"] = s.avg_click;
  j["better_pairs"] = s.better;
  j["total_pairs"] = s.total_pairs;
  if (std::isnan(s.p_improve))
    j["p_improve"] = nullptr;  // undefined: no inverse pairs in the slice
  else
    j["p_improve"] = s.p_improve;
  j["delta_map_vs_original"] = s.delta_map;
  return j;
}

ordered_json slices_json(const std::map<std::string, MetricsSummary>& m) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : m) j[k] = summary_json(v);
  return j;
}

std::string slice_label(const PerQueryResult& r) {
  std::string s = r.click_entropy < 1.0 ? "ent<1" : "ent>=1";
  s += r.repeated ? ";rep" : ";new";
  s += ";pos=" + (r.session_position >= 5 ? std::string("5+")
                                          : std::to_string(r.session_position));
  return s;
}

}  // namespace

std::string report_json(const ModelEvaluation& ev) {
  ordered_json j;
  j["model"] = ev.model;
  j["overall"] = summary_json(ev.overall);
  j["slices"]["click_entropy"] = slices_json(ev.by_entropy);
  j["slices"]["repeated_query"] = slices_json(ev.by_repeated);
  j["slices"]["session_position"] = slices_json(ev.by_position);
  return j.dump(2) + "\n";
}

std::string per_query_csv(const ModelEvaluation& ev) {
  std::ostringstream out;
  out << "user,session,qid,slice,ap,rr,p1,avg_click,n_pairs,n_better\n";
  char buf[128];
  for (const auto& r : ev.queries) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", r.ap, r.rr, r.p1, r.avg_click);
    out << r.user << ',' << r.session_id << ',' << r.qid << ',' << slice_label(r) << ','
        << buf << ',' << r.n_pairs << ',' << r.n_better << '\n';
  }
  return out.str();
}

std::string comparison_table(const std::vector<ModelEvaluation>& evals) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-18s %8s %8s %8s %10s %9s %10s\n", "Model", "MAP",
                "MRR", "P@1", "Avg.Click", "#Better", "P-Improve");
  out << buf;
  out << std::string(76, '-') << '\n';
  for (const auto& ev : evals) {
    const auto& s = ev.overall;
    if (std::isnan(s.p_improve))
      std::snprintf(buf, sizeof(buf), "%-18s %8.4f %8.4f %8.4f %10.3f %9lld %10s\n",
                    ev.model.c_str(), s.map, s.mrr, s.p_at_1, s.avg_click, s.better, "-");
    else
      std::snprintf(buf, sizeof(buf), "%-18s %8.4f %8.4f %8.4f %10.3f %9lld %10.4f\n",
                    ev.model.c_str(), s.map, s.mrr, s.p_at_1, s.avg_click, s.better,
                    s.p_improve);
    out << buf;
  }
  out << '\n' << "Paired t-test on per-query AP (two-sided p):\n";
  for (std::size_t i = 0; i < evals.size(); ++i) {
    for (std::size_t j = 0; j < evals.size(); ++j) {
      if (i == j) continue;
      std::vector<double> a, b;
      for (const auto& q : evals[i].queries) a.push_back(q.ap);
      for (const auto& q : evals[j].queries) b.push_back(q.ap);
      if (a.size() != b.size()) continue;
      TTest t = paired_ttest(a, b);
      std::snprintf(buf, sizeof(buf), "  %-18s vs %-18s t=%+8.3f p=%.6f n=%d\n",
                    evals[i].model.c_str(), evals[j].model.c_str(), t.t, t.p, t.n);
      out << buf;
    }
  }
  return out.str();
}

std::string comparison_json(const std::vector<ModelEvaluation>& evals) {
  ordered_json j;
  ordered_json models = ordered_json::object();
  for (const auto& ev : evals) models[ev.model] = summary_json(ev.overall);
  j["models"] = std::move(models);
  ordered_json sig = ordered_json::object();
  for (std::size_t i = 0; i < evals.size(); ++i) {
    for (std::size_t j2 = 0; j2 < evals.size(); ++j2) {
      if (i == j2) continue;
      std::vector<double> a, b;
      for (const auto& q : evals[i].queries) a.push_back(q.ap);
      for (const auto& q : evals[j2].queries) b.push_back(q.ap);
      if (a.size() != b.size()) continue;
      TTest t = paired_ttest(a, b);
      ordered_json e;
      e["t"] = t.t;
      e["p"] = t.p;
      e["n"] = t.n;
      sig[evals[i].model + "|" + evals[j2].model] = std::move(e);
    }
  }
  j["paired_ttest_ap"] = std::move(sig);
  return j.dump(2) + "\n";
}

}  // namespace pserank
