#pragma once

// Ranking metrics over node pairs, two reference predictors and the
// per-variant train-and-evaluate runner.

#include "must/common.hpp"
#include "must/graph.hpp"
#include "must/model.hpp"
#include "must/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace must {

struct ScoredPair {
  int i;
  int j;
  double score;
  int label;
};

using ScoredPairs = std::vector<ScoredPair>;

/// All unordered pairs i < j with score pred(i, j) and label truth(i, j).
inline ScoredPairs collect_pairs(const Matrix& truth, const Matrix& pred) {
  const Eigen::Index n = truth.rows();
  if (truth.cols() != n || pred.rows() != n || pred.cols() != n)
    throw ShapeError("collect_pairs: shapes " + shape_str(truth.rows(), truth.cols()) + " and " +
                     shape_str(pred.rows(), pred.cols()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (truth(i, j) != truth(j, i)) throw std::invalid_argument("collect_pairs: target is not symmetric");
      if (pred(i, j) != pred(j, i)) throw std::invalid_argument("collect_pairs: prediction is not symmetric");
    }
  ScoredPairs out;
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (!std::isfinite(pred(i, j))) throw NumericError("collect_pairs: non-finite score");
      out.push_back({static_cast<int>(i), static_cast<int>(j), pred(i, j), truth(i, j) != 0.0 ? 1 : 0});
    }
  return out;
}

namespace detail {
/// Indices sorted by descending score; ties keep input order.
inline std::vector<std::size_t> rank_desc(const ScoredPairs& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a].score > s[b].score; });
  return idx;
}
}  // namespace detail

/// Probability that a random positive outscores a random negative, ties counting 1/2.
/// Empty when either class is absent.
inline std::optional<double> auc(const ScoredPairs& s) {
  const auto idx = detail::rank_desc(s);
  double pos = 0, neg = 0, concordant = 0;
  for (const auto& p : s) (p.label ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return std::nullopt;
  // Walk tie groups from the top; a positive beats every negative in later groups.
  double neg_above = 0;
  for (std::size_t a = 0; a < idx.size();) {
    std::size_t b = a;
    double gp = 0, gn = 0;
    while (b < idx.size() && s[idx[b]].score == s[idx[a]].score) {
      (s[idx[b]].label ? gp : gn) += 1;
      ++b;
    }
    concordant += gp * ((neg - neg_above - gn) + 0.5 * gn);
    neg_above += gn;
    a = b;
  }
  return concordant / (pos * neg);
}

/// Average precision with step interpolation. All pairs sharing a score form one
/// threshold step, so each positive in the group gets the precision at the group's end.
/// Empty when there is no positive.
inline std::optional<double> auprc(const ScoredPairs& s) {
  const auto idx = detail::rank_desc(s);
  double pos = 0;
  for (const auto& p : s) pos += p.label;
  if (pos == 0) return std::nullopt;
  double tp = 0, seen = 0, ap = 0;
  for (std::size_t a = 0; a < idx.size();) {
    std::size_t b = a;
    double gp = 0;
    while (b < idx.size() && s[idx[b]].score == s[idx[a]].score) {
      gp += s[idx[b]].label;
      ++b;
    }
    tp += gp;
    seen += static_cast<double>(b - a);
    ap += (gp / pos) * (tp / seen);
    a = b;
  }
  return ap;
}

// ---------------------------------------------------------------------------
// reference predictors
// ---------------------------------------------------------------------------

/// Common-neighbour counts on the union of the binarized history, scaled by the maximum.
inline Matrix baseline_common_neighbor(const std::vector<const WeightedSnapshot*>& history) {
  if (history.empty()) throw std::invalid_argument("common neighbour baseline: empty history");
  const int n = history.front()->n();
  Matrix u = Matrix::Zero(n, n);
  for (const auto* s : history) u = u.cwiseMax(binarize(*s).values());
  Matrix cn = u * u;
  cn.diagonal().setZero();
  const double mx = cn.maxCoeff();
  if (mx > 0.0) cn /= mx;
  return cn;
}

/// 1 where the last history snapshot has a link.
inline Matrix baseline_persistence(const std::vector<const WeightedSnapshot*>& history) {
  if (history.empty()) throw std::invalid_argument("persistence baseline: empty history");
  return binarize(*history.back()).values();
}

inline std::vector<const WeightedSnapshot*> history_of(const WindowSample& w) {
  std::vector<const WeightedSnapshot*> h;
  for (std::size_t k = 0; k < w.history_length(); ++k) h.push_back(&w.history(k));
  return h;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct SampleMetrics {
  std::size_t target_index = 0;
  std::optional<double> auc;
  std::optional<double> auprc;
};

struct MetricReport {
  std::string tag;
  std::vector<SampleMetrics> samples;
  double mean_auc = 0.0;  // over samples where the metric is defined
  double mean_auprc = 0.0;
  std::size_t auc_count = 0;
  std::size_t auprc_count = 0;

  void add(std::size_t target, const Matrix& truth, const Matrix& pred) {
    const ScoredPairs sp = collect_pairs(truth, pred);
    samples.push_back({target, auc(sp), auprc(sp)});
    finalize();
  }

  void finalize() {
    double sa = 0, sp = 0;
    auc_count = auprc_count = 0;
    for (const auto& s : samples) {
      if (s.auc) sa += *s.auc, ++auc_count;
      if (s.auprc) sp += *s.auprc, ++auprc_count;
    }
    mean_auc = auc_count ? sa / static_cast<double>(auc_count) : std::nan("");
    mean_auprc = auprc_count ? sp / static_cast<double>(auprc_count) : std::nan("");
  }
};

inline MetricReport evaluate_model(MustModel& model, const PreparedSequence& seq, const std::vector<WindowSample>& windows,
                                   std::string tag = "must") {
  MetricReport r;
  r.tag = std::move(tag);
  for (const auto& w : windows) r.add(w.target_index(), w.target().values(), model.predict(seq.history(w)));
  return r;
}

enum class Baseline { CommonNeighbor, Persistence };

inline MetricReport evaluate_baseline(Baseline b, const std::vector<WindowSample>& windows) {
  MetricReport r;
  r.tag = b == Baseline::CommonNeighbor ? "common_neighbor" : "persistence";
  for (const auto& w : windows) {
    const auto h = history_of(w);
    r.add(w.target_index(), w.target().values(),
          b == Baseline::CommonNeighbor ? baseline_common_neighbor(h) : baseline_persistence(h));
  }
  return r;
}

inline std::string format_metric(const std::optional<double>& v) { return v ? format_g(*v, 6) : "skipped"; }

/// `tag,target,auc,auprc` rows followed by a `tag,mean,...` row.
inline void write_report_csv(const std::vector<MetricReport>& reports, std::ostream& os, bool per_sample = true) {
  os << "method,sample,auc,auprc\n";
  for (const auto& r : reports) {
    if (per_sample)
      for (const auto& s : r.samples)
        os << r.tag << ',' << s.target_index << ',' << format_metric(s.auc) << ',' << format_metric(s.auprc) << '\n';
    os << r.tag << ",mean," << format_g(r.mean_auc, 6) << ',' << format_g(r.mean_auprc, 6) << '\n';
  }
}

// ---------------------------------------------------------------------------
// protocol runner
// ---------------------------------------------------------------------------

struct ExperimentResult {
  MetricReport model;
  MetricReport common_neighbor;
  MetricReport persistence;
  TrainResult training;
};

/// Windows of length l over the sequence, chronologically split into train and test.
inline DatasetSplit protocol_split(const SequencePtr& seq, const TrainConfig& tc) {
  const auto windows = sliding_windows(seq, static_cast<std::size_t>(tc.window));
  if (windows.size() <= static_cast<std::size_t>(tc.train_samples))
    throw DataError(std::to_string(seq->size()) + " snapshots give " + std::to_string(windows.size()) +
                    " windows of length " + std::to_string(tc.window) + "; need more than " +
                    std::to_string(tc.train_samples) + " for training plus a test set");
  return split(windows, static_cast<std::size_t>(tc.train_samples));
}

/// Trains a fresh model of the given configuration and evaluates it on the held-out windows.
inline ExperimentResult run_experiment(const SequencePtr& seq, ModelConfig mc, const TrainConfig& tc,
                                       const EpochCallback& on_epoch = {}) {
  tc.validate();
  mc.num_nodes = seq->front().n();
  const DatasetSplit sp = protocol_split(seq, tc);
  const PreparedSequence prep(seq, mc.seed);
  MustModel model(mc);
  ExperimentResult r;
  r.training = train(model, prep, sp.train, tc, on_epoch);
  r.model = evaluate_model(model, prep, sp.test, std::string(to_string(mc.variant)));
  r.common_neighbor = evaluate_baseline(Baseline::CommonNeighbor, sp.test);
  r.persistence = evaluate_baseline(Baseline::Persistence, sp.test);
  return r;
}

inline MetricReport run_ablation(const SequencePtr& seq, Variant v, ModelConfig mc, const TrainConfig& tc,
                                 const EpochCallback& on_epoch = {}) {
  mc.variant = v;
  return run_experiment(seq, mc, tc, on_epoch).model;
}

}  // namespace must
