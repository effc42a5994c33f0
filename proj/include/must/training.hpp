#pragma once

// Reconstruction losses, Adam and the per-window training loop.

#include "must/autodiff.hpp"
#include "must/common.hpp"
#include "must/graph.hpp"
#include "must/model.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace must {

struct LossConfig {
  double epsilon = 10.0;
  double beta = 0.001;
  double eta = 0.5;
  double lambda = 0.0005;

  void validate() const {
    if (!(epsilon > 1.0)) throw ConfigError("epsilon must be > 1");
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must be in (0, 1)");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  }
};

namespace detail {
inline void require_same(const Matrix& a, Eigen::Index r, Eigen::Index c, const char* op) {
  if (a.rows() != r || a.cols() != c)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(r, c));
}

/// S: epsilon where a link exists, 1 elsewhere.
inline Matrix link_weights(const Matrix& a, double epsilon) {
  return a.unaryExpr([epsilon](double v) { return v != 0.0 ? epsilon : 1.0; });
}
}  // namespace detail

inline double weighted_rec_loss(const Matrix& a, const Matrix& pred, double epsilon) {
  detail::require_same(a, pred.rows(), pred.cols(), "weighted_rec_loss");
  return (detail::link_weights(a, epsilon).array() * (a - pred).array().square()).sum();
}

inline double sparse_rec_loss(const Matrix& a, const Matrix& pred, double epsilon, double beta) {
  return weighted_rec_loss(a, pred, epsilon) + beta * pred.cwiseAbs().sum();
}

inline double l2_reg(const ParamStore& ps) {
  double s = 0.0;
  for (const auto& p : ps) s += p->value.squaredNorm();
  return s;
}

inline double decay_weight(int t, int l, double eta) {
  if (t < 2 || t > l)
    throw std::invalid_argument("decay_weight: t=" + std::to_string(t) + " outside [2, " + std::to_string(l) + "]");
  return std::pow(eta, l - t);
}

/// Plain-value window objective; targets[k] pairs with preds[k] for t = k + 2.
inline double total_window_loss(const std::vector<Matrix>& preds, const std::vector<Matrix>& targets,
                                 const ParamStore& ps, const LossConfig& cfg) {
  if (preds.size() != targets.size() || preds.empty())
    throw std::invalid_argument("total_window_loss: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(targets.size()) + " targets");
  const int l = static_cast<int>(preds.size()) + 1;
  double s = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k)
    s += decay_weight(static_cast<int>(k) + 2, l, cfg.eta) * sparse_rec_loss(targets[k], preds[k], cfg.epsilon, cfg.beta);
  return s + cfg.lambda * l2_reg(ps);
}

namespace ad {

inline Var weighted_rec_loss(Var pred, const Matrix& a, double epsilon) {
  must::detail::require_same(a, pred.rows(), pred.cols(), "weighted_rec_loss");
  Tape& t = *pred.tape;
  Var diff = sub(pred, t.constant(a, "target"));
  return sum(mul_const(mul(diff, diff), must::detail::link_weights(a, epsilon)));
}

inline Var sparse_rec_loss(Var pred, const Matrix& a, double epsilon, double beta) {
  Var rec = weighted_rec_loss(pred, a, epsilon);
  if (beta == 0.0) return rec;
  return add(rec, scale(sum(abs(pred)), beta));
}

inline Var l2_reg(Tape& t, ParamStore& ps) {
  Var s = t.constant(Matrix::Zero(1, 1));
  for (auto& p : ps) {
    Var v = t.param(*p);
    s = add(s, sum(mul(v, v)));
  }
  return s;
}

inline Var total_window_loss(Tape& t, const std::vector<Var>& preds, const std::vector<Matrix>& targets, ParamStore& ps,
                             const LossConfig& cfg) {
  if (preds.size() != targets.size() || preds.empty())
    throw std::invalid_argument("total_window_loss: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(targets.size()) + " targets");
  const int l = static_cast<int>(preds.size()) + 1;
  Var s = t.constant(Matrix::Zero(1, 1));
  for (std::size_t k = 0; k < preds.size(); ++k)
    s = add(s, scale(sparse_rec_loss(preds[k], targets[k], cfg.epsilon, cfg.beta),
                     decay_weight(static_cast<int>(k) + 2, l, cfg.eta)));
  if (cfg.lambda == 0.0) return s;
  return add(s, scale(l2_reg(t, ps), cfg.lambda));
}

}  // namespace ad

struct AdamConfig {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam_beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam_beta2 must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  }
};

/// Moment buffers live in each Parameter; this holds the shared step counter.
struct AdamState {
  AdamConfig cfg;
  long step = 0;
};

/// Bias-corrected Adam update of every parameter; parameters without a gradient see g = 0.
inline void adam_step(ParamStore& ps, AdamState& st) {
  bool any = false;
  for (const auto& p : ps) any = any || p->grad_pending;
  if (!any) throw std::logic_error("adam_step: no gradients (run backward first)");
  ++st.step;
  const auto& c = st.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  for (auto& pp : ps) {
    Parameter& p = *pp;
    p.adam_m = c.beta1 * p.adam_m + (1.0 - c.beta1) * p.grad;
    p.adam_v = c.beta2 * p.adam_v + (1.0 - c.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= c.learning_rate * (p.adam_m.array() / bc1) / ((p.adam_v.array() / bc2).sqrt() + c.eps);
  }
}

struct TrainConfig {
  int epochs = 200;
  int window = 11;
  int train_samples = 50;
  std::uint64_t seed = 1;
  LossConfig loss;
  AdamConfig adam;
  int patience = 20;               // early stop after this many epochs without improvement
  double min_improvement = 1e-6;   // on the epoch's mean window loss
  std::string checkpoint_path;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (window < 2) throw ConfigError("window must be >= 2");
    if (train_samples < 1) throw ConfigError("train_samples must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(min_improvement >= 0.0)) throw ConfigError("min_improvement must be >= 0");
    loss.validate();
    adam.validate();
  }
};

struct LossRecord {
  int epoch;
  int window;
  double loss;
};

struct TrainResult {
  std::vector<LossRecord> log;
  std::vector<double> epoch_mean;
  int epochs_run = 0;
  bool early_stopped = false;
};

inline void write_loss_log(const std::vector<LossRecord>& log, const std::vector<std::string>& notes, std::ostream& os) {
  for (const auto& n : notes) os << "# " << n << '\n';
  os << "epoch,window,loss\n";
  for (const auto& r : log) os << r.epoch << ',' << r.window << ',' << format_g(r.loss, 17) << '\n';
}

/// One forward/backward/update on a single window; returns the window loss.
inline double train_window(MustModel& model, const PreparedSequence& seq, const WindowSample& w, AdamState& adam,
                           const LossConfig& loss) {
  model.params().zero_grad();
  Tape t;
  std::vector<Var> preds = model.forward(t, seq.history(w));
  Var l = ad::total_window_loss(t, preds, seq.targets(w), model.params(), loss);
  t.backward(l);
  adam_step(model.params(), adam);
  return l.scalar();
}

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Chronological pass over the training windows per epoch, one update per window.
inline TrainResult train(MustModel& model, const PreparedSequence& seq, const std::vector<WindowSample>& windows,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (windows.empty()) throw std::invalid_argument("train: no training windows");
  TrainResult res;
  AdamState adam{cfg.adam, 0};
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    double total = 0.0;
    for (std::size_t k = 0; k < windows.size(); ++k) {
      double l;
      try {
        l = train_window(model, seq, windows[k], adam, cfg.loss);
      } catch (const NumericError& err) {
        throw NumericError("training diverged at epoch " + std::to_string(e) + ", window " + std::to_string(k) +
                           " (optimizer step " + std::to_string(adam.step + 1) + "): " + err.what());
      }
      res.log.push_back({e, static_cast<int>(k), l});
      total += l;
    }
    const double mean = total / static_cast<double>(windows.size());
    res.epoch_mean.push_back(mean);
    res.epochs_run = e + 1;
    if (on_epoch) on_epoch(e, mean);
    if (mean < best - cfg.min_improvement) {
      best = mean;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  model.params().zero_grad();
  return res;
}

}  // namespace must
