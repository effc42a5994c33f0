#pragma once

// The MUST forward pass: a two-layer weighted GAT for micro features,
// community (meso) and whole-graph (macro) pooling, fusion, a stacked LSTM over
// the window and a two-layer decoder whose output is refined into a symmetric,
// zero-diagonal link-probability matrix.

#include "must/autodiff.hpp"
#include "must/common.hpp"
#include "must/community.hpp"
#include "must/graph.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace must {

enum class Variant { Full, OnlyMicro, NoMicro, NoMeso, NoMacro };

inline constexpr std::array<Variant, 5> kAllVariants = {Variant::Full, Variant::OnlyMicro, Variant::NoMicro,
                                                         Variant::NoMeso, Variant::NoMacro};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::OnlyMicro: return "only_micro";
    case Variant::NoMicro: return "no_micro";
    case Variant::NoMeso: return "no_meso";
    case Variant::NoMacro: return "no_macro";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants)
    if (to_string(v) == s) return v;
  throw ConfigError("unknown variant '" + std::string(s) + "' (valid: full, only_micro, no_micro, no_meso, no_macro)");
}

struct ScaleMask {
  bool micro = true, meso = true, macro = true;
  int count() const { return int(micro) + int(meso) + int(macro); }
};

inline ScaleMask scales_of(Variant v) {
  switch (v) {
    case Variant::OnlyMicro: return {true, false, false};
    case Variant::NoMicro: return {false, true, true};
    case Variant::NoMeso: return {true, false, true};
    case Variant::NoMacro: return {true, true, false};
    default: return {true, true, true};
  }
}

struct ModelConfig {
  int num_nodes = 100;
  int gat_hidden = 100;
  int gat_out = 44;
  int lstm_hidden = 256;
  int lstm_layers = 2;
  int decoder_hidden = 256;
  double leaky_slope = 0.2;
  Variant variant = Variant::Full;
  std::uint64_t seed = 1;  // parameter init and Louvain visit orders

  int attribute_width() const { return num_nodes + kIpBits; }
  int fusion_width() const { return gat_out * scales_of(variant).count(); }

  void validate() const {
    auto pos = [](int v, const char* k) {
      if (v < 1) throw ConfigError(std::string(k) + " must be >= 1");
    };
    pos(num_nodes, "num_nodes");
    pos(gat_hidden, "gat_hidden");
    pos(gat_out, "gat_out");
    pos(lstm_hidden, "lstm_hidden");
    pos(lstm_layers, "lstm_layers");
    pos(decoder_hidden, "decoder_hidden");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must be in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// ---------------------------------------------------------------------------
// per-snapshot constant inputs
// ---------------------------------------------------------------------------

/// Meso pooling matrix P (n x n): row i holds the weights omega_k of i's community.
/// A community with no internal weight pools uniformly.
inline Matrix meso_pool_matrix(const Matrix& m, const Partition& p) {
  const Eigen::Index n = m.rows();
  if (p.node_count() != n || !p.valid()) throw std::invalid_argument("meso pooling: partition does not match graph");
  Matrix pool = Matrix::Zero(n, n);
  for (const auto& c : p.communities) {
    double denom = 0.0;
    std::vector<double> num(c.size(), 0.0);
    for (std::size_t a = 0; a < c.size(); ++a)
      for (int j : c) num[a] += m(c[a], j);
    for (double v : num) denom += v;
    for (int i : c)
      for (std::size_t a = 0; a < c.size(); ++a)
        pool(i, c[a]) = denom > 0.0 ? num[a] / denom : 1.0 / static_cast<double>(c.size());
  }
  return pool;
}

/// Macro pooling weights phi_k (degree share); uniform for a graph without weight.
inline Vector macro_pool_weights(const Matrix& m) {
  const Eigen::Index n = m.rows();
  const double total = m.sum();
  if (total <= 0.0) return Vector::Constant(n, 1.0 / static_cast<double>(n));
  return m.rowwise().sum() / total;
}

/// Everything the forward pass needs from one snapshot; independent of parameters.
struct SnapshotInput {
  Matrix attributes;   // n x (n + 32)
  Matrix att_weights;  // M with unit self-loops
  Matrix att_mask;     // 1 where attention is active
  Partition partition;
  Matrix meso_pool;
  Vector macro_weights;
};

inline SnapshotInput prepare_snapshot(const WeightedSnapshot& s, std::uint64_t louvain_seed) {
  SnapshotInput in;
  const Matrix& m = s.weights();
  in.attributes = build_attributes(s);
  in.att_weights = m;
  in.att_weights.diagonal().setOnes();
  in.att_mask = (in.att_weights.array() > 0.0).cast<double>().matrix();
  in.partition = louvain(m, louvain_seed);
  in.meso_pool = meso_pool_matrix(m, in.partition);
  in.macro_weights = macro_pool_weights(m);
  return in;
}

/// Snapshot inputs for a whole sequence, computed once and shared across epochs.
/// Snapshot t uses Louvain seed mix_seed(seed, t).
class PreparedSequence {
 public:
  PreparedSequence(SequencePtr seq, std::uint64_t seed) : seq_(std::move(seq)) {
    inputs_.reserve(seq_->size());
    for (std::size_t t = 0; t < seq_->size(); ++t) inputs_.push_back(prepare_snapshot((*seq_)[t], mix_seed(seed, t)));
  }

  const SequencePtr& sequence() const { return seq_; }
  const SnapshotInput& input(std::size_t t) const { return inputs_.at(t); }
  std::size_t size() const { return inputs_.size(); }

  /// History inputs of a window over this sequence.
  std::vector<const SnapshotInput*> history(const WindowSample& w) const {
    if (w.sequence() != seq_) throw std::invalid_argument("window does not belong to this sequence");
    std::vector<const SnapshotInput*> h;
    for (std::size_t k = 0; k < w.history_length(); ++k) h.push_back(&inputs_[w.start_index() + k]);
    return h;
  }

  /// Binarized targets A_2..A_l of a window, aligned with the forward outputs.
  std::vector<Matrix> targets(const WindowSample& w) const {
    std::vector<Matrix> t;
    for (std::size_t k = 1; k <= w.history_length(); ++k) t.push_back(binarize((*seq_)[w.start_index() + k]).values());
    return t;
  }

 private:
  SequencePtr seq_;
  std::vector<SnapshotInput> inputs_;
};

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

struct GatOutput {
  Var features;   // n x D
  Var attention;  // n x n
};

/// One weighted GAT layer. W is (D x D_in), a is (2D x 1).
inline GatOutput gat_layer(Tape& t, const SnapshotInput& in, Var x, Parameter& w, Parameter& a, double slope = 0.2) {
  const Eigen::Index d = w.value.rows();
  if (a.value.rows() != 2 * d || a.value.cols() != 1)
    throw ShapeError("gat_layer: attention vector " + shape_str(a.value.rows(), a.value.cols()) + " for width " +
                     std::to_string(d));
  Var wv = t.param(w), av = t.param(a);
  Var h = ad::matmul_nt(x, wv);
  Var s1 = ad::matmul(h, ad::slice_rows(av, 0, d));
  Var s2 = ad::matmul(h, ad::slice_rows(av, d, d));
  Var e = ad::leaky_relu(ad::mul_const(ad::add_outer(s1, s2), in.att_weights), slope);
  Var alpha = ad::masked_row_softmax(e, in.att_mask);
  return {ad::elu(ad::matmul(alpha, h)), alpha};
}

inline Var meso_pool(const SnapshotInput& in, Var micro) { return ad::const_matmul(in.meso_pool, micro); }

inline Var macro_pool(const SnapshotInput& in, Var micro) {
  return ad::repeat_rows(ad::weighted_row_sum(in.macro_weights, micro), micro.rows());
}

inline Var fuse(const std::vector<Var>& parts) {
  for (const auto& p : parts)
    if (p.rows() != parts.front().rows()) throw ShapeError("fuse: row count mismatch");
  return ad::concat_cols(parts);
}

struct LstmState {
  Var h;
  Var c;
};

/// One LSTM cell update. Gate weights are (H x (H + input)) over [h_prev || y].
inline LstmState lstm_step(Tape& t, Var y, const LstmState& prev, ParamStore& ps, const std::string& prefix) {
  Var hx = ad::concat_cols({prev.h, y});
  auto gate = [&](const char* g) {
    return ad::add_row(ad::matmul_nt(hx, t.param(ps.get(prefix + ".W_" + g))), t.param(ps.get(prefix + ".b_" + g)));
  };
  Var f = ad::sigmoid(gate("f"));
  Var i = ad::sigmoid(gate("i"));
  Var cand = ad::tanh(gate("C"));
  Var c = ad::add(ad::mul(f, prev.c), ad::mul(i, cand));
  Var o = ad::sigmoid(gate("o"));
  return {ad::mul(o, ad::tanh(c)), c};
}

/// Zero the diagonal, then average with the transpose.
inline Var refine(Var a) {
  Matrix off = Matrix::Ones(a.rows(), a.cols());
  off.diagonal().setZero();
  Var z = ad::mul_const(a, off);
  return ad::scale(ad::add(z, ad::transpose(z)), 0.5);
}

inline Matrix refine(const Matrix& a) {
  Tape t;
  return refine(t.constant(a)).value();
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

class MustModel {
 public:
  explicit MustModel(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    init();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Micro, meso and macro features of one snapshot plus the fused matrix.
  struct Scales {
    Var micro, meso, macro, fused;
    Var attention0, attention1;
  };

  Scales encode(Tape& t, const SnapshotInput& in) {
    const int n = cfg_.num_nodes;
    if (in.attributes.rows() != n || in.attributes.cols() != cfg_.attribute_width())
      throw ShapeError("model expects attributes " + shape_str(n, cfg_.attribute_width()) + ", got " +
                       shape_str(in.attributes.rows(), in.attributes.cols()));
    Scales s;
    Var x = t.constant(in.attributes, "attributes");
    GatOutput g0 = gat_layer(t, in, x, params_.get("gat0.W"), params_.get("gat0.a"), cfg_.leaky_slope);
    GatOutput g1 = gat_layer(t, in, g0.features, params_.get("gat1.W"), params_.get("gat1.a"), cfg_.leaky_slope);
    s.attention0 = g0.attention;
    s.attention1 = g1.attention;
    s.micro = g1.features;
    const ScaleMask sc = scales_of(cfg_.variant);
    std::vector<Var> parts;
    if (sc.micro) parts.push_back(s.micro);
    if (sc.meso) parts.push_back(s.meso = meso_pool(in, s.micro));
    if (sc.macro) parts.push_back(s.macro = macro_pool(in, s.micro));
    s.fused = fuse(parts);
    return s;
  }

  /// Refined predictions A^_2..A^_l for the l - 1 history snapshots of one window.
  std::vector<Var> forward(Tape& t, const std::vector<const SnapshotInput*>& history) {
    if (history.empty()) throw std::invalid_argument("forward: window has no history");
    const int n = cfg_.num_nodes, hdim = cfg_.lstm_hidden;
    std::vector<LstmState> state(static_cast<std::size_t>(cfg_.lstm_layers));
    for (auto& st : state) {
      st.h = t.constant(Matrix::Zero(n, hdim), "h0");
      st.c = t.constant(Matrix::Zero(n, hdim), "c0");
    }
    std::vector<Var> out;
    for (const SnapshotInput* in : history) {
      Var y = encode(t, *in).fused;
      for (int k = 0; k < cfg_.lstm_layers; ++k) {
        state[static_cast<std::size_t>(k)] = lstm_step(t, y, state[static_cast<std::size_t>(k)], params_, "lstm" + std::to_string(k));
        y = state[static_cast<std::size_t>(k)].h;
      }
      out.push_back(refine(decode(t, y)));
    }
    return out;
  }

  /// Final refined prediction for a window, as plain values.
  Matrix predict(const std::vector<const SnapshotInput*>& history) {
    Tape t;
    return forward(t, history).back().value();
  }

  Var decode(Tape& t, Var h) {
    Var z = ad::relu(ad::add_row(ad::matmul_nt(h, t.param(params_.get("dec.W1"))), t.param(params_.get("dec.b1"))));
    return ad::sigmoid(ad::add_row(ad::matmul_nt(z, t.param(params_.get("dec.W2"))), t.param(params_.get("dec.b2"))));
  }

  /// Re-draws every parameter from the seeded initializer.
  void init() {
    params_ = ParamStore();
    std::mt19937_64 rng(mix_seed(cfg_.seed, 0x5eedULL));
    auto glorot = [&](const std::string& name, int rows, int cols, int fan_in, int fan_out) {
      const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> u(-lim, lim);
      Matrix m(rows, cols);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
      params_.add(name, std::move(m));
    };
    auto zeros = [&](const std::string& name, int cols) { params_.add(name, Matrix::Zero(1, cols)); };

    const int din = cfg_.attribute_width();
    glorot("gat0.W", cfg_.gat_hidden, din, din, cfg_.gat_hidden);
    glorot("gat0.a", 2 * cfg_.gat_hidden, 1, 2 * cfg_.gat_hidden, 1);
    glorot("gat1.W", cfg_.gat_out, cfg_.gat_hidden, cfg_.gat_hidden, cfg_.gat_out);
    glorot("gat1.a", 2 * cfg_.gat_out, 1, 2 * cfg_.gat_out, 1);
    int in = cfg_.fusion_width();
    const int h = cfg_.lstm_hidden;
    for (int k = 0; k < cfg_.lstm_layers; ++k) {
      const std::string p = "lstm" + std::to_string(k);
      for (const char* g : {"f", "i", "C", "o"}) {
        glorot(p + ".W_" + g, h, h + in, h + in, h);
        zeros(p + ".b_" + g, h);
      }
      in = h;
    }
    glorot("dec.W1", cfg_.decoder_hidden, h, h, cfg_.decoder_hidden);
    zeros("dec.b1", cfg_.decoder_hidden);
    glorot("dec.W2", cfg_.num_nodes, cfg_.decoder_hidden, cfg_.decoder_hidden, cfg_.num_nodes);
    zeros("dec.b2", cfg_.num_nodes);
  }

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

// ---------------------------------------------------------------------------
// checkpoint
//
//   MUST-CHECKPOINT v1
//   # free-form comment lines
//   hyper <key> <value>          (one per ModelConfig field, then extras)
//   param <name> <rows> <cols>
//   <rows lines of cols values, %.17g>
//   end
// ---------------------------------------------------------------------------

struct Checkpoint {
  ModelConfig model;
  std::map<std::string, std::string> extra;  // training-side hyperparameters
  std::vector<std::string> notes;
  std::vector<std::pair<std::string, Matrix>> params;
};

inline std::map<std::string, std::string> model_hyper(const ModelConfig& c) {
  return {{"num_nodes", std::to_string(c.num_nodes)},
          {"gat_hidden", std::to_string(c.gat_hidden)},
          {"gat_out", std::to_string(c.gat_out)},
          {"lstm_hidden", std::to_string(c.lstm_hidden)},
          {"lstm_layers", std::to_string(c.lstm_layers)},
          {"decoder_hidden", std::to_string(c.decoder_hidden)},
          {"leaky_slope", format_g(c.leaky_slope, 17)},
          {"variant", std::string(to_string(c.variant))},
          {"seed", std::to_string(c.seed)}};
}

inline void write_checkpoint(const MustModel& m, const std::map<std::string, std::string>& extra,
                             const std::vector<std::string>& notes, std::ostream& os) {
  os << "MUST-CHECKPOINT v1\n";
  for (const auto& n : notes) os << "# " << n << '\n';
  for (const auto& [k, v] : model_hyper(m.config())) os << "hyper " << k << ' ' << v << '\n';
  for (const auto& [k, v] : extra) os << "hyper " << k << ' ' << v << '\n';
  for (const auto& p : m.params()) {
    os << "param " << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) os << (c ? " " : "") << format_g(p->value(r, c), 17);
      os << '\n';
    }
  }
  os << "end\n";
  if (!os) throw DataError("checkpoint: write failed");
}

inline void write_checkpoint(const MustModel& m, const std::map<std::string, std::string>& extra,
                             const std::vector<std::string>& notes, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  write_checkpoint(m, extra, notes, f);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  Checkpoint ck;
  std::map<std::string, std::string> hyper;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> DataError {
    return DataError("checkpoint line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(is, line) || line != "MUST-CHECKPOINT v1") {
    lineno = 1;
    throw fail("expected header 'MUST-CHECKPOINT v1'");
  }
  ++lineno;
  bool ended = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.rfind("# ", 0) == 0) {
      ck.notes.push_back(line.substr(2));
      continue;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "hyper") {
      std::string k, v;
      if (!(ls >> k >> v)) throw fail("malformed hyper line");
      hyper[k] = v;
    } else if (tag == "param") {
      std::string name;
      Eigen::Index rows = 0, cols = 0;
      if (!(ls >> name >> rows >> cols) || rows < 1 || cols < 1) throw fail("malformed param line");
      Matrix v(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(is, line)) throw fail("truncated values for '" + name + "'");
        ++lineno;
        std::istringstream vs(line);
        for (Eigen::Index c = 0; c < cols; ++c) {
          std::string tok;
          if (!(vs >> tok)) throw fail("too few values for '" + name + "'");
          try {
            v(r, c) = std::stod(tok);
          } catch (const std::exception&) {
            throw fail("bad number '" + tok + "'");
          }
        }
        std::string extra;
        if (vs >> extra) throw fail("too many values for '" + name + "'");
      }
      ck.params.emplace_back(name, std::move(v));
    } else if (tag == "end") {
      ended = true;
      break;
    } else {
      throw fail("unexpected line '" + line + "'");
    }
  }
  if (!ended) throw fail("missing 'end'");

  auto take_int = [&](const char* k, int& dst) {
    auto it = hyper.find(k);
    if (it == hyper.end()) throw DataError(std::string("checkpoint: missing hyper '") + k + "'");
    dst = std::stoi(it->second);
    hyper.erase(it);
  };
  take_int("num_nodes", ck.model.num_nodes);
  take_int("gat_hidden", ck.model.gat_hidden);
  take_int("gat_out", ck.model.gat_out);
  take_int("lstm_hidden", ck.model.lstm_hidden);
  take_int("lstm_layers", ck.model.lstm_layers);
  take_int("decoder_hidden", ck.model.decoder_hidden);
  try {
    ck.model.leaky_slope = std::stod(hyper.at("leaky_slope"));
    ck.model.variant = parse_variant(hyper.at("variant"));
    ck.model.seed = std::stoull(hyper.at("seed"));
  } catch (const std::out_of_range&) {
    throw DataError("checkpoint: missing model hyperparameter");
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  hyper.erase("leaky_slope");
  hyper.erase("variant");
  hyper.erase("seed");
  ck.extra = std::move(hyper);
  return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(f);
}

/// Rebuilds a model from a checkpoint, checking every parameter name and shape.
inline MustModel model_from_checkpoint(const Checkpoint& ck) {
  MustModel m(ck.model);
  if (ck.params.size() != m.params().size())
    throw DataError("checkpoint has " + std::to_string(ck.params.size()) + " parameters, model expects " +
                    std::to_string(m.params().size()));
  for (const auto& [name, value] : ck.params) {
    if (!m.params().contains(name)) throw DataError("checkpoint: unknown parameter '" + name + "'");
    Parameter& p = m.params().get(name);
    if (p.value.rows() != value.rows() || p.value.cols() != value.cols())
      throw DataError("checkpoint: parameter '" + name + "' has shape " + shape_str(value.rows(), value.cols()) +
                      ", expected " + shape_str(p.value.rows(), p.value.cols()));
    if (!value.allFinite()) throw DataError("checkpoint: non-finite value in '" + name + "'");
    p.value = value;
  }
  return m;
}

}  // namespace must
