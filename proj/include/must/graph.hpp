#pragma once

// Snapshot sequence data model: weighted and binary adjacency, node
// attributes, sliding windows, chronological split and the `UANET v1`
// dataset text format.

#include "must/common.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace must {

inline constexpr int kIpBits = 32;

/// Symmetric, non-negative, zero-diagonal link-weight matrix for one time step.
class WeightedSnapshot {
 public:
  WeightedSnapshot() = default;
  explicit WeightedSnapshot(int n) : w_(Matrix::Zero(n, n)) {}
  explicit WeightedSnapshot(Matrix weights) : w_(std::move(weights)) { validate(); }

  int n() const { return static_cast<int>(w_.rows()); }
  double operator()(int i, int j) const { return w_(i, j); }
  const Matrix& weights() const { return w_; }

  /// Sets both (i, j) and (j, i).
  void set(int i, int j, double w) {
    if (i == j) throw std::invalid_argument("snapshot: diagonal entries are fixed at zero");
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("snapshot: weight must be finite and >= 0");
    w_(i, j) = w;
    w_(j, i) = w;
  }

  int edge_count() const {
    int e = 0;
    for (int i = 0; i < n(); ++i)
      for (int j = i + 1; j < n(); ++j) e += w_(i, j) > 0.0;
    return e;
  }

  double total_weight() const { return w_.sum(); }

  friend bool operator==(const WeightedSnapshot& a, const WeightedSnapshot& b) {
    return a.w_.rows() == b.w_.rows() && a.w_ == b.w_;
  }

 private:
  void validate() const {
    if (w_.rows() != w_.cols()) throw ShapeError("snapshot must be square, got " + shape_str(w_.rows(), w_.cols()));
    for (int i = 0; i < n(); ++i) {
      if (w_(i, i) != 0.0) throw std::invalid_argument("snapshot: non-zero diagonal at " + std::to_string(i));
      for (int j = 0; j < n(); ++j) {
        double v = w_(i, j);
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("snapshot: invalid weight");
        if (v != w_(j, i)) throw std::invalid_argument("snapshot: asymmetric weights");
      }
    }
  }

  Matrix w_;
};

/// 0/1 link-existence matrix.
class BinaryAdjacency {
 public:
  BinaryAdjacency() = default;
  explicit BinaryAdjacency(Matrix a) : a_(std::move(a)) {}

  int n() const { return static_cast<int>(a_.rows()); }
  double operator()(int i, int j) const { return a_(i, j); }
  const Matrix& values() const { return a_; }

  /// nnz / (n (n - 1)), i.e. the fraction of ordered off-diagonal pairs that are linked.
  double density() const {
    const double n_ = n();
    return n_ < 2 ? 0.0 : a_.sum() / (n_ * (n_ - 1.0));
  }

  friend bool operator==(const BinaryAdjacency&, const BinaryAdjacency&) = default;

 private:
  Matrix a_;
};

inline BinaryAdjacency binarize(const WeightedSnapshot& m) {
  return BinaryAdjacency((m.weights().array() > 0.0).cast<double>().matrix());
}

inline double density(const WeightedSnapshot& m) { return binarize(m).density(); }

/// IPv4 address assigned to node k: 10.0.(k / 256).(k % 256).
inline std::uint32_t node_ip(int k) {
  if (k < 0 || k >= 65536) throw std::out_of_range("node index outside the 10.0.0.0/16 plan");
  return (10u << 24) | (static_cast<std::uint32_t>(k / 256) << 8) | static_cast<std::uint32_t>(k % 256);
}

inline std::vector<std::uint32_t> default_ip_plan(int n) {
  std::vector<std::uint32_t> ips(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) ips[static_cast<std::size_t>(k)] = node_ip(k);
  return ips;
}

/// Node attribute matrix X = [ip bits || M], width n + 32. Bits are most significant first.
inline Matrix build_attributes(const WeightedSnapshot& m, const std::vector<std::uint32_t>& ips) {
  const int n = m.n();
  if (static_cast<int>(ips.size()) < n)
    throw DataError("ip map covers " + std::to_string(ips.size()) + " of " + std::to_string(n) + " nodes");
  Matrix x(n, n + kIpBits);
  for (int i = 0; i < n; ++i) {
    const std::uint32_t ip = ips[static_cast<std::size_t>(i)];
    for (int b = 0; b < kIpBits; ++b) x(i, b) = static_cast<double>((ip >> (kIpBits - 1 - b)) & 1u);
  }
  x.rightCols(n) = m.weights();
  return x;
}

inline Matrix build_attributes(const WeightedSnapshot& m) { return build_attributes(m, default_ip_plan(m.n())); }

/// A snapshot sequence plus the metadata carried in the dataset header.
struct Dataset {
  int n = 0;
  double comm_radius = 0.0;
  std::uint64_t seed = 0;
  std::vector<WeightedSnapshot> snapshots;
  std::vector<std::string> notes;  // free-form `#` lines; not part of equality

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.n == b.n && a.comm_radius == b.comm_radius && a.seed == b.seed && a.snapshots == b.snapshots;
  }
};

using SequencePtr = std::shared_ptr<const std::vector<WeightedSnapshot>>;

/// l - 1 history snapshots followed by one target, as a view into a shared sequence.
class WindowSample {
 public:
  WindowSample(SequencePtr seq, std::size_t start, std::size_t length)
      : seq_(std::move(seq)), start_(start), length_(length) {}

  std::size_t history_length() const { return length_ - 1; }
  const WeightedSnapshot& history(std::size_t k) const { return (*seq_)[start_ + k]; }
  const WeightedSnapshot& target_snapshot() const { return (*seq_)[start_ + length_ - 1]; }
  BinaryAdjacency target() const { return binarize(target_snapshot()); }
  /// Index of the target inside the full sequence.
  std::size_t target_index() const { return start_ + length_ - 1; }
  std::size_t start_index() const { return start_; }
  int n() const { return target_snapshot().n(); }
  const SequencePtr& sequence() const { return seq_; }

 private:
  SequencePtr seq_;
  std::size_t start_;
  std::size_t length_;
};

inline std::vector<WindowSample> sliding_windows(SequencePtr seq, std::size_t l) {
  if (!seq) throw std::invalid_argument("sliding_windows: null sequence");
  if (l < 1) throw std::invalid_argument("sliding_windows: window length must be >= 1");
  if (seq->size() < l)
    throw DataError("sequence of " + std::to_string(seq->size()) + " snapshots is shorter than window " +
                    std::to_string(l));
  const int n = seq->front().n();
  for (const auto& s : *seq)
    if (s.n() != n) throw DataError("snapshots disagree on node count");
  std::vector<WindowSample> out;
  out.reserve(seq->size() - l + 1);
  for (std::size_t k = 0; k + l <= seq->size(); ++k) out.emplace_back(seq, k, l);
  return out;
}

inline std::vector<WindowSample> sliding_windows(std::vector<WeightedSnapshot> seq, std::size_t l) {
  return sliding_windows(std::make_shared<const std::vector<WeightedSnapshot>>(std::move(seq)), l);
}

struct DatasetSplit {
  std::vector<WindowSample> train;
  std::vector<WindowSample> test;
};

/// Chronological split: the first n_train samples train, the rest test.
inline DatasetSplit split(const std::vector<WindowSample>& samples, std::size_t n_train) {
  if (n_train == 0 || n_train >= samples.size())
    throw std::invalid_argument("split: n_train must be in [1, " + std::to_string(samples.size()) + ")");
  DatasetSplit s;
  s.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train), samples.end());
  return s;
}

// ---------------------------------------------------------------------------
// `UANET v1` text format
//
//   UANET v1 <n> <T> <r> <seed>
//   # optional comment lines (anywhere after the header)
//   S <t> <num_edges>
//   E <i> <j> <weight>        (i < j, weight at 9 significant digits)
// ---------------------------------------------------------------------------

inline std::string format_g(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline void write_dataset(const Dataset& ds, std::ostream& os) {
  os << "UANET v1 " << ds.n << ' ' << ds.snapshots.size() << ' ' << format_g(ds.comm_radius, 17) << ' ' << ds.seed
     << '\n';
  for (const auto& note : ds.notes) os << "# " << note << '\n';
  for (std::size_t t = 0; t < ds.snapshots.size(); ++t) {
    const auto& s = ds.snapshots[t];
    if (s.n() != ds.n) throw DataError("snapshot " + std::to_string(t) + " has wrong node count");
    os << "S " << t << ' ' << s.edge_count() << '\n';
    for (int i = 0; i < s.n(); ++i)
      for (int j = i + 1; j < s.n(); ++j)
        if (s(i, j) > 0.0) os << "E " << i << ' ' << j << ' ' << format_g(s(i, j), 9) << '\n';
  }
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  write_dataset(ds, os);
  if (!os) throw DataError("write failed for '" + path + "'");
}

namespace detail {

struct LineReader {
  std::istream& is;
  std::string line;
  std::size_t number = 0;
  std::vector<std::string>* notes = nullptr;

  bool next() {
    while (std::getline(is, line)) {
      ++number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        if (notes) notes->push_back(line.size() > 2 ? line.substr(2) : std::string());
        continue;
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("dataset line " + std::to_string(number) + ": " + what);
  }
};

}  // namespace detail

inline Dataset read_dataset(std::istream& is) {
  Dataset ds;
  detail::LineReader in{is, {}, 0, nullptr};
  if (!std::getline(is, in.line)) throw DataError("dataset: empty input");
  in.number = 1;
  if (!in.line.empty() && in.line.back() == '\r') in.line.pop_back();
  {
    std::istringstream h(in.line);
    std::string magic, version;
    long long n = -1, count = -1;
    std::string radius;
    if (!(h >> magic >> version >> n >> count >> radius >> ds.seed) || magic != "UANET" || version != "v1")
      in.fail("malformed header, expected 'UANET v1 <n> <T> <r> <seed>'");
    std::string extra;
    if (h >> extra) in.fail("trailing tokens in header");
    if (n < 1 || count < 0) in.fail("header counts out of range");
    ds.n = static_cast<int>(n);
    try {
      ds.comm_radius = std::stod(radius);
    } catch (const std::exception&) {
      in.fail("bad radius '" + radius + "'");
    }
    ds.snapshots.reserve(static_cast<std::size_t>(count));
    in.notes = &ds.notes;

    for (long long t = 0; t < count; ++t) {
      if (!in.next()) in.fail("unexpected end of file, expected snapshot " + std::to_string(t));
      std::istringstream s(in.line);
      char tag = 0;
      long long idx = -1, edges = -1;
      if (!(s >> tag >> idx >> edges) || tag != 'S' || (s >> extra)) in.fail("expected 'S <t> <num_edges>'");
      if (idx != t) in.fail("snapshot index " + std::to_string(idx) + " out of order");
      if (edges < 0) in.fail("negative edge count");
      Matrix w = Matrix::Zero(ds.n, ds.n);
      for (long long e = 0; e < edges; ++e) {
        if (!in.next()) in.fail("unexpected end of file inside snapshot " + std::to_string(t));
        std::istringstream el(in.line);
        long long i = -1, j = -1;
        std::string wtok;
        if (!(el >> tag >> i >> j >> wtok) || tag != 'E' || (el >> extra)) in.fail("expected 'E <i> <j> <weight>'");
        if (i < 0 || j < 0 || i >= ds.n || j >= ds.n)
          in.fail("edge index out of range (" + std::to_string(i) + ", " + std::to_string(j) + ") for n = " +
                  std::to_string(ds.n));
        if (i >= j) in.fail("edge must satisfy i < j");
        double v = 0.0;
        try {
          std::size_t used = 0;
          v = std::stod(wtok, &used);
          if (used != wtok.size()) throw std::invalid_argument(wtok);
        } catch (const std::exception&) {
          in.fail("bad weight '" + wtok + "'");
        }
        if (!std::isfinite(v) || v <= 0.0) in.fail("edge weight must be finite and positive");
        if (w(i, j) != 0.0) in.fail("duplicate edge");
        w(i, j) = w(j, i) = v;
      }
      ds.snapshots.emplace_back(std::move(w));
    }
  }
  if (in.next()) in.fail("trailing content after last snapshot");
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset '" + path + "'");
  return read_dataset(is);
}

}  // namespace must
