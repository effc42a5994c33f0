#include "must/autodiff.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace must;
using namespace must::testkit;

namespace {
Matrix m22(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

/// Random parameters for a unary/binary primitive check.
struct Fixture {
  ParamStore ps;
  Gen g{17};
  Parameter& add(const std::string& name, int r, int c, double scale = 1.0) {
    return ps.add(name, random_matrix(g, r, c, scale));
  }
};

/// Projects a matrix-valued op to a scalar with fixed random weights so every output entry matters.
Var project(Tape&, Var v, std::uint64_t seed = 3) {
  Gen g(seed);
  return ad::sum(ad::mul_const(v, random_matrix(g, static_cast<int>(v.rows()), static_cast<int>(v.cols()))));
}
}  // namespace

TEST(Primitives, FixedPoints) {
  Tape t;
  Var z = t.constant(Matrix::Zero(1, 1));
  EXPECT_EQ(ad::sigmoid(z).scalar(), 0.5);
  EXPECT_EQ(ad::tanh(z).scalar(), 0.0);
  EXPECT_EQ(ad::elu(z).scalar(), 0.0);
  EXPECT_EQ(ad::relu(z).scalar(), 0.0);
  EXPECT_EQ(ad::leaky_relu(t.constant(m22(-1, 2, 0, -5))).value(), m22(-0.2, 2, 0, -1));
}

TEST(Primitives, SoftmaxSingleActiveEntry) {
  Tape t;
  Matrix mask = Matrix::Zero(2, 3);
  mask(0, 1) = 1;
  mask(1, 2) = 1;
  const Matrix y = ad::masked_row_softmax(t.constant(Matrix::Constant(2, 3, 4.0)), mask).value();
  EXPECT_EQ(y(0, 1), 1.0);
  EXPECT_EQ(y(1, 2), 1.0);
  EXPECT_EQ(y.sum(), 2.0);
  EXPECT_THROW(ad::masked_row_softmax(t.constant(Matrix::Zero(1, 2)), Matrix::Zero(1, 2)), ShapeError);
}

TEST(Primitives, SoftmaxRowsSumToOne) {
  Gen g(1);
  for (int it = 0; it < 100; ++it) {
    const int r = uniform_int(g, 1, 8), c = uniform_int(g, 1, 8);
    Matrix mask = (random_matrix(g, r, c).array() > 0.0).cast<double>().matrix();
    for (int i = 0; i < r; ++i) mask(i, uniform_int(g, 0, c - 1)) = 1.0;
    Tape t;
    const Matrix y = ad::masked_row_softmax(t.constant(random_matrix(g, r, c, 50.0)), mask).value();
    for (int i = 0; i < r; ++i) EXPECT_NEAR(y.row(i).sum(), 1.0, 1e-12);
    EXPECT_TRUE((y.array() * (1.0 - mask.array())).isZero());
  }
}

TEST(Primitives, MatmulByHand) {
  Tape t;
  Matrix a(2, 3), b(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  b << 1, 0, 0, 1, 0, 0;
  EXPECT_EQ(ad::matmul(t.constant(a), t.constant(b)).value(), m22(1, 2, 4, 5));
  b << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(ad::matmul(t.constant(a), t.constant(b)).value(), m22(22, 28, 49, 64));
  EXPECT_EQ(ad::matmul_nt(t.constant(a), t.constant(a)).value(), m22(14, 32, 32, 77));
  EXPECT_THROW(ad::matmul(t.constant(a), t.constant(a)), ShapeError);
}

TEST(Primitives, ShapeErrors) {
  Tape t;
  Var a = t.constant(Matrix::Zero(2, 3)), b = t.constant(Matrix::Zero(3, 2));
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::mul(a, b), ShapeError);
  EXPECT_THROW(ad::concat_cols({a, b}), ShapeError);
  EXPECT_THROW(ad::slice_rows(a, 1, 2), ShapeError);
  EXPECT_THROW(ad::add_row(a, t.constant(Matrix::Zero(1, 2))), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  ParamStore ps;
  Gen g(2);
  Parameter& w = ps.add("W", random_matrix(g, 3, 4));
  Tape t;
  t.backward(ad::sum(t.param(w)));
  EXPECT_EQ(w.grad, Matrix::Ones(3, 4));
}

TEST(Backward, FrobeniusGivesTwiceW) {
  ParamStore ps;
  Gen g(3);
  Parameter& w = ps.add("W", random_matrix(g, 3, 2));
  Tape t;
  Var v = t.param(w);
  t.backward(ad::sum(ad::mul(v, v)));
  EXPECT_TRUE(w.grad.isApprox(2.0 * w.value, 1e-15));
}

TEST(Backward, UnusedParameterGetsZero) {
  ParamStore ps;
  Parameter& a = ps.add("a", Matrix::Ones(2, 2));
  Parameter& b = ps.add("b", Matrix::Ones(2, 2));
  Tape t;
  t.backward(ad::sum(t.param(a)));
  EXPECT_TRUE(b.grad.isZero());
}

TEST(Backward, Errors) {
  ParamStore ps;
  Parameter& a = ps.add("a", Matrix::Ones(2, 2));
  {
    Tape t;
    EXPECT_THROW(t.backward(t.param(a)), ShapeError);
  }
  {
    Tape t;
    Var l = ad::sum(t.param(a));
    t.backward(l);
    EXPECT_THROW(t.backward(l), std::logic_error);
  }
  {
    Tape t;  // gradients from the previous tape were never reset
    EXPECT_THROW(t.backward(ad::sum(t.param(a))), std::logic_error);
  }
  ps.zero_grad();
  Tape t;
  EXPECT_NO_THROW(t.backward(ad::sum(t.param(a))));
}

TEST(Backward, NonFiniteValuesNameTheOp) {
  Tape t;
  Var big = t.constant(Matrix::Constant(1, 1, 1e300));
  try {
    ad::scale(big, 1e300);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos);
  }
  EXPECT_THROW(t.constant(Matrix::Constant(1, 1, std::nan(""))), NumericError);
}

TEST(ParamStore, NamesAreUnique) {
  ParamStore ps;
  ps.add("x", Matrix::Zero(1, 1));
  EXPECT_THROW(ps.add("x", Matrix::Zero(1, 1)), std::invalid_argument);
  EXPECT_THROW(ps.get("y"), std::out_of_range);
  EXPECT_EQ(ps.get("x").grad.rows(), 1);
}

// ---------------------------------------------------------------------------
// finite-difference checks, one per primitive
// ---------------------------------------------------------------------------

namespace {
void expect_grad_ok(const std::function<Var(Tape&)>& f, ParamStore& ps, double tol = 1e-4) {
  const GradCheckReport r = grad_check(f, ps, 1e-5, 64);
  EXPECT_LT(r.max_rel_error, tol) << "worst at " << r.worst_param << "[" << r.worst_index << "] analytic "
                                  << r.worst_analytic << " numeric " << r.worst_numeric;
  EXPECT_GT(r.coordinates_checked, 0u);
}
}  // namespace

TEST(GradCheck, EveryPrimitive) {
  Fixture fx;
  Parameter& a = fx.add("a", 3, 4);
  Parameter& b = fx.add("b", 4, 2);
  Parameter& c = fx.add("c", 3, 4);
  Parameter& u = fx.add("u", 3, 1);
  Parameter& v = fx.add("v", 3, 1);
  Parameter& bias = fx.add("bias", 1, 4);
  Gen g(5);
  const Matrix k = random_matrix(g, 3, 4);
  const Matrix pool = random_matrix(g, 5, 3);
  Matrix mask = (random_matrix(g, 3, 3).array() > 0.0).cast<double>().matrix();
  mask.diagonal().setOnes();
  Vector w(3);
  w << 0.2, 0.5, 0.3;

  using F = std::function<Var(Tape&)>;
  const std::vector<std::pair<const char*, F>> cases = {
      {"matmul", [&](Tape& t) { return project(t, ad::matmul(t.param(a), t.param(b))); }},
      {"matmul_nt", [&](Tape& t) { return project(t, ad::matmul_nt(t.param(a), t.param(c))); }},
      {"transpose", [&](Tape& t) { return project(t, ad::transpose(t.param(a))); }},
      {"concat", [&](Tape& t) { return project(t, ad::concat_cols({t.param(a), t.param(u), t.param(c)})); }},
      {"slice_rows", [&](Tape& t) { return project(t, ad::slice_rows(t.param(a), 1, 2)); }},
      {"slice_cols", [&](Tape& t) { return project(t, ad::slice_cols(t.param(a), 1, 2)); }},
      {"add", [&](Tape& t) { return project(t, ad::add(t.param(a), t.param(c))); }},
      {"sub", [&](Tape& t) { return project(t, ad::sub(t.param(a), t.param(c))); }},
      {"mul", [&](Tape& t) { return project(t, ad::mul(t.param(a), t.param(c))); }},
      {"mul_const", [&](Tape& t) { return project(t, ad::mul_const(t.param(a), k)); }},
      {"const_matmul", [&](Tape& t) { return project(t, ad::const_matmul(pool, t.param(a))); }},
      {"scale", [&](Tape& t) { return project(t, ad::scale(t.param(a), -1.7)); }},
      {"add_row", [&](Tape& t) { return project(t, ad::add_row(t.param(a), t.param(bias))); }},
      {"add_outer", [&](Tape& t) { return project(t, ad::add_outer(t.param(u), t.param(v))); }},
      {"leaky_relu", [&](Tape& t) { return project(t, ad::leaky_relu(t.param(a))); }},
      {"elu", [&](Tape& t) { return project(t, ad::elu(t.param(a))); }},
      {"relu", [&](Tape& t) { return project(t, ad::relu(t.param(a))); }},
      {"sigmoid", [&](Tape& t) { return project(t, ad::sigmoid(t.param(a))); }},
      {"tanh", [&](Tape& t) { return project(t, ad::tanh(t.param(a))); }},
      {"abs", [&](Tape& t) { return project(t, ad::abs(t.param(a))); }},
      {"softmax", [&](Tape& t) { return project(t, ad::masked_row_softmax(ad::matmul_nt(t.param(a), t.param(c)), mask)); }},
      {"weighted_row_sum", [&](Tape& t) { return project(t, ad::weighted_row_sum(w, t.param(a))); }},
      {"repeat_rows", [&](Tape& t) { return project(t, ad::repeat_rows(ad::slice_rows(t.param(a), 0, 1), 5)); }},
  };
  for (const auto& [name, f] : cases) {
    SCOPED_TRACE(name);
    expect_grad_ok(f, fx.ps);
  }
}

TEST(GradCheck, LinearFunctionIsExact) {
  ParamStore ps;
  Gen g(6);
  ps.add("w", random_matrix(g, 4, 3));
  const Matrix k = random_matrix(g, 4, 3);
  const GradCheckReport r =
      grad_check([&](Tape& t) { return ad::sum(ad::mul_const(t.param(ps.get("w")), k)); }, ps, 1e-4, 100);
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.coordinates_checked, 12u);
}

TEST(GradCheck, CompositeGatLayer) {
  ParamStore ps;
  Gen g(7);
  const int n = 5, din = 6, d = 4;
  Parameter& w = ps.add("W", random_matrix(g, d, din, 0.6));
  Parameter& a = ps.add("a", random_matrix(g, 2 * d, 1, 0.6));
  const Matrix x = random_matrix(g, n, din);
  Matrix m = random_weights(g, n, 0.5);
  m.diagonal().setOnes();
  const Matrix mask = (m.array() > 0).cast<double>().matrix();
  auto f = [&](Tape& t) {
    Var h = ad::matmul_nt(t.constant(x), t.param(w));
    Var av = t.param(a);
    Var e = ad::leaky_relu(ad::mul_const(
        ad::add_outer(ad::matmul(h, ad::slice_rows(av, 0, d)), ad::matmul(h, ad::slice_rows(av, d, d))), m));
    return project(t, ad::elu(ad::matmul(ad::masked_row_softmax(e, mask), h)));
  };
  expect_grad_ok(f, ps);
}

TEST(GradCheck, DetectsCorruptedBackwardRule) {
  ParamStore ps;
  Gen g(8);
  Parameter& p = ps.add("p", random_matrix(g, 3, 3));
  // square with a backward rule that forgets the factor 2
  auto bad_square = [](Var a) {
    Matrix out = a.value().cwiseAbs2();
    return a.tape->push(std::move(out), "bad_square", true,
                        [a](Tape& tp, const Matrix& gr) { tp.accumulate(a.id, gr.cwiseProduct(tp.value(a.id))); });
  };
  const GradCheckReport r = grad_check([&](Tape& t) { return ad::sum(bad_square(t.param(p))); }, ps);
  EXPECT_GT(r.max_rel_error, 1e-2);
}

TEST(GradCheck, RejectsNondeterministicForward) {
  ParamStore ps;
  ps.add("p", Matrix::Ones(1, 1));
  int calls = 0;
  auto f = [&](Tape& t) { return ad::scale(ad::sum(t.param(ps.get("p"))), 1.0 + ++calls); };
  EXPECT_THROW(grad_check(f, ps), std::logic_error);
}

TEST(Forward, Deterministic) {
  Gen g(9);
  const Matrix a = random_matrix(g, 6, 6);
  auto run = [&] {
    Tape t;
    return ad::tanh(ad::matmul(t.constant(a), t.constant(a))).value();
  };
  EXPECT_EQ(run(), run());
}
