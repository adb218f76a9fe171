#include "specgrid/autodiff.hpp"

#include <cmath>
#include <functional>

#include <doctest.h>

#include "specgrid/errors.hpp"
#include "specgrid/rng.hpp"

using namespace specgrid;

namespace {

DenseMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c,
                          double scale = 1.0) {
  DenseMatrix m(r, c);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

// Central finite differences of a scalar function of one input matrix.
DenseMatrix fd_gradient(const std::function<double(const DenseMatrix&)>& f,
                        DenseMatrix x, double step = 1e-6) {
  DenseMatrix g(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + step;
    const double hi = f(x);
    x.data[i] = keep - step;
    const double lo = f(x);
    x.data[i] = keep;
    g.data[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

void check_close(const DenseMatrix& a, const DenseMatrix& b, double tol) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom =
        std::max({std::fabs(a.data[i]), std::fabs(b.data[i]), 1e-8});
    CHECK(std::fabs(a.data[i] - b.data[i]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("matmul basics") {
  DenseMatrix a(2, 3);
  a.data = {1, 2, 3, 4, 5, 6};
  DenseMatrix b(3, 2);
  b.data = {7, 8, 9, 10, 11, 12};
  const DenseMatrix c = matmul(a, b);
  CHECK(c.rows == 2);
  CHECK(c.cols == 2);
  CHECK(c.data == std::vector<double>{58, 64, 139, 154});
  CHECK_THROWS_AS(matmul(a, a), DataError);
}

TEST_CASE("gradients of composite expressions match finite differences") {
  Rng rng(41);

  SUBCASE("matmul + leaky_relu + sum") {
    const DenseMatrix w0 = random_matrix(rng, 4, 3);
    const DenseMatrix x0 = random_matrix(rng, 5, 4);
    const auto f = [&](const DenseMatrix& w) {
      Tape t;
      const auto x = t.input(x0);
      const auto wv = t.input(w);
      return t.value(t.sum_all(t.leaky_relu(t.matmul(x, wv), 0.2))).data[0];
    };
    Tape t;
    const auto x = t.input(x0);
    const auto wv = t.input(w0, true);
    t.backward(t.sum_all(t.leaky_relu(t.matmul(x, wv), 0.2)));
    check_close(t.grad(wv), fd_gradient(f, w0), 1e-5);
  }

  SUBCASE("tanh, mul, add_rowvec, add_scalar") {
    const DenseMatrix a0 = random_matrix(rng, 4, 4);
    const DenseMatrix r0 = random_matrix(rng, 1, 4);
    const auto f = [&](const DenseMatrix& a) {
      Tape t;
      const auto av = t.input(a);
      const auto rv = t.input(r0);
      const auto s = t.input(DenseMatrix(1, 1, 0.3));
      const auto y = t.add_scalar(
          t.mul(t.tanh_op(av), t.add_rowvec(av, rv)), s);
      return t.value(t.sum_all(y)).data[0];
    };
    Tape t;
    const auto av = t.input(a0, true);
    const auto rv = t.input(r0);
    const auto s = t.input(DenseMatrix(1, 1, 0.3));
    t.backward(t.sum_all(
        t.add_scalar(t.mul(t.tanh_op(av), t.add_rowvec(av, rv)), s)));
    check_close(t.grad(av), fd_gradient(f, a0), 1e-5);
  }

  SUBCASE("gather, segment softmax with bias, segment sum") {
    const std::vector<std::size_t> src{0, 1, 2, 1, 0, 2, 2};
    const std::vector<std::size_t> dst{0, 0, 0, 1, 1, 2, 1};
    const std::vector<double> bias{0.0, -0.5, -1.0, 0.0, -0.2, 0.0, -2.0};
    const DenseMatrix h0 = random_matrix(rng, 3, 4);
    const DenseMatrix q0 = random_matrix(rng, 4, 1);
    const auto build = [&](Tape& t, Tape::Var h, Tape::Var q) {
      const auto scores = t.matmul(h, q);
      const auto logits =
          t.add(t.gather_rows(scores, dst), t.gather_rows(scores, src));
      const auto alpha = t.segment_softmax(logits, dst, 3, bias);
      const auto msg = t.mul_colvec(t.gather_rows(h, src), alpha);
      return t.sum_all(t.mul(t.segment_sum(msg, dst, 3),
                             t.segment_sum(msg, dst, 3)));
    };
    const auto f = [&](const DenseMatrix& h) {
      Tape t;
      return t.value(build(t, t.input(h), t.input(q0))).data[0];
    };
    Tape t;
    const auto hv = t.input(h0, true);
    const auto qv = t.input(q0, true);
    t.backward(build(t, hv, qv));
    check_close(t.grad(hv), fd_gradient(f, h0), 2e-5);

    const auto fq = [&](const DenseMatrix& q) {
      Tape t2;
      return t2.value(build(t2, t2.input(h0), t2.input(q))).data[0];
    };
    check_close(t.grad(qv), fd_gradient(fq, q0), 2e-5);
  }

  SUBCASE("masked row softmax, col, concat, rows") {
    DenseMatrix mask(3, 3, 1.0);
    mask.at(0, 2) = 0.0;
    mask.at(2, 0) = 0.0;
    const DenseMatrix g0 = random_matrix(rng, 3, 3);
    const DenseMatrix h0 = random_matrix(rng, 3, 2);
    const auto build = [&](Tape& t, Tape::Var g, Tape::Var h) {
      const auto alpha = t.masked_row_softmax(g, mask);
      // Distinct column scales keep the result sensitive to the gates.
      auto acc = t.mul_colvec(h, t.col(alpha, 0));
      acc = t.add(acc, t.scale(t.mul_colvec(h, t.col(alpha, 1)), 2.0));
      acc = t.add(acc, t.scale(t.mul_colvec(h, t.col(alpha, 2)), 3.0));
      const auto top = t.rows(acc, 0, 2);
      return t.sum_all(t.mul(top, top));
    };
    const auto f = [&](const DenseMatrix& g) {
      Tape t;
      return t.value(build(t, t.input(g), t.input(h0))).data[0];
    };
    Tape t;
    const auto gv = t.input(g0, true);
    const auto hv = t.input(h0, true);
    t.backward(build(t, gv, hv));
    check_close(t.grad(gv), fd_gradient(f, g0), 2e-5);
  }
}

TEST_CASE("softmax outputs are probability rows") {
  Rng rng(42);
  const std::vector<std::size_t> dst{0, 0, 1, 1, 1, 2};
  std::vector<double> bias(6);
  for (double& b : bias) b = -rng.next_double();
  Tape t;
  const auto logits = t.input(random_matrix(rng, 6, 1, 3.0));
  const auto alpha = t.segment_softmax(logits, dst, 3, bias);
  std::vector<double> sums(3, 0.0);
  for (std::size_t k = 0; k < 6; ++k) {
    const double a = t.value(alpha).data[k];
    CHECK(a >= 0.0);
    sums[dst[k]] += a;
  }
  for (double s : sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("unused branches leave no gradient") {
  Tape t;
  const auto a = t.input(DenseMatrix(2, 2, 1.0), true);
  const auto b = t.input(DenseMatrix(2, 2, 2.0), true);
  (void)t.mul(b, b);  // dead branch
  t.backward(t.sum_all(a));
  CHECK(t.grad(a).data == std::vector<double>(4, 1.0));
  CHECK(t.grad(b).size() == 0);
}

TEST_CASE("backward requires a scalar") {
  Tape t;
  const auto a = t.input(DenseMatrix(2, 2, 1.0), true);
  CHECK_THROWS_AS(t.backward(a), DataError);
}
