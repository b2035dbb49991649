#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <vector>

#include "test_util.hpp"
#include "vrnmt/gradcheck.hpp"
#include "vrnmt/rng.hpp"
#include "vrnmt/tensor.hpp"

using namespace vrnmt;
using namespace testutil;

namespace {

std::size_t rand_dim(Rng& rng) {
  return static_cast<std::size_t>(rng.uniform_int(1, 10));
}

}  // namespace

TEST_CASE("forward values match plain double references") {
  Rng rng(301);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = rand_dim(rng), k = rand_dim(rng), n = rand_dim(rng);
    Tensor A = rand_mat(rng, m, k), B = rand_mat(rng, k, n);
    Tensor Bt = rand_mat(rng, n, k);
    Tensor x = rand_vec(rng, k), xm = rand_vec(rng, m);
    Graph g;

    {
      const Tensor& C = g.value(g.matmul(g.leaf(A), g.leaf(B)));
      REQUIRE(C.shape == mat_shape(m, n));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += A.at(i, p) * B.at(p, j);
          CHECK(std::fabs(C.at(i, j) - acc) <= 1e-12);
        }
    }
    {
      const Tensor& C = g.value(g.matmul_nt(g.leaf(A), g.leaf(Bt)));
      REQUIRE(C.shape == mat_shape(m, n));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += A.at(i, p) * Bt.at(j, p);
          CHECK(std::fabs(C.at(i, j) - acc) <= 1e-12);
        }
    }
    {
      const Tensor& y = g.value(g.matvec(g.leaf(A), g.leaf(x)));
      DVec ref = ref_matvec(tensor_rows(A), x.data);
      CHECK(max_abs_diff(y.data, ref) <= 1e-12);
    }
    {
      const Tensor& y = g.value(g.vecmat(g.leaf(xm), g.leaf(A)));
      REQUIRE(y.numel() == k);
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += xm.data[i] * A.at(i, j);
        CHECK(std::fabs(y.data[j] - acc) <= 1e-12);
      }
    }
    {
      // Leaf tensors must outlive their graph, so each block that declares
      // its own tensors also gets its own graph.
      Graph g2;
      Tensor u = rand_vec(rng, k), v = rand_vec(rng, k);
      Var a = g2.leaf(u), b = g2.leaf(v);
      CHECK(bit_equal(g2.value(g2.add(a, b)).data,
                      ref_add(u.data, v.data)));
      DVec d = g2.value(g2.sub(a, b)).data;
      for (std::size_t i = 0; i < k; ++i)
        CHECK(d[i] == u.data[i] - v.data[i]);
      CHECK(bit_equal(g2.value(g2.mul(a, b)).data,
                      ref_mul(u.data, v.data)));
    }
    {
      Graph g2;
      Tensor bias = rand_vec(rng, n);
      Tensor C = g2.value(g2.add_bias(g2.leaf(B), g2.leaf(bias)));
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j)
          CHECK(C.at(i, j) == B.at(i, j) + bias.data[j]);
    }
    {
      Graph g2;
      Tensor u = rand_vec(rng, k, 2.0);
      Var a = g2.leaf(u);
      CHECK(max_abs_diff(g2.value(g2.tanh_op(a)).data, ref_tanh(u.data)) <=
            1e-15);
      CHECK(max_abs_diff(g2.value(g2.sigmoid(a)).data,
                         ref_sigmoid(u.data)) <= 1e-15);
      DVec e(k);
      for (std::size_t i = 0; i < k; ++i) e[i] = std::exp(u.data[i]);
      CHECK(max_abs_diff(g2.value(g2.exp_op(a)).data, e) <= 1e-15);
    }
    {
      Graph g2;
      Tensor u(vec_shape(k));
      for (double& v : u.data) v = rng.uniform(0.5, 2.0);
      DVec y = g2.value(g2.log_op(g2.leaf(u))).data;
      for (std::size_t i = 0; i < k; ++i)
        CHECK(y[i] == std::log(u.data[i]));
    }
    {
      Graph g2;
      Tensor u = rand_vec(rng, k, 3.0);
      CHECK(max_abs_diff(g2.value(g2.softmax_row(g2.leaf(u))).data,
                         ref_softmax(u.data)) <= 1e-15);
      CHECK(max_abs_diff(g2.value(g2.log_softmax_row(g2.leaf(u))).data,
                         ref_log_softmax(u.data)) <= 1e-15);
    }
    {
      Graph g2;
      Tensor u = rand_vec(rng, m), v = rand_vec(rng, k), w = rand_vec(rng, n);
      CHECK(bit_equal(
          g2.value(g2.concat({g2.leaf(u), g2.leaf(v), g2.leaf(w)})).data,
          ref_concat({u.data, v.data, w.data})));
    }
    {
      Graph g2;
      std::vector<Tensor> rows;
      for (std::size_t i = 0; i < m; ++i) rows.push_back(rand_vec(rng, n));
      std::vector<Var> vars;
      for (auto& r : rows) vars.push_back(g2.leaf(r));
      Tensor S = g2.value(g2.stack_rows(vars));
      REQUIRE(S.shape == mat_shape(m, n));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          CHECK(S.at(i, j) == rows[i].data[j]);
      const std::size_t ri =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(m) - 1));
      CHECK(bit_equal(g2.value(g2.row(g2.leaf(A), ri)).data,
                      DVec(A.data.begin() + ri * k,
                           A.data.begin() + (ri + 1) * k)));
    }
    {
      Graph g2;
      Tensor u = rand_vec(rng, 8);
      CHECK(bit_equal(g2.value(g2.slice(g2.leaf(u), 2, 4)).data,
                      DVec(u.data.begin() + 2, u.data.begin() + 6)));
      CHECK(g2.scalar(g2.pick(g2.leaf(u), 3)) == u.data[3]);
      double acc = 0.0;
      for (double v : u.data) acc += v;
      CHECK(std::fabs(g2.scalar(g2.sum(g2.leaf(u))) - acc) <= 1e-12);
      CHECK(std::fabs(g2.scalar(g2.mean(g2.leaf(u))) - acc / 8.0) <= 1e-12);
      DVec sc = g2.value(g2.scale(g2.leaf(u), 2.5)).data;
      for (std::size_t i = 0; i < 8; ++i) CHECK(sc[i] == u.data[i] * 2.5);
      DVec ac = g2.value(g2.add_const(g2.leaf(u), -1.5)).data;
      for (std::size_t i = 0; i < 8; ++i) CHECK(ac[i] == u.data[i] - 1.5);
      DVec cl = g2.value(g2.clamp(g2.leaf(u), -0.25, 0.25)).data;
      for (std::size_t i = 0; i < 8; ++i)
        CHECK(cl[i] == std::min(std::max(u.data[i], -0.25), 0.25));
    }
  }
}

TEST_CASE("every primitive passes a finite-difference gradient check") {
  Rng rng(302);
  double worst = 0.0;
  auto track = [&](const GradCheckResult& r) {
    worst = std::max(worst, r.max_rel_err);
    CHECK(r.max_rel_err <= 1e-6);
  };
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = rand_dim(rng), k = rand_dim(rng), n = rand_dim(rng);
    const std::uint64_t ws = 1000 + static_cast<std::uint64_t>(trial);

    {
      Tensor A = rand_mat(rng, m, k), B = rand_mat(rng, k, n);
      NamedParams p{{"A", &A}, {"B", &B}};
      track(fd_check(p, [&](Graph& g) {
        return g.matmul(g.leaf(A), g.leaf(B));
      }, ws));
    }
    {
      Tensor A = rand_mat(rng, m, k), B = rand_mat(rng, n, k);
      NamedParams p{{"A", &A}, {"B", &B}};
      track(fd_check(p, [&](Graph& g) {
        return g.matmul_nt(g.leaf(A), g.leaf(B));
      }, ws));
    }
    {
      Tensor W = rand_mat(rng, m, k), x = rand_vec(rng, k);
      NamedParams p{{"W", &W}, {"x", &x}};
      track(fd_check(p, [&](Graph& g) {
        return g.matvec(g.leaf(W), g.leaf(x));
      }, ws));
    }
    {
      Tensor x = rand_vec(rng, m), A = rand_mat(rng, m, k);
      NamedParams p{{"x", &x}, {"A", &A}};
      track(fd_check(p, [&](Graph& g) {
        return g.vecmat(g.leaf(x), g.leaf(A));
      }, ws));
    }
    {
      Tensor a = rand_vec(rng, k), b = rand_vec(rng, k);
      NamedParams p{{"a", &a}, {"b", &b}};
      track(fd_check(p, [&](Graph& g) {
        return g.add(g.leaf(a), g.leaf(b));
      }, ws));
      track(fd_check(p, [&](Graph& g) {
        return g.sub(g.leaf(a), g.leaf(b));
      }, ws));
      track(fd_check(p, [&](Graph& g) {
        return g.mul(g.leaf(a), g.leaf(b));
      }, ws));
    }
    {
      Tensor M = rand_mat(rng, m, n), b = rand_vec(rng, n);
      NamedParams p{{"M", &M}, {"b", &b}};
      track(fd_check(p, [&](Graph& g) {
        return g.add_bias(g.leaf(M), g.leaf(b));
      }, ws));
    }
    {
      Tensor v = rand_vec(rng, k, 2.0);
      NamedParams p{{"v", &v}};
      track(fd_check(p, [&](Graph& g) { return g.tanh_op(g.leaf(v)); }, ws));
      track(fd_check(p, [&](Graph& g) { return g.sigmoid(g.leaf(v)); }, ws));
      track(fd_check(p, [&](Graph& g) { return g.exp_op(g.leaf(v)); }, ws));
      track(fd_check(p, [&](Graph& g) {
        return g.softmax_row(g.leaf(v));
      }, ws));
      track(fd_check(p, [&](Graph& g) {
        return g.log_softmax_row(g.leaf(v));
      }, ws));
      track(fd_check(p, [&](Graph& g) { return g.scale(g.leaf(v), -1.7); },
                     ws));
      track(fd_check(p, [&](Graph& g) {
        return g.add_const(g.leaf(v), 0.9);
      }, ws));
    }
    {
      Tensor M = rand_mat(rng, m, n, 3.0);
      NamedParams p{{"M", &M}};
      track(fd_check(p, [&](Graph& g) {
        return g.softmax_row(g.leaf(M));
      }, ws));
      track(fd_check(p, [&](Graph& g) {
        return g.log_softmax_row(g.leaf(M));
      }, ws));
    }
    {
      Tensor v(vec_shape(k));
      for (double& x : v.data) x = rng.uniform(0.5, 2.0);
      NamedParams p{{"v", &v}};
      track(fd_check(p, [&](Graph& g) { return g.log_op(g.leaf(v)); }, ws));
    }
    {
      // Keep every entry at least 0.05 away from the clamp kinks so the
      // two-sided difference stays on one linear piece.
      Tensor v(vec_shape(k));
      for (double& x : v.data) {
        do {
          x = rng.uniform(-2.0, 2.0);
        } while (std::fabs(x - 0.8) < 0.05 || std::fabs(x + 0.8) < 0.05);
      }
      NamedParams p{{"v", &v}};
      track(fd_check(p, [&](Graph& g) {
        return g.clamp(g.leaf(v), -0.8, 0.8);
      }, ws));
    }
    {
      Tensor a = rand_vec(rng, m), b = rand_vec(rng, k), c = rand_vec(rng, n);
      NamedParams p{{"a", &a}, {"b", &b}, {"c", &c}};
      track(fd_check(p, [&](Graph& g) {
        return g.concat({g.leaf(a), g.leaf(b), g.leaf(c)});
      }, ws));
      track(fd_check(p, [&](Graph& g) {
        std::vector<Var> rows{g.leaf(a), g.leaf(a)};
        return g.stack_rows(rows);
      }, ws));
    }
    {
      Tensor M = rand_mat(rng, m, k);
      Tensor v = rand_vec(rng, 8);
      NamedParams p{{"M", &M}, {"v", &v}};
      const std::size_t ri =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(m) - 1));
      track(fd_check(p, [&, ri](Graph& g) {
        return g.row(g.leaf(M), ri);
      }, ws));
      track(fd_check(p, [&](Graph& g) {
        return g.slice(g.leaf(v), 2, 5);
      }, ws));
      track(fd_check(p, [&](Graph& g) { return g.pick(g.leaf(v), 3); }, ws));
      track(fd_check(p, [&](Graph& g) { return g.sum(g.leaf(v)); }, ws));
      track(fd_check(p, [&](Graph& g) { return g.mean(g.leaf(M)); }, ws));
    }
  }
  MESSAGE("worst primitive rel err ", worst);
}

TEST_CASE("analytic gradients for hand-solved cases") {
  SUBCASE("d/dw sum(w*w) = 2w exactly") {
    Tensor w = Tensor::vec({1.0, 2.0});
    w.requires_grad = true;
    w.ensure_grad();
    w.zero_grad();
    Graph g;
    Var wv = g.leaf(w);
    g.backward(g.sum(g.mul(wv, wv)));
    CHECK(w.grad[0] == 2.0);
    CHECK(w.grad[1] == 4.0);
  }
  SUBCASE("d/dw sum(tanh(w)) at 0 = 1 exactly") {
    Tensor w = Tensor::vec({0.0});
    w.requires_grad = true;
    w.ensure_grad();
    w.zero_grad();
    Graph g;
    g.backward(g.sum(g.tanh_op(g.leaf(w))));
    CHECK(w.grad[0] == 1.0);
  }
  SUBCASE("x^2 at x=3 against central differences") {
    Tensor x = Tensor::vec({3.0});
    NamedParams p{{"x", &x}};
    auto eval = [&](bool with_grad) {
      Graph g;
      Var xv = g.leaf(x);
      Var loss = g.sum(g.mul(xv, xv));
      const double v = g.scalar(loss);
      if (with_grad) g.backward(loss);
      return v;
    };
    GradCheckResult r = check_gradient(p, eval);
    CHECK(r.entries_checked == 1);
    CHECK(r.max_rel_err <= 1e-8);
  }
  SUBCASE("softmax cross-entropy gradient is p - onehot") {
    Rng rng(303);
    Tensor z = rand_vec(rng, 5, 2.0);
    z.requires_grad = true;
    z.ensure_grad();
    z.zero_grad();
    const std::size_t gold = 2;
    Graph g;
    Var zv = g.leaf(z);
    Var loss = g.scale(g.pick(g.log_softmax_row(zv), gold), -1.0);
    g.backward(loss);
    DVec p = ref_softmax(z.data);
    for (std::size_t i = 0; i < 5; ++i) {
      const double expect = p[i] - (i == gold ? 1.0 : 0.0);
      CHECK(std::fabs(z.grad[i] - expect) <= 1e-12);
    }

    NamedParams params{{"z", &z}};
    auto eval = [&](bool with_grad) {
      Graph h;
      Var loss2 = h.scale(h.pick(h.log_softmax_row(h.leaf(z)), gold), -1.0);
      const double v = h.scalar(loss2);
      if (with_grad) h.backward(loss2);
      return v;
    };
    CHECK(check_gradient(params, eval).max_rel_err <= 1e-6);
  }
}

TEST_CASE("softmax value properties") {
  Graph g;
  SUBCASE("two equal logits split evenly") {
    Tensor t = Tensor::vec({0.0, 0.0});
    const Tensor& y = g.value(g.softmax_row(g.leaf(t)));
    CHECK(y.data[0] == 0.5);
    CHECK(y.data[1] == 0.5);
  }
  SUBCASE("huge logits do not overflow") {
    Tensor t = Tensor::vec({1000.0, 1000.0, 1000.0});
    const Tensor& y = g.value(g.softmax_row(g.leaf(t)));
    for (double v : y.data) CHECK(v == 1.0 / 3.0);
  }
  SUBCASE("matches long double evaluation") {
    Tensor t = Tensor::vec({1.0, 2.0, 3.0});
    const Tensor& y = g.value(g.softmax_row(g.leaf(t)));
    long double z = 0.0L;
    for (double v : t.data) z += expl(static_cast<long double>(v));
    for (std::size_t i = 0; i < 3; ++i) {
      const long double e = expl(static_cast<long double>(t.data[i])) / z;
      CHECK(std::fabs(y.data[i] - static_cast<double>(e)) <= 1e-12);
    }
  }
  SUBCASE("matrix rows each sum to one") {
    Rng rng(304);
    Tensor M = rand_mat(rng, 6, 7, 5.0);
    const Tensor& Y = g.value(g.softmax_row(g.leaf(M)));
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(Y.at(i, j) > 0.0);
        s += Y.at(i, j);
      }
      CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
  }
  SUBCASE("invariant under constant shifts") {
    Rng rng(305);
    Tensor a = rand_vec(rng, 9, 3.0);
    Tensor b = a;
    for (double& v : b.data) v += 123.456;
    // value() references can dangle once more nodes are pushed; copy out.
    DVec ya = g.value(g.softmax_row(g.leaf(a))).data;
    DVec yb = g.value(g.softmax_row(g.leaf(b))).data;
    CHECK(max_abs_diff(ya, yb) <= 1e-12);
  }
  SUBCASE("log softmax exponentiates to a distribution") {
    Rng rng(306);
    Tensor a = rand_vec(rng, 11, 4.0);
    const Tensor& y = g.value(g.log_softmax_row(g.leaf(a)));
    double s = 0.0;
    for (double v : y.data) s += std::exp(v);
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("graph mechanics") {
  SUBCASE("leaf calls on one tensor return one node") {
    Tensor t = Tensor::vec({1.0, 2.0});
    Graph g;
    Var a = g.leaf(t);
    Var b = g.leaf(t);
    CHECK(a.id == b.id);
    Tensor u = Tensor::vec({3.0, 4.0});
    CHECK(g.leaf(u).id != a.id);
  }
  SUBCASE("repeated use of a leaf accumulates its gradient") {
    Tensor t = Tensor::vec({1.0, 2.0, 3.0});
    t.requires_grad = true;
    t.ensure_grad();
    t.zero_grad();
    Graph g;
    Var v = g.leaf(t);
    g.backward(g.add(g.sum(v), g.sum(v)));
    for (double gv : t.grad) CHECK(gv == 2.0);
  }
  SUBCASE("gradients accumulate across graphs until zeroed") {
    Tensor t = Tensor::vec({5.0});
    t.requires_grad = true;
    t.ensure_grad();
    t.zero_grad();
    for (int rep = 0; rep < 3; ++rep) {
      Graph g;
      g.backward(g.sum(g.leaf(t)));
    }
    CHECK(t.grad[0] == 3.0);
    t.zero_grad();
    CHECK(t.grad[0] == 0.0);
  }
  SUBCASE("rebuilding the same graph is bit identical") {
    Rng rng(307);
    Tensor W = rand_mat(rng, 4, 5), x = rand_vec(rng, 5);
    W.requires_grad = true;
    x.requires_grad = true;
    auto run = [&](std::vector<double>& gw, std::vector<double>& gx) {
      W.ensure_grad();
      x.ensure_grad();
      W.zero_grad();
      x.zero_grad();
      Graph g;
      Var loss = g.sum(g.tanh_op(g.matvec(g.leaf(W), g.leaf(x))));
      g.backward(loss);
      gw = W.grad;
      gx = x.grad;
      return g.scalar(loss);
    };
    std::vector<double> gw1, gx1, gw2, gx2;
    const double v1 = run(gw1, gx1);
    const double v2 = run(gw2, gx2);
    CHECK(v1 == v2);
    CHECK(bit_equal(gw1, gw2));
    CHECK(bit_equal(gx1, gx2));
  }
  SUBCASE("shape mismatches are rejected") {
    Graph g;
    Tensor a = Tensor::vec({1.0, 2.0, 3.0});
    Tensor b = Tensor::vec({1.0, 2.0});
    Tensor M = Tensor::mat(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(g.add(g.leaf(a), g.leaf(b)), Error);
    CHECK_THROWS_AS(g.mul(g.leaf(a), g.leaf(b)), Error);
    CHECK_THROWS_AS(g.matmul(g.leaf(M), g.leaf(M)), Error);
    CHECK_THROWS_AS(g.matvec(g.leaf(M), g.leaf(b)), Error);
    CHECK_THROWS_AS(g.slice(g.leaf(a), 2, 5), Error);
    CHECK_THROWS_AS(g.pick(g.leaf(a), 3), Error);
    CHECK_THROWS_AS(g.row(g.leaf(M), 2), Error);
  }
  SUBCASE("backward requires a scalar") {
    Graph g;
    Tensor a = Tensor::vec({1.0, 2.0});
    a.requires_grad = true;
    CHECK_THROWS_AS(g.backward(g.leaf(a)), Error);
    CHECK_THROWS_AS(g.scalar(g.leaf(a)), Error);
  }
}

TEST_CASE("saturating inputs stay finite") {
  SUBCASE("sigmoid at +-1000") {
    Tensor t = Tensor::vec({1000.0, -1000.0});
    t.requires_grad = true;
    t.ensure_grad();
    t.zero_grad();
    Graph g;
    Var y = g.sigmoid(g.leaf(t));
    CHECK(g.value(y).data[0] == 1.0);
    CHECK(g.value(y).data[1] == 0.0);
    g.backward(g.sum(y));
    for (double gv : t.grad) {
      CHECK(std::isfinite(gv));
      CHECK(gv == 0.0);
    }
  }
  SUBCASE("tanh at +-1000") {
    Tensor t = Tensor::vec({1000.0, -1000.0});
    Graph g;
    const Tensor& y = g.value(g.tanh_op(g.leaf(t)));
    CHECK(y.data[0] == 1.0);
    CHECK(y.data[1] == -1.0);
  }
  SUBCASE("log clamps tiny inputs and zeroes their gradient") {
    Tensor t = Tensor::vec({0.0, 1e-310, 2.0});
    t.requires_grad = true;
    t.ensure_grad();
    t.zero_grad();
    Graph g;
    Var y = g.log_op(g.leaf(t));
    CHECK(g.value(y).data[0] == std::log(1e-300));
    CHECK(g.value(y).data[1] == std::log(1e-300));
    CHECK(g.value(y).data[2] == std::log(2.0));
    g.backward(g.sum(y));
    CHECK(t.grad[0] == 0.0);
    CHECK(t.grad[1] == 0.0);
    CHECK(std::fabs(t.grad[2] - 0.5) <= 1e-15);
  }
}

TEST_CASE("constants receive no gradient and contribute values") {
  Tensor t = Tensor::vec({1.0, 2.0});
  t.requires_grad = true;
  t.ensure_grad();
  t.zero_grad();
  Graph g;
  Var c = g.constant(Tensor::vec({10.0, 20.0}));
  Var loss = g.sum(g.mul(g.leaf(t), c));
  g.backward(loss);
  CHECK(g.scalar(loss) == 50.0);
  CHECK(t.grad[0] == 10.0);
  CHECK(t.grad[1] == 20.0);

  std::vector<double> raw{3.0, 4.0};
  Var cv = g.constant_vec(raw);
  CHECK(bit_equal(g.value(cv).data, raw));
}
