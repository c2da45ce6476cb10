#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "gradcheck_cases.hpp"
#include "icrl/numkit/adamw.hpp"
#include "icrl/numkit/checkpoint.hpp"
#include "icrl/numkit/gradcheck.hpp"
#include "icrl/numkit/graph.hpp"
#include "icrl/numkit/rng.hpp"
#include "icrl/numkit/tensor.hpp"
#include "icrl/util.hpp"

using namespace icrl;
using namespace icrl::numkit;

TEST_CASE("rng: deterministic streams and independence") {
  Rng a = Rng::derive(42, "stream", 0);
  Rng b = Rng::derive(42, "stream", 0);
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c = Rng::derive(42, "stream", 1);
  Rng d = Rng::derive(42, "other", 0);
  Rng e = Rng::derive(43, "stream", 0);
  Rng base = Rng::derive(42, "stream", 0);
  const std::uint64_t first = base.next_u64();
  CHECK(c.next_u64() != first);
  CHECK(d.next_u64() != first);
  CHECK(e.next_u64() != first);
}

TEST_CASE("rng: uniform and uniform_int ranges") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = rng.uniform_int(5);
    CHECK(k >= 0);
    CHECK(k < 5);
  }
  CHECK_THROWS_AS(rng.uniform_int(0), ContractError);
}

TEST_CASE("rng: normal moments smoke") {
  Rng rng(11);
  const int n = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("rng: dirichlet sums to one, categorical matches weights") {
  Rng rng(13);
  const Vector w = rng.dirichlet_uniform(6);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((w.array() > 0.0).all());

  Vector probs(2);
  probs << 0.2, 0.8;
  int count_one = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i)
    if (rng.categorical(probs) == 1) ++count_one;
  CHECK(std::abs(static_cast<double>(count_one) / n - 0.8) < 0.02);
}

TEST_CASE("rng: permutation is a bijection") {
  Rng rng(17);
  auto perm = rng.permutation(50);
  std::vector<bool> seen(50, false);
  for (int idx : perm) {
    CHECK(!seen[static_cast<std::size_t>(idx)]);
    seen[static_cast<std::size_t>(idx)] = true;
  }
}

TEST_CASE("graph: scalar matmul 2*3=6 and softmax of equal logits") {
  Graph g;
  Var x = g.input("x", 1, 1);
  Var w = g.param("w", 1, 1);
  Var y = matmul(x, w);
  ParamStore ps;
  ps.insert("w", Matrix::Constant(1, 1, 3.0));
  NamedTensors in{{"x", Matrix::Constant(1, 1, 2.0)}};
  g.forward(in, ps);
  CHECK(g.value(y)(0, 0) == doctest::Approx(6.0).epsilon(1e-15));

  Graph g2;
  Var logits = g2.input("l", 1, 2);
  Var sm = softmax_rows(logits);
  g2.forward({{"l", Matrix::Zero(1, 2)}}, ParamStore{});
  CHECK(g2.value(sm)(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g2.value(sm)(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  // Stand-alone stable softmax helper agrees and is shift-invariant.
  Vector v(3);
  v << 1000.0, 1000.0, 1000.0;
  const Vector s = softmax(v);
  CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("graph: same graph re-evaluates under fresh bindings") {
  Graph g;
  Var x = g.input("x", 2, 3);
  Var w = g.param("w", 3, 2);
  Var b = g.param("b", 1, 2);
  Var out = add_row_vector(matmul(x, w), b);
  Var loss = mean(square(out));

  Rng rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    ParamStore ps;
    ps.insert("w", rng.normal_matrix(3, 2));
    ps.insert("b", rng.normal_matrix(1, 2));
    const Matrix xv = rng.normal_matrix(2, 3);
    g.forward({{"x", xv}}, ps);
    const Matrix expect =
        (xv * ps.at("w")).rowwise() + ps.at("b").row(0);
    CHECK((g.value(out) - expect).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(g.value(loss)(0, 0) ==
          doctest::Approx(expect.array().square().mean()).epsilon(1e-12));
  }
}

TEST_CASE("graph: d(x^2)/dx at x=3 is 6; constant loss has zero grads") {
  Graph g;
  Var x = g.param("x", 1, 1);
  Var loss = sum(square(x));
  ParamStore ps;
  ps.insert("x", Matrix::Constant(1, 1, 3.0));
  g.forward({}, ps);
  GradMap grads = g.backward(loss);
  CHECK(grads.at("x")(0, 0) == doctest::Approx(6.0).epsilon(1e-14));

  Graph g2;
  Var p = g2.param("p", 2, 2);
  Var c = g2.constant(Matrix::Constant(1, 1, 5.0));
  Var konst = sum(c);
  ParamStore ps2;
  ps2.insert("p", Matrix::Ones(2, 2));
  g2.forward({}, ps2);
  GradMap z = g2.backward(konst);
  CHECK(z.at("p").cwiseAbs().maxCoeff() == 0.0);
  (void)p;
}

TEST_CASE("graph: stop_gradient blocks the second factor exactly") {
  Graph g;
  Var p = g.param("p", 2, 2);
  Var loss = sum(mul(p, stop_gradient(p)));
  ParamStore ps;
  Matrix val(2, 2);
  val << 1.0, -2.0, 0.5, 3.0;
  ps.insert("p", val);
  g.forward({}, ps);
  GradMap grads = g.backward(loss);
  // d/dp sum(p * sg(p)) treats the sg branch as a constant equal to p.
  CHECK((grads.at("p") - val).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("graph: causal softmax masks strictly-future columns") {
  Graph g;
  Var s = g.input("s", 3, 3);
  Var att = causal_softmax(s);
  Matrix scores(3, 3);
  scores << 0.0, 99.0, 99.0,
            1.0, 1.0, 99.0,
            0.0, 0.0, 0.0;
  g.forward({{"s", scores}}, ParamStore{});
  const Matrix& y = g.value(att);
  CHECK(y(0, 0) == doctest::Approx(1.0));
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == 0.0);
  CHECK(y(1, 0) == doctest::Approx(0.5));
  CHECK(y(1, 1) == doctest::Approx(0.5));
  CHECK(y(1, 2) == 0.0);
  CHECK(y.row(2).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("graph: layer norm rows have zero mean and unit variance") {
  Graph g;
  Var x = g.input("x", 2, 8);
  Var ln = layer_norm_rows(x, 1e-5);
  Rng rng(5);
  const Matrix xv = rng.normal_matrix(2, 8) * 3.0;
  g.forward({{"x", xv}}, ParamStore{});
  const Matrix& y = g.value(ln);
  for (Index r = 0; r < 2; ++r) {
    CHECK(std::abs(y.row(r).mean()) < 1e-12);
    const double var = (y.row(r).array() - y.row(r).mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("graph: shape and contract violations throw") {
  Graph g;
  Var a = g.param("a", 2, 3);
  Var b = g.param("b", 2, 3);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, transpose(b)), ShapeError);
  CHECK_THROWS_AS(rows(a, 1, 5), ContractError);

  Graph other;
  Var c = other.param("c", 2, 3);
  CHECK_THROWS_AS(add(a, c), ContractError);

  ParamStore ps;
  ps.insert("a", Matrix::Zero(2, 3));
  ps.insert("b", Matrix::Zero(2, 3));
  // Non-scalar loss rejected.
  g.forward({}, ps);
  CHECK_THROWS_AS(g.backward(a), ContractError);

  // Missing input name.
  Graph g2;
  g2.input("x", 1, 1);
  CHECK_THROWS_AS(g2.forward({}, ParamStore{}), ContractError);

  // Wrong input shape.
  CHECK_THROWS_AS(g2.forward({{"x", Matrix::Zero(2, 2)}}, ParamStore{}),
                  ShapeError);
}

TEST_CASE("graph: non-finite op output raises NumericsError") {
  Graph g;
  Var x = g.input("x", 1, 1);
  Var bad = log(x);
  (void)bad;
  CHECK_THROWS_AS(g.forward({{"x", Matrix::Constant(1, 1, -1.0)}}, ParamStore{}),
                  NumericsError);
}

TEST_CASE("gradcheck: every primitive op passes at 1e-4") {
  for (const auto& c : icrl::testing::primitive_grad_cases()) {
    auto report = icrl::testing::run_grad_case(c, 20240801);
    INFO(c.name, " worst=", report.worst_param, " err=", report.max_rel_err);
    CHECK(report.pass);
  }
}

TEST_CASE("gradcheck: corrupted gradients are caught") {
  Graph g;
  Var p = g.param("p", 2, 2);
  Var loss = mean(square(p));
  ParamStore ps;
  Rng rng(99);
  ps.insert("p", rng.normal_matrix(2, 2));
  g.forward({}, ps);
  GradMap good = g.backward(loss);
  auto clean = finite_diff_check(g, loss, {}, ps, 1e-4);
  CHECK(clean.pass);

  GradMap corrupted = good;
  corrupted.at("p")(0, 1) += 0.25;
  auto caught = finite_diff_check(g, loss, {}, ps, 1e-4, 1e-5, &corrupted);
  CHECK(!caught.pass);
  CHECK(caught.worst_param == "p");
  CHECK(caught.worst_row == 0);
  CHECK(caught.worst_col == 1);
}

TEST_CASE("adamw: first step with unit gradient") {
  ParamStore ps;
  ps.insert("w", Matrix::Constant(1, 1, 1.0));
  GradMap grads{{"w", Matrix::Constant(1, 1, 1.0)}};
  OptimState opt;  // defaults: lr 1e-3, wd 1e-4
  adamw_step(ps, grads, opt);
  // mhat = 1, vhat = 1 after bias correction; update =
  // lr * (1/(1+eps) + wd*1) = 1.00009999e-3.
  CHECK(ps.at("w")(0, 0) == doctest::Approx(0.99899990001).epsilon(1e-12));
  CHECK(opt.step == 1);
}

TEST_CASE("adamw: decay-only when gradient absent") {
  ParamStore ps;
  ps.insert("w", Matrix::Constant(1, 1, 2.0));
  OptimState opt;
  adamw_step(ps, GradMap{}, opt);
  // p * (1 - lr*wd) = 2 * (1 - 1e-7)
  CHECK(ps.at("w")(0, 0) == doctest::Approx(1.9999998).epsilon(1e-12));
}

TEST_CASE("adamw: converges on a quadratic") {
  ParamStore ps;
  ps.insert("w", Matrix::Constant(1, 1, 0.0));
  OptimState opt;
  opt.learning_rate = 0.05;
  opt.weight_decay = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double w = ps.at("w")(0, 0);
    GradMap grads{{"w", Matrix::Constant(1, 1, 2.0 * (w - 3.0))}};
    adamw_step(ps, grads, opt);
  }
  CHECK(ps.at("w")(0, 0) == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adamw: rejects shape mismatch and unknown names") {
  ParamStore ps;
  ps.insert("w", Matrix::Zero(2, 2));
  OptimState opt;
  GradMap bad{{"w", Matrix::Zero(1, 2)}};
  CHECK_THROWS_AS(adamw_step(ps, bad, opt), ShapeError);
  GradMap unknown{{"zzz", Matrix::Zero(1, 1)}};
  CHECK_THROWS_AS(adamw_step(ps, unknown, opt), ContractError);
}

TEST_CASE("checkpoint: round trip is exact and byte-stable") {
  const std::string dir = "ckpt_test_tmp";
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/model.ckpt";

  Checkpoint ckpt;
  Rng rng(123);
  ckpt.metadata = "{\"kind\":\"unit\"}";
  ckpt.params.insert("beta", rng.normal_matrix(3, 2));
  ckpt.params.insert("alpha", rng.normal_matrix(1, 4));
  save_checkpoint(path, ckpt);

  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.metadata == ckpt.metadata);
  REQUIRE(loaded.params.size() == 2);
  CHECK((loaded.params.at("alpha") - ckpt.params.at("alpha")).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.params.at("beta") - ckpt.params.at("beta")).cwiseAbs().maxCoeff() == 0.0);

  const std::string path2 = dir + "/model2.ckpt";
  save_checkpoint(path2, loaded);
  CHECK(read_text_file(path) == read_text_file(path2));

  // Corrupt the magic -> FormatError.
  std::string bytes = read_text_file(path);
  bytes[0] = 'X';
  write_text_file(path, bytes);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  std::filesystem::remove_all(dir);
}

TEST_CASE("tensor helpers: argmax tie-break and requires") {
  Vector v(4);
  v << 1.0, 3.0, 3.0, 2.0;
  CHECK(argmax(v) == 1);  // lowest index wins the tie
  Vector one(1);
  one << -5.0;
  CHECK(argmax(one) == 0);
  CHECK_THROWS_AS(argmax(Vector()), ContractError);

  ParamStore ps;
  ps.insert("a", Matrix::Zero(1, 1));
  CHECK_THROWS_AS(ps.insert("a", Matrix::Zero(1, 1)), ContractError);
  CHECK_THROWS_AS(ps.at("missing"), ContractError);
}
