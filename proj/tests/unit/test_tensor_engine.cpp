#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sanar/gemm.hpp"
#include "sanar/graph.hpp"
#include "sanar/init.hpp"
#include "sanar/optimizer.hpp"
#include "sanar/rng.hpp"
#include "sanar/tensor.hpp"

using namespace sanar;

namespace {

Tensor<double> rand_tensor(std::vector<std::size_t> shape, Rng& rng,
                           double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
  return t;
}

/// Central-difference check of every parameter gradient against the tape.
/// build() must construct the same scalar loss on any graph it is given.
template <typename BuildFn>
void gradcheck(const std::vector<Parameter<double>*>& params, BuildFn build,
               double tol = 1e-6) {
  zero_grads(params);
  {
    Graph<double> g(true);
    auto loss = build(g);
    REQUIRE(g.value(loss).numel() == 1);
    g.backward(loss);
  }
  const double h = 1e-5;
  for (auto* p : params) {
    for (std::size_t j = 0; j < p->value.numel(); ++j) {
      const double keep = p->value[j];
      p->value[j] = keep + h;
      double lp;
      {
        Graph<double> g(false);
        lp = g.value(build(g))[0];
      }
      p->value[j] = keep - h;
      double lm;
      {
        Graph<double> g(false);
        lm = g.value(build(g))[0];
      }
      p->value[j] = keep;
      const double fd = (lp - lm) / (2 * h);
      const double an = p->grad[j];
      const double err = std::fabs(fd - an) /
                         std::max({1.0, std::fabs(fd), std::fabs(an)});
      CHECK(err < tol);
    }
  }
}

/// Straight-line attention oracle: explicit per-head scalar loops, no GEMM.
Tensor<double> naive_attention(const Tensor<double>& Q, const Tensor<double>& K,
                               const Tensor<double>& V,
                               const AttnSpec<double>& spec) {
  const std::size_t d = Q.cols(), h = spec.heads, dh = d / h;
  const std::size_t B = spec.q_offs.size() - 1;
  Tensor<double> out({Q.rows(), d});
  for (std::size_t e = 0; e < B; ++e) {
    const std::size_t q0 = spec.q_offs[e], mq = spec.q_offs[e + 1] - q0;
    const std::size_t k0 = spec.kv_offs[e], mk = spec.kv_offs[e + 1] - k0;
    for (std::size_t hd = 0; hd < h; ++hd) {
      for (std::size_t i = 0; i < mq; ++i) {
        std::size_t lo = 0, hi = mk;
        if (spec.mask == AttnSpec<double>::Mask::Causal) hi = i + 1;
        if (spec.mask == AttnSpec<double>::Mask::MixTargetSource &&
            i >= spec.boundaries[e])
          lo = spec.boundaries[e];
        std::vector<double> s(mk, 0.0);
        for (std::size_t j = lo; j < hi; ++j) {
          double dot = 0;
          for (std::size_t c = 0; c < dh; ++c)
            dot += Q.at(q0 + i, hd * dh + c) * K.at(k0 + j, hd * dh + c);
          s[j] = dot / std::sqrt(double(dh));
        }
        double mx = s[lo], z = 0;
        for (std::size_t j = lo; j < hi; ++j) mx = std::max(mx, s[j]);
        for (std::size_t j = lo; j < hi; ++j) z += std::exp(s[j] - mx);
        for (std::size_t c = 0; c < dh; ++c) {
          double acc = 0;
          for (std::size_t j = lo; j < hi; ++j)
            acc += std::exp(s[j] - mx) / z * V.at(k0 + j, hd * dh + c);
          out.at(q0 + i, hd * dh + c) = acc;
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("tensor_engine") {

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.numel() == 6);
  t.at(1, 2) = 5.0f;
  CHECK(t[5] == 5.0f);
  CHECK(t.row(1)[2] == 5.0f);

  CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.0f, 2.0f, 3.0f}), ShapeMismatch);

  Tensor<float> f({2, 2}, {1.5f, -2.0f, 0.25f, 4.0f});
  auto d = f.cast<double>();
  CHECK(d[1] == -2.0);
  CHECK(shape_string(f) == "[2,2]");
}

TEST_CASE("gemm matches a naive reference for all transpose combos") {
  Rng rng = split_rng(7, 0);
  const int m = 3, n = 4, k = 5;
  auto naive = [&](bool ta, bool tb, const Tensor<double>& A,
                   const Tensor<double>& B) {
    Tensor<double> C({std::size_t(m), std::size_t(n)});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0;
        for (int p = 0; p < k; ++p) {
          const double av = ta ? A.at(p, i) : A.at(i, p);
          const double bv = tb ? B.at(j, p) : B.at(p, j);
          acc += av * bv;
        }
        C.at(i, j) = acc;
      }
    return C;
  };
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      auto A = rand_tensor(ta ? std::vector<std::size_t>{5, 3}
                              : std::vector<std::size_t>{3, 5}, rng);
      auto B = rand_tensor(tb ? std::vector<std::size_t>{4, 5}
                              : std::vector<std::size_t>{5, 4}, rng);
      Tensor<double> C({3, 4});
      detail::gemm(ta, tb, m, n, k, 1.0, A.data(), B.data(), 0.0, C.data());
      auto R = naive(ta, tb, A, B);
      for (std::size_t i = 0; i < C.numel(); ++i)
        CHECK(C[i] == doctest::Approx(R[i]).epsilon(1e-12));

      // alpha/beta path
      Tensor<double> C2 = rand_tensor({3, 4}, rng);
      Tensor<double> C2_copy = C2;
      detail::gemm(ta, tb, m, n, k, 0.5, A.data(), B.data(), 2.0, C2.data());
      for (std::size_t i = 0; i < C2.numel(); ++i)
        CHECK(C2[i] == doctest::Approx(0.5 * R[i] + 2.0 * C2_copy[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("float gemm agrees with double gemm") {
  Rng rng = split_rng(11, 0);
  auto A = rand_tensor({8, 16}, rng);
  auto B = rand_tensor({16, 4}, rng);
  Tensor<double> Cd({8, 4});
  detail::gemm(false, false, 8, 4, 16, 1.0, A.data(), B.data(), 0.0, Cd.data());
  auto Af = A.cast<float>();
  auto Bf = B.cast<float>();
  Tensor<float> Cf({8, 4});
  detail::gemm(false, false, 8, 4, 16, 1.0f, Af.data(), Bf.data(), 0.0f,
               Cf.data());
  for (std::size_t i = 0; i < Cd.numel(); ++i)
    CHECK(double(Cf[i]) == doctest::Approx(Cd[i]).epsilon(1e-4));
}

TEST_CASE("softmax rows: frozen values, rows sum to one") {
  Graph<double> g(false);
  auto x = g.constant(Tensor<double>({1, 3}, {1.0, 2.0, 3.0}));
  auto y = g.softmax_rows(x);
  const Tensor<double>& v = g.value(y);
  CHECK(v[0] == doctest::Approx(0.0900305732).epsilon(1e-9));
  CHECK(v[1] == doctest::Approx(0.2447284711).epsilon(1e-9));
  CHECK(v[2] == doctest::Approx(0.6652409558).epsilon(1e-9));

  Rng rng = split_rng(3, 0);
  auto big = g.constant(rand_tensor({7, 13}, rng, -30.0, 30.0));
  const Tensor<double>& s = g.value(g.softmax_rows(big));
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double z = 0;
    for (std::size_t c = 0; c < s.cols(); ++c) {
      z += s.at(r, c);
      CHECK(s.at(r, c) >= 0.0);
    }
    CHECK(z == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("layer_norm normalizes rows and applies affine") {
  Graph<double> g(false);
  auto x = g.constant(Tensor<double>({2, 4}, {1, 2, 3, 4, -5, 0, 5, 10}));
  auto gain = g.constant(Tensor<double>({4}, {1, 1, 1, 1}));
  auto bias = g.constant(Tensor<double>({4}, {0, 0, 0, 0}));
  const Tensor<double>& y = g.value(g.layer_norm(x, gain, bias));
  for (std::size_t r = 0; r < 2; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 4; ++c) mean += y.at(r, c);
    mean /= 4;
    for (std::size_t c = 0; c < 4; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    var /= 4;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps shrinks it slightly
  }

  auto gain2 = g.constant(Tensor<double>({4}, {2, 2, 2, 2}));
  auto bias2 = g.constant(Tensor<double>({4}, {1, 1, 1, 1}));
  const Tensor<double>& y2 = g.value(g.layer_norm(x, gain2, bias2));
  CHECK(y2.at(0, 0) == doctest::Approx(2 * y.at(0, 0) + 1).epsilon(1e-12));
}

TEST_CASE("argmax ties break toward the lowest index") {
  Tensor<float> t({2, 4}, {1, 5, 5, 2, 3, 3, 3, 3});
  CHECK(argmax_row(t, 0) == 1);
  CHECK(argmax_row(t, 1) == 0);
}

TEST_CASE("mul_rows zeroes masked rows bitwise") {
  Graph<float> g(false);
  auto x = g.constant(Tensor<float>({2, 3}, {1.5f, -2.f, 3.f, 4.f, 5.f, -6.f}));
  auto y = g.mul_rows(x, {0.f, 1.f});
  const Tensor<float>& v = g.value(y);
  for (std::size_t c = 0; c < 3; ++c) CHECK(v.at(0, c) == 0.0f);
  for (std::size_t c = 0; c < 3; ++c) CHECK(v.at(1, c) == g.value(x).at(1, c));
}

TEST_CASE("cross entropy: frozen value, exact masking, empty mask throws") {
  Graph<double> g(true);
  Parameter<double> logits("l", Tensor<double>({2, 2}, {0, 0, 3, -1}));
  auto l = g.param(logits);
  auto ce = g.cross_entropy_rows(l, {0, 1}, {1.0, 0.0});
  CHECK(g.value(ce)[0] == doctest::Approx(0.69314718055994531).epsilon(1e-12));
  g.backward(ce);
  CHECK(logits.grad[2] == 0.0);  // masked row: bitwise zero gradient
  CHECK(logits.grad[3] == 0.0);
  CHECK(logits.grad[0] != 0.0);

  Graph<double> g2(false);
  auto l2 = g2.constant(Tensor<double>({1, 2}, {0.0, 1.0}));
  CHECK_THROWS_AS(g2.cross_entropy_rows(l2, {0}, {0.0}), AllPositionsMasked);
}

TEST_CASE("gradcheck: matmul and matmul_nt") {
  Rng rng = split_rng(21, 0);
  Parameter<double> a("a", rand_tensor({3, 4}, rng));
  Parameter<double> b("b", rand_tensor({4, 2}, rng));
  Tensor<double> R = rand_tensor({3, 2}, rng);
  gradcheck({&a, &b}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.matmul(g.param(a), g.param(b)), g.constant_view(&R)));
  });

  Parameter<double> bt("bt", rand_tensor({2, 4}, rng));
  gradcheck({&a, &bt}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.matmul_nt(g.param(a), g.param(bt)), g.constant_view(&R)));
  });
}

TEST_CASE("gradcheck: add, add_bias, scale, mul, sum") {
  Rng rng = split_rng(22, 0);
  Parameter<double> a("a", rand_tensor({3, 5}, rng));
  Parameter<double> b("b", rand_tensor({3, 5}, rng));
  Parameter<double> bias("bias", rand_tensor({5}, rng));
  Tensor<double> R = rand_tensor({3, 5}, rng);
  gradcheck({&a, &b, &bias}, [&](Graph<double>& g) {
    auto s = g.add(g.param(a), g.param(b));
    s = g.add_bias(s, g.param(bias));
    s = g.scale(s, 0.37);
    return g.sum(g.mul(s, g.constant_view(&R)));
  });
}

TEST_CASE("gradcheck: relu away from the kink") {
  Rng rng = split_rng(23, 0);
  Tensor<double> v = rand_tensor({4, 4}, rng);
  for (std::size_t i = 0; i < v.numel(); ++i)
    if (std::fabs(v[i]) < 0.1) v[i] += v[i] >= 0 ? 0.2 : -0.2;
  Parameter<double> a("a", v);
  Tensor<double> R = rand_tensor({4, 4}, rng);
  gradcheck({&a}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.relu(g.param(a)), g.constant_view(&R)));
  });
}

TEST_CASE("gradcheck: layer_norm") {
  Rng rng = split_rng(24, 0);
  Parameter<double> a("a", rand_tensor({3, 6}, rng));
  Parameter<double> gain("g", rand_tensor({6}, rng, 0.5, 1.5));
  Parameter<double> bias("b", rand_tensor({6}, rng));
  Tensor<double> R = rand_tensor({3, 6}, rng);
  gradcheck({&a, &gain, &bias}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.layer_norm(g.param(a), g.param(gain), g.param(bias)),
                       g.constant_view(&R)));
  }, 1e-5);
}

TEST_CASE("gradcheck: softmax_rows") {
  Rng rng = split_rng(25, 0);
  Parameter<double> a("a", rand_tensor({3, 7}, rng, -2.0, 2.0));
  Tensor<double> R = rand_tensor({3, 7}, rng);
  gradcheck({&a}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.softmax_rows(g.param(a)), g.constant_view(&R)));
  });
}

TEST_CASE("gradcheck: embedding_rows with repeated ids") {
  Rng rng = split_rng(26, 0);
  Parameter<double> table("emb", rand_tensor({6, 4}, rng));
  std::vector<int> ids = {0, 3, 3, 5, 0};
  Tensor<double> R = rand_tensor({5, 4}, rng);
  gradcheck({&table}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.embedding_rows(g.param(table), ids), g.constant_view(&R)));
  });
}

TEST_CASE("gradcheck: slices, concat, mul_rows") {
  Rng rng = split_rng(27, 0);
  Parameter<double> a("a", rand_tensor({4, 8}, rng));
  Tensor<double> R1 = rand_tensor({4, 3}, rng);
  gradcheck({&a}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.slice_cols(g.param(a), 2, 3), g.constant_view(&R1)));
  });

  Tensor<double> R2 = rand_tensor({2, 8}, rng);
  gradcheck({&a}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.slice_rows(g.param(a), 1, 2), g.constant_view(&R2)));
  });

  Parameter<double> b("b", rand_tensor({4, 5}, rng));
  Tensor<double> R3 = rand_tensor({4, 13}, rng);
  gradcheck({&a, &b}, [&](Graph<double>& g) {
    auto cat = g.concat_cols({g.param(a), g.param(b)});
    return g.sum(g.mul(cat, g.constant_view(&R3)));
  });

  Tensor<double> R4 = rand_tensor({4, 8}, rng);
  gradcheck({&a}, [&](Graph<double>& g) {
    return g.sum(g.mul(g.mul_rows(g.param(a), {0.0, 1.0, 1.0, 0.0}),
                       g.constant_view(&R4)));
  });
}

TEST_CASE("gradcheck: cross_entropy_rows with row mask") {
  Rng rng = split_rng(28, 0);
  Parameter<double> logits("l", rand_tensor({4, 5}, rng, -2.0, 2.0));
  std::vector<int> targets = {1, 0, 3, 2};
  std::vector<double> mask = {1.0, 0.0, 1.0, 1.0};
  gradcheck({&logits}, [&](Graph<double>& g) {
    return g.cross_entropy_rows(g.param(logits), targets, mask);
  });
}

TEST_CASE("gradcheck: composite loss mirrors the training objective") {
  Rng rng = split_rng(29, 0);
  Parameter<double> emb("emb", rand_tensor({10, 6}, rng));
  Parameter<double> w("w", rand_tensor({6, 6}, rng, -0.5, 0.5));
  Parameter<double> gain("g", rand_tensor({6}, rng, 0.8, 1.2));
  Parameter<double> bias("b", rand_tensor({6}, rng, -0.1, 0.1));
  std::vector<int> ids = {1, 4, 7, 2};
  std::vector<int> targets = {3, 0, 9, 5};
  std::vector<double> mask = {1.0, 1.0, 0.0, 1.0};
  gradcheck({&emb, &w, &gain, &bias}, [&](Graph<double>& g) {
    auto h = g.embedding_rows(g.param(emb), ids);
    h = g.layer_norm(g.matmul(h, g.param(w)), g.param(gain), g.param(bias));
    auto logits = g.matmul_nt(h, g.param(emb));  // tied projection
    auto tok = g.cross_entropy_rows(logits, targets, mask);
    auto len = g.cross_entropy_rows(g.slice_rows(logits, 0, 1), {2}, {1.0});
    return g.add(tok, g.scale(len, 1.0));
  }, 1e-5);
}

TEST_CASE("attention: fused op matches the naive oracle under every mask") {
  Rng rng = split_rng(31, 0);
  const std::size_t d = 6;
  Tensor<double> Q = rand_tensor({5, d}, rng);
  Tensor<double> K = rand_tensor({7, d}, rng);
  Tensor<double> V = rand_tensor({7, d}, rng);

  SUBCASE("full mask, rectangular blocks, heads 1 and 2") {
    for (std::size_t heads : {std::size_t(1), std::size_t(2)}) {
      AttnSpec<double> spec;
      spec.mask = AttnSpec<double>::Mask::Full;
      spec.heads = heads;
      spec.q_offs = {0, 2, 5};
      spec.kv_offs = {0, 4, 7};
      Graph<double> g(false);
      auto out = g.attention(g.constant_view(&Q), g.constant_view(&K),
                             g.constant_view(&V), spec);
      Tensor<double> want = naive_attention(Q, K, V, spec);
      REQUIRE(g.value(out).same_shape(want));
      for (std::size_t i = 0; i < want.numel(); ++i)
        CHECK(g.value(out)[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  SUBCASE("causal mask on square self-attention blocks") {
    Tensor<double> X = rand_tensor({5, d}, rng);
    AttnSpec<double> spec;
    spec.mask = AttnSpec<double>::Mask::Causal;
    spec.heads = 2;
    spec.q_offs = {0, 3, 5};
    spec.kv_offs = {0, 3, 5};
    Graph<double> g(false);
    auto xr = g.constant_view(&X);
    auto out = g.attention(xr, xr, xr, spec);
    Tensor<double> want = naive_attention(X, X, X, spec);
    for (std::size_t i = 0; i < want.numel(); ++i)
      CHECK(g.value(out)[i] == doctest::Approx(want[i]).epsilon(1e-12));
    // Row 0 of each block attends to exactly one key: itself.
    for (std::size_t r : {std::size_t(0), std::size_t(3)})
      for (std::size_t c = 0; c < d; ++c)
        CHECK(g.value(out).at(r, c) == doctest::Approx(X.at(r, c)).epsilon(1e-12));
  }

  SUBCASE("mix mask: target rows see all, source rows see only source") {
    Tensor<double> X = rand_tensor({7, d}, rng);
    AttnSpec<double> spec;
    spec.mask = AttnSpec<double>::Mask::MixTargetSource;
    spec.heads = 2;
    spec.q_offs = {0, 4, 7};
    spec.kv_offs = {0, 4, 7};
    spec.boundaries = {2, 3};  // second block is all-target
    Graph<double> g(false);
    auto xr = g.constant_view(&X);
    auto out = g.attention(xr, xr, xr, spec);
    Tensor<double> want = naive_attention(X, X, X, spec);
    for (std::size_t i = 0; i < want.numel(); ++i)
      CHECK(g.value(out)[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("attention: source rows are insensitive to target content under mix mask") {
  // The defining property of the mix mask: source positions must compute
  // exactly what they would with any other target block in place.
  Rng rng = split_rng(32, 0);
  const std::size_t d = 4, T = 3, M = 7;
  Tensor<double> X1 = rand_tensor({M, d}, rng);
  Tensor<double> X2 = X1;
  for (std::size_t r = 0; r < T; ++r)
    for (std::size_t c = 0; c < d; ++c) X2.at(r, c) = rand_unit(rng);
  AttnSpec<double> spec;
  spec.mask = AttnSpec<double>::Mask::MixTargetSource;
  spec.heads = 2;
  spec.q_offs = {0, M};
  spec.kv_offs = {0, M};
  spec.boundaries = {T};
  Graph<double> g(false);
  auto a1 = g.attention(g.constant_view(&X1), g.constant_view(&X1),
                        g.constant_view(&X1), spec);
  auto a2 = g.attention(g.constant_view(&X2), g.constant_view(&X2),
                        g.constant_view(&X2), spec);
  for (std::size_t r = T; r < M; ++r)
    for (std::size_t c = 0; c < d; ++c)
      CHECK(g.value(a1).at(r, c) == g.value(a2).at(r, c));
}

TEST_CASE("attention: saved weights are head-averaged probabilities") {
  Rng rng = split_rng(33, 0);
  const std::size_t d = 6;
  Tensor<double> X = rand_tensor({7, d}, rng);
  std::vector<Tensor<double>> maps;
  AttnSpec<double> spec;
  spec.mask = AttnSpec<double>::Mask::MixTargetSource;
  spec.heads = 2;
  spec.q_offs = {0, 4, 7};
  spec.kv_offs = {0, 4, 7};
  spec.boundaries = {2, 1};
  spec.save_weights = &maps;
  Graph<double> g(false);
  auto xr = g.constant_view(&X);
  g.attention(xr, xr, xr, spec);
  REQUIRE(maps.size() == 2);
  REQUIRE(maps[0].shape() == std::vector<std::size_t>{4, 4});
  REQUIRE(maps[1].shape() == std::vector<std::size_t>{3, 3});
  for (const auto& m : maps)
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < m.cols(); ++c) s += m.at(r, c);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  // Source queries put exactly zero mass on target keys.
  for (std::size_t e = 0; e < 2; ++e) {
    const std::size_t T = spec.boundaries[e];
    for (std::size_t r = T; r < maps[e].rows(); ++r)
      for (std::size_t c = 0; c < T; ++c) CHECK(maps[e].at(r, c) == 0.0);
  }
  // Head average of manually recomputed per-head softmax for one entry.
  {
    const std::size_t e = 1, q0 = 4, mk = 3, dh = d / 2;
    double avg = 0;
    for (std::size_t hd = 0; hd < 2; ++hd) {
      std::vector<double> s(mk);
      for (std::size_t j = 0; j < mk; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c)
          dot += X.at(q0 + 0, hd * dh + c) * X.at(q0 + j, hd * dh + c);
        s[j] = dot / std::sqrt(double(dh));
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0;
      for (double v : s) z += std::exp(v - mx);
      avg += 0.5 * std::exp(s[1] - mx) / z;
    }
    CHECK(maps[1].at(0, 1) == doctest::Approx(avg).epsilon(1e-12));
  }
}

TEST_CASE("gradcheck: attention under every mask, including aliased q=k=v") {
  Rng rng = split_rng(34, 0);
  const std::size_t d = 6;

  SUBCASE("full mask, distinct q/k/v parameters") {
    Parameter<double> qp("q", rand_tensor({5, d}, rng));
    Parameter<double> kp("k", rand_tensor({6, d}, rng));
    Parameter<double> vp("v", rand_tensor({6, d}, rng));
    Tensor<double> W = rand_tensor({5, d}, rng);
    AttnSpec<double> spec;
    spec.heads = 2;
    spec.q_offs = {0, 2, 5};
    spec.kv_offs = {0, 4, 6};
    gradcheck({&qp, &kp, &vp}, [&](Graph<double>& g) {
      auto out = g.attention(g.param(qp), g.param(kp), g.param(vp), spec);
      return g.sum(g.mul(out, g.constant_view(&W)));
    }, 1e-5);
  }

  SUBCASE("causal mask, self-attention through one parameter") {
    Parameter<double> xp("x", rand_tensor({5, d}, rng));
    Tensor<double> W = rand_tensor({5, d}, rng);
    AttnSpec<double> spec;
    spec.mask = AttnSpec<double>::Mask::Causal;
    spec.heads = 3;
    spec.q_offs = {0, 3, 5};
    spec.kv_offs = {0, 3, 5};
    gradcheck({&xp}, [&](Graph<double>& g) {
      auto x = g.param(xp);
      return g.sum(g.mul(g.attention(x, x, x, spec), g.constant_view(&W)));
    }, 1e-5);
  }

  SUBCASE("mix mask, self-attention") {
    Parameter<double> xp("x", rand_tensor({7, d}, rng));
    Tensor<double> W = rand_tensor({7, d}, rng);
    AttnSpec<double> spec;
    spec.mask = AttnSpec<double>::Mask::MixTargetSource;
    spec.heads = 2;
    spec.q_offs = {0, 4, 7};
    spec.kv_offs = {0, 4, 7};
    spec.boundaries = {2, 1};
    gradcheck({&xp}, [&](Graph<double>& g) {
      auto x = g.param(xp);
      return g.sum(g.mul(g.attention(x, x, x, spec), g.constant_view(&W)));
    }, 1e-5);
  }
}

TEST_CASE("gradcheck and forward: concat_rows and gather_rows") {
  Rng rng = split_rng(35, 0);
  Parameter<double> a("a", rand_tensor({4, 5}, rng));
  Parameter<double> b("b", rand_tensor({2, 5}, rng));

  {
    Graph<double> g(false);
    auto cat = g.concat_rows({g.param(a), g.param(b)});
    REQUIRE(g.value(cat).rows() == 6);
    CHECK(g.value(cat).at(0, 0) == a.value.at(0, 0));
    CHECK(g.value(cat).at(4, 3) == b.value.at(0, 3));
    auto got = g.gather_rows(cat, {5, 0, 0, 3});
    CHECK(g.value(got).at(0, 1) == b.value.at(1, 1));
    CHECK(g.value(got).at(1, 2) == a.value.at(0, 2));
    CHECK(g.value(got).at(2, 2) == a.value.at(0, 2));
    CHECK(g.value(got).at(3, 4) == a.value.at(3, 4));
  }

  Tensor<double> W = rand_tensor({4, 5}, rng);
  gradcheck({&a, &b}, [&](Graph<double>& g) {
    auto cat = g.concat_rows({g.param(a), g.param(b)});
    auto got = g.gather_rows(cat, {5, 0, 0, 3});
    return g.sum(g.mul(got, g.constant_view(&W)));
  });
}

TEST_CASE("attention: shape and mask validation") {
  Tensor<double> X({4, 6});
  Graph<double> g(false);
  auto x = g.constant_view(&X);

  AttnSpec<double> ok;
  ok.heads = 2;
  ok.q_offs = {0, 4};
  ok.kv_offs = {0, 4};
  CHECK_NOTHROW(g.attention(x, x, x, ok));

  AttnSpec<double> bad_heads = ok;
  bad_heads.heads = 4;  // 6 % 4 != 0
  CHECK_THROWS_AS(g.attention(x, x, x, bad_heads), ShapeMismatch);

  AttnSpec<double> bad_cover = ok;
  bad_cover.q_offs = {0, 3};
  CHECK_THROWS_AS(g.attention(x, x, x, bad_cover), ShapeMismatch);

  AttnSpec<double> empty_block = ok;
  empty_block.q_offs = {0, 0, 4};
  empty_block.kv_offs = {0, 2, 4};
  CHECK_THROWS_AS(g.attention(x, x, x, empty_block), ShapeMismatch);

  Tensor<double> Q({3, 6});
  AttnSpec<double> causal_rect = ok;
  causal_rect.mask = AttnSpec<double>::Mask::Causal;
  causal_rect.q_offs = {0, 3};
  CHECK_THROWS_AS(g.attention(g.constant_view(&Q), x, x, causal_rect),
                  ShapeMismatch);

  AttnSpec<double> bad_boundary = ok;
  bad_boundary.mask = AttnSpec<double>::Mask::MixTargetSource;
  bad_boundary.boundaries = {5};  // > block size 4
  CHECK_THROWS_AS(g.attention(x, x, x, bad_boundary), ShapeMismatch);

  AttnSpec<double> no_boundaries = ok;
  no_boundaries.mask = AttnSpec<double>::Mask::MixTargetSource;
  CHECK_THROWS_AS(g.attention(x, x, x, no_boundaries), ShapeMismatch);
}

TEST_CASE("gradients accumulate across backward calls until cleared") {
  Parameter<double> a("a", Tensor<double>({2}, {1.0, 2.0}));
  Graph<double> g1(true);
  auto loss1 = g1.sum(g1.param(a));
  g1.backward(loss1);
  CHECK(a.grad[0] == 1.0);
  Graph<double> g2(true);
  auto loss2 = g2.sum(g2.param(a));
  g2.backward(loss2);
  CHECK(a.grad[0] == 2.0);
  zero_grads<double>({&a});
  CHECK(a.grad[0] == 0.0);
}

TEST_CASE("non-recording graphs run forward only") {
  Parameter<float> a("a", Tensor<float>({2}, {1.0f, 2.0f}));
  Graph<float> g(false);
  auto s = g.sum(g.param(a));
  CHECK(g.value(s)[0] == 3.0f);
  CHECK_THROWS_AS(g.backward(s), Error);
  CHECK(a.grad[0] == 0.0f);
}

TEST_CASE("dropout: zero rate is identity, mask reused in backward") {
  Rng rng = split_rng(31, 0);
  Parameter<double> a("a", Tensor<double>({100, 10}));
  a.value.fill(1.0);

  Graph<double> g0(true);
  auto r0 = g0.param(a);
  CHECK(g0.dropout(r0, 0.0, rng).i == r0.i);

  Graph<double> g(true);
  auto out = g.dropout(g.param(a), 0.5, rng);
  const Tensor<double>& v = g.value(out);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < v.numel(); ++i) {
    CHECK((v[i] == 0.0 || v[i] == 2.0));
    if (v[i] == 0.0) ++zeros;
  }
  const double frac = double(zeros) / double(v.numel());
  CHECK(frac > 0.4);
  CHECK(frac < 0.6);

  g.backward(g.sum(out));
  for (std::size_t i = 0; i < v.numel(); ++i)
    CHECK(a.grad[i] == (v[i] == 0.0 ? 0.0 : 2.0));
}

TEST_CASE("adam: frozen first steps, gradients consumed") {
  Parameter<double> p("p", Tensor<double>({1}, {1.0}));
  AdamState<double> st({&p});
  p.grad[0] = 1.0;
  adam_step<double>({&p}, st, 1e-3);
  CHECK(p.value[0] == doctest::Approx(1.0 - 9.999999900000e-04).epsilon(1e-12));
  CHECK(p.grad[0] == 0.0);
  p.grad[0] = 1.0;
  adam_step<double>({&p}, st, 1e-3);
  CHECK(p.value[0] == doctest::Approx(1.0 - 1.9999999800000e-03).epsilon(1e-11));
  CHECK(st.step == 2);
}

TEST_CASE("init: xavier bounds and embedding scale") {
  Rng rng = split_rng(42, 2);
  auto w = xavier_uniform<float>(64, 32, rng);
  const double bound = std::sqrt(6.0 / (64 + 32));
  double mean = 0;
  for (std::size_t i = 0; i < w.numel(); ++i) {
    CHECK(std::fabs(double(w[i])) <= bound);
    mean += w[i];
  }
  CHECK(std::fabs(mean / double(w.numel())) < 0.01);

  auto e = normal_embedding<float>(1000, 16, rng);
  double var = 0;
  for (std::size_t i = 0; i < e.numel(); ++i) var += double(e[i]) * double(e[i]);
  var /= double(e.numel());
  CHECK(var == doctest::Approx(1.0 / 16.0).epsilon(0.05));
}

TEST_CASE("split_rng: reproducible per (seed, stream, index), distinct across") {
  Rng a = split_rng(42, 1, 5);
  Rng b = split_rng(42, 1, 5);
  CHECK(a() == b());
  Rng c = split_rng(42, 2, 5);
  Rng d = split_rng(43, 1, 5);
  Rng e = split_rng(42, 1, 6);
  CHECK(a() != c());
  CHECK(b() != d());
  CHECK(c() != e());
}

TEST_CASE("shape errors") {
  Graph<float> g(false);
  auto a = g.constant(Tensor<float>({2, 3}));
  auto b = g.constant(Tensor<float>({2, 3}));
  CHECK_THROWS_AS(g.matmul(a, b), ShapeMismatch);
  CHECK_THROWS_AS(g.slice_cols(a, 2, 2), ShapeMismatch);
  CHECK_THROWS_AS(g.mul_rows(a, {1.0f}), ShapeMismatch);
}

}  // TEST_SUITE
