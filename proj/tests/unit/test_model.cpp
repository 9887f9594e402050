#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "sanar/checkpoint.hpp"
#include "sanar/corpus.hpp"
#include "sanar/model.hpp"
#include "sanar/optimizer.hpp"

using namespace sanar;

namespace {

ModelConfig tiny_config(std::size_t vocab = 50) {
  ModelConfig c;
  c.layers = 2;
  c.model_width = 16;
  c.heads = 2;
  c.ffn_width = 32;
  c.dropout = 0.0;
  c.max_len_class = 8;
  c.max_positions = 64;
  c.vocab_size = vocab;
  return c;
}

std::vector<int> ctx_of(std::vector<int> ids) {
  std::vector<int> v{Vocabulary::kLength};
  v.insert(v.end(), ids.begin(), ids.end());
  return v;
}

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

/// Central-difference check of every parameter gradient against the tape
/// (duplicated test-local helper; build() must be deterministic).
template <typename BuildFn>
void gradcheck_params(const std::vector<Parameter<double>*>& params,
                      BuildFn build, double tol) {
  zero_grads(params);
  {
    Graph<double> g(true);
    auto loss = build(g);
    REQUIRE(g.value(loss).numel() == 1);
    g.backward(loss);
  }
  const double h = 1e-5;
  double worst = 0.0;
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
      worst = std::max(worst, err);
    }
  }
  CHECK(worst < tol);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("soft-copy weights: frozen oracle, row sums, hard-copy limit") {
  // M = 3, N = 1, tau = 1: softmax([0, -1, -2]).
  auto w = soft_copy_weights<double>(3, 1, 1.0);
  REQUIRE(w.shape() == std::vector<std::size_t>{1, 3});
  CHECK(w.at(0, 0) == doctest::Approx(0.66524096).epsilon(1e-7));
  CHECK(w.at(0, 1) == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(w.at(0, 2) == doctest::Approx(0.09003057).epsilon(1e-7));

  for (auto [m, n, tau] : {std::tuple<std::size_t, std::size_t, double>{7, 3, 0.3},
                           {1, 5, 0.3},
                           {40, 12, 2.0}}) {
    auto ws = soft_copy_weights<double>(m, n, tau);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < m; ++i) {
        CHECK(ws.at(j, i) >= 0.0);
        s += ws.at(j, i);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  // tau -> 0+ with M = N degenerates to the identity (hard copy).
  auto hard = soft_copy_weights<double>(5, 5, 0.01);
  for (std::size_t j = 0; j < 5; ++j) CHECK(hard.at(j, j) > 1.0 - 1e-6);

  CHECK_THROWS_AS(soft_copy_weights<double>(0, 3, 0.3), ShapeMismatch);
  CHECK_THROWS_AS(soft_copy_weights<double>(3, 3, 0.0), Error);
}

TEST_CASE("sinusoidal positions: first row, ranges, distinct rows") {
  auto pe = sinusoidal_positions<double>(32, 16);
  for (std::size_t c = 0; c < 16; ++c)
    CHECK(pe.at(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(pe.at(3, 1) == doctest::Approx(std::cos(3.0)));
  for (std::size_t i = 0; i < pe.numel(); ++i) {
    CHECK(pe[i] <= 1.0);
    CHECK(pe[i] >= -1.0);
  }
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.softcopy_tau = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.vocab_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.max_len_class = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("encode: shapes, determinism, bounds, LENGTH prefix") {
  Model<float> m(ModelKind::Nar, tiny_config(), 42);
  const auto ctx = ctx_of({5, 6, 7, 8, 9});

  auto out1 = m.encode(ctx);
  auto out2 = m.encode(ctx);
  CHECK(out1.states.rows() == ctx.size());
  CHECK(out1.states.cols() == 16);
  CHECK(out1.length_logits.numel() == 8);
  CHECK(bitwise_equal(out1.states, out2.states));
  CHECK(bitwise_equal(out1.length_logits, out2.length_logits));

  const std::size_t n = predicted_length(out1.length_logits);
  CHECK(n >= 1);
  CHECK(n <= 8);

  std::vector<int> too_long(65, 5);
  too_long[0] = Vocabulary::kLength;
  CHECK_THROWS_AS(m.encode(too_long), ContextTooLong);
  CHECK_NOTHROW(m.encode(ctx_of(std::vector<int>(62, 5))));  // 63 total, fits

  CHECK_THROWS_AS(m.encode({5, 6, 7}), Error);  // no LENGTH prefix
  CHECK_THROWS_AS(m.encode({}), ShapeMismatch);
}

TEST_CASE("predicted length: argmax + 1, ties toward the shorter length") {
  Tensor<float> ll({4});
  ll[0] = 0.5f;
  ll[1] = 2.0f;
  ll[2] = 2.0f;
  ll[3] = -1.0f;
  CHECK(predicted_length(ll) == 2);  // index 1 wins the tie over index 2
}

TEST_CASE("soft_copy: output equals weights times states") {
  Model<float> m(ModelKind::Nar, tiny_config(), 42);
  auto enc = m.encode(ctx_of({5, 6, 7}));
  auto h = m.soft_copy(enc.states, 3);
  REQUIRE(h.rows() == 3);
  REQUIRE(h.cols() == 16);
  auto w = soft_copy_weights<float>(enc.states.rows(), 3,
                                    float(m.config().softcopy_tau));
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < 16; ++c) {
      double want = 0;
      for (std::size_t i = 0; i < enc.states.rows(); ++i)
        want += double(w.at(j, i)) * double(enc.states.at(i, c));
      CHECK(double(h.at(j, c)) == doctest::Approx(want).epsilon(1e-5));
    }
  CHECK_THROWS_AS(m.soft_copy(enc.states, 0), ShapeMismatch);
}

TEST_CASE("decode_parallel: shapes, glance position checks, order-free map") {
  Model<float> m(ModelKind::Nar, tiny_config(), 42);
  auto enc = m.encode(ctx_of({5, 6, 7, 8}));
  auto h = m.soft_copy(enc.states, 4);

  auto logits = m.decode_parallel(h, enc.states);
  CHECK(logits.rows() == 4);
  CHECK(logits.cols() == 50);

  // Same content, different insertion order: identical logits.
  std::map<std::size_t, int> g1;
  g1.emplace(1, 9);
  g1.emplace(4, 11);
  std::map<std::size_t, int> g2;
  g2.emplace(4, 11);
  g2.emplace(1, 9);
  CHECK(bitwise_equal(m.decode_parallel(h, enc.states, g1),
                      m.decode_parallel(h, enc.states, g2)));

  // Glancing changes the outcome relative to no glances.
  CHECK(!bitwise_equal(logits, m.decode_parallel(h, enc.states, g1)));

  // All positions glanced still decodes.
  std::map<std::size_t, int> all{{1, 5}, {2, 6}, {3, 7}, {4, 8}};
  CHECK(m.decode_parallel(h, enc.states, all).rows() == 4);

  CHECK_THROWS_AS(m.decode_parallel(h, enc.states, {{0, 5}}),
                  GlancePositionOutOfRange);
  CHECK_THROWS_AS(m.decode_parallel(h, enc.states, {{5, 5}}),
                  GlancePositionOutOfRange);

  Model<float> ar(ModelKind::ArL2R, tiny_config(), 42);
  CHECK_THROWS_AS(ar.decode_parallel(h, enc.states), Error);
}

TEST_CASE("NAR invariance: logits are bitwise independent of non-glanced gold tokens") {
  Model<float> m(ModelKind::Nar, tiny_config(), 42);
  const std::vector<std::vector<int>> ctxs = {ctx_of({5, 6, 7, 8, 9})};
  const std::vector<std::vector<float>> masks = {{0.f, 1.f, 0.f, 0.f}};

  auto run = [&](const std::vector<std::vector<int>>& golds) {
    Graph<float> g(false);
    auto enc = m.encode_packed(g, ctxs, false, nullptr);
    std::vector<std::size_t> toffs;
    auto sc = m.softcopy_packed(g, enc, {4}, &toffs);
    auto mixed = m.glance_mix(g, sc, toffs, golds, masks);
    auto logits = m.decode_from_inputs(g, mixed, toffs, enc.h, enc.offs,
                                       false, false, nullptr);
    return g.value(logits);
  };

  auto base = run({{10, 11, 12, 13}});
  auto perturbed = run({{20, 11, 30, 40}});  // changed only non-glanced golds
  CHECK(bitwise_equal(base, perturbed));

  auto glance_changed = run({{10, 25, 12, 13}});  // changed the glanced token
  CHECK(!bitwise_equal(base, glance_changed));
}

TEST_CASE("decode_ar_step: begin state, causal teacher forcing, kind checks") {
  Model<float> ar(ModelKind::ArL2R, tiny_config(), 21);
  auto enc = ar.encode(ctx_of({5, 6, 7}));
  CHECK(enc.length_logits.numel() == 0);  // no length head on AR models

  auto step0 = ar.decode_ar_step({}, enc.states, Direction::L2R);
  CHECK(step0.numel() == 50);

  CHECK_THROWS_AS(ar.decode_ar_step({}, enc.states, Direction::R2L), Error);
  Model<float> nar(ModelKind::Nar, tiny_config(), 21);
  auto nenc = nar.encode(ctx_of({5, 6, 7}));
  CHECK_THROWS_AS(nar.decode_ar_step({}, nenc.states, Direction::L2R), Error);

  // Teacher-forced logits at row t depend only on inputs up to t: changing a
  // later target leaves earlier rows bitwise unchanged.
  auto forced = [&](std::vector<int> tgt) {
    Graph<float> g(false);
    auto penc = ar.encode_packed(g, {ctx_of({5, 6, 7})}, false, nullptr);
    std::vector<std::size_t> toffs;
    auto logits =
        ar.ar_decode_packed(g, penc, {std::move(tgt)}, false, nullptr, &toffs);
    return g.value(logits);
  };
  auto a = forced({8, 9, 10, Vocabulary::kEos});
  auto b = forced({8, 9, 49, Vocabulary::kEos});
  REQUIRE(a.rows() == 4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) CHECK(a.at(r, c) == b.at(r, c));
  bool differs = false;
  for (std::size_t c = 0; c < a.cols(); ++c)
    differs = differs || a.at(3, c) != b.at(3, c);
  CHECK(differs);

  // A stateless step computes the same math as the matching teacher-forced
  // row; the blocks have different shapes, so BLAS accumulation order may
  // differ and the comparison is within float tolerance rather than bitwise.
  auto step = ar.decode_ar_step({8, 9}, enc.states, Direction::L2R);
  for (std::size_t c = 0; c < 50; ++c)
    CHECK(step[c] == doctest::Approx(a.at(2, c)).epsilon(1e-4));
}

TEST_CASE("mix_attention_forward: map contracts and masked-input independence") {
  Model<float> dam(ModelKind::Dam, tiny_config(), 7);
  const std::vector<int> src = {4, 5, 6, 7};
  const std::vector<int> tgt = {8, 9, 10};

  auto out = dam.mix_attention_forward(src, tgt, {1, 3});
  CHECK(out.logits.rows() == 2);
  CHECK(out.logits.cols() == 50);
  REQUIRE(out.layer_maps.size() == 2);
  for (const auto& map : out.layer_maps) {
    REQUIRE(map.shape() == std::vector<std::size_t>{7, 7});
    for (std::size_t r = 0; r < 7; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) s += map.at(r, c);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
    // Source queries (rows 3..6) put exactly zero mass on target keys (0..2).
    for (std::size_t r = 3; r < 7; ++r)
      for (std::size_t c = 0; c < 3; ++c) CHECK(map.at(r, c) == 0.0f);
  }

  CHECK_THROWS_AS(dam.mix_attention_forward(src, tgt, {0}), Error);
  CHECK_THROWS_AS(dam.mix_attention_forward(src, tgt, {4}), Error);
  CHECK(dam.mix_attention_forward(src, tgt, {}).logits.rows() == 0);

  // With every target token masked, predictions depend only on the source
  // side and positions: the target token ids must not matter.
  auto all1 = dam.mix_attention_forward(src, {8, 9, 10}, {1, 2, 3});
  auto all2 = dam.mix_attention_forward(src, {20, 21, 22}, {1, 2, 3});
  CHECK(bitwise_equal(all1.logits, all2.logits));

  Model<float> nar(ModelKind::Nar, tiny_config(), 7);
  CHECK_THROWS_AS(nar.mix_attention_forward(src, tgt, {1}), Error);
}

TEST_CASE("pass counters: one increment per stack invocation") {
  Model<float> m(ModelKind::Nar, tiny_config(), 42);
  m.reset_pass_counters();
  auto enc = m.encode(ctx_of({5, 6, 7}));
  CHECK(m.encoder_passes() == 1);
  CHECK(m.decoder_passes() == 0);
  auto h = m.soft_copy(enc.states, 5);
  CHECK(m.decoder_passes() == 0);  // soft copy is not a decoder pass
  m.decode_parallel(h, enc.states);
  CHECK(m.decoder_passes() == 1);

  // A packed batch still counts as a single stack invocation.
  Graph<float> g(false);
  m.encode_packed(g, {ctx_of({5}), ctx_of({6, 7}), ctx_of({8})}, false, nullptr);
  CHECK(m.encoder_passes() == 2);
  m.reset_pass_counters();
  CHECK(m.encoder_passes() == 0);
  CHECK(m.decoder_passes() == 0);
}

TEST_CASE("parameters: stable order and names, deterministic init") {
  Model<float> a(ModelKind::Nar, tiny_config(), 42);
  Model<float> b(ModelKind::Nar, tiny_config(), 42);
  Model<float> c(ModelKind::Nar, tiny_config(), 43);

  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  REQUIRE(pa.size() == pc.size());
  CHECK(pa.front()->name == "embedding");
  bool same_seed_equal = true, diff_seed_equal = true;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    for (std::size_t j = 0; j < pa[i]->value.numel(); ++j) {
      same_seed_equal = same_seed_equal && pa[i]->value[j] == pb[i]->value[j];
      diff_seed_equal = diff_seed_equal && pa[i]->value[j] == pc[i]->value[j];
    }
  }
  CHECK(same_seed_equal);
  CHECK(!diff_seed_equal);

  std::vector<std::string> names;
  for (auto* p : pa) names.push_back(p->name);
  auto has = [&](const std::string& n) {
    return std::find(names.begin(), names.end(), n) != names.end();
  };
  CHECK(has("enc.0.self.wq"));
  CHECK(has("enc.1.ffn.w2"));
  CHECK(has("enc.final.g"));
  CHECK(has("len.w"));
  CHECK(has("dec.0.cross.wk"));
  CHECK(has("dec.final.b"));
  CHECK(!has("mask_emb"));

  Model<float> dam(ModelKind::Dam, tiny_config(), 42);
  std::vector<std::string> dnames;
  for (auto* p : dam.parameters()) dnames.push_back(p->name);
  CHECK(dnames.front() == "embedding");
  CHECK(dnames.back() == "mask_emb");
  CHECK(std::find(dnames.begin(), dnames.end(), "joint.1.self.wo") != dnames.end());
  CHECK(std::find(dnames.begin(), dnames.end(), "len.w") == dnames.end());

  // Init families: gains one, biases zero.
  for (auto* p : pa) {
    const std::string leaf = p->name.substr(p->name.rfind('.') + 1);
    if (leaf == "g")
      for (std::size_t j = 0; j < p->value.numel(); ++j)
        CHECK(p->value[j] == 1.0f);
    if (leaf[0] == 'b')
      for (std::size_t j = 0; j < p->value.numel(); ++j)
        CHECK(p->value[j] == 0.0f);
  }
}

TEST_CASE("checkpoint: bit-exact round trip, byte-identical rewrite, errors") {
  const std::string p1 = tmp_path("sanar_test_ckpt_a.bin");
  const std::string p2 = tmp_path("sanar_test_ckpt_b.bin");

  for (ModelKind kind : {ModelKind::Nar, ModelKind::ArL2R, ModelKind::Dam}) {
    Model<float> m(kind, tiny_config(), 77);
    save_checkpoint(m, 0xabcdef0123456789ULL, p1);
    auto loaded = load_checkpoint(p1);
    CHECK(loaded.vocab_hash == 0xabcdef0123456789ULL);
    CHECK(loaded.model->kind() == kind);
    auto pm = m.parameters();
    auto pl = loaded.model->parameters();
    REQUIRE(pm.size() == pl.size());
    for (std::size_t i = 0; i < pm.size(); ++i) {
      CHECK(pm[i]->name == pl[i]->name);
      REQUIRE(pm[i]->value.numel() == pl[i]->value.numel());
      for (std::size_t j = 0; j < pm[i]->value.numel(); ++j)
        CHECK(pm[i]->value[j] == pl[i]->value[j]);
    }
    save_checkpoint(*loaded.model, 0xabcdef0123456789ULL, p2);
    CHECK(slurp(p1) == slurp(p2));
  }

  // Loaded forward is bit-identical to the saved model's forward.
  {
    Model<float> m(ModelKind::Nar, tiny_config(), 99);
    auto ctx = ctx_of({5, 6, 7, 8});
    auto enc = m.encode(ctx);
    auto logits = m.decode_parallel(m.soft_copy(enc.states, 3), enc.states);
    save_checkpoint(m, 1, p1);
    auto loaded = load_checkpoint(p1);
    auto enc2 = loaded.model->encode(ctx);
    CHECK(bitwise_equal(enc.states, enc2.states));
    CHECK(bitwise_equal(enc.length_logits, enc2.length_logits));
    auto logits2 = loaded.model->decode_parallel(
        loaded.model->soft_copy(enc2.states, 3), enc2.states);
    CHECK(bitwise_equal(logits, logits2));
  }

  // Error paths.
  CHECK_THROWS_AS(load_checkpoint(tmp_path("sanar_no_such_ckpt.bin")), IoError);
  {
    std::ofstream out(p1, std::ios::trunc);
    out << "not json\n";
  }
  CHECK_THROWS_AS(load_checkpoint(p1), ParseError);
  {
    std::ofstream out(p1, std::ios::trunc);
    out << R"({"format_version":99,"config":{},"manifest":[],"vocab_hash":0})"
        << '\n';
  }
  CHECK_THROWS_AS(load_checkpoint(p1), FormatVersionMismatch);
  {
    Model<float> m(ModelKind::Nar, tiny_config(), 77);
    save_checkpoint(m, 1, p1);
    std::string body = slurp(p1);
    std::ofstream out(p1, std::ios::binary | std::ios::trunc);
    out.write(body.data(), std::streamsize(body.size() - 8));
  }
  CHECK_THROWS_AS(load_checkpoint(p1), IoError);

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("bounds: positional range violations throw") {
  Model<float> m(ModelKind::Nar, tiny_config(), 42);
  Graph<float> g(false);
  auto enc = m.encode_packed(g, {ctx_of({5, 6, 7})}, false, nullptr);
  std::vector<std::size_t> toffs;
  CHECK_THROWS_AS(m.softcopy_packed(g, enc, {65}, &toffs), ContextTooLong);

  Model<float> dam(ModelKind::Dam, tiny_config(), 42);
  Graph<float> g2(false);
  std::vector<int> long_src(60, 5), tgt(10, 6);
  CHECK_THROWS_AS(
      dam.dam_packed(g2, {long_src}, {tgt}, {{1}}, false, nullptr, nullptr,
                     nullptr),
      ContextTooLong);
}

TEST_CASE("gradcheck: full tiny parallel completer (64-bit)") {
  Model<double> m(ModelKind::Nar, tiny_config(), 11);
  const std::vector<std::vector<int>> ctxs = {ctx_of({5, 6, 7}),
                                              ctx_of({8, 9, 10, 11})};
  const std::vector<std::vector<int>> golds = {{12, 13, 14}, {15, 16}};
  const std::vector<std::vector<double>> masks = {{0.0, 1.0, 0.0}, {1.0, 0.0}};
  const std::vector<std::size_t> lens = {3, 2};
  const std::vector<int> flat_golds = {12, 13, 14, 15, 16};
  const std::vector<double> loss_mask = {1.0, 0.0, 1.0, 0.0, 1.0};
  const std::vector<int> len_classes = {2, 1};  // lengths 3 and 2, class = n-1

  gradcheck_params(m.parameters(), [&](Graph<double>& g) {
    auto enc = m.encode_packed(g, ctxs, false, nullptr);
    std::vector<std::size_t> toffs;
    auto sc = m.softcopy_packed(g, enc, lens, &toffs);
    auto mixed = m.glance_mix(g, sc, toffs, golds, masks);
    auto logits = m.decode_from_inputs(g, mixed, toffs, enc.h, enc.offs,
                                       false, false, nullptr);
    auto tok = g.cross_entropy_rows(logits, flat_golds, loss_mask);
    auto len = g.cross_entropy_rows(enc.length_logits, len_classes, {1.0, 1.0});
    return g.add(tok, len);
  }, 1e-4);
}

TEST_CASE("gradcheck: full tiny autoregressive baseline (64-bit)") {
  Model<double> m(ModelKind::ArL2R, tiny_config(), 12);
  const std::vector<std::vector<int>> ctxs = {ctx_of({5, 6, 7}),
                                              ctx_of({8, 9})};
  const std::vector<std::vector<int>> tgts = {{12, 13, Vocabulary::kEos},
                                              {14, Vocabulary::kEos}};
  const std::vector<int> flat = {12, 13, Vocabulary::kEos, 14, Vocabulary::kEos};
  const std::vector<double> mask(flat.size(), 1.0);

  gradcheck_params(m.parameters(), [&](Graph<double>& g) {
    auto enc = m.encode_packed(g, ctxs, false, nullptr);
    std::vector<std::size_t> toffs;
    auto logits = m.ar_decode_packed(g, enc, tgts, false, nullptr, &toffs);
    return g.cross_entropy_rows(logits, flat, mask);
  }, 1e-4);
}

TEST_CASE("gradcheck: full tiny dependency-analysis model (64-bit)") {
  Model<double> m(ModelKind::Dam, tiny_config(), 13);
  const std::vector<std::vector<int>> srcs = {{5, 6, 7}, {8, 9}};
  const std::vector<std::vector<int>> tgts = {{12, 13, 14}, {15, 16}};
  const std::vector<std::vector<std::size_t>> mask_pos = {{2}, {1, 2}};

  gradcheck_params(m.parameters(), [&](Graph<double>& g) {
    std::vector<int> golds;
    auto logits =
        m.dam_packed(g, srcs, tgts, mask_pos, false, nullptr, nullptr, &golds);
    return g.cross_entropy_rows(logits, golds,
                                std::vector<double>(golds.size(), 1.0));
  }, 1e-4);
}

}  // TEST_SUITE
