#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hintnart/errors.hpp"
#include "hintnart/nn.hpp"
#include "testutil.hpp"

using namespace hintnart;
namespace tu = testutil;

namespace {

// Minimal store with hand-picked attention projections.
ParamStore identity_attention_store(const ModelConfig& cfg, const std::string& prefix) {
  ParamStore store;
  const std::size_t d = cfg.d_model, h = cfg.heads;
  auto eye = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    ParamTensor& t = store.define(name, {rows, cols});
    for (std::size_t i = 0; i < std::min(rows, cols); ++i) {
      t.value[i * cols + i] = 1.0f;
    }
  };
  eye(prefix + ".wq", d, h * cfg.dk());
  eye(prefix + ".wk", d, h * cfg.dk());
  eye(prefix + ".wv", d, h * cfg.dv());
  eye(prefix + ".wo", h * cfg.dv(), d);
  return store;
}

}  // namespace

TEST_CASE("positional encoding fixtures and range") {
  const NdArray e = nn::positional_encoding(4, 6);
  for (std::size_t k = 0; k < 6; k += 2) CHECK(e.at(0, k) == 0.0);  // sin 0
  for (std::size_t k = 1; k < 6; k += 2) CHECK(e.at(0, k) == 1.0);  // cos 0
  const NdArray e4 = nn::positional_encoding(2, 4);
  CHECK(e4.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-9));  // 0.84147

  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t t = 1 + rng.below(20), d = 1 + rng.below(40);
    const NdArray pe = nn::positional_encoding(t, d);
    for (double v : pe.data) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("zero queries and keys give uniform attention rows") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  ParamStore store;
  Rng rng(5);
  nn::init_attention(store, "a", cfg, rng);
  GraphCtx ctx{&store};

  const std::size_t t_kv = 5;
  ad::Var zeros = ad::constant(NdArray::zeros({3, cfg.d_model}));
  ad::Var v = ad::constant(tu::random_array(rng, {t_kv, cfg.d_model}));
  ad::Var zkeys = ad::constant(NdArray::zeros({t_kv, cfg.d_model}));
  auto out = nn::multi_head_attention(ctx, "a", zeros, zkeys, v, cfg, false, nullptr);
  const NdArray& w = out.weights.value();
  CHECK(w.shape == std::vector<std::size_t>{2, 3, t_kv});
  for (double x : w.data) CHECK(x == doctest::Approx(1.0 / t_kv).epsilon(1e-12));
}

TEST_CASE("causal mask zeroes the upper triangle exactly") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  ParamStore store;
  Rng rng(7);
  nn::init_attention(store, "a", cfg, rng);
  GraphCtx ctx{&store};

  const std::size_t t = 6;
  ad::Var x = ad::constant(tu::random_array(rng, {t, cfg.d_model}));
  auto out = nn::multi_head_attention(ctx, "a", x, x, x, cfg, true, nullptr);
  const NdArray& w = out.weights.value();
  CHECK(w.at(0, 0, 0) == 1.0);  // row 0 has a single unmasked entry
  CHECK(w.at(1, 0, 0) == 1.0);
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = i + 1; j < t; ++j) {
        CHECK(w.at(h, i, j) == 0.0);
      }
    }
  }

  ad::Var shorter = ad::constant(tu::random_array(rng, {t - 1, cfg.d_model}));
  CHECK_THROWS_AS(nn::multi_head_attention(ctx, "a", shorter, x, x, cfg, true, nullptr),
                  ContractError);
}

TEST_CASE("single-head attention closed form") {
  // d_model = d_k = 1, identity projections, scale 1/sqrt(1) = 1
  ModelConfig cfg;
  cfg.d_model = 1;
  cfg.heads = 1;
  cfg.d_k = 1;
  cfg.d_v = 1;
  ParamStore store = identity_attention_store(cfg, "a");
  GraphCtx ctx{&store};

  ad::Var q = ad::constant(NdArray({2, 1}, {1, 1}));
  ad::Var k = ad::constant(NdArray({2, 1}, {1, 0}));
  ad::Var v = ad::constant(NdArray({2, 1}, {1, 0}));
  auto out = nn::multi_head_attention(ctx, "a", q, k, v, cfg, false, nullptr);
  const NdArray& w = out.weights.value();
  CHECK(w.at(0, 0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(w.at(0, 0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(out.values.value().at(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(out.values.value().at(1, 0) == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("positional attention ignores the value input for its weights") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  ParamStore store;
  Rng rng(11);
  nn::init_attention(store, "p", cfg, rng);
  GraphCtx ctx{&store};

  ad::Var v1 = ad::constant(tu::random_array(rng, {4, cfg.d_model}));
  ad::Var v2 = ad::constant(tu::random_array(rng, {4, cfg.d_model}));
  auto o1 = nn::positional_attention(ctx, "p", v1, cfg);
  auto o2 = nn::positional_attention(ctx, "p", v2, cfg);
  CHECK(bit_equal(o1.weights.value(), o2.weights.value()));
  CHECK_FALSE(bit_equal(o1.values.value(), o2.values.value()));

  ad::Var v3 = ad::constant(tu::random_array(rng, {1, cfg.d_model}));
  auto o3 = nn::positional_attention(ctx, "p", v3, cfg);
  CHECK(o3.weights.value().numel() == 2);  // one entry per head at T=1
  CHECK(o3.weights.value().data[0] == 1.0);
  CHECK(o3.weights.value().data[1] == 1.0);
}

TEST_CASE("positional attention weights match a softmax oracle with identity projections") {
  ModelConfig cfg;
  cfg.d_model = 4;
  cfg.heads = 1;
  cfg.d_k = 4;
  cfg.d_v = 4;
  ParamStore store = identity_attention_store(cfg, "p");
  GraphCtx ctx{&store};

  const std::size_t t = 2;
  Rng rng(13);
  ad::Var prev = ad::constant(tu::random_array(rng, {t, cfg.d_model}));
  auto out = nn::positional_attention(ctx, "p", prev, cfg);

  const NdArray e = nn::positional_encoding(t, cfg.d_model);
  for (std::size_t i = 0; i < t; ++i) {
    double scores[2];
    for (std::size_t j = 0; j < t; ++j) {
      double dot = 0.0;
      for (std::size_t kdim = 0; kdim < cfg.d_model; ++kdim) {
        dot += e.at(i, kdim) * e.at(j, kdim);
      }
      scores[j] = dot / 2.0;  // 1/sqrt(d_k) = 1/2
    }
    const double m = std::max(scores[0], scores[1]);
    const double z = std::exp(scores[0] - m) + std::exp(scores[1] - m);
    for (std::size_t j = 0; j < t; ++j) {
      CHECK(out.weights.value().at(0, i, j) ==
            doctest::Approx(std::exp(scores[j] - m) / z).epsilon(1e-12));
    }
  }
}

TEST_CASE("ffn fixtures") {
  ModelConfig cfg;
  cfg.d_model = 2;
  cfg.d_ff = 2;

  SUBCASE("zero weights give zeros") {
    ParamStore store;
    store.define("f.fc1.w", {2, 2});
    store.define("f.fc1.b", {2});
    store.define("f.fc2.w", {2, 2});
    store.define("f.fc2.b", {2});
    GraphCtx ctx{&store};
    ad::Var x = ad::constant(NdArray({3, 2}, {1, 2, 3, 4, 5, 6}));
    const NdArray y = nn::ffn(ctx, "f", x, cfg).value();
    for (double v : y.data) CHECK(v == 0.0);
  }

  SUBCASE("identity weights apply relu per position") {
    ParamStore store;
    ParamTensor& w1 = store.define("f.fc1.w", {2, 2});
    w1.value = {1, 0, 0, 1};
    store.define("f.fc1.b", {2});
    ParamTensor& w2 = store.define("f.fc2.w", {2, 2});
    w2.value = {1, 0, 0, 1};
    store.define("f.fc2.b", {2});
    GraphCtx ctx{&store};
    ad::Var x = ad::constant(NdArray({1, 2}, {-1, 2}));
    const NdArray y = nn::ffn(ctx, "f", x, cfg).value();
    CHECK(y.at(0, 0) == 0.0);
    CHECK(y.at(0, 1) == 2.0);
  }

  SUBCASE("permuting positions permutes outputs") {
    ParamStore store;
    Rng rng(17);
    nn::init_linear(store, "f.fc1", 2, 2, rng);
    nn::init_linear(store, "f.fc2", 2, 2, rng);
    GraphCtx ctx{&store};
    const NdArray x({3, 2}, {1, 2, 3, 4, 5, 6});
    const NdArray xp({3, 2}, {5, 6, 1, 2, 3, 4});
    const NdArray y = nn::ffn(ctx, "f", ad::constant(x), cfg).value();
    const NdArray yp = nn::ffn(ctx, "f", ad::constant(xp), cfg).value();
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(yp.at(0, j) == y.at(2, j));
      CHECK(yp.at(1, j) == y.at(0, j));
      CHECK(yp.at(2, j) == y.at(1, j));
    }
  }
}

TEST_CASE("sublayer is layer_norm of x plus f(x)") {
  ModelConfig cfg;
  cfg.d_model = 4;
  ParamStore store;
  nn::init_layer_norm(store, "s", cfg.d_model);
  GraphCtx ctx{&store};

  Rng rng(19);
  const NdArray x = tu::random_array(rng, {3, 4});
  ad::Var xv = ad::constant(x);
  ad::Var zero_fx = ad::constant(NdArray::zeros({3, 4}));
  const NdArray got = nn::sublayer(ctx, "s", xv, zero_fx).value();
  const NdArray want = ad::layer_norm(xv, ctx.param("s.ln_g"), ctx.param("s.ln_b")).value();
  CHECK(bit_equal(got, want));
  CHECK(got.shape == x.shape);

  CHECK_THROWS_AS(nn::sublayer(ctx, "s", xv, ad::constant(NdArray::zeros({2, 4}))),
                  DimensionError);
}

TEST_CASE("gradient flows through both sublayer branches") {
  ModelConfig cfg;
  cfg.d_model = 4;
  cfg.d_ff = 6;
  ParamStore store;
  Rng rng(23);
  nn::init_linear(store, "f.fc1", 4, 6, rng);
  nn::init_linear(store, "f.fc2", 6, 4, rng);
  nn::init_layer_norm(store, "f", 4);

  const NdArray x = tu::random_array(rng, {2, 4});
  const double err = tu::max_grad_error(
      [&](const std::vector<ad::Var>& in) {
        GraphCtx ctx{&store};
        ad::Var y = nn::sublayer(ctx, "f", in[0], nn::ffn(ctx, "f", in[0], cfg));
        return ad::sum_all(ad::mul(y, y));
      },
      {x});
  CHECK(err < 1e-4);
}

TEST_CASE("attention rows sum to one for all three attention types") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  ParamStore store;
  Rng rng(29);
  nn::init_attention(store, "self", cfg, rng);
  nn::init_attention(store, "ctx", cfg, rng);
  nn::init_attention(store, "pos", cfg, rng);
  GraphCtx ctx{&store};

  ad::Var x = ad::constant(tu::random_array(rng, {5, 8}));
  ad::Var mem = ad::constant(tu::random_array(rng, {3, 8}));
  auto check_rows = [&](const NdArray& w) {
    const std::size_t heads = w.shape[0], rows = w.shape[1], cols = w.shape[2];
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += w.at(h, i, j);
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
    }
  };
  check_rows(
      nn::multi_head_attention(ctx, "self", x, x, x, cfg, true, nullptr).weights.value());
  check_rows(
      nn::multi_head_attention(ctx, "ctx", x, mem, mem, cfg, false, nullptr).weights.value());
  check_rows(nn::positional_attention(ctx, "pos", x, cfg).weights.value());
}

TEST_CASE("score scaling can switch to 1/sqrt(d_model)") {
  ModelConfig a;
  a.d_model = 8;
  a.heads = 2;
  ModelConfig b = a;
  b.scale_by_d_model = true;

  ParamStore store;
  Rng rng(31);
  nn::init_attention(store, "x", a, rng);
  GraphCtx ctx{&store};
  ad::Var q = ad::constant(tu::random_array(rng, {3, 8}));
  const NdArray wa =
      nn::multi_head_attention(ctx, "x", q, q, q, a, false, nullptr).weights.value();
  const NdArray wb =
      nn::multi_head_attention(ctx, "x", q, q, q, b, false, nullptr).weights.value();
  CHECK_FALSE(bit_equal(wa, wb));  // d_k = 4 vs d_model = 8 differ with 2 heads
}

TEST_CASE("key padding masks attention columns exactly") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  ParamStore store;
  Rng rng(37);
  nn::init_attention(store, "a", cfg, rng);
  GraphCtx ctx{&store};

  ad::Var q = ad::constant(tu::random_array(rng, {3, 8}));
  ad::Var kv = ad::constant(tu::random_array(rng, {4, 8}));
  const std::vector<bool> pad{false, true, false, true};
  const NdArray w =
      nn::multi_head_attention(ctx, "a", q, kv, kv, cfg, false, &pad).weights.value();
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(w.at(h, i, 1) == 0.0);
      CHECK(w.at(h, i, 3) == 0.0);
    }
  }
}

TEST_CASE("model config validation") {
  ModelConfig cfg;
  cfg.heads = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.d_model = 30;  // not divisible by default 4 heads
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.dk() == cfg.d_model / cfg.heads);
}
