#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "msea/model/decode.hpp"
#include "msea/model/decoder.hpp"
#include "msea/model/encoders.hpp"
#include "msea/model/layers.hpp"
#include "msea/model/params.hpp"
#include "msea/numerics/grad_check.hpp"
#include "toy_model.hpp"

namespace msea::model {
namespace {

using Tn = num::Tensor<double>;
using Tp = num::Tape<double>;
using V = num::Var<double>;
using num::Shape;

constexpr double kTight = 1e-12;

std::vector<double> values(const V& v) { return {v.value().begin(), v.value().end()}; }

Tn random_tensor(Shape s, std::mt19937_64& rng, double range = 0.8) {
  std::uniform_real_distribution<double> d(-range, range);
  Tn t(s);
  for (double& x : t.data()) x = d(rng);
  return t;
}

GruCell<double> cell_of(Tp& tape, const Tn& u, const Tn& r, const Tn& h) {
  return {tape.constant(u), tape.constant(r), tape.constant(h)};
}

// ------------------------------------------------------------------ GRU cell

TEST(GruStep, ZeroWeightsHalveTheState) {
  Tp tape;
  const Tn zero(Shape{2, 3});
  const auto cell = cell_of(tape, zero, zero, zero);
  const auto h = gru_step(cell, tape.constant(Tn::vector({0.7})), tape.constant(Tn::vector({1.0, 1.0})));
  EXPECT_NEAR(h.value()[0], 0.5, kTight);
  EXPECT_NEAR(h.value()[1], 0.5, kTight);
}

TEST(GruStep, ClosedUpdateGateCarriesStateThrough) {
  Tp tape;
  const auto wu = Tn::matrix(1, 2, {-60.0, 0.0});
  const auto other = Tn::matrix(1, 2, {0.9, -0.4});
  const auto cell = cell_of(tape, wu, other, other);
  const auto h = gru_step(cell, tape.constant(Tn::vector({1.0})), tape.constant(Tn::vector({0.37})));
  EXPECT_NEAR(h.item(), 0.37, 1e-20 + 1e-12);
}

TEST(GruStep, OneDimensionalHandValue) {
  Tp tape;
  const auto w = Tn::matrix(1, 2, {1.0, 1.0});
  const auto cell = cell_of(tape, w, w, w);
  const auto h = gru_step(cell, tape.constant(Tn::vector({1.0})), tape.constant(Tn::vector({0.0})));
  // u = σ(1), h' = tanh(1), h = u·h'.
  EXPECT_NEAR(h.item(), 0.5567699411459397, 1e-12);
}

TEST(GruStep, ShapeMismatchThrows) {
  Tp tape;
  const Tn w(Shape{2, 3});
  const auto cell = cell_of(tape, w, w, w);
  EXPECT_THROW(gru_step(cell, tape.constant(Tn::vector({1.0, 2.0})), tape.constant(Tn::vector({0.0, 0.0}))),
               DimensionError);
  EXPECT_THROW(gru_step(cell, tape.constant(Tn::vector({1.0})), tape.constant(Tn::vector({0.0}))), DimensionError);
}

TEST(GruStep, FusedMatchesComposedValueAndGradient) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto wu = random_tensor(Shape{3, 5}, rng), wr = random_tensor(Shape{3, 5}, rng),
         wh = random_tensor(Shape{3, 5}, rng);
    auto x = random_tensor(Shape{2}, rng), h = random_tensor(Shape{3}, rng);
    Tp tape;
    const GruCell<double> cell{tape.constant(wu), tape.constant(wr), tape.constant(wh)};
    const auto a = gru_step(cell, tape.constant(x), tape.constant(h));
    const auto b = gru_step_reference(cell, tape.constant(x), tape.constant(h));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.value()[i], b.value()[i], 1e-14);

    std::vector<Tn*> ps{&wu, &wr, &wh, &x, &h};
    const auto report = num::grad_check_params<double>(std::span<Tn* const>(ps), [&](Tp& tp) {
      const GruCell<double> c{tp.param(wu), tp.param(wr), tp.param(wh)};
      const auto out = gru_step(c, tp.param(x), tp.param(h));
      return num::dot(out, tp.constant(Tn::vector({0.3, -1.1, 0.7})));
    });
    EXPECT_LT(report.max_error, 1e-5);
  }
}

// ------------------------------------------------------------------ master encoder

struct Cells {
  Tn u, r, h;
};

Cells random_cells(std::size_t in, std::size_t hid, std::mt19937_64& rng) {
  return {random_tensor(Shape{hid, in + hid}, rng), random_tensor(Shape{hid, in + hid}, rng),
          random_tensor(Shape{hid, in + hid}, rng)};
}

std::vector<V> rows_of(Tp& tape, const std::vector<std::vector<double>>& xs) {
  std::vector<V> out;
  for (const auto& x : xs) out.push_back(tape.constant(Shape{x.size()}, x));
  return out;
}

TEST(EncodeMaster, SingleTokenMeanIsTheState) {
  std::mt19937_64 rng(5);
  const auto f = random_cells(2, 3, rng), b = random_cells(2, 3, rng);
  const auto W = random_tensor(Shape{4, 6}, rng), bias = random_tensor(Shape{4}, rng);
  Tp tape;
  const auto xs = rows_of(tape, {{0.4, -0.9}});
  const auto enc = encode_master(std::span<const V>(xs), cell_of(tape, f.u, f.r, f.h), cell_of(tape, b.u, b.r, b.h),
                                 tape.constant(W), tape.constant(bias));
  ASSERT_EQ(enc.states.shape(), (Shape{1, 6}));
  const auto expect = content_vector(std::span<const V>(enc.rows), tape.constant(W), tape.constant(bias));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(enc.content.value()[i], expect.value()[i], kTight);
  // Forward half equals a single forward step.
  const auto one = gru_step(cell_of(tape, f.u, f.r, f.h), xs[0], tape.zeros(Shape{3}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(enc.final_state.value()[i], one.value()[i], kTight);
}

TEST(EncodeMaster, ZeroWeightsGiveTanhOfBias) {
  Tp tape;
  const Tn zero(Shape{2, 4});
  const auto cell = cell_of(tape, zero, zero, zero);
  const auto xs = rows_of(tape, {{1.0, 2.0}, {-3.0, 0.5}, {0.0, 0.1}});
  const auto b = Tn::vector({0.3, -2.0});
  const auto enc = encode_master(std::span<const V>(xs), cell, cell, tape.constant(Tn(Shape{2, 4})), tape.constant(b));
  for (double v : enc.states.value()) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(enc.content.value()[0], std::tanh(0.3), kTight);
  EXPECT_NEAR(enc.content.value()[1], std::tanh(-2.0), kTight);
}

TEST(EncodeMaster, PalindromeWithTiedDirectionsIsMirrored) {
  std::mt19937_64 rng(8);
  const auto c = random_cells(2, 3, rng);
  Tp tape;
  const auto xs = rows_of(tape, {{0.2, -0.7}, {1.1, 0.4}, {0.2, -0.7}});
  const auto cell = cell_of(tape, c.u, c.r, c.h);
  const auto enc = encode_master(std::span<const V>(xs), cell, cell);
  ASSERT_EQ(enc.rows.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto fwd = values(enc.rows[t]);
    const auto bwd = values(enc.rows[2 - t]);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(fwd[i], bwd[3 + i], kTight);
  }
}

TEST(EncodeMaster, LengthAndWidthAndErrors) {
  std::mt19937_64 rng(9);
  const auto c = random_cells(2, 5, rng);
  Tp tape;
  const auto cell = cell_of(tape, c.u, c.r, c.h);
  for (std::size_t m : {1u, 4u, 9u}) {
    std::vector<std::vector<double>> raw(m, {0.1, 0.2});
    const auto xs = rows_of(tape, raw);
    const auto enc = encode_master(std::span<const V>(xs), cell, cell);
    EXPECT_EQ(enc.states.shape(), (Shape{m, 10}));
    for (double v : enc.states.value()) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_THROW(encode_master(std::span<const V>{}, cell, cell), DimensionError);
}

TEST(ContentVector, Examples) {
  Tp tape;
  const auto W = tape.constant(Tn::matrix(2, 2, {1, 0, 0, 1}));
  const auto b = tape.constant(Tn::vector({0.0, 0.0}));
  const auto s = rows_of(tape, {{1, 0}, {0, 1}});
  const auto c = content_vector(std::span<const V>(s), W, b);
  EXPECT_NEAR(c.value()[0], std::tanh(0.5), kTight);
  EXPECT_NEAR(c.value()[1], std::tanh(0.5), kTight);
  const auto same = rows_of(tape, {{0.3, -0.2}, {0.3, -0.2}, {0.3, -0.2}});
  const auto c2 = content_vector(std::span<const V>(same), W, tape.constant(Tn::vector({0.1, 0.1})));
  EXPECT_NEAR(c2.value()[0], std::tanh(0.4), kTight);
  EXPECT_NEAR(c2.value()[1], std::tanh(-0.1), kTight);
  const auto c3 = content_vector(std::span<const V>(same), tape.constant(Tn(Shape{2, 2})), tape.constant(Tn::vector({0.7, -1.0})));
  EXPECT_NEAR(c3.value()[0], std::tanh(0.7), kTight);
  EXPECT_THROW(content_vector(std::span<const V>{}, W, b), DimensionError);
}

// ------------------------------------------------------------------ slave gate

/// Gate parameters for src-width states and content width dc, bound as constants.
struct GateToy {
  Tn W_1, b_1, W_2, b_2, W_s, W_r, W_k;

  static GateToy zeros(std::size_t src, std::size_t dc, std::size_t hs) {
    return {Tn(Shape{hs, src + 3 * dc}), Tn(Shape{hs}), Tn(Shape{hs}), Tn(Shape{1}),
            Tn(Shape{src, dc}),          Tn(Shape{dc, dc}), Tn(Shape{dc})};
  }
  static GateToy random(std::size_t src, std::size_t dc, std::size_t hs, std::mt19937_64& rng) {
    return {random_tensor(Shape{hs, src + 3 * dc}, rng), random_tensor(Shape{hs}, rng), random_tensor(Shape{hs}, rng),
            random_tensor(Shape{1}, rng),                random_tensor(Shape{src, dc}, rng),
            random_tensor(Shape{dc, dc}, rng),           random_tensor(Shape{dc}, rng)};
  }
  std::vector<Tn*> all() { return {&W_1, &b_1, &W_2, &b_2, &W_s, &W_r, &W_k}; }
  Bound<double> bind(Tp& tape, bool as_params = false) {
    auto b = [&](Tn& t) { return as_params ? tape.param(t) : tape.constant(t); };
    Bound<double> p;
    p.W_1 = b(W_1);
    p.b_1 = b(b_1);
    p.W_2 = b(W_2);
    p.b_2 = b(b_2);
    p.W_s = b(W_s);
    p.W_s2 = p.W_s;
    p.W_r = b(W_r);
    p.W_k = b(W_k);
    return p;
  }
};

TEST(SlaveGate, ZeroParamsGiveOneHalf) {
  auto g = GateToy::zeros(4, 2, 3);
  Tp tape;
  const auto p = g.bind(tape);
  const auto a = slave_gate_alpha_at(p, tape.constant(Tn::vector({1, 2, 3, 4})), tape.constant(Tn::vector({0.5, 0.1})),
                                     tape.constant(Tn::vector({0.2, 0.2})), tape.constant(Tn::vector({-0.3, 0.9})));
  EXPECT_NEAR(a.item(), 0.5, kTight);
}

TEST(SlaveGate, BiasSaturates) {
  auto g = GateToy::zeros(4, 2, 3);
  g.b_2[0] = 20.0;
  Tp tape;
  const auto p = g.bind(tape);
  const auto a = slave_gate_alpha_at(p, tape.constant(Tn::vector({1, 2, 3, 4})), tape.constant(Tn::vector({0.5, 0.1})),
                                     tape.constant(Tn::vector({0.2, 0.2})), tape.constant(Tn::vector({-0.3, 0.9})));
  EXPECT_GT(a.item(), 1.0 - 1e-8);
  EXPECT_LT(a.item(), 1.0);
}

TEST(SlaveGate, UnitParamsHandValue) {
  auto g = GateToy::zeros(2, 1, 1);
  for (auto* t : g.all())
    for (double& v : t->data()) v = 1.0;
  Tp tape;
  const auto p = g.bind(tape);
  // σ(tanh(Σz + 1) + Σh·C^p + Σh·C^d − C^p·C^d + C^q + 1) with h=(0.5,−0.25),
  // C^p=0.2, C^q=0.3, C^d=−0.4.
  const auto a = slave_gate_alpha_at(p, tape.constant(Tn::vector({0.5, -0.25})), tape.constant(Tn::vector({0.2})),
                                     tape.constant(Tn::vector({0.3})), tape.constant(Tn::vector({-0.4})));
  EXPECT_NEAR(a.item(), 0.9006129074208127, 1e-12);
}

TEST(SlaveGate, VectorFormMatchesPerPosition) {
  std::mt19937_64 rng(21);
  auto g = GateToy::random(4, 2, 3, rng);
  Tp tape;
  const auto p = g.bind(tape);
  const auto states = tape.constant(random_tensor(Shape{5, 4}, rng));
  const auto Cp = tape.constant(random_tensor(Shape{2}, rng)), Cq = tape.constant(random_tensor(Shape{2}, rng)),
             Cd = tape.constant(random_tensor(Shape{2}, rng));
  const auto all = slave_gate_alpha(p, states, Cp, Cq, Cd);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_NEAR(all.value()[t], slave_gate_alpha_at(p, num::row(states, t), Cp, Cq, Cd).item(), 1e-14);
  }
}

TEST(SlaveGate, StrictlyInsideUnitIntervalAndSensitiveToDecoderContent) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = GateToy::random(4, 2, 3, rng);
    Tp tape;
    const auto p = g.bind(tape);
    const auto states = tape.constant(random_tensor(Shape{6, 4}, rng, 3.0));
    const auto Cp = tape.constant(random_tensor(Shape{2}, rng)), Cq = tape.constant(random_tensor(Shape{2}, rng));
    const auto a1 = slave_gate_alpha(p, states, Cp, Cq, tape.constant(random_tensor(Shape{2}, rng)));
    const auto a2 = slave_gate_alpha(p, states, Cp, Cq, tape.constant(random_tensor(Shape{2}, rng)));
    bool changed = false;
    for (std::size_t t = 0; t < 6; ++t) {
      EXPECT_GT(a1.value()[t], 0.0);
      EXPECT_LT(a1.value()[t], 1.0);
      changed = changed || a1.value()[t] != a2.value()[t];
    }
    EXPECT_TRUE(changed);
  }
}

TEST(SlaveGate, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  auto g = GateToy::random(4, 2, 3, rng);
  auto states = random_tensor(Shape{3, 4}, rng);
  auto Cp = random_tensor(Shape{2}, rng), Cq = random_tensor(Shape{2}, rng), Cd = random_tensor(Shape{2}, rng);
  auto ps = g.all();
  for (auto* t : {&states, &Cp, &Cq, &Cd}) ps.push_back(t);
  const auto report = num::grad_check_params<double>(std::span<Tn* const>(ps), [&](Tp& tape) {
    const auto p = g.bind(tape, true);
    const auto a = slave_gate_alpha(p, tape.param(states), tape.param(Cp), tape.param(Cq), tape.param(Cd));
    return num::dot(a, tape.constant(Tn::vector({1.0, -0.6, 0.4})));
  });
  EXPECT_LT(report.max_error, 1e-4);
}

TEST(SlaveGate, ShapeMismatchThrows) {
  auto g = GateToy::zeros(4, 2, 3);
  Tp tape;
  const auto p = g.bind(tape);
  EXPECT_THROW(slave_gate_alpha_at(p, tape.constant(Tn::vector({1, 2, 3})), tape.constant(Tn::vector({0.5, 0.1})),
                                   tape.constant(Tn::vector({0.2, 0.2})), tape.constant(Tn::vector({-0.3, 0.9}))),
               DimensionError);
  EXPECT_THROW(slave_gate_alpha_at(p, tape.constant(Tn::vector({1, 2, 3, 4})), tape.constant(Tn::vector({0.5, 0.1})),
                                   tape.constant(Tn::vector({0.2})), tape.constant(Tn::vector({-0.3, 0.9}))),
               DimensionError);
}

// ------------------------------------------------------------------ slave encoder

TEST(SlaveEncode, ClosedGateKeepsZeroState) {
  std::mt19937_64 rng(31);
  const auto c = random_cells(2, 3, rng);
  Tp tape;
  const auto xs = rows_of(tape, {{0.5, 0.1}, {-1, 2}, {0.3, 0.3}});
  const auto alpha = tape.constant(Tn::vector({0.0, 0.0, 0.0}));
  const auto out = slave_encode(std::span<const V>(xs), alpha, cell_of(tape, c.u, c.r, c.h));
  for (double v : out.final_state.value()) EXPECT_EQ(v, 0.0);
}

TEST(SlaveEncode, OpenGateIsAPlainGruPass) {
  std::mt19937_64 rng(32);
  const auto c = random_cells(2, 3, rng);
  Tp tape;
  const auto cell = cell_of(tape, c.u, c.r, c.h);
  const auto xs = rows_of(tape, {{0.5, 0.1}, {-1, 2}, {0.3, 0.3}});
  const auto out = slave_encode(std::span<const V>(xs), tape.constant(Tn::vector({1.0, 1.0, 1.0})), cell);
  const auto plain = gru_scan(cell, std::span<const V>(xs), false);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out.final_state.value()[i], plain.back().value()[i], kTight);
}

TEST(SlaveEncode, TwoTokenHandValue) {
  Tp tape;
  const auto cell = cell_of(tape, Tn::matrix(1, 2, {0.5, -0.3}), Tn::matrix(1, 2, {0.2, 0.4}), Tn::matrix(1, 2, {0.7, 0.6}));
  const auto xs = rows_of(tape, {{1.0}, {-0.5}});
  const auto out = slave_encode(std::span<const V>(xs), tape.constant(Tn::vector({0.3, 0.8})), cell);
  EXPECT_NEAR(out.final_state.item(), -0.031358334845694835, 1e-12);
}

TEST(SlaveEncode, StateIsAConvexCombinationOfOldStateAndCandidate) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_cells(2, 3, rng);
    Tp tape;
    const auto cell = cell_of(tape, c.u, c.r, c.h);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto xs = rows_of(tape, {{unit(rng), -unit(rng)}, {unit(rng), unit(rng)}, {-unit(rng), unit(rng)}});
    const auto alpha = tape.constant(Tn::vector({unit(rng), unit(rng), unit(rng)}));
    V h = tape.zeros(Shape{3});
    for (std::size_t t = 0; t < 3; ++t) {
      const auto g = gru_step(cell, xs[t], h);
      const auto hn = num::add(h, num::scale_by(num::sub(g, h), num::pick(alpha, t)));
      for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_GE(hn.value()[i], std::min(h.value()[i], g.value()[i]) - 1e-15);
        EXPECT_LE(hn.value()[i], std::max(h.value()[i], g.value()[i]) + 1e-15);
      }
      h = hn;
    }
    const auto full = slave_encode(std::span<const V>(xs), alpha, cell);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(full.final_state.value()[i], h.value()[i], kTight);
  }
}

TEST(SlaveEncode, LengthMismatchThrows) {
  std::mt19937_64 rng(34);
  const auto c = random_cells(2, 3, rng);
  Tp tape;
  const auto xs = rows_of(tape, {{0.5, 0.1}, {-1, 2}});
  EXPECT_THROW(slave_encode(std::span<const V>(xs), tape.constant(Tn::vector({0.5})), cell_of(tape, c.u, c.r, c.h)),
               DimensionError);
}

// ------------------------------------------------------------------ attention and context

struct AttentionToy {
  Tn v_a = Tn::vector({2.0});
  Tn W_a = Tn::matrix(1, 1, {0.5});
  Tn U_a = Tn::matrix(1, 2, {1.0, -1.0});
  Tn W_c = Tn::vector({1.5});
  Bound<double> bind(Tp& tape) {
    Bound<double> p;
    p.v_a = tape.constant(v_a);
    p.W_a = tape.constant(W_a);
    p.U_a = tape.constant(U_a);
    p.W_c = tape.constant(W_c);
    return p;
  }
};

TEST(Attention, HandScoresWithAndWithoutCoverage) {
  AttentionToy toy;
  Tp tape;
  const auto p = toy.bind(tape);
  const auto states = tape.constant(Tn::matrix(2, 2, {0.3, 0.1, -0.2, 0.4}));
  const auto keys = attention_keys(p, states);
  const auto h = tape.constant(Tn::vector({1.0}));
  const auto cov = tape.constant(Tn::vector({0.25, 0.75}));
  const auto plain = attention_scores(p, h, keys, cov, false);
  EXPECT_NEAR(plain.value()[0], 1.2087355542343272, 1e-12);
  EXPECT_NEAR(plain.value()[1], -0.19933598924991172, 1e-12);
  const auto covered = attention_scores(p, h, keys, cov, true);
  EXPECT_NEAR(covered.value()[0], 1.5826751075239949, 1e-12);
  EXPECT_NEAR(covered.value()[1], 1.5437904748808364, 1e-12);
}

TEST(Attention, ZeroCoverageReducesExactly) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    Tp tape;
    Bound<double> p;
    p.v_a = tape.constant(random_tensor(Shape{3}, rng));
    p.W_a = tape.constant(random_tensor(Shape{3, 4}, rng));
    p.U_a = tape.constant(random_tensor(Shape{3, 6}, rng));
    p.W_c = tape.constant(random_tensor(Shape{3}, rng));
    const auto keys = attention_keys(p, tape.constant(random_tensor(Shape{5, 6}, rng)));
    const auto h = tape.constant(random_tensor(Shape{4}, rng));
    const auto zero = tape.zeros(Shape{5});
    EXPECT_EQ(values(attention_scores(p, h, keys, zero, true)), values(attention_scores(p, h, keys, zero, false)));
  }
}

TEST(Attention, ZeroVectorGivesUniformWeights) {
  AttentionToy toy;
  toy.v_a[0] = 0.0;
  Tp tape;
  const auto p = toy.bind(tape);
  const auto keys = attention_keys(p, tape.constant(Tn::matrix(2, 2, {0.3, 0.1, -0.2, 0.4})));
  const auto e = attention_scores(p, tape.constant(Tn::vector({1.0})), keys, tape.zeros(Shape{2}), true);
  EXPECT_EQ(values(e), (std::vector<double>{0.0, 0.0}));
  const auto a = num::softmax(e);
  EXPECT_NEAR(a.value()[0], 0.5, kTight);
}

TEST(Attention, CoverageLengthMismatchThrows) {
  AttentionToy toy;
  Tp tape;
  const auto p = toy.bind(tape);
  const auto keys = attention_keys(p, tape.constant(Tn::matrix(2, 2, {0.3, 0.1, -0.2, 0.4})));
  EXPECT_THROW(attention_scores(p, tape.constant(Tn::vector({1.0})), keys, tape.zeros(Shape{3}), true), DimensionError);
}

TEST(ContextVector, SelectionMeanAndWeights) {
  Tp tape;
  const auto states = tape.constant(Tn::matrix(3, 2, {1, 0, 0, 1, 4, 4}));
  EXPECT_EQ(values(context_vector(tape.constant(Tn::vector({0, 0, 1})), states)), (std::vector<double>{4, 4}));
  const auto mean = context_vector(tape.constant(Tn::vector({1.0 / 3, 1.0 / 3, 1.0 / 3})), states);
  EXPECT_NEAR(mean.value()[0], 5.0 / 3, 1e-12);
  const auto two = tape.constant(Tn::matrix(2, 2, {1, 0, 0, 1}));
  const auto c = context_vector(tape.constant(Tn::vector({0.25, 0.75})), two);
  EXPECT_NEAR(c.value()[0], 0.25, kTight);
  EXPECT_NEAR(c.value()[1], 0.75, kTight);
  EXPECT_THROW(context_vector(tape.constant(Tn::vector({0.5, 0.6})), two), DistributionError);
}

TEST(PartialContent, EmptyPrefixEqualStatesAndHandValue) {
  Tp tape;
  Bound<double> p;
  p.W_d = tape.constant(Tn::matrix(1, 1, {2.0}));
  p.b_d = tape.constant(Tn::vector({-0.5}));
  EXPECT_NEAR(partial_content(p, std::span<const V>{}).item(), std::tanh(-0.5), kTight);
  const auto same = rows_of(tape, {{0.3}, {0.3}});
  EXPECT_NEAR(partial_content(p, std::span<const V>(same)).item(), std::tanh(0.1), kTight);
  const auto two = rows_of(tape, {{0.4}, {0.8}});
  EXPECT_NEAR(partial_content(p, std::span<const V>(two)).item(), 0.6043677771171636, 1e-12);
}

// ------------------------------------------------------------------ output distributions

TEST(VocabDistribution, UniformSaturatedAndHand) {
  Tp tape;
  Bound<double> p;
  p.W_v = tape.constant(Tn(Shape{5, 3}));
  p.b_v = tape.constant(Tn(Shape{5}));
  const auto h = tape.constant(Tn::vector({0.3, -0.1})), c = tape.constant(Tn::vector({2.0}));
  for (double v : vocab_distribution(p, h, c).value()) EXPECT_NEAR(v, 0.2, kTight);
  p.b_v = tape.constant(Tn::vector({0, 0, 20, 0, 0}));
  EXPECT_GT(vocab_distribution(p, h, c).value()[2], 1 - 1e-8);

  p.W_v = tape.constant(Tn::matrix(3, 2, {1, 0, 0, 1, 1, 1}));
  p.b_v = tape.constant(Tn::vector({0.0, 0.5, -0.5}));
  const auto pv = vocab_distribution(p, tape.constant(Tn::vector({0.2})), tape.constant(Tn::vector({0.7})));
  EXPECT_NEAR(pv.value()[0], 0.2024420754938147, 1e-12);
  EXPECT_NEAR(pv.value()[1], 0.5502946151303707, 1e-12);
  EXPECT_NEAR(pv.value()[2], 0.24726330937581462, 1e-12);
}

Bound<double> pointer_toy(Tp& tape, double oc, double oh, double oy, double od, double bg) {
  Bound<double> p;
  p.omega_c = tape.constant(Tn::vector({oc}));
  p.omega_h = tape.constant(Tn::vector({oh}));
  p.omega_y = tape.constant(Tn::vector({oy}));
  p.omega_d = tape.constant(Tn::vector({od}));
  p.b_g = tape.constant(Tn::vector({bg}));
  return p;
}

TEST(GenerationProbability, Examples) {
  Tp tape;
  const auto c = tape.constant(Tn::vector({0.4})), h = tape.constant(Tn::vector({0.3})),
             y = tape.constant(Tn::vector({-0.2})), d = tape.constant(Tn::vector({0.8}));
  EXPECT_NEAR(generation_probability(pointer_toy(tape, 0, 0, 0, 0, 0), c, h, y, d).item(), 0.5, kTight);
  const double copy = generation_probability(pointer_toy(tape, 0, 0, 0, 0, -20), c, h, y, d).item();
  EXPECT_LT(copy, 1e-8);
  EXPECT_GT(copy, 0.0);
  EXPECT_NEAR(generation_probability(pointer_toy(tape, 0.5, -1, 2, 0.25, 0.1), c, h, y, d).item(),
              0.45016600268752216, 1e-12);
}

TEST(ExtendedDistribution, PureGenerationPadsWithZeros) {
  Tp tape;
  const auto pv = tape.constant(Tn::vector({0.1, 0.2, 0.3, 0.15, 0.25}));
  const auto a = tape.constant(Tn::vector({0.5, 0.5}));
  const int src[] = {5, 2};
  const auto pw = extended_distribution(pv, tape.scalar(1.0), a, std::span<const int>(src), 6);
  EXPECT_EQ(values(pw), (std::vector<double>{0.1, 0.2, 0.3, 0.15, 0.25, 0.0}));
}

TEST(ExtendedDistribution, PureCopyAggregatesRepeatedSource) {
  Tp tape;
  const auto pv = tape.constant(Tn::vector({0.2, 0.2, 0.2, 0.2, 0.2}));
  const auto a = tape.constant(Tn::vector({0.4, 0.6}));
  const int src[] = {5, 5};
  const auto pw = extended_distribution(pv, tape.scalar(0.0), a, std::span<const int>(src), 6);
  EXPECT_NEAR(pw.value()[5], 1.0, kTight);
}

TEST(ExtendedDistribution, MixedHandValue) {
  Tp tape;
  // w = id 4, q = extended id 5; P_v(w) = 0.9 and the remaining 0.1 sits on ids 0..3.
  const auto pv = tape.constant(Tn::vector({0.01, 0.02, 0.03, 0.04, 0.9}));
  const auto a = tape.constant(Tn::vector({0.5, 0.3, 0.2}));
  const int src[] = {4, 5, 4};
  const auto pw = extended_distribution(pv, tape.scalar(0.4), a, std::span<const int>(src), 6);
  EXPECT_NEAR(pw.value()[4], 0.78, kTight);
  EXPECT_NEAR(pw.value()[5], 0.18, kTight);
  EXPECT_NEAR(pw.value()[0] + pw.value()[1] + pw.value()[2] + pw.value()[3], 0.04, kTight);
  const int bad[] = {4, 6, 4};
  EXPECT_THROW(extended_distribution(pv, tape.scalar(0.4), a, std::span<const int>(bad), 6), DimensionError);
}

TEST(ExtendedDistribution, IsADistributionForAnySwitchAndAttention) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int trial = 0; trial < 300; ++trial) {
    Tp tape;
    std::vector<double> logits(7), scores(5);
    for (auto& x : logits) x = d(rng);
    for (auto& x : scores) x = d(rng);
    const auto pv = num::softmax(tape.constant(Shape{7}, logits));
    const auto a = num::softmax(tape.constant(Shape{5}, scores));
    std::vector<int> src(5);
    for (auto& s : src) s = static_cast<int>(rng() % 9);
    for (double pp : {0.0, 0.5, 1.0, std::uniform_real_distribution<double>(0, 1)(rng)}) {
      const auto pw = extended_distribution(pv, tape.scalar(pp), a, std::span<const int>(src), 9);
      double total = 0;
      for (double v : pw.value()) {
        EXPECT_GE(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Coverage, AccumulatesAttention) {
  Tp tape;
  auto c = tape.zeros(Shape{4});
  EXPECT_EQ(values(c), (std::vector<double>(4, 0.0)));
  const auto a0 = tape.constant(Tn::vector({0.1, 0.2, 0.3, 0.4}));
  EXPECT_EQ(values(coverage_update(c, a0)), values(a0));
  const auto uniform = tape.constant(Tn::vector({0.25, 0.25, 0.25, 0.25}));
  for (int i = 0; i < 3; ++i) c = coverage_update(c, uniform);
  for (double v : c.value()) EXPECT_NEAR(v, 0.75, kTight);
  EXPECT_THROW(coverage_update(c, tape.zeros(Shape{3})), DimensionError);
}

// ------------------------------------------------------------------ parameters

TEST(ModelParams, AllocationFollowsFlags) {
  auto cfg = testing::toy_config();
  const ModelParams<double> full(cfg);
  for (const char* n : {"W_c", "omega_d", "b_g", "W_1", "W_s", "GRU^q_fwd.W_u", "W_q", "P_f", "W_d"}) {
    EXPECT_TRUE(full.contains(n)) << n;
  }
  EXPECT_FALSE(full.contains("W_s'"));
  cfg.use_claims = false;
  EXPECT_FALSE(ModelParams<double>(cfg).contains("W_q"));
  cfg.use_claims = true;
  cfg.untie_ws = true;
  EXPECT_TRUE(ModelParams<double>(cfg).contains("W_s'"));
}

TEST(ModelParams, ClassicSeq2SeqCount) {
  auto cfg = testing::toy_config();
  cfg.pointer = cfg.coverage = cfg.slave = false;
  const ModelParams<double> p(cfg);
  const std::size_t V = cfg.vocab_size, e = cfg.embedding, h = cfg.hidden_master, d = cfg.hidden_decoder,
                    a = cfg.attention;
  // Embeddings, two encoder GRUs, decoder GRU, init projection, attention, output layer.
  const std::size_t expect = V * e + 2 * 3 * h * (e + h) + 3 * d * (e + d) + d * 2 * h + a + a * d + a * 2 * h +
                             V * (d + 2 * h) + V;
  EXPECT_EQ(p.count(), expect);
  EXPECT_EQ(p.names().size(), 16u);
}

TEST(ModelParams, UniformInitWithinRangeAndSeeded) {
  const auto cfg = testing::toy_config();
  ModelParams<double> a(cfg), b(cfg), c(cfg);
  a.initialize(7, 0.05);
  b.initialize(7, 0.05);
  c.initialize(8, 0.05);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  bool nonzero_va = false;
  for (auto* t : a.tensors())
    for (double v : t->data()) EXPECT_LE(std::abs(v), 0.05);
  for (double v : a["v_a"].data()) nonzero_va = nonzero_va || v != 0.0;
  EXPECT_TRUE(nonzero_va);
  EXPECT_THROW(a["nope"], ConfigError);
}

// ------------------------------------------------------------------ full decoder

ModelParams<double> random_model(const ModelConfig& cfg, std::uint64_t seed, double range = 0.5) {
  ModelParams<double> p(cfg);
  p.initialize(seed, range);
  return p;
}

/// Makes STOP unreachable through generation so decodes run to the length cap.
void forbid_stop(ModelParams<double>& p) { p["b_v"][corpus::Vocabulary::stop_id] = -60.0; }

TEST(DecodeSequence, ZeroModelTerminatesWithNormalizedSteps) {
  auto cfg = testing::toy_config();
  cfg.K = 100;
  ModelParams<double> p(cfg);
  const auto ex = testing::toy_example();
  const auto out = decode_sequence(p, cfg, ex);
  EXPECT_LE(out.trace.size(), 100u);
  EXPECT_GE(out.trace.size(), 1u);
  for (const auto& r : out.trace) EXPECT_NEAR(r.checksum, 1.0, 1e-6);
}

TEST(DecodeSequence, CopiesTheOovWordWhenGenerationIsOff) {
  auto cfg = testing::toy_config();
  ModelParams<double> p = random_model(cfg, 3);
  p["b_g"][0] = -40.0;
  auto ex = testing::toy_example();
  ex.spec_ids = {corpus::Vocabulary::unk_id};
  ex.spec_extended_ids = {static_cast<int>(cfg.vocab_size)};
  const auto out = decode_sequence(p, cfg, ex, {1, 3});
  ASSERT_FALSE(out.ids.empty());
  EXPECT_EQ(out.ids[0], static_cast<int>(cfg.vocab_size));
  std::vector<std::vector<std::string>> words(1);
  for (std::size_t i = 4; i < cfg.vocab_size; ++i) words[0].push_back("w" + std::to_string(i));
  const auto vocab = corpus::Vocabulary::build(words, cfg.vocab_size);
  EXPECT_EQ(decoded_tokens(out.ids, vocab, ex).at(0), "q");
}

std::vector<std::size_t> expected_fusions(std::size_t K, std::size_t L) {
  std::vector<std::size_t> out;
  for (std::size_t s = K; s <= L; s += K) out.push_back(s);
  return out;
}

TEST(DecodeSequence, FusionScheduleMatchesMultiplesOfK) {
  auto cfg = testing::toy_config();
  cfg.max_out = 10;
  auto p = random_model(cfg, 4);
  forbid_stop(p);
  const auto ex = testing::toy_example();
  for (std::size_t K : {1u, 2u, 3u, 20u, 200u}) {
    cfg.K = K;
    const auto out = decode_sequence(p, cfg, ex);
    ASSERT_EQ(out.trace.size(), 10u);
    EXPECT_EQ(fused_steps(out.trace), expected_fusions(K, 10)) << "K=" << K;
  }
  cfg.K = 2;
  const auto four = decode_sequence(p, cfg, ex, {1, 4});
  EXPECT_EQ(fused_steps(four.trace), (std::vector<std::size_t>{2, 4}));
}

TEST(DecodeSequence, TracesForDifferentKAgreeBeforeTheFirstBoundary) {
  auto cfg = testing::toy_config();
  cfg.max_out = 30;
  auto p = random_model(cfg, 5);
  forbid_stop(p);
  const auto ex = testing::toy_example();
  cfg.K = 200;
  const auto whole = decode_sequence(p, cfg, ex);
  cfg.K = 20;
  const auto staged = decode_sequence(p, cfg, ex);
  ASSERT_EQ(whole.trace.size(), 30u);
  ASSERT_EQ(staged.trace.size(), 30u);
  for (std::size_t i = 0; i < 19; ++i) {
    EXPECT_EQ(whole.trace[i].attention, staged.trace[i].attention) << "step " << i + 1;
    EXPECT_EQ(whole.trace[i].p_gen, staged.trace[i].p_gen);
  }
  EXPECT_NE(whole.trace[19].p_gen, staged.trace[19].p_gen);
}

TEST(DecodeSequence, PointerOffNeverEmitsExtendedIds) {
  std::mt19937_64 rng(61);
  auto cfg = testing::toy_config();
  cfg.pointer = false;
  cfg.max_out = 12;
  for (int trial = 0; trial < 30; ++trial) {
    auto p = random_model(cfg, 100 + static_cast<std::uint64_t>(trial), 1.0);
    const auto ex = testing::random_example(rng, cfg.vocab_size);
    const auto out = decode_sequence(p, cfg, ex);
    for (int id : out.ids) EXPECT_LT(id, static_cast<int>(cfg.vocab_size));
    for (const auto& r : out.trace) EXPECT_FALSE(r.p_gen.has_value());
  }
}

TEST(DecodeSequence, NearPureCopyEmitsOnlySourceTokens) {
  std::mt19937_64 rng(62);
  auto cfg = testing::toy_config();
  cfg.max_out = 12;
  for (int trial = 0; trial < 30; ++trial) {
    auto p = random_model(cfg, 200 + static_cast<std::uint64_t>(trial), 1.0);
    p["b_g"][0] = -40.0;
    const auto ex = testing::random_example(rng, cfg.vocab_size);
    const std::set<int> source(ex.spec_extended_ids.begin(), ex.spec_extended_ids.end());
    const auto out = decode_sequence(p, cfg, ex);
    for (int id : out.ids) EXPECT_TRUE(source.contains(id)) << id;
  }
}

TEST(DecodeSequence, CoverageIsMonotoneAndSumsToStepCount) {
  std::mt19937_64 rng(63);
  auto cfg = testing::toy_config();
  cfg.K = 3;
  cfg.max_out = 15;
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_model(cfg, 300 + static_cast<std::uint64_t>(trial), 1.0);
    const auto ex = testing::random_example(rng, cfg.vocab_size);
    const auto out = decode_sequence(p, cfg, ex);
    std::vector<double> prev(ex.spec_ids.size(), 0.0);
    for (const auto& r : out.trace) {
      EXPECT_NEAR(std::accumulate(r.attention.begin(), r.attention.end(), 0.0), 1.0, 1e-9);
      EXPECT_NEAR(std::accumulate(r.coverage.begin(), r.coverage.end(), 0.0), static_cast<double>(r.step), 1e-6);
      for (std::size_t j = 0; j < prev.size(); ++j) EXPECT_GE(r.coverage[j], prev[j]);
      prev = r.coverage;
      EXPECT_NEAR(r.checksum, 1.0, 1e-6);
    }
  }
}

TEST(DecodeSequence, BeamOfOneIsGreedyAndWiderBeamScoresNoWorse) {
  std::mt19937_64 rng(64);
  auto cfg = testing::toy_config();
  cfg.K = 2;
  cfg.max_out = 8;
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_model(cfg, 400 + static_cast<std::uint64_t>(trial), 1.0);
    const auto ex = testing::random_example(rng, cfg.vocab_size);
    const auto greedy = decode_sequence(p, cfg, ex, {1, 0});
    const auto again = decode_sequence(p, cfg, ex, {1, 0});
    EXPECT_EQ(greedy.ids, again.ids);
    const auto beam = decode_sequence(p, cfg, ex, {4, 0});
    EXPECT_LE(beam.trace.size(), 8u);
    if (greedy.stopped && beam.stopped) {
      EXPECT_GE(beam.log_prob, greedy.log_prob - 1e-9);
    }
    for (const auto& r : beam.trace) EXPECT_NEAR(r.checksum, 1.0, 1e-6);
  }
}

TEST(Trace, JsonRoundTrip) {
  auto cfg = testing::toy_config();
  cfg.max_out = 5;
  auto p = random_model(cfg, 9);
  const auto ex = testing::toy_example();
  const auto out = decode_sequence(p, cfg, ex);
  for (const auto& r : out.trace) {
    const auto back = trace_record_from_json(to_json(r));
    EXPECT_EQ(back.step, r.step);
    EXPECT_EQ(back.emitted, r.emitted);
    EXPECT_EQ(back.attention, r.attention);
    EXPECT_EQ(back.p_gen, r.p_gen);
  }
}

// ------------------------------------------------------------------ loss gradients

double check_loss_gradients(ModelParams<double>& p, const ModelConfig& cfg, const corpus::EncodedExample& ex) {
  auto tensors = p.tensors();
  const auto report = num::grad_check_params<double>(std::span<Tn* const>(tensors), [&](Tp& tape) {
    const Bound<double> b(tape, p);
    return example_loss(b, cfg, ex, nullptr).total;
  }, 1e-5, 1e-5);
  return report.max_error;
}

TEST(ExampleLoss, FullGradientMatchesFiniteDifferences) {
  const auto cfg = testing::toy_config();
  auto p = random_model(cfg, 11);
  EXPECT_LT(check_loss_gradients(p, cfg, testing::toy_example()), 1e-4);
}

TEST(ExampleLoss, AblatedGroupsReceiveNoGradient) {
  const auto full = testing::toy_config();
  auto p = random_model(full, 12);
  const auto ex = testing::toy_example();
  auto run = [&](ModelConfig cfg) {
    p.enable_grad();
    Tp tape;
    const Bound<double> b(tape, p);
    tape.backward(example_loss(b, cfg, ex, nullptr).total);
  };
  auto all_zero = [&](std::initializer_list<std::string> names) {
    for (const auto& n : names)
      for (double g : p[n].grad())
        if (g != 0.0) return false;
    return true;
  };
  auto cfg = full;
  cfg.coverage = false;
  run(cfg);
  EXPECT_TRUE(all_zero({"W_c"}));
  EXPECT_FALSE(all_zero({"W_a"}));

  cfg = full;
  cfg.pointer = false;
  run(cfg);
  EXPECT_TRUE(all_zero({"omega_c", "omega_h", "omega_y", "omega_d", "b_g"}));

  cfg = full;
  cfg.slave = false;
  run(cfg);
  EXPECT_TRUE(all_zero({"W_1", "b_1", "W_2", "b_2", "W_s", "W_r", "W_k", "P_f", "W_d", "b_d", "W_p", "b_p",
                        "GRU^s.W_u", "GRU^q_fwd.W_u", "W_q", "omega_d"}));

  cfg = full;
  cfg.use_claims = false;
  run(cfg);
  EXPECT_TRUE(all_zero({"GRU^q_fwd.W_u", "GRU^q_bwd.W_h", "W_q", "b_q", "W_k"}));
  EXPECT_FALSE(all_zero({"W_1"}));
}

TEST(ExampleLoss, PerfectPredictionWithoutCoverageIsZero) {
  auto cfg = testing::toy_config();
  cfg.coverage = false;
  cfg.pointer = false;
  cfg.slave = false;
  ModelParams<double> p(cfg);
  // The output layer ignores its input and puts all mass on STOP.
  p["b_v"][corpus::Vocabulary::stop_id] = 800.0;
  auto ex = testing::toy_example();
  ex.summary_ids = {corpus::Vocabulary::stop_id};
  ex.summary_extended_ids = {corpus::Vocabulary::stop_id};
  Tp tape(false);
  const Bound<double> b(tape, p);
  const auto loss = example_loss(b, cfg, ex, nullptr);
  EXPECT_EQ(loss.total.item(), 0.0);
  EXPECT_EQ(loss.tokens, 1u);
}

TEST(ExampleLoss, FirstStepCarriesNoCoveragePenalty) {
  const auto cfg = testing::toy_config();
  auto p = random_model(cfg, 13);
  auto ex = testing::toy_example();
  ex.summary_ids.resize(1);
  ex.summary_extended_ids.resize(1);
  Tp tape(false);
  const Bound<double> b(tape, p);
  const auto loss = example_loss(b, cfg, ex, nullptr);
  EXPECT_EQ(loss.coverage, 0.0);
  EXPECT_NEAR(loss.total.item(), loss.nll, 1e-15);
}

TEST(ExampleLoss, GoldOutsideExtendedVocabularyIsAnError) {
  const auto cfg = testing::toy_config();
  auto p = random_model(cfg, 14);
  auto ex = testing::toy_example();
  ex.summary_extended_ids[0] = static_cast<int>(cfg.vocab_size) + 5;
  Tp tape(false);
  const Bound<double> b(tape, p);
  EXPECT_THROW(example_loss(b, cfg, ex, nullptr), DataError);
}

}  // namespace
}  // namespace msea::model
