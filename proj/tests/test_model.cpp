#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "prlstm/model.hpp"
#include "prlstm/rng.hpp"
#include "prlstm/runner.hpp"
#include "prlstm/scan.hpp"
#include "reference.hpp"

using namespace prlstm;

namespace {

Tensor row(std::vector<float> v) {
  const int64_t n = static_cast<int64_t>(v.size());
  return Tensor::from_values({1, n}, std::move(v));
}

Tensor onehot_tokens(const std::vector<int32_t>& tokens, int64_t d_x) {
  std::vector<float> v(tokens.size() * d_x, 0.0f);
  for (size_t t = 0; t < tokens.size(); t++) v[t * d_x + tokens[t]] = 1.0f;
  return Tensor::from_values({1, static_cast<int64_t>(tokens.size()), d_x}, std::move(v));
}

ModelConfig cfg(Variant v, int64_t d_h, int64_t d_x, int64_t r, int64_t k) {
  ModelConfig c;
  c.variant = v;
  c.d_h = d_h;
  c.d_x = d_x;
  c.refine_stages = r;
  c.k_out = k;
  return c;
}

double max_abs_diff(std::span<const float> a, const refimpl::Vecd& b) {
  double m = 0.0;
  for (size_t i = 0; i < b.size(); i++) m = std::max(m, std::abs((double)a[i] - b[i]));
  return m;
}

Tensor clone(const Tensor& t) {
  return Tensor::from_values(t.shape(), {t.values().begin(), t.values().end()});
}

}  // namespace

TEST_CASE("two-state gates: zero weights and fixed biases") {
  CompositionParams p;
  p.W_g2 = Tensor::zeros({4, 2});
  p.b_g2 = Tensor::from_values({4}, {2.0f, -2.0f, 0.0f, 0.0f});
  p.W_u2 = Tensor::zeros({1, 2});
  p.b_u2 = Tensor::zeros({1});
  Tape tape;
  auto g = two_state_gates(tape, row({0.3f}), row({-0.7f}), p);
  CHECK(g.f1.item() == doctest::Approx(0.880797).epsilon(1e-5));
  CHECK(g.f2.item() == doctest::Approx(0.119203).epsilon(1e-4));
  CHECK(g.i.item() == doctest::Approx(0.5));
  CHECK(g.o.item() == doctest::Approx(0.5));
  CHECK(g.u.item() == 0.0f);
}

TEST_CASE("two-state gates: fused rows map to [f1, f2, i, o] blocks") {
  const int64_t d = 3;
  Model m = Model::init(cfg(Variant::pr_lstm, d, 2, 1, 2), 5);
  Tape tape;
  Tensor hl = row({0.1f, -0.2f, 0.4f});
  Tensor hr = row({-0.3f, 0.5f, 0.2f});
  auto base = two_state_gates(tape, hl, hr, m.comp);
  // bump the first gate block only
  auto w = m.comp.W_g2.mutable_values();
  for (int64_t i = 0; i < d * 2 * d; i++) w[i] += 0.25f;
  auto bumped = two_state_gates(tape, hl, hr, m.comp);
  bool f1_changed = false;
  for (int64_t j = 0; j < d; j++) f1_changed |= bumped.f1.values()[j] != base.f1.values()[j];
  CHECK(f1_changed);
  for (int64_t j = 0; j < d; j++) {
    CHECK(bumped.f2.values()[j] == base.f2.values()[j]);
    CHECK(bumped.i.values()[j] == base.i.values()[j]);
    CHECK(bumped.o.values()[j] == base.o.values()[j]);
    CHECK(bumped.u.values()[j] == base.u.values()[j]);
  }
}

TEST_CASE("forget-add-activate") {
  Tape tape;
  SUBCASE("pure passthrough of the first cell") {
    auto s = forget_add_activate(tape, {{row({1.0f}), row({0.8f})}, {row({0.0f}), row({-2.0f})}},
                                 row({0.0f}), row({0.9f}), row({0.7f}));
    CHECK(s.c.item() == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(s.h.item() == doctest::Approx(0.7 * std::tanh(0.8)).epsilon(1e-5));
  }
  SUBCASE("pure write") {
    auto s = forget_add_activate(tape, {{row({0.0f}), row({5.0f})}}, row({1.0f}), row({0.37f}),
                                 row({1.0f}));
    CHECK(s.c.item() == doctest::Approx(0.37).epsilon(1e-6));
  }
  SUBCASE("mixed scalar case") {
    auto s = forget_add_activate(tape, {{row({0.5f}), row({2.0f})}, {row({0.5f}), row({-2.0f})}},
                                 row({0.5f}), row({0.8f}), row({1.0f}));
    CHECK(s.c.item() == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(s.h.item() == doctest::Approx(0.379949).epsilon(1e-4));
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(forget_add_activate(tape, {{row({1.0f, 1.0f}), row({1.0f})}}, row({0.0f}),
                                        row({0.0f}), row({0.0f})),
                    TensorError);
  }
}

TEST_CASE("one-state gates") {
  RefineParams p;
  p.W_g1 = Tensor::zeros({3, 1});
  p.b_g1 = Tensor::from_values({3}, {0.0f, 0.0f, 4.0f});
  p.W_u1 = Tensor::zeros({1, 1});
  p.b_u1 = Tensor::zeros({1});
  Tape tape;
  auto g = one_state_gates(tape, row({0.2f}), p);
  CHECK(g.f1.item() == doctest::Approx(0.5));
  CHECK(g.i.item() == doctest::Approx(0.5));
  CHECK(g.o.item() == doctest::Approx(0.982014).epsilon(1e-5));
  CHECK(g.u.item() == 0.0f);

  // rows 2d..3d-1 of the fused matrix feed o only
  const int64_t d = 3;
  Model m = Model::init(cfg(Variant::pr_lstm, d, 2, 1, 2), 9);
  Tensor h = row({0.4f, -0.1f, 0.3f});
  auto base = one_state_gates(tape, h, m.refine[0]);
  auto w = m.refine[0].W_g1.mutable_values();
  for (int64_t i = 2 * d * d; i < 3 * d * d; i++) w[i] -= 0.5f;
  auto bumped = one_state_gates(tape, h, m.refine[0]);
  bool o_changed = false;
  for (int64_t j = 0; j < d; j++) o_changed |= bumped.o.values()[j] != base.o.values()[j];
  CHECK(o_changed);
  for (int64_t j = 0; j < d; j++) {
    CHECK(bumped.f1.values()[j] == base.f1.values()[j]);
    CHECK(bumped.i.values()[j] == base.i.values()[j]);
    CHECK(bumped.u.values()[j] == base.u.values()[j]);
  }
}

TEST_CASE("state embedding") {
  SUBCASE("zero parameters force a zero state") {
    EmbedParams p;
    p.W_io = Tensor::zeros({2, 3});
    p.b_io = Tensor::zeros({2});
    p.W_u = Tensor::zeros({1, 3});
    p.b_u = Tensor::zeros({1});
    Tape tape;
    auto s = state_embed(tape, row({0.0f, 1.0f, 0.0f}), p);
    CHECK(s.c.item() == 0.0f);
    CHECK(s.h.item() == 0.0f);
  }
  SUBCASE("scalar case") {
    EmbedParams p;
    p.W_io = Tensor::zeros({2, 1});
    p.b_io = Tensor::zeros({2});
    p.W_u = Tensor::from_values({1, 1}, {1.0f});
    p.b_u = Tensor::zeros({1});
    Tape tape;
    auto s = state_embed(tape, row({1.0f}), p);
    const double u = std::tanh(1.0);
    const double c = 0.5 * u;
    CHECK(s.c.item() == doctest::Approx(c).epsilon(1e-5));
    CHECK(s.h.item() == doctest::Approx(0.5 * std::tanh(c)).epsilon(1e-5));
    CHECK(s.h.item() == doctest::Approx(0.1817).epsilon(2e-3));
  }
  SUBCASE("the map is position independent") {
    Model m = Model::init(cfg(Variant::pr_lstm, 4, 3, 1, 2), 3);
    Tape tape;
    Tensor x = row({0.0f, 1.0f, 0.0f});
    auto a = state_embed(tape, x, m.embed);
    auto b = state_embed(tape, x, m.embed);
    for (int64_t j = 0; j < 4; j++) {
      CHECK(a.h.values()[j] == b.h.values()[j]);
      CHECK(a.c.values()[j] == b.c.values()[j]);
    }
  }
}

TEST_CASE("compose") {
  SUBCASE("R=0 is the composition stage alone") {
    Model m = Model::init(cfg(Variant::pr_lstm, 2, 3, 0, 2), 4);
    Tape tape;
    LatentState a{row({0.1f, 0.2f}), row({0.3f, -0.1f})};
    LatentState b{row({-0.2f, 0.4f}), row({0.0f, 0.5f})};
    auto g = two_state_gates(tape, a.h, b.h, m.comp);
    auto direct = forget_add_activate(tape, {{g.f1, a.c}, {g.f2, b.c}}, g.i, g.u, g.o);
    auto via_compose = compose(tape, a, b, m);
    for (int64_t j = 0; j < 2; j++) {
      CHECK(via_compose.h.values()[j] == direct.h.values()[j]);
      CHECK(via_compose.c.values()[j] == direct.c.values()[j]);
    }
  }
  SUBCASE("zero parameters, scalar walk through both stages") {
    Model m = Model::init(cfg(Variant::pr_lstm, 1, 2, 1, 2), 4);
    for (auto& [name, t] : m.named_params())
      for (auto& v : t.mutable_values()) v = 0.0f;
    Tape tape;
    LatentState a{row({0.6f}), row({1.1f})};
    LatentState b{row({-0.4f}), row({0.5f})};
    auto s = compose(tape, a, b, m);
    // composition: gates 0.5, u = 0, c1 = 0.5*(1.1+0.5); refinement halves it again
    const double c1 = 0.5 * (1.1 + 0.5);
    const double c2 = 0.5 * c1;
    CHECK(s.c.item() == doctest::Approx(c2).epsilon(1e-5));
    CHECK(s.h.item() == doctest::Approx(0.5 * std::tanh(c2)).epsilon(1e-5));
  }
  SUBCASE("composition is not commutative") {
    Model m = Model::init(cfg(Variant::pr_lstm, 3, 2, 1, 2), 11);
    Tape tape;
    LatentState a{row({0.3f, -0.5f, 0.2f}), row({0.1f, 0.4f, -0.2f})};
    LatentState b{row({-0.1f, 0.2f, 0.6f}), row({0.5f, -0.3f, 0.0f})};
    auto ab = compose(tape, a, b, m);
    auto ba = compose(tape, b, a, m);
    double diff = 0.0;
    for (int64_t j = 0; j < 3; j++) diff += std::abs(ab.h.values()[j] - ba.h.values()[j]);
    CHECK(diff > 1e-6);
  }
}

TEST_CASE("relu composition blocks") {
  SUBCASE("zero parameters give zero output") {
    FcParams p{Tensor::zeros({2, 4}), Tensor::zeros({2})};
    Tape tape;
    Tensor y = fc_compose(tape, row({0.5f, -1.0f}), row({2.0f, 0.3f}), p);
    CHECK(y.values()[0] == 0.0f);
    CHECK(y.values()[1] == 0.0f);
  }
  SUBCASE("negative pre-activations clamp to exact zeros") {
    FcParams p{Tensor::zeros({1, 2}), Tensor::from_values({1}, {-3.0f})};
    Tape tape;
    CHECK(fc_refine_stage(tape, row({0.9f, 0.1f}), p).item() == 0.0f);
  }
  SUBCASE("scalar case matches a hand computation") {
    FcParams p{Tensor::from_values({1, 2}, {0.7f, -0.3f}), Tensor::from_values({1}, {0.1f})};
    Tape tape;
    const double want = std::max(0.0, 0.7 * 0.4 - 0.3 * 0.2 + 0.1);
    CHECK(fc_compose(tape, row({0.4f}), row({0.2f}), p).item() ==
          doctest::Approx(want).epsilon(1e-5));
  }
}

TEST_CASE("forward against the tree-walk reference") {
  for (Variant v : {Variant::pr_lstm, Variant::pr_rnn, Variant::seq_lstm, Variant::seq_rnn}) {
    CAPTURE(variant_name(v));
    Model m = Model::init(cfg(v, 2, 3, 1, 2), 21);
    auto flat = refimpl::FlatModel::from(m);
    std::vector<int32_t> tokens = {1, 0, 2, 1};
    Tape tape;
    auto states = forward(tape, m, onehot_tokens(tokens, 3));
    auto ref_states = refimpl::forward_states(flat, tokens);
    REQUIRE(states.size() == 4);
    for (size_t t = 0; t < 4; t++) {
      CHECK(max_abs_diff(states[t].h.values(), ref_states[t].h) < 1e-5);
      if (v == Variant::pr_lstm || v == Variant::seq_lstm)
        CHECK(max_abs_diff(states[t].c.values(), ref_states[t].c) < 1e-5);
    }
  }
}

TEST_CASE("forward basics") {
  Model m = Model::init(cfg(Variant::pr_lstm, 3, 2, 1, 2), 2);
  SUBCASE("T=1 output is the embedded leaf") {
    Tape tape;
    auto states = forward(tape, m, onehot_tokens({1}, 2));
    auto leaf = state_embed(tape, row({0.0f, 1.0f}), m.embed);
    for (int64_t j = 0; j < 3; j++) CHECK(states[0].h.values()[j] == leaf.h.values()[j]);
  }
  SUBCASE("prefix causality: later tokens cannot move earlier states") {
    Tape t1, t2;
    auto s1 = forward(t1, m, onehot_tokens({1, 0, 0, 1, 0}, 2));
    auto s2 = forward(t2, m, onehot_tokens({1, 0, 0, 0, 1}, 2));
    for (size_t t = 0; t < 3; t++)
      for (int64_t j = 0; j < 3; j++) CHECK(s1[t].h.values()[j] == s2[t].h.values()[j]);
    bool moved = false;
    for (int64_t j = 0; j < 3; j++) moved |= s1[3].h.values()[j] != s2[3].h.values()[j];
    CHECK(moved);
  }
  SUBCASE("rejects mismatched input width") {
    Tape tape;
    CHECK_THROWS_AS(forward(tape, m, Tensor::zeros({1, 4, 5})), TensorError);
    CHECK_THROWS_AS(forward(tape, m, Tensor::zeros({2, 3})), TensorError);
  }
}

TEST_CASE("sequential baselines") {
  SUBCASE("zero parameters give a zero hidden trajectory") {
    Model m = Model::init(cfg(Variant::seq_lstm, 2, 3, 0, 2), 4);
    for (auto& [name, t] : m.named_params())
      for (auto& v : t.mutable_values()) v = 0.0f;
    Tape tape;
    auto states = forward(tape, m, onehot_tokens({0, 1, 2}, 3));
    for (auto& s : states)
      for (int64_t j = 0; j < 2; j++) CHECK(s.h.values()[j] == 0.0f);
  }
  SUBCASE("T=3 scalar recurrence") {
    Model m = Model::init(cfg(Variant::seq_rnn, 1, 2, 0, 2), 4);
    auto flat = refimpl::FlatModel::from(m);
    std::vector<int32_t> tokens = {1, 0, 1};
    Tape tape;
    auto states = forward(tape, m, onehot_tokens(tokens, 2));
    auto ref_states = refimpl::forward_states(flat, tokens);
    for (size_t t = 0; t < 3; t++)
      CHECK(states[t].h.item() == doctest::Approx(ref_states[t].h[0]).epsilon(1e-5));
  }
  SUBCASE("parameter count closed form") {
    ModelConfig c = cfg(Variant::seq_lstm, 7, 5, 0, 3);
    auto n = count_encoder_params(c);
    CHECK(n.weights == 4 * 7 * (7 + 5));
    CHECK(n.biases == 4 * 7);
  }
}

TEST_CASE("heads") {
  Model m = Model::init(cfg(Variant::pr_lstm, 4, 3, 1, 5), 6);
  SUBCASE("zero weights give the uniform loss ln K") {
    for (auto& v : m.head.W.mutable_values()) v = 0.0f;
    for (auto& v : m.head.b.mutable_values()) v = 0.0f;
    Tape tape;
    auto states = forward(tape, m, onehot_tokens({0, 1, 2}, 3));
    Tensor h = gather_masked(tape, states, {{2, 0}});
    Tensor loss = tape.softmax_cross_entropy(head_logits(tape, m, h), {3});
    CHECK(loss.item() == doctest::Approx(std::log(5.0)).epsilon(1e-6));
  }
  SUBCASE("argmax ties break toward the lowest class") {
    for (auto& v : m.head.W.mutable_values()) v = 0.0f;
    for (auto& v : m.head.b.mutable_values()) v = 0.0f;
    InferenceRunner runner(m, 3, 1, nullptr);
    runner.forward(std::vector<int32_t>{0, 1, 2});
    auto pred = runner.predict({{2, 0}});
    CHECK(pred[0] == 0);
  }
  SUBCASE("positions outside the sequence are rejected") {
    Tape tape;
    auto states = forward(tape, m, onehot_tokens({0, 1}, 3));
    CHECK_THROWS_AS(gather_masked(tape, states, {{2, 0}}), TensorError);
    InferenceRunner runner(m, 2, 1, nullptr);
    runner.forward(std::vector<int32_t>{0, 1});
    CHECK_THROWS_AS(runner.predict({{5, 0}}), TensorError);
  }
  SUBCASE("random instance matches the reference head") {
    auto flat = refimpl::FlatModel::from(m);
    std::vector<int32_t> tokens = {2, 0, 1};
    Tape tape;
    auto states = forward(tape, m, onehot_tokens(tokens, 3));
    Tensor h = gather_masked(tape, states, {{2, 0}});
    const double got = tape.softmax_cross_entropy(head_logits(tape, m, h), {4}).item();
    const double want = refimpl::loss(flat, {tokens}, {{2, 0}}, {4});
    CHECK(got == doctest::Approx(want).epsilon(1e-4));
  }
}

TEST_CASE("hidden coordinates stay inside the unit interval") {
  Rng rng(31);
  for (int trial = 0; trial < 20; trial++) {
    ModelConfig c = cfg(Variant::pr_lstm, 1 + rng.next_below(6), 3, rng.next_below(3), 2);
    Model m = Model::init(c, rng.next_u64());
    for (auto& [name, t] : m.named_params())
      for (auto& v : t.mutable_values()) v *= 6.0f;  // well past the init range
    const int64_t T = 1 + rng.next_below(12);
    std::vector<int32_t> tokens(T);
    for (auto& t : tokens) t = rng.next_below(3);
    Tape tape;
    auto states = forward(tape, m, onehot_tokens(tokens, 3));
    for (auto& s : states)
      for (float h : s.h.values()) CHECK(std::abs(h) < 1.0f);
  }
}

TEST_CASE("shared parameters receive the sum of per-node gradients") {
  const int64_t T = 4;
  Model tied = Model::init(cfg(Variant::pr_lstm, 2, 3, 1, 2), 77);
  std::vector<int32_t> tokens = {0, 1, 2, 1};
  std::vector<int64_t> labels = {1};

  Tape tape;
  auto states = forward(tape, tied, onehot_tokens(tokens, 3));
  Tensor loss = tape.softmax_cross_entropy(
      head_logits(tape, tied, gather_masked(tape, states, {{3, 0}})), labels);
  tied.zero_grads();
  tape.backward(loss);

  // untied twin: a distinct parameter copy per tree node, same values
  auto plan = scan::build_plan(T);
  const int64_t nodes = plan.op_count();
  std::vector<CompositionParams> comps;
  std::vector<std::vector<RefineParams>> refines;
  for (int64_t n = 0; n < nodes; n++) {
    comps.push_back({clone(tied.comp.W_g2), clone(tied.comp.b_g2), clone(tied.comp.W_u2),
                     clone(tied.comp.b_u2)});
    refines.push_back({{clone(tied.refine[0].W_g1), clone(tied.refine[0].b_g1),
                        clone(tied.refine[0].W_u1), clone(tied.refine[0].b_u1)}});
  }

  Tape tape2;
  Tensor tokens3d = onehot_tokens(tokens, 3);
  std::vector<LatentState> leaves;
  for (int64_t t = 0; t < T; t++)
    leaves.push_back(state_embed(tape2, slice_time(tokens3d, t), tied.embed));
  int64_t node = 0;
  auto out = scan::execute_prefix(plan, leaves, [&](const LatentState& a, const LatentState& b) {
    auto s = compose_stages(tape2, a, b, comps[node], refines[node]);
    node++;
    return s;
  });
  CHECK(node == nodes);
  Tensor loss2 = tape2.softmax_cross_entropy(
      head_logits(tape2, tied, gather_masked(tape2, out, {{3, 0}})), labels);
  CHECK(loss2.item() == doctest::Approx(loss.item()).epsilon(1e-6));
  tape2.backward(loss2);

  auto check_sum = [&](const Tensor& tied_param, auto per_node) {
    auto tg = tied_param.grad();
    for (size_t i = 0; i < tg.size(); i++) {
      double acc = 0.0;
      for (int64_t n = 0; n < nodes; n++) {
        const Tensor& t = per_node(n);
        if (t.has_grad()) acc += t.grad()[i];
      }
      CHECK(std::abs(tg[i] - acc) < 1e-4 * std::max(0.01, std::abs(acc)));
    }
  };
  check_sum(tied.comp.W_g2, [&](int64_t n) -> const Tensor& { return comps[n].W_g2; });
  check_sum(tied.comp.b_g2, [&](int64_t n) -> const Tensor& { return comps[n].b_g2; });
  check_sum(tied.comp.W_u2, [&](int64_t n) -> const Tensor& { return comps[n].W_u2; });
  check_sum(tied.refine[0].W_g1, [&](int64_t n) -> const Tensor& { return refines[n][0].W_g1; });
}

TEST_CASE("full-model gradients match central differences") {
  Rng rng(13);
  for (int trial = 0; trial < 4; trial++) {
    const int64_t d_h = 1 + rng.next_below(3);
    const int64_t T = 3 + rng.next_below(3);
    ModelConfig c = cfg(Variant::pr_lstm, d_h, 3, rng.next_below(2), 2);
    Model m = Model::init(c, rng.next_u64());
    std::vector<int32_t> tokens(T);
    for (auto& t : tokens) t = rng.next_below(3);
    std::vector<int64_t> labels = {static_cast<int64_t>(rng.next_below(2))};

    Tape tape;
    auto states = forward(tape, m, onehot_tokens(tokens, 3));
    Tensor loss = tape.softmax_cross_entropy(
        head_logits(tape, m, gather_masked(tape, states, {{T - 1, 0}})), labels);
    m.zero_grads();
    tape.backward(loss);

    auto flat = refimpl::FlatModel::from(m);
    auto fd = refimpl::fd_grad(flat, {tokens}, {{T - 1, 0}}, labels);
    size_t k = 0;
    double worst = 0.0;
    for (auto& [name, t] : m.named_params()) {
      for (float g : t.grad()) {
        const double err = std::abs(g - fd[k]) / std::max(1e-6, std::abs(fd[k]));
        worst = std::max(worst, err);
        k++;
      }
    }
    CAPTURE(trial);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("parameter accounting") {
  SUBCASE("closed forms match the stored tensors for d_h in 1..64, R in 0..2") {
    for (int64_t d : {1, 2, 3, 5, 8, 13, 21, 34, 64}) {
      for (int64_t R : {0, 1, 2}) {
        for (Variant v :
             {Variant::pr_lstm, Variant::pr_rnn, Variant::seq_lstm, Variant::seq_rnn}) {
          ModelConfig c = cfg(v, d, 7, R, 3);
          Model m = Model::init(c, 1);
          int64_t weights = 0, biases = 0, enc_w = 0, enc_b = 0;
          for (auto& [name, t] : m.named_params()) {
            const bool is_weight = t.rank() == 2;
            (is_weight ? weights : biases) += t.numel();
            if (name.rfind("comp.", 0) == 0 || name.rfind("refine.", 0) == 0 ||
                name.rfind("cell.", 0) == 0)
              (is_weight ? enc_w : enc_b) += t.numel();
          }
          auto full = count_params(c);
          auto enc = count_encoder_params(c);
          CHECK(full.weights == weights);
          CHECK(full.biases == biases);
          CHECK(enc.weights == enc_w);
          CHECK(enc.biases == enc_b);
        }
      }
    }
  }
  SUBCASE("the recursive encoder holds 14 d_h^2 weights at one refinement stage") {
    ModelConfig c = cfg(Variant::pr_lstm, 256, 5, 1, 2);
    CHECK(count_encoder_params(c).weights == 917504);
    CHECK(count_encoder_params(c).weights == 14 * 256 * 256);
    CHECK(count_encoder_params(c).biases == 9 * 256);
    ModelConfig tiny = cfg(Variant::pr_lstm, 1, 5, 0, 2);
    CHECK(count_encoder_params(tiny).weights == 10);
  }
  SUBCASE("parameter-matched hidden size") {
    CHECK(matched_hidden_size(256) == 137);
    const double matched = 14.0 * 137 * 137;
    const double baseline = 4.0 * 256 * 256;
    CHECK(std::abs(matched - baseline) / baseline < 0.02);
  }
}

TEST_CASE("checkpoint round-trips bit-exactly with canonical names") {
  Model m = Model::init(cfg(Variant::pr_lstm, 5, 4, 2, 3), 123);
  auto names = m.named_params();
  CHECK(names[0].first == "embed.W_io");
  CHECK(names[4].first == "comp.W_g2");
  CHECK(names[8].first == "refine.0.W_g1");
  CHECK(names[12].first == "refine.1.W_g1");
  CHECK(names[names.size() - 2].first == "head.W");

  const std::string dir =
      (std::filesystem::temp_directory_path() / "prlstm_ckpt_test").string();
  std::filesystem::create_directories(dir);
  m.save(dir + "/a.prl", dir + "/a.json");
  Model loaded = Model::load(dir + "/a.prl", dir + "/a.json");
  loaded.save(dir + "/b.prl", dir + "/b.json");

  auto read_bytes = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };
  CHECK(read_bytes(dir + "/a.prl") == read_bytes(dir + "/b.prl"));
  CHECK(read_bytes(dir + "/a.prl").substr(0, 4) == "PRL1");
}

TEST_CASE("inference runner agrees with the tape forward") {
  Rng rng(41);
  for (Variant v : {Variant::pr_lstm, Variant::pr_rnn, Variant::seq_lstm, Variant::seq_rnn}) {
    CAPTURE(variant_name(v));
    ModelConfig c = cfg(v, 6, 4, 1, 3);
    Model m = Model::init(c, 55);
    const int64_t T = 9, B = 3;
    std::vector<int32_t> ids(T * B);
    for (auto& t : ids) t = rng.next_below(4);
    // tape path wants [B, T, d_x] one-hots; the runner wants position-major ids
    std::vector<float> onehot(B * T * 4, 0.0f);
    for (int64_t t = 0; t < T; t++)
      for (int64_t b = 0; b < B; b++) onehot[(b * T + t) * 4 + ids[t * B + b]] = 1.0f;
    Tape tape;
    auto states = forward(tape, m, Tensor::from_values({B, T, 4}, std::move(onehot)));

    WorkerPool pool(3);
    InferenceRunner runner(m, T, B, &pool);
    runner.forward(ids);
    for (int64_t t = 0; t < T; t++) {
      auto h = runner.hidden(t);
      for (int64_t b = 0; b < B; b++)
        for (int64_t j = 0; j < 6; j++)
          CHECK(std::abs(h[b * 6 + j] - states[t].h.values()[b * 6 + j]) < 2e-5);
    }

    // worker count must not change inference results at all
    InferenceRunner serial(m, T, B, nullptr);
    serial.forward(ids);
    for (int64_t t = 0; t < T; t++) {
      auto a = runner.hidden(t);
      auto b = serial.hidden(t);
      for (size_t i = 0; i < a.size(); i++) CHECK(a[i] == b[i]);
    }
  }
}
