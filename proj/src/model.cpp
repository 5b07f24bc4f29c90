#include "prlstm/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "prlstm/rng.hpp"

namespace prlstm {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::pr_lstm: return "pr-lstm";
    case Variant::pr_rnn: return "pr-rnn";
    case Variant::seq_lstm: return "seq-lstm";
    case Variant::seq_rnn: return "seq-rnn";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "pr-lstm") return Variant::pr_lstm;
  if (name == "pr-rnn") return Variant::pr_rnn;
  if (name == "seq-lstm") return Variant::seq_lstm;
  if (name == "seq-rnn") return Variant::seq_rnn;
  throw TensorError("unknown model variant: " + name);
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["variant"] = variant_name(variant);
  j["d_h"] = d_h;
  j["d_x"] = d_x;
  j["refine_stages"] = refine_stages;
  j["k_out"] = k_out;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  c.d_h = j.at("d_h").get<int64_t>();
  c.d_x = j.at("d_x").get<int64_t>();
  c.refine_stages = j.at("refine_stages").get<int64_t>();
  c.k_out = j.at("k_out").get<int64_t>();
  return c;
}

namespace {

Tensor init_weight(int64_t rows, int64_t cols, Rng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(rows + cols));
  std::vector<float> v(static_cast<size_t>(rows * cols));
  for (auto& x : v) x = rng.uniform_float(-bound, bound);
  return Tensor::from_values({rows, cols}, std::move(v));
}

void validate(const ModelConfig& c) {
  if (c.d_h < 1 || c.d_x < 1 || c.k_out < 1 || c.refine_stages < 0)
    throw TensorError("invalid model config: d_h=" + std::to_string(c.d_h) +
                      " d_x=" + std::to_string(c.d_x) + " k_out=" + std::to_string(c.k_out) +
                      " refine_stages=" + std::to_string(c.refine_stages));
}

}  // namespace

Model Model::init(const ModelConfig& config, uint64_t seed) {
  validate(config);
  Model m;
  m.config = config;
  Rng rng(mix_seed(seed, 0x6d6f64656cull));  // "model"
  const int64_t d_h = config.d_h, d_x = config.d_x, R = config.refine_stages;
  switch (config.variant) {
    case Variant::pr_lstm:
      m.embed.W_io = init_weight(2 * d_h, d_x, rng);
      m.embed.b_io = Tensor::zeros({2 * d_h});
      m.embed.W_u = init_weight(d_h, d_x, rng);
      m.embed.b_u = Tensor::zeros({d_h});
      m.comp.W_g2 = init_weight(4 * d_h, 2 * d_h, rng);
      m.comp.b_g2 = Tensor::zeros({4 * d_h});
      m.comp.W_u2 = init_weight(d_h, 2 * d_h, rng);
      m.comp.b_u2 = Tensor::zeros({d_h});
      for (int64_t r = 0; r < R; r++) {
        RefineParams rp;
        rp.W_g1 = init_weight(3 * d_h, d_h, rng);
        rp.b_g1 = Tensor::zeros({3 * d_h});
        rp.W_u1 = init_weight(d_h, d_h, rng);
        rp.b_u1 = Tensor::zeros({d_h});
        m.refine.push_back(std::move(rp));
      }
      break;
    case Variant::pr_rnn:
      m.fc_embed.W = init_weight(d_h, d_x, rng);
      m.fc_embed.b = Tensor::zeros({d_h});
      m.fc_comp.W = init_weight(d_h, 2 * d_h, rng);
      m.fc_comp.b = Tensor::zeros({d_h});
      for (int64_t r = 0; r < R; r++) {
        FcParams fp;
        fp.W = init_weight(d_h, d_h, rng);
        fp.b = Tensor::zeros({d_h});
        m.fc_refine.push_back(std::move(fp));
      }
      break;
    case Variant::seq_lstm:
      m.cell.W = init_weight(4 * d_h, d_h + d_x, rng);
      m.cell.b = Tensor::zeros({4 * d_h});
      break;
    case Variant::seq_rnn:
      m.cell.W = init_weight(d_h, d_h + d_x, rng);
      m.cell.b = Tensor::zeros({d_h});
      break;
  }
  m.head.W = init_weight(config.k_out, d_h, rng);
  m.head.b = Tensor::zeros({config.k_out});
  return m;
}

NamedTensors Model::named_params() const {
  NamedTensors out;
  switch (config.variant) {
    case Variant::pr_lstm:
      out.emplace_back("embed.W_io", embed.W_io);
      out.emplace_back("embed.b_io", embed.b_io);
      out.emplace_back("embed.W_u", embed.W_u);
      out.emplace_back("embed.b_u", embed.b_u);
      out.emplace_back("comp.W_g2", comp.W_g2);
      out.emplace_back("comp.b_g2", comp.b_g2);
      out.emplace_back("comp.W_u2", comp.W_u2);
      out.emplace_back("comp.b_u2", comp.b_u2);
      for (size_t r = 0; r < refine.size(); r++) {
        const std::string p = "refine." + std::to_string(r) + ".";
        out.emplace_back(p + "W_g1", refine[r].W_g1);
        out.emplace_back(p + "b_g1", refine[r].b_g1);
        out.emplace_back(p + "W_u1", refine[r].W_u1);
        out.emplace_back(p + "b_u1", refine[r].b_u1);
      }
      break;
    case Variant::pr_rnn:
      out.emplace_back("embed.W", fc_embed.W);
      out.emplace_back("embed.b", fc_embed.b);
      out.emplace_back("comp.W", fc_comp.W);
      out.emplace_back("comp.b", fc_comp.b);
      for (size_t r = 0; r < fc_refine.size(); r++) {
        const std::string p = "refine." + std::to_string(r) + ".";
        out.emplace_back(p + "W", fc_refine[r].W);
        out.emplace_back(p + "b", fc_refine[r].b);
      }
      break;
    case Variant::seq_lstm:
    case Variant::seq_rnn:
      out.emplace_back("cell.W", cell.W);
      out.emplace_back("cell.b", cell.b);
      break;
  }
  out.emplace_back("head.W", head.W);
  out.emplace_back("head.b", head.b);
  return out;
}

std::vector<Tensor> Model::params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

void Model::zero_grads() {
  for (auto& t : params()) t.zero_grad();
}

void Model::save(const std::string& checkpoint_path, const std::string& config_path) const {
  save_checkpoint(checkpoint_path, named_params());
  std::ofstream os(config_path, std::ios::trunc);
  if (!os) throw TensorError("cannot write model config: " + config_path);
  os << config.to_json() << "\n";
}

Model Model::load(const std::string& checkpoint_path, const std::string& config_path) {
  std::ifstream is(config_path);
  if (!is) throw TensorError("cannot read model config: " + config_path);
  std::stringstream ss;
  ss << is.rdbuf();
  Model m = Model::init(ModelConfig::from_json(ss.str()), 0);
  auto stored = load_checkpoint(checkpoint_path);
  auto expected = m.named_params();
  if (stored.size() != expected.size())
    throw TensorError("checkpoint tensor count mismatch in " + checkpoint_path);
  for (size_t i = 0; i < stored.size(); i++) {
    if (stored[i].first != expected[i].first)
      throw TensorError("checkpoint tensor name mismatch: expected " + expected[i].first +
                        ", found " + stored[i].first);
    if (stored[i].second.shape() != expected[i].second.shape())
      throw TensorError("checkpoint tensor shape mismatch for " + stored[i].first);
    auto dst = expected[i].second.mutable_values();
    auto src = stored[i].second.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return m;
}

TwoStateGates two_state_gates(Tape& tape, const Tensor& h_left, const Tensor& h_right,
                              const CompositionParams& p) {
  const int64_t d_h = p.W_u2.dim(0);
  Tensor joined = tape.concat_last(h_left, h_right);
  Tensor gates = tape.sigmoid(tape.linear(joined, p.W_g2, p.b_g2));
  auto parts = tape.split_last(gates, {d_h, d_h, d_h, d_h});
  Tensor u = tape.tanh(tape.linear(joined, p.W_u2, p.b_u2));
  return {parts[0], parts[1], parts[2], parts[3], u};
}

OneStateGates one_state_gates(Tape& tape, const Tensor& h, const RefineParams& p) {
  const int64_t d_h = p.W_u1.dim(0);
  Tensor gates = tape.sigmoid(tape.linear(h, p.W_g1, p.b_g1));
  auto parts = tape.split_last(gates, {d_h, d_h, d_h});
  Tensor u = tape.tanh(tape.linear(h, p.W_u1, p.b_u1));
  return {parts[0], parts[1], parts[2], u};
}

LatentState forget_add_activate(Tape& tape,
                                const std::vector<std::pair<Tensor, Tensor>>& gated_cells,
                                const Tensor& i, const Tensor& u, const Tensor& o) {
  Tensor c = tape.mul(i, u);
  for (const auto& [f, cell] : gated_cells) c = tape.add(c, tape.mul(f, cell));
  Tensor h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

LatentState state_embed(Tape& tape, const Tensor& x, const EmbedParams& p) {
  const int64_t d_h = p.W_u.dim(0);
  Tensor io = tape.sigmoid(tape.linear(x, p.W_io, p.b_io));
  auto parts = tape.split_last(io, {d_h, d_h});
  Tensor u = tape.tanh(tape.linear(x, p.W_u, p.b_u));
  Tensor c = tape.mul(parts[0], u);
  Tensor h = tape.mul(parts[1], tape.tanh(c));
  return {h, c};
}

LatentState compose_stages(Tape& tape, const LatentState& left, const LatentState& right,
                           const CompositionParams& comp,
                           const std::vector<RefineParams>& refine) {
  auto g = two_state_gates(tape, left.h, right.h, comp);
  LatentState s = forget_add_activate(tape, {{g.f1, left.c}, {g.f2, right.c}}, g.i, g.u, g.o);
  for (const auto& rp : refine) {
    auto g1 = one_state_gates(tape, s.h, rp);
    s = forget_add_activate(tape, {{g1.f1, s.c}}, g1.i, g1.u, g1.o);
  }
  return s;
}

LatentState compose(Tape& tape, const LatentState& left, const LatentState& right,
                    const Model& m) {
  return compose_stages(tape, left, right, m.comp, m.refine);
}

Tensor fc_compose(Tape& tape, const Tensor& h_left, const Tensor& h_right, const FcParams& p) {
  return tape.relu(tape.linear(tape.concat_last(h_left, h_right), p.W, p.b));
}

Tensor fc_refine_stage(Tape& tape, const Tensor& h, const FcParams& p) {
  return tape.relu(tape.linear(h, p.W, p.b));
}

namespace {

std::vector<Tensor> slice_positions(const Tensor& tokens) {
  if (tokens.rank() != 3) throw TensorError("forward expects one-hot tokens [batch, T, d_x]");
  std::vector<Tensor> xs;
  const int64_t T = tokens.dim(1);
  xs.reserve(T);
  for (int64_t t = 0; t < T; t++) xs.push_back(slice_time(tokens, t));
  return xs;
}

std::vector<LatentState> forward_recursive(Tape& tape, const Model& m, const Tensor& tokens) {
  auto xs = slice_positions(tokens);
  const int64_t T = static_cast<int64_t>(xs.size());
  auto plan = scan::build_plan(T);
  if (m.config.variant == Variant::pr_lstm) {
    std::vector<LatentState> leaves;
    leaves.reserve(T);
    for (auto& x : xs) leaves.push_back(state_embed(tape, x, m.embed));
    return scan::execute_prefix(plan, leaves, [&](const LatentState& a, const LatentState& b) {
      return compose(tape, a, b, m);
    });
  }
  std::vector<Tensor> leaves;
  leaves.reserve(T);
  for (auto& x : xs) leaves.push_back(fc_refine_stage(tape, x, m.fc_embed));
  auto hs = scan::execute_prefix(plan, leaves, [&](const Tensor& a, const Tensor& b) {
    Tensor h = fc_compose(tape, a, b, m.fc_comp);
    for (const auto& fp : m.fc_refine) h = fc_refine_stage(tape, h, fp);
    return h;
  });
  std::vector<LatentState> out;
  out.reserve(T);
  for (auto& h : hs) out.push_back({h, Tensor{}});
  return out;
}

}  // namespace

std::vector<LatentState> forward_sequential(Tape& tape, const Model& m, const Tensor& tokens) {
  auto xs = slice_positions(tokens);
  if (xs.empty()) throw TensorError("forward: empty sequence");
  const int64_t batch = xs[0].dim(0);
  const int64_t d_h = m.config.d_h;
  std::vector<LatentState> out;
  out.reserve(xs.size());
  Tensor h = Tensor::zeros({batch, d_h});
  Tensor c = Tensor::zeros({batch, d_h});
  for (auto& x : xs) {
    Tensor hx = tape.concat_last(h, x);
    if (m.config.variant == Variant::seq_lstm) {
      Tensor pre = tape.linear(hx, m.cell.W, m.cell.b);
      auto parts = tape.split_last(pre, {d_h, d_h, d_h, d_h});  // [f, i, o, u]
      Tensor f = tape.sigmoid(parts[0]);
      Tensor i = tape.sigmoid(parts[1]);
      Tensor o = tape.sigmoid(parts[2]);
      Tensor u = tape.tanh(parts[3]);
      LatentState s = forget_add_activate(tape, {{f, c}}, i, u, o);
      h = s.h;
      c = s.c;
      out.push_back(s);
    } else {
      h = tape.tanh(tape.linear(hx, m.cell.W, m.cell.b));
      out.push_back({h, Tensor{}});
    }
  }
  return out;
}

std::vector<LatentState> forward(Tape& tape, const Model& m, const Tensor& tokens) {
  if (tokens.rank() != 3) throw TensorError("forward expects one-hot tokens [batch, T, d_x]");
  if (tokens.dim(1) < 1) throw TensorError("forward: empty sequence");
  if (tokens.dim(2) != m.config.d_x)
    throw TensorError("forward: token width " + std::to_string(tokens.dim(2)) +
                      " does not match d_x " + std::to_string(m.config.d_x));
  switch (m.config.variant) {
    case Variant::pr_lstm:
    case Variant::pr_rnn:
      return forward_recursive(tape, m, tokens);
    case Variant::seq_lstm:
    case Variant::seq_rnn:
      return forward_sequential(tape, m, tokens);
  }
  throw TensorError("forward: unknown variant");
}

Tensor head_logits(Tape& tape, const Model& m, const Tensor& h) {
  return tape.linear(h, m.head.W, m.head.b);
}

Tensor gather_masked(Tape& tape, const std::vector<LatentState>& states,
                     const std::vector<std::pair<int64_t, int64_t>>& mask_positions) {
  if (mask_positions.empty()) throw TensorError("gather_masked: empty mask");
  const int64_t T = static_cast<int64_t>(states.size());
  for (auto& [t, r] : mask_positions)
    if (t < 0 || t >= T) throw TensorError("gather_masked: mask position outside sequence");
  std::vector<Tensor> blocks;
  size_t i = 0;
  while (i < mask_positions.size()) {
    const int64_t t = mask_positions[i].first;
    std::vector<int64_t> rows;
    while (i < mask_positions.size() && mask_positions[i].first == t) {
      rows.push_back(mask_positions[i].second);
      i++;
    }
    blocks.push_back(tape.select_rows(states[t].h, std::move(rows)));
  }
  if (blocks.size() == 1) return blocks[0];
  return tape.concat_rows(blocks);
}

ParamCount count_encoder_params(const ModelConfig& c) {
  const int64_t d = c.d_h, R = c.refine_stages;
  switch (c.variant) {
    case Variant::pr_lstm:
      return {(10 + 4 * R) * d * d, (5 + 4 * R) * d};
    case Variant::pr_rnn:
      return {(2 + R) * d * d, (1 + R) * d};
    case Variant::seq_lstm:
      return {4 * d * (d + c.d_x), 4 * d};
    case Variant::seq_rnn:
      return {d * (d + c.d_x), d};
  }
  return {};
}

ParamCount count_params(const ModelConfig& c) {
  ParamCount n = count_encoder_params(c);
  const int64_t d = c.d_h;
  switch (c.variant) {
    case Variant::pr_lstm:
      n.weights += 3 * d * c.d_x;
      n.biases += 3 * d;
      break;
    case Variant::pr_rnn:
      n.weights += d * c.d_x;
      n.biases += d;
      break;
    case Variant::seq_lstm:
    case Variant::seq_rnn:
      break;  // input weights live in the cell matrix
  }
  n.weights += c.k_out * d;
  n.biases += c.k_out;
  return n;
}

int64_t matched_hidden_size(int64_t d_h) {
  return static_cast<int64_t>(std::llround(static_cast<double>(d_h) * std::sqrt(4.0 / 14.0)));
}

}  // namespace prlstm
