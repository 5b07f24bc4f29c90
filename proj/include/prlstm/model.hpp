#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prlstm/checkpoint.hpp"
#include "prlstm/scan.hpp"
#include "prlstm/tensor.hpp"

namespace prlstm {

enum class Variant { pr_lstm, pr_rnn, seq_lstm, seq_rnn };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::pr_lstm;
  int64_t d_h = 64;           // latent width
  int64_t d_x = 0;            // input one-hot width
  int64_t refine_stages = 1;  // R; stages applied after each binary composition
  int64_t k_out = 0;          // output vocabulary size

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// The unit flowing through the recursive graph; c is undefined for
// hidden-only variants (pr_rnn, seq_rnn).
struct LatentState {
  Tensor h;
  Tensor c;
};

struct EmbedParams {
  Tensor W_io, b_io;  // [2d_h, d_x], [2d_h]
  Tensor W_u, b_u;    // [d_h, d_x], [d_h]
};

struct CompositionParams {
  Tensor W_g2, b_g2;  // [4d_h, 2d_h], [4d_h]; gate blocks [f1, f2, i, o]
  Tensor W_u2, b_u2;  // [d_h, 2d_h], [d_h]
};

struct RefineParams {
  Tensor W_g1, b_g1;  // [3d_h, d_h], [3d_h]; gate blocks [f1, i, o]
  Tensor W_u1, b_u1;  // [d_h, d_h], [d_h]
};

struct FcParams {  // relu(W x + b) blocks for the hidden-only variant
  Tensor W, b;
};

struct CellParams {  // fused sequential cell, gate blocks [f, i, o, u]
  Tensor W, b;       // [4d_h, d_h+d_x] (lstm) or [d_h, d_h+d_x] (rnn)
};

struct HeadParams {
  Tensor W, b;  // [k_out, d_h], [k_out]
};

struct Model {
  ModelConfig config;

  EmbedParams embed;                 // pr_lstm
  CompositionParams comp;            // pr_lstm
  std::vector<RefineParams> refine;  // pr_lstm, one per stage

  FcParams fc_embed;                 // pr_rnn
  FcParams fc_comp;                  // pr_rnn
  std::vector<FcParams> fc_refine;   // pr_rnn

  CellParams cell;  // seq variants

  HeadParams head;

  static Model init(const ModelConfig& config, uint64_t seed);

  // Canonical (name, tensor) list in fixed order; checkpoint layout.
  NamedTensors named_params() const;
  std::vector<Tensor> params() const;
  void zero_grads();

  void save(const std::string& checkpoint_path, const std::string& config_path) const;
  static Model load(const std::string& checkpoint_path, const std::string& config_path);
};

// --- encoder building blocks (tape path; all tensors are [batch, ...]) ---

struct TwoStateGates {
  Tensor f1, f2, i, o, u;
};
TwoStateGates two_state_gates(Tape& tape, const Tensor& h_left, const Tensor& h_right,
                              const CompositionParams& p);

struct OneStateGates {
  Tensor f1, i, o, u;
};
OneStateGates one_state_gates(Tape& tape, const Tensor& h, const RefineParams& p);

// c = i*u + sum_j f_j*c_j ; h = o*tanh(c)
LatentState forget_add_activate(Tape& tape,
                                const std::vector<std::pair<Tensor, Tensor>>& gated_cells,
                                const Tensor& i, const Tensor& u, const Tensor& o);

LatentState state_embed(Tape& tape, const Tensor& x, const EmbedParams& p);

// Binary composition followed by refinement with explicit parameter blocks.
LatentState compose_stages(Tape& tape, const LatentState& left, const LatentState& right,
                           const CompositionParams& comp,
                           const std::vector<RefineParams>& refine);

// Binary composition followed by the model's refinement stages.
LatentState compose(Tape& tape, const LatentState& left, const LatentState& right,
                    const Model& m);

Tensor fc_compose(Tape& tape, const Tensor& h_left, const Tensor& h_right, const FcParams& p);
Tensor fc_refine_stage(Tape& tape, const Tensor& h, const FcParams& p);

// --- whole-model forward ---

// tokens: one-hot [batch, T, d_x]. Returns per-position prefix states
// (recursive variants run the balanced schedule; seq variants the chain).
std::vector<LatentState> forward(Tape& tape, const Model& m, const Tensor& tokens);

// Left-to-right baseline recurrence, exposed for direct testing.
std::vector<LatentState> forward_sequential(Tape& tape, const Model& m, const Tensor& tokens);

// Shared affine head, [n, d_h] -> [n, k_out].
Tensor head_logits(Tape& tape, const Model& m, const Tensor& h);

// Gathers hidden states at (position, batch_row) mask coordinates into one
// [n_masked, d_h] matrix, ascending by (position, row). Classification reads
// h only, never c.
Tensor gather_masked(Tape& tape, const std::vector<LatentState>& states,
                     const std::vector<std::pair<int64_t, int64_t>>& mask_positions);

// --- parameter accounting ---

struct ParamCount {
  int64_t weights = 0;
  int64_t biases = 0;
};

// Closed-form counts for the recursive encoder alone (composition +
// refinement stages) and for the full model including embedding and head.
ParamCount count_encoder_params(const ModelConfig& config);
ParamCount count_params(const ModelConfig& config);

// Hidden size giving a 4-matrix cell's parameter budget: round(d_h*sqrt(4/14)).
int64_t matched_hidden_size(int64_t d_h);

}  // namespace prlstm
