#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "prlstm/model.hpp"
#include "prlstm/scan.hpp"
#include "prlstm/threadpool.hpp"

namespace prlstm {

// Forward-only executor over preallocated buffers. No tape, no gradients;
// weights are repacked at construction into layouts whose inner loops
// vectorize without reassociating sums, so results are identical for any
// worker count (every output element is computed by exactly one worker in a
// fixed order).
//
// Parallel structure mirrors the depth analysis: recursive variants issue
// one pool barrier per schedule level with the level's steps split across
// workers; sequential variants issue one barrier per time step with the
// batch split across workers. A null pool runs everything inline.
class InferenceRunner {
 public:
  InferenceRunner(const Model& m, int64_t length, int64_t batch, WorkerPool* pool);

  // tokens[t * batch + b] = token id at position t of sequence b.
  void forward(std::span<const int32_t> tokens);

  int64_t length() const { return length_; }
  int64_t batch() const { return batch_; }

  // Hidden states at position t, [batch, d_h] row-major.
  std::span<const float> hidden(int64_t t) const;

  // Structural activation accounting (exact, affine in length).
  int64_t state_slots() const { return state_slots_; }
  int64_t state_bytes() const { return state_bytes_; }

  // Barrier count of the last forward: schedule depth for recursive
  // variants, step count for sequential ones.
  int64_t depth_executed() const { return depth_executed_; }

  // Argmax class per (position, batch_row), ties toward the lowest index.
  std::vector<int32_t> predict(const std::vector<std::pair<int64_t, int64_t>>& mask) const;

 private:
  struct Scratch {
    std::vector<float> pre;  // fused gate/update pre-activations
  };

  void embed_leaves(std::span<const int32_t> tokens);
  void run_recursive();
  void run_sequential(std::span<const int32_t> tokens);
  void combine_lstm(const scan::ScanStep& s, Scratch& scratch);
  void combine_rnn(const scan::ScanStep& s, Scratch& scratch);

  const Model& model_;
  Variant variant_;
  int64_t length_, batch_, d_h_, d_x_;
  WorkerPool* pool_;
  scan::ScanPlan plan_;

  // Transposed fused weights, [in, out] row-major.
  std::vector<float> comp_wt_, comp_b_;      // [2d_h, 5d_h] | [2d_h, d_h] for pr_rnn
  std::vector<float> refine_wt_, refine_b_;  // R stages concatenated
  std::vector<float> embed_wt_, embed_b_;    // [d_x, 3d_h] | [d_x, d_h]
  std::vector<float> cell_h_wt_, cell_x_wt_, cell_b_;

  std::vector<float> buf_h_;  // [length, batch, d_h]
  std::vector<float> buf_c_;  // pr_lstm: same; seq_lstm: [batch, d_h]
  std::vector<Scratch> scratch_;
  int64_t state_slots_ = 0;
  int64_t state_bytes_ = 0;
  int64_t depth_executed_ = 0;
};

}  // namespace prlstm
