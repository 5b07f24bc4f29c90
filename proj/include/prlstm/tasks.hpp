#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prlstm/rng.hpp"
#include "prlstm/tensor.hpp"

namespace prlstm::tasks {

class TaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskId {
  even_pairs,
  parity_check,
  cycle_navigation,
  modular_arithmetic_simple,
  reverse_string,
  stack_manipulation,
  missing_duplicate,
  duplicate_string,
  bucket_sort,
};

enum class Level { regular, dcf, cs };

struct TaskSpec {
  TaskId id;
  std::string name;
  Level level;
  std::vector<std::string> input_vocab;   // includes the reserved PAD symbol
  std::vector<std::string> output_vocab;  // target classes
  int32_t pad_token;                      // index into input_vocab
  bool sequence_output;  // false: one label read at the last input position
  // Number of PAD-extended output positions for sequence-output tasks,
  // as a function of the task input length.
  int64_t (*output_len)(int64_t);
  bool (*valid_length)(int64_t);
};

const TaskSpec& spec(TaskId id);
const std::vector<TaskId>& all_tasks();
TaskId task_from_name(const std::string& name);
std::string level_name(Level level);

// One benchmark instance. For sequence-output tasks the input is the task
// string followed by output_len PAD tokens; the mask marks output positions
// and target[i] is the class at the i-th masked position (ascending).
struct TaskSample {
  std::vector<int32_t> input;
  std::vector<int32_t> target;
  std::vector<uint8_t> mask;
};

// Ground-truth labeling of a raw task input (no PAD extension), as output
// vocabulary indices. Pure function.
std::vector<int32_t> solve(TaskId id, std::span<const int32_t> input);

// Draws a task input of the given length and labels it. Throws TaskError
// when the length violates the task's constraint (e.g. parity of T).
TaskSample generate(TaskId id, int64_t length, Rng& rng);

// Task lengths in [lo, hi] satisfying the task's constraint.
std::vector<int64_t> valid_lengths(TaskId id, int64_t lo, int64_t hi);

// Derived RNG stream for sample `index` of a batch drawn from `seed`.
inline Rng sample_rng(uint64_t seed, uint64_t index) { return Rng(mix_seed(seed, index)); }

// --- encoding ---

struct EncodedBatch {
  Tensor onehot;                                            // [batch, T, d_x]
  std::vector<int32_t> token_ids;                           // [T * batch], position-major
  std::vector<std::pair<int64_t, int64_t>> mask_positions;  // (t, b), ascending
  std::vector<int64_t> labels;                              // aligned with mask_positions
  int64_t length = 0;
  int64_t batch = 0;
};

// All samples must share one input length. d_x = input vocabulary size; each
// token is its own one-hot channel (PAD included).
EncodedBatch encode(TaskId id, const std::vector<TaskSample>& samples);

// Inverse of the one-hot encoding: token ids per sample.
std::vector<std::vector<int32_t>> decode(const Tensor& onehot);

}  // namespace prlstm::tasks
