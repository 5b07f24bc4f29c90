#include "prlstm/tasks.hpp"

#include <algorithm>
#include <array>
#include <map>

namespace prlstm::tasks {

namespace {

bool any_length(int64_t t) { return t >= 1; }
bool odd_length(int64_t t) { return t >= 1 && t % 2 == 1; }
bool even_length(int64_t t) { return t >= 2 && t % 2 == 0; }

int64_t out_same(int64_t t) { return t; }
int64_t out_double(int64_t t) { return 2 * t; }

// Token layouts. Binary tasks use {0, 1, PAD}; the others extend this.
constexpr int32_t kBit0 = 0, kBit1 = 1;
// cycle_navigation: {STAY, INC, DEC, PAD}
constexpr int32_t kStay = 0, kInc = 1, kDec = 2;
// modular_arithmetic_simple: {0..4, +, -, *, PAD}
constexpr int32_t kOpAdd = 5, kOpSub = 6, kOpMul = 7;
// stack_manipulation: {0, 1, PUSH0, PUSH1, POP, PAD}
constexpr int32_t kPush0 = 2, kPush1 = 3, kPop = 4;
// missing_duplicate: {0, 1, MASK, PAD}
constexpr int32_t kMaskTok = 2;
// stack output vocab: {0, 1, EMPTY}
constexpr int32_t kEmptyOut = 2;

const std::vector<TaskSpec>& specs() {
  static const std::vector<TaskSpec> kSpecs = {
      {TaskId::even_pairs, "even-pairs", Level::regular, {"0", "1", "PAD"}, {"0", "1"}, 2, false,
       out_same, any_length},
      {TaskId::parity_check, "parity-check", Level::regular, {"0", "1", "PAD"}, {"0", "1"}, 2,
       false, out_same, any_length},
      {TaskId::cycle_navigation, "cycle-navigation", Level::regular, {"STAY", "+1", "-1", "PAD"},
       {"0", "1", "2", "3", "4"}, 3, false, out_same, any_length},
      {TaskId::modular_arithmetic_simple, "modular-arithmetic-simple", Level::regular,
       {"0", "1", "2", "3", "4", "+", "-", "*", "PAD"}, {"0", "1", "2", "3", "4"}, 8, false,
       out_same, odd_length},
      {TaskId::reverse_string, "reverse-string", Level::dcf, {"0", "1", "PAD"}, {"0", "1"}, 2,
       true, out_same, any_length},
      {TaskId::stack_manipulation, "stack-manipulation", Level::dcf,
       {"0", "1", "PUSH0", "PUSH1", "POP", "PAD"}, {"0", "1", "EMPTY"}, 5, true, out_same,
       any_length},
      {TaskId::missing_duplicate, "missing-duplicate", Level::cs, {"0", "1", "MASK", "PAD"},
       {"0", "1"}, 3, false, out_same, even_length},
      {TaskId::duplicate_string, "duplicate-string", Level::cs, {"0", "1", "PAD"}, {"0", "1"}, 2,
       true, out_double, any_length},
      {TaskId::bucket_sort, "bucket-sort", Level::cs, {"0", "1", "2", "3", "4", "PAD"},
       {"0", "1", "2", "3", "4"}, 5, true, out_same, any_length},
  };
  return kSpecs;
}

void check_tokens(const TaskSpec& ts, std::span<const int32_t> input) {
  for (int32_t tok : input)
    if (tok < 0 || tok >= static_cast<int32_t>(ts.input_vocab.size()) || tok == ts.pad_token)
      throw TaskError(ts.name + ": invalid input token " + std::to_string(tok));
}

}  // namespace

const TaskSpec& spec(TaskId id) {
  for (const auto& ts : specs())
    if (ts.id == id) return ts;
  throw TaskError("unknown task id");
}

const std::vector<TaskId>& all_tasks() {
  static const std::vector<TaskId> kIds = [] {
    std::vector<TaskId> ids;
    for (const auto& ts : specs()) ids.push_back(ts.id);
    return ids;
  }();
  return kIds;
}

TaskId task_from_name(const std::string& name) {
  for (const auto& ts : specs())
    if (ts.name == name) return ts.id;
  throw TaskError("unknown task: " + name);
}

std::string level_name(Level level) {
  switch (level) {
    case Level::regular: return "R";
    case Level::dcf: return "DCF";
    case Level::cs: return "CS";
  }
  return "?";
}

std::vector<int32_t> solve(TaskId id, std::span<const int32_t> input) {
  const TaskSpec& ts = spec(id);
  if (input.empty()) throw TaskError(ts.name + ": empty input");
  if (!ts.valid_length(static_cast<int64_t>(input.size())))
    throw TaskError(ts.name + ": invalid input length " + std::to_string(input.size()));
  check_tokens(ts, input);
  switch (id) {
    case TaskId::even_pairs:
      return {input.front() == input.back() ? kBit1 : kBit0};
    case TaskId::parity_check: {
      int32_t ones = 0;
      for (int32_t tok : input) ones ^= tok;
      return {ones};
    }
    case TaskId::cycle_navigation: {
      int32_t pos = 0;
      for (int32_t tok : input) {
        if (tok == kInc) pos = (pos + 1) % 5;
        else if (tok == kDec) pos = (pos + 4) % 5;
        else if (tok != kStay) throw TaskError("cycle-navigation: bad move token");
      }
      return {pos};
    }
    case TaskId::modular_arithmetic_simple: {
      // strict left-to-right, no precedence
      int32_t acc = input[0];
      if (acc > 4) throw TaskError("modular-arithmetic-simple: expected digit first");
      for (size_t i = 1; i < input.size(); i += 2) {
        const int32_t op = input[i], digit = input[i + 1];
        if (op < kOpAdd || digit > 4)
          throw TaskError("modular-arithmetic-simple: malformed expression");
        if (op == kOpAdd) acc = (acc + digit) % 5;
        else if (op == kOpSub) acc = (acc - digit % 5 + 5) % 5;
        else acc = (acc * digit) % 5;
      }
      return {acc};
    }
    case TaskId::reverse_string:
      return {input.rbegin(), input.rend()};
    case TaskId::stack_manipulation: {
      // Tokens: initial stack bottom-to-top (bits), then actions. POP on an
      // empty stack is a no-op. Output: final stack top-to-bottom, padded
      // with EMPTY to the input length.
      std::vector<int32_t> stack;
      size_t i = 0;
      while (i < input.size() && (input[i] == kBit0 || input[i] == kBit1)) stack.push_back(input[i++]);
      if (stack.empty()) throw TaskError("stack-manipulation: initial stack missing");
      for (; i < input.size(); i++) {
        if (input[i] == kPush0) stack.push_back(kBit0);
        else if (input[i] == kPush1) stack.push_back(kBit1);
        else if (input[i] == kPop) {
          if (!stack.empty()) stack.pop_back();
        } else {
          throw TaskError("stack-manipulation: bit token after first action");
        }
      }
      std::vector<int32_t> out(stack.rbegin(), stack.rend());
      out.resize(input.size(), kEmptyOut);
      return out;
    }
    case TaskId::missing_duplicate: {
      // input = w.w with one position masked; the label is the twin's bit
      const int64_t total = static_cast<int64_t>(input.size());
      int64_t masked = -1;
      for (int64_t i = 0; i < total; i++) {
        if (input[i] == kMaskTok) {
          if (masked >= 0) throw TaskError("missing-duplicate: multiple masks");
          masked = i;
        }
      }
      if (masked < 0) throw TaskError("missing-duplicate: mask token missing");
      return {input[(masked + total / 2) % total]};
    }
    case TaskId::duplicate_string: {
      std::vector<int32_t> out(input.begin(), input.end());
      out.insert(out.end(), input.begin(), input.end());
      return out;
    }
    case TaskId::bucket_sort: {
      std::vector<int32_t> out(input.begin(), input.end());
      std::sort(out.begin(), out.end());
      return out;
    }
  }
  throw TaskError("unhandled task");
}

TaskSample generate(TaskId id, int64_t length, Rng& rng) {
  const TaskSpec& ts = spec(id);
  if (length < 1) throw TaskError(ts.name + ": length must be >= 1");
  if (!ts.valid_length(length))
    throw TaskError(ts.name + ": invalid length " + std::to_string(length));

  std::vector<int32_t> input(static_cast<size_t>(length));
  switch (id) {
    case TaskId::even_pairs:
    case TaskId::parity_check:
    case TaskId::reverse_string:
    case TaskId::duplicate_string:
      for (auto& tok : input) tok = rng.coin() ? kBit1 : kBit0;
      break;
    case TaskId::cycle_navigation:
      for (auto& tok : input) tok = static_cast<int32_t>(rng.next_below(3));
      break;
    case TaskId::modular_arithmetic_simple:
      for (int64_t i = 0; i < length; i++)
        input[i] = i % 2 == 0 ? static_cast<int32_t>(rng.next_below(5))
                              : static_cast<int32_t>(kOpAdd + rng.next_below(3));
      break;
    case TaskId::stack_manipulation: {
      const int64_t stack_len = rng.uniform_int(1, length);
      for (int64_t i = 0; i < length; i++)
        input[i] = i < stack_len ? (rng.coin() ? kBit1 : kBit0)
                                 : static_cast<int32_t>(kPush0 + rng.next_below(3));
      break;
    }
    case TaskId::missing_duplicate: {
      const int64_t half = length / 2;
      for (int64_t i = 0; i < half; i++) {
        input[i] = rng.coin() ? kBit1 : kBit0;
        input[half + i] = input[i];
      }
      input[rng.uniform_int(0, length - 1)] = kMaskTok;
      break;
    }
    case TaskId::bucket_sort:
      for (auto& tok : input) tok = static_cast<int32_t>(rng.next_below(5));
      break;
  }

  std::vector<int32_t> target = solve(id, input);

  TaskSample sample;
  if (ts.sequence_output) {
    const int64_t out_len = ts.output_len(length);
    sample.input = input;
    sample.input.resize(static_cast<size_t>(length + out_len), ts.pad_token);
    sample.mask.assign(sample.input.size(), 0);
    for (int64_t i = 0; i < out_len; i++) sample.mask[length + i] = 1;
    sample.target = std::move(target);
  } else {
    sample.input = std::move(input);
    sample.mask.assign(sample.input.size(), 0);
    sample.mask.back() = 1;
    sample.target = std::move(target);
  }
  return sample;
}

std::vector<int64_t> valid_lengths(TaskId id, int64_t lo, int64_t hi) {
  const TaskSpec& ts = spec(id);
  std::vector<int64_t> out;
  for (int64_t t = lo; t <= hi; t++)
    if (t >= 1 && ts.valid_length(t)) out.push_back(t);
  if (out.empty())
    throw TaskError(ts.name + ": no valid lengths in [" + std::to_string(lo) + "," +
                    std::to_string(hi) + "]");
  return out;
}

EncodedBatch encode(TaskId id, const std::vector<TaskSample>& samples) {
  const TaskSpec& ts = spec(id);
  if (samples.empty()) throw TaskError("encode: empty batch");
  const int64_t total = static_cast<int64_t>(samples[0].input.size());
  const int64_t d_x = static_cast<int64_t>(ts.input_vocab.size());
  const int64_t batch = static_cast<int64_t>(samples.size());
  for (const auto& s : samples) {
    if (static_cast<int64_t>(s.input.size()) != total)
      throw TaskError("encode: samples must share one length");
    if (s.mask.size() != s.input.size()) throw TaskError("encode: mask length mismatch");
  }
  EncodedBatch out;
  out.length = total;
  out.batch = batch;
  std::vector<float> onehot(static_cast<size_t>(batch * total * d_x), 0.0f);
  out.token_ids.resize(static_cast<size_t>(total * batch));
  for (int64_t b = 0; b < batch; b++) {
    for (int64_t t = 0; t < total; t++) {
      const int32_t tok = samples[b].input[t];
      if (tok < 0 || tok >= d_x)
        throw TaskError("encode: token " + std::to_string(tok) + " outside vocabulary");
      onehot[(b * total + t) * d_x + tok] = 1.0f;
      out.token_ids[t * batch + b] = tok;
    }
  }
  out.onehot = Tensor::from_values({batch, total, d_x}, std::move(onehot));
  // (t, b) ascending; target order must match
  for (int64_t t = 0; t < total; t++) {
    for (int64_t b = 0; b < batch; b++) {
      if (!samples[b].mask[t]) continue;
      out.mask_positions.emplace_back(t, b);
      int64_t nth = 0;
      for (int64_t u = 0; u < t; u++) nth += samples[b].mask[u] ? 1 : 0;
      out.labels.push_back(samples[b].target.at(nth));
    }
  }
  return out;
}

std::vector<std::vector<int32_t>> decode(const Tensor& onehot) {
  if (onehot.rank() != 3) throw TaskError("decode: expected [batch, T, d_x]");
  const int64_t batch = onehot.dim(0), total = onehot.dim(1), d_x = onehot.dim(2);
  auto v = onehot.values();
  std::vector<std::vector<int32_t>> out(batch);
  for (int64_t b = 0; b < batch; b++) {
    out[b].resize(total);
    for (int64_t t = 0; t < total; t++) {
      const float* row = v.data() + (b * total + t) * d_x;
      int32_t tok = -1;
      for (int64_t k = 0; k < d_x; k++) {
        if (row[k] == 1.0f) {
          if (tok >= 0) throw TaskError("decode: not one-hot");
          tok = static_cast<int32_t>(k);
        } else if (row[k] != 0.0f) {
          throw TaskError("decode: not one-hot");
        }
      }
      if (tok < 0) throw TaskError("decode: not one-hot");
      out[b][t] = tok;
    }
  }
  return out;
}

}  // namespace prlstm::tasks
