#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prlstm {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major f32 array with an optional same-shape gradient accumulator.
// Values are immutable once an op has consumed the tensor; the exceptions are
// grad accumulation and mutable_values(), which exists for initializers and
// optimizer updates between tapes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from_values(Shape shape, std::vector<float> values);
  static Tensor scalar(float value) { return from_values({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int64_t dim(int i) const { return shape().at(i); }
  int64_t numel() const;
  uint64_t id() const;

  std::span<const float> values() const;
  std::span<float> mutable_values();

  bool has_grad() const;
  void ensure_grad();  // allocates zeros if absent
  void zero_grad();
  void drop_grad();
  std::span<float> grad();
  std::span<const float> grad() const;

  float item() const;  // requires numel() == 1

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct Node {
    Shape shape;
    std::vector<float> values;
    std::vector<float> grad;  // empty until ensure_grad
    uint64_t id = 0;
  };
  std::shared_ptr<Node> node_;
  static Tensor make(Shape shape, std::vector<float> values);
};

// Reverse-mode tape. Ops append records in execution order (a topological
// order of the DAG); backward replays them once, in reverse, accumulating
// into grad slots by addition. The caller zeroes parameter grads between
// steps; intermediates are fresh per tape so they start at zero.
class Tape {
 public:
  // y[m,n] = a[m,k] * b[k,n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  // y[n,out] = x[n,in] * w[out,in]^T + b[out]; the learned affine map.
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor relu(const Tensor& x);

  // Concatenate along the last axis; all leading extents must match.
  Tensor concat_last(const Tensor& a, const Tensor& b);
  // Split the last axis into parts of the given sizes (must sum to it).
  std::vector<Tensor> split_last(const Tensor& x, const std::vector<int64_t>& sizes);

  // Row selection / stacking for rank-2 tensors.
  Tensor select_rows(const Tensor& x, std::vector<int64_t> rows);
  Tensor concat_rows(const std::vector<Tensor>& xs);

  // Mean negative log-likelihood over rows; labels index classes in [0, K).
  Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels);

  Tensor sum(const Tensor& x);

  // Seeds d(loss)/d(loss) = 1 and replays all records in reverse. Every
  // tensor the tape touched gets a grad slot (zeros when unreachable).
  void backward(const Tensor& loss);

  size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  struct Record {
    const char* op;
    std::vector<uint64_t> input_ids;
    uint64_t output_id;
    std::function<void()> pull;  // chain rule; accumulates into input grads
  };
  std::vector<Record> records_;
  void push(const char* op, std::vector<uint64_t> inputs, uint64_t output,
            std::function<void()> pull);
};

// Copies row block t of a rank-3 tensor [n, T, d] into a fresh [n, d] tensor.
// No gradient flows; intended for slicing constant network inputs.
Tensor slice_time(const Tensor& x, int64_t t);

}  // namespace prlstm
