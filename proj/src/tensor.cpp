#include "prlstm/tensor.hpp"

#include "prlstm/fastmath.hpp"

#include <cblas.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

extern "C" void openblas_set_num_threads(int);

namespace prlstm {

namespace {

// All parallelism in this artifact is explicit (worker pools); BLAS calls
// must stay single-threaded so results do not depend on its internal split.
const int kBlasInit = [] {
  openblas_set_num_threads(1);
  return 0;
}();

std::atomic<uint64_t> g_next_id{1};

void check(bool ok, const std::string& msg) {
  if (!ok) throw TensorError(msg);
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); i++) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::make(Shape shape, std::vector<float> values) {
  check(!shape.empty(), "tensor shape must have at least one extent");
  for (int64_t d : shape) check(d > 0, "tensor extents must be positive, got " + shape_str(shape));
  check(shape_numel(shape) == static_cast<int64_t>(values.size()),
        "value count does not match shape " + shape_str(shape));
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->values = std::move(values);
  t.node_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return make(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f));
}

Tensor Tensor::full(Shape shape, float value) {
  auto n = shape_numel(shape);
  return make(std::move(shape), std::vector<float>(static_cast<size_t>(n), value));
}

Tensor Tensor::from_values(Shape shape, std::vector<float> values) {
  return make(std::move(shape), std::move(values));
}

const Shape& Tensor::shape() const {
  check(defined(), "use of undefined tensor");
  return node_->shape;
}

int64_t Tensor::numel() const { return shape_numel(shape()); }

uint64_t Tensor::id() const {
  check(defined(), "use of undefined tensor");
  return node_->id;
}

std::span<const float> Tensor::values() const {
  check(defined(), "use of undefined tensor");
  return node_->values;
}

std::span<float> Tensor::mutable_values() {
  check(defined(), "use of undefined tensor");
  return node_->values;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

void Tensor::ensure_grad() {
  check(defined(), "use of undefined tensor");
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0f);
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

void Tensor::drop_grad() {
  if (defined()) node_->grad.clear();
}

std::span<float> Tensor::grad() {
  check(has_grad(), "tensor has no grad slot; call ensure_grad first");
  return node_->grad;
}

std::span<const float> Tensor::grad() const {
  check(has_grad(), "tensor has no grad slot");
  return node_->grad;
}

float Tensor::item() const {
  check(numel() == 1, "item() requires a single-element tensor, got " + shape_str(shape()));
  return values()[0];
}

void Tape::push(const char* op, std::vector<uint64_t> inputs, uint64_t output,
                std::function<void()> pull) {
  records_.push_back(Record{op, std::move(inputs), output, std::move(pull)});
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul requires rank-2 operands");
  check(a.dim(1) == b.dim(0), "matmul inner extents disagree: " + shape_str(a.shape()) + " x " +
                                  shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor y = Tensor::zeros({m, n});
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0f, a.values().data(), static_cast<int>(k), b.values().data(),
              static_cast<int>(n), 0.0f, y.mutable_values().data(), static_cast<int>(n));
  Tensor av = a, bv = b, yv = y;
  push("matmul", {a.id(), b.id()}, y.id(), [av, bv, yv]() mutable {
    yv.ensure_grad();
    const int m = static_cast<int>(av.dim(0)), k = static_cast<int>(av.dim(1)),
              n = static_cast<int>(bv.dim(1));
    av.ensure_grad();
    bv.ensure_grad();
    const float* gy = yv.grad().data();
    // dA += gY * B^T
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, k, n, 1.0f, gy, n, bv.values().data(),
                n, 1.0f, av.grad().data(), k);
    // dB += A^T * gY
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, n, m, 1.0f, av.values().data(), k, gy,
                n, 1.0f, bv.grad().data(), n);
  });
  return y;
}

Tensor Tape::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "linear expects x[n,in], w[out,in], b[out]");
  check(x.dim(1) == w.dim(1),
        "linear input extent mismatch: x " + shape_str(x.shape()) + " vs w " + shape_str(w.shape()));
  check(w.dim(0) == b.dim(0), "linear bias extent mismatch");
  const int64_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  Tensor y = Tensor::zeros({n, out});
  float* yd = y.mutable_values().data();
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(n), static_cast<int>(out),
              static_cast<int>(in), 1.0f, x.values().data(), static_cast<int>(in),
              w.values().data(), static_cast<int>(in), 0.0f, yd, static_cast<int>(out));
  const float* bd = b.values().data();
  for (int64_t r = 0; r < n; r++) {
    float* row = yd + r * out;
    for (int64_t o = 0; o < out; o++) row[o] += bd[o];
  }
  Tensor xv = x, wv = w, bv = b, yv = y;
  push("linear", {x.id(), w.id(), b.id()}, y.id(), [xv, wv, bv, yv]() mutable {
    yv.ensure_grad();
    const int n = static_cast<int>(xv.dim(0)), in = static_cast<int>(xv.dim(1)),
              out = static_cast<int>(wv.dim(0));
    xv.ensure_grad();
    wv.ensure_grad();
    bv.ensure_grad();
    const float* gy = yv.grad().data();
    // dX += gY * W
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, in, out, 1.0f, gy, out,
                wv.values().data(), in, 1.0f, xv.grad().data(), in);
    // dW += gY^T * X
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, out, in, n, 1.0f, gy, out,
                xv.values().data(), in, 1.0f, wv.grad().data(), in);
    float* gb = bv.grad().data();
    for (int r = 0; r < n; r++) {
      const float* row = gy + static_cast<int64_t>(r) * out;
      for (int o = 0; o < out; o++) gb[o] += row[o];
    }
  });
  return y;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": operand shapes differ, " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<float> out(av.size());
  for (size_t i = 0; i < out.size(); i++) out[i] = av[i] + bv[i];
  Tensor y = Tensor::from_values(a.shape(), std::move(out));
  Tensor ac = a, bc = b, yc = y;
  push("add", {a.id(), b.id()}, y.id(), [ac, bc, yc]() mutable {
    yc.ensure_grad();
    ac.ensure_grad();
    bc.ensure_grad();
    auto ga = ac.grad();
    auto gb = bc.grad();
    auto gy = yc.grad();
    for (size_t i = 0; i < gy.size(); i++) {
      ga[i] += gy[i];
      gb[i] += gy[i];
    }
  });
  return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<float> out(av.size());
  for (size_t i = 0; i < out.size(); i++) out[i] = av[i] * bv[i];
  Tensor y = Tensor::from_values(a.shape(), std::move(out));
  Tensor ac = a, bc = b, yc = y;
  push("mul", {a.id(), b.id()}, y.id(), [ac, bc, yc]() mutable {
    yc.ensure_grad();
    ac.ensure_grad();
    bc.ensure_grad();
    auto ga = ac.grad();
    auto gb = bc.grad();
    auto gy = yc.grad();
    auto avv = ac.values();
    auto bvv = bc.values();
    for (size_t i = 0; i < gy.size(); i++) {
      ga[i] += gy[i] * bvv[i];
      gb[i] += gy[i] * avv[i];
    }
  });
  return y;
}

Tensor Tape::sigmoid(const Tensor& x) {
  const auto xv = x.values();
  std::vector<float> out(xv.size());
  for (size_t i = 0; i < out.size(); i++) out[i] = fast_sigmoid(xv[i]);
  Tensor y = Tensor::from_values(x.shape(), std::move(out));
  Tensor xc = x, yc = y;
  push("sigmoid", {x.id()}, y.id(), [xc, yc]() mutable {
    yc.ensure_grad();
    xc.ensure_grad();
    auto gx = xc.grad();
    auto gy = yc.grad();
    auto yvv = yc.values();
    for (size_t i = 0; i < gy.size(); i++) gx[i] += gy[i] * yvv[i] * (1.0f - yvv[i]);
  });
  return y;
}

Tensor Tape::tanh(const Tensor& x) {
  const auto xv = x.values();
  std::vector<float> out(xv.size());
  for (size_t i = 0; i < out.size(); i++) out[i] = fast_tanh(xv[i]);
  Tensor y = Tensor::from_values(x.shape(), std::move(out));
  Tensor xc = x, yc = y;
  push("tanh", {x.id()}, y.id(), [xc, yc]() mutable {
    yc.ensure_grad();
    xc.ensure_grad();
    auto gx = xc.grad();
    auto gy = yc.grad();
    auto yvv = yc.values();
    for (size_t i = 0; i < gy.size(); i++) gx[i] += gy[i] * (1.0f - yvv[i] * yvv[i]);
  });
  return y;
}

Tensor Tape::relu(const Tensor& x) {
  const auto xv = x.values();
  std::vector<float> out(xv.size());
  for (size_t i = 0; i < out.size(); i++) out[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
  Tensor y = Tensor::from_values(x.shape(), std::move(out));
  Tensor xc = x, yc = y;
  push("relu", {x.id()}, y.id(), [xc, yc]() mutable {
    yc.ensure_grad();
    xc.ensure_grad();
    auto gx = xc.grad();
    auto gy = yc.grad();
    auto xvv = xc.values();
    for (size_t i = 0; i < gy.size(); i++) gx[i] += xvv[i] > 0.0f ? gy[i] : 0.0f;
  });
  return y;
}

Tensor Tape::concat_last(const Tensor& a, const Tensor& b) {
  check(a.rank() == b.rank(), "concat_last: rank mismatch");
  for (int i = 0; i + 1 < a.rank(); i++)
    check(a.dim(i) == b.dim(i), "concat_last: leading extents differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  const int64_t la = a.dim(a.rank() - 1), lb = b.dim(b.rank() - 1);
  const int64_t rows = a.numel() / la;
  Shape out_shape = a.shape();
  out_shape.back() = la + lb;
  std::vector<float> out(static_cast<size_t>(rows * (la + lb)));
  const auto av = a.values();
  const auto bv = b.values();
  for (int64_t r = 0; r < rows; r++) {
    std::memcpy(&out[r * (la + lb)], &av[r * la], sizeof(float) * la);
    std::memcpy(&out[r * (la + lb) + la], &bv[r * lb], sizeof(float) * lb);
  }
  Tensor y = Tensor::from_values(std::move(out_shape), std::move(out));
  Tensor ac = a, bc = b, yc = y;
  push("concat_last", {a.id(), b.id()}, y.id(), [ac, bc, yc, la, lb, rows]() mutable {
    yc.ensure_grad();
    ac.ensure_grad();
    bc.ensure_grad();
    auto ga = ac.grad();
    auto gb = bc.grad();
    auto gy = yc.grad();
    for (int64_t r = 0; r < rows; r++) {
      const float* gr = &gy[r * (la + lb)];
      for (int64_t i = 0; i < la; i++) ga[r * la + i] += gr[i];
      for (int64_t i = 0; i < lb; i++) gb[r * lb + i] += gr[la + i];
    }
  });
  return y;
}

std::vector<Tensor> Tape::split_last(const Tensor& x, const std::vector<int64_t>& sizes) {
  check(!sizes.empty(), "split_last: empty size list");
  int64_t total = 0;
  for (int64_t s : sizes) {
    check(s > 0, "split_last: sizes must be positive");
    total += s;
  }
  const int64_t last = x.dim(x.rank() - 1);
  check(total == last, "split_last: sizes sum to " + std::to_string(total) + ", last extent is " +
                           std::to_string(last));
  const int64_t rows = x.numel() / last;
  std::vector<Tensor> parts;
  parts.reserve(sizes.size());
  int64_t offset = 0;
  for (int64_t s : sizes) {
    Shape part_shape = x.shape();
    part_shape.back() = s;
    std::vector<float> vals(static_cast<size_t>(rows * s));
    const auto xv = x.values();
    for (int64_t r = 0; r < rows; r++)
      std::memcpy(&vals[r * s], &xv[r * last + offset], sizeof(float) * s);
    Tensor part = Tensor::from_values(std::move(part_shape), std::move(vals));
    Tensor xc = x, pc = part;
    const int64_t off = offset;
    push("split_last", {x.id()}, part.id(), [xc, pc, off, s, rows, last]() mutable {
      pc.ensure_grad();
      xc.ensure_grad();
      auto gx = xc.grad();
      auto gp = pc.grad();
      for (int64_t r = 0; r < rows; r++)
        for (int64_t i = 0; i < s; i++) gx[r * last + off + i] += gp[r * s + i];
    });
    parts.push_back(std::move(part));
    offset += s;
  }
  return parts;
}

Tensor Tape::select_rows(const Tensor& x, std::vector<int64_t> rows) {
  check(x.rank() == 2, "select_rows requires a rank-2 tensor");
  check(!rows.empty(), "select_rows: empty row list");
  const int64_t n = x.dim(0), d = x.dim(1);
  for (int64_t r : rows) check(r >= 0 && r < n, "select_rows: row index out of range");
  std::vector<float> out(rows.size() * static_cast<size_t>(d));
  const auto xv = x.values();
  for (size_t i = 0; i < rows.size(); i++)
    std::memcpy(&out[i * d], &xv[rows[i] * d], sizeof(float) * d);
  Tensor y = Tensor::from_values({static_cast<int64_t>(rows.size()), d}, std::move(out));
  Tensor xc = x, yc = y;
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(rows));
  push("select_rows", {x.id()}, y.id(), [xc, yc, idx, d]() mutable {
    yc.ensure_grad();
    xc.ensure_grad();
    auto gx = xc.grad();
    auto gy = yc.grad();
    for (size_t i = 0; i < idx->size(); i++) {
      const int64_t r = (*idx)[i];
      for (int64_t j = 0; j < d; j++) gx[r * d + j] += gy[i * d + j];
    }
  });
  return y;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& xs) {
  check(!xs.empty(), "concat_rows: empty tensor list");
  const int64_t d = xs[0].dim(1);
  int64_t total = 0;
  std::vector<uint64_t> ids;
  for (const auto& x : xs) {
    check(x.rank() == 2, "concat_rows requires rank-2 tensors");
    check(x.dim(1) == d, "concat_rows: column extents differ");
    total += x.dim(0);
    ids.push_back(x.id());
  }
  std::vector<float> out(static_cast<size_t>(total * d));
  int64_t row = 0;
  for (const auto& x : xs) {
    std::memcpy(&out[row * d], x.values().data(), sizeof(float) * x.numel());
    row += x.dim(0);
  }
  Tensor y = Tensor::from_values({total, d}, std::move(out));
  auto parts = std::make_shared<std::vector<Tensor>>(xs);
  Tensor yc = y;
  push("concat_rows", std::move(ids), y.id(), [parts, yc, d]() mutable {
    yc.ensure_grad();
    auto gy = yc.grad();
    int64_t row = 0;
    for (auto& x : *parts) {
      x.ensure_grad();
      auto gx = x.grad();
      const int64_t n = x.dim(0);
      for (int64_t i = 0; i < n * d; i++) gx[i] += gy[row * d + i];
      row += n;
    }
  });
  return y;
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels) {
  check(logits.rank() == 2, "softmax_cross_entropy requires rank-2 logits");
  const int64_t n = logits.dim(0), k = logits.dim(1);
  check(static_cast<int64_t>(labels.size()) == n, "softmax_cross_entropy: label count mismatch");
  for (int64_t lbl : labels)
    check(lbl >= 0 && lbl < k, "softmax_cross_entropy: label out of range [0," + std::to_string(k) + ")");
  const auto lv = logits.values();
  std::vector<float> probs(lv.begin(), lv.end());
  double loss = 0.0;
  for (int64_t r = 0; r < n; r++) {
    float* row = &probs[r * k];
    float mx = row[0];
    for (int64_t j = 1; j < k; j++) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; j++) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    const float inv = static_cast<float>(1.0 / z);
    for (int64_t j = 0; j < k; j++) row[j] *= inv;
    loss -= std::log(static_cast<double>(probs[r * k + labels[r]]));
  }
  Tensor y = Tensor::scalar(static_cast<float>(loss / n));
  Tensor lc = logits, yc = y;
  auto saved_probs = std::make_shared<std::vector<float>>(std::move(probs));
  auto saved_labels = std::make_shared<std::vector<int64_t>>(labels);
  push("softmax_xent", {logits.id()}, y.id(), [lc, yc, saved_probs, saved_labels, n, k]() mutable {
    yc.ensure_grad();
    lc.ensure_grad();
    auto gl = lc.grad();
    const float gy = yc.grad()[0];
    const float scale = gy / static_cast<float>(n);
    const auto& p = *saved_probs;
    for (int64_t r = 0; r < n; r++) {
      for (int64_t j = 0; j < k; j++) gl[r * k + j] += scale * p[r * k + j];
      gl[r * k + (*saved_labels)[r]] -= scale;
    }
  });
  return y;
}

Tensor Tape::sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  Tensor y = Tensor::scalar(static_cast<float>(acc));
  Tensor xc = x, yc = y;
  push("sum", {x.id()}, y.id(), [xc, yc]() mutable {
    yc.ensure_grad();
    xc.ensure_grad();
    auto gx = xc.grad();
    const float gy = yc.grad()[0];
    for (size_t i = 0; i < gx.size(); i++) gx[i] += gy;
  });
  return y;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw TensorError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  Tensor seed = loss;
  seed.ensure_grad();
  seed.grad()[0] += 1.0f;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->pull();
}

Tensor slice_time(const Tensor& x, int64_t t) {
  if (x.rank() != 3) throw TensorError("slice_time requires a rank-3 tensor");
  const int64_t n = x.dim(0), steps = x.dim(1), d = x.dim(2);
  if (t < 0 || t >= steps) throw TensorError("slice_time: index out of range");
  std::vector<float> out(static_cast<size_t>(n * d));
  const auto xv = x.values();
  for (int64_t r = 0; r < n; r++)
    std::memcpy(&out[r * d], &xv[(r * steps + t) * d], sizeof(float) * d);
  return Tensor::from_values({n, d}, std::move(out));
}

}  // namespace prlstm
