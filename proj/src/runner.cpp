#include "prlstm/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "prlstm/fastmath.hpp"

namespace prlstm {

namespace {

// dst[in, out] = src[out, in]^T
std::vector<float> transpose(const Tensor& w) {
  const int64_t out = w.dim(0), in = w.dim(1);
  std::vector<float> t(static_cast<size_t>(in * out));
  auto v = w.values();
  for (int64_t o = 0; o < out; o++)
    for (int64_t k = 0; k < in; k++) t[k * out + o] = v[o * in + k];
  return t;
}

// Vertically stacked transpose: [in, out_a + out_b]
std::vector<float> transpose2(const Tensor& a, const Tensor& b) {
  const int64_t in = a.dim(1), oa = a.dim(0), ob = b.dim(0);
  std::vector<float> t(static_cast<size_t>(in * (oa + ob)));
  auto av = a.values();
  auto bv = b.values();
  for (int64_t o = 0; o < oa; o++)
    for (int64_t k = 0; k < in; k++) t[k * (oa + ob) + o] = av[o * in + k];
  for (int64_t o = 0; o < ob; o++)
    for (int64_t k = 0; k < in; k++) t[k * (oa + ob) + oa + o] = bv[o * in + k];
  return t;
}

std::vector<float> concat_bias(const Tensor& a, const Tensor& b) {
  std::vector<float> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return out;
}

// y[0..out) = bias + sum_k x[k] * wt[k, :]; the k-order is fixed, so every
// output element is reproducible regardless of how callers split work.
inline void affine_rows(const float* x, int64_t in, const float* wt, const float* bias,
                        int64_t out, float* y) {
  std::memcpy(y, bias, sizeof(float) * out);
  for (int64_t k = 0; k < in; k++) {
    const float xv = x[k];
    const float* w = wt + k * out;
    for (int64_t o = 0; o < out; o++) y[o] += xv * w[o];
  }
}

}  // namespace

InferenceRunner::InferenceRunner(const Model& m, int64_t length, int64_t batch, WorkerPool* pool)
    : model_(m),
      variant_(m.config.variant),
      length_(length),
      batch_(batch),
      d_h_(m.config.d_h),
      d_x_(m.config.d_x),
      pool_(pool) {
  if (length < 1) throw TensorError("InferenceRunner: length must be >= 1");
  if (batch < 1) throw TensorError("InferenceRunner: batch must be >= 1");

  const size_t slot = static_cast<size_t>(batch_ * d_h_);
  buf_h_.resize(static_cast<size_t>(length_) * slot);
  int64_t scratch_width = 0;
  switch (variant_) {
    case Variant::pr_lstm:
      plan_ = scan::build_plan(length_);
      buf_c_.resize(static_cast<size_t>(length_) * slot);
      comp_wt_ = transpose2(m.comp.W_g2, m.comp.W_u2);
      comp_b_ = concat_bias(m.comp.b_g2, m.comp.b_u2);
      for (const auto& rp : m.refine) {
        auto wt = transpose2(rp.W_g1, rp.W_u1);
        refine_wt_.insert(refine_wt_.end(), wt.begin(), wt.end());
        auto bs = concat_bias(rp.b_g1, rp.b_u1);
        refine_b_.insert(refine_b_.end(), bs.begin(), bs.end());
      }
      embed_wt_ = transpose2(m.embed.W_io, m.embed.W_u);
      embed_b_ = concat_bias(m.embed.b_io, m.embed.b_u);
      scratch_width = 5 * d_h_;
      state_slots_ = length_;
      break;
    case Variant::pr_rnn:
      plan_ = scan::build_plan(length_);
      comp_wt_ = transpose(m.fc_comp.W);
      comp_b_.assign(m.fc_comp.b.values().begin(), m.fc_comp.b.values().end());
      for (const auto& fp : m.fc_refine) {
        auto wt = transpose(fp.W);
        refine_wt_.insert(refine_wt_.end(), wt.begin(), wt.end());
        refine_b_.insert(refine_b_.end(), fp.b.values().begin(), fp.b.values().end());
      }
      embed_wt_ = transpose(m.fc_embed.W);
      embed_b_.assign(m.fc_embed.b.values().begin(), m.fc_embed.b.values().end());
      scratch_width = d_h_;
      state_slots_ = length_;
      break;
    case Variant::seq_lstm: {
      buf_c_.resize(slot);
      const int64_t gates = 4 * d_h_;
      // cell.W columns: [h part | x part]
      cell_h_wt_.resize(static_cast<size_t>(d_h_ * gates));
      cell_x_wt_.resize(static_cast<size_t>(d_x_ * gates));
      auto wv = m.cell.W.values();
      for (int64_t o = 0; o < gates; o++) {
        for (int64_t k = 0; k < d_h_; k++) cell_h_wt_[k * gates + o] = wv[o * (d_h_ + d_x_) + k];
        for (int64_t k = 0; k < d_x_; k++)
          cell_x_wt_[k * gates + o] = wv[o * (d_h_ + d_x_) + d_h_ + k];
      }
      cell_b_.assign(m.cell.b.values().begin(), m.cell.b.values().end());
      scratch_width = gates;
      state_slots_ = length_ + 1;
      break;
    }
    case Variant::seq_rnn: {
      cell_h_wt_.resize(static_cast<size_t>(d_h_ * d_h_));
      cell_x_wt_.resize(static_cast<size_t>(d_x_ * d_h_));
      auto wv = m.cell.W.values();
      for (int64_t o = 0; o < d_h_; o++) {
        for (int64_t k = 0; k < d_h_; k++) cell_h_wt_[k * d_h_ + o] = wv[o * (d_h_ + d_x_) + k];
        for (int64_t k = 0; k < d_x_; k++)
          cell_x_wt_[k * d_h_ + o] = wv[o * (d_h_ + d_x_) + d_h_ + k];
      }
      cell_b_.assign(m.cell.b.values().begin(), m.cell.b.values().end());
      scratch_width = d_h_;
      state_slots_ = length_;
      break;
    }
  }
  const int workers = pool_ ? pool_->workers() : 1;
  scratch_.resize(workers);
  // Sequential variants chunk the batch, so per-worker scratch covers it all;
  // recursive variants process whole steps per worker.
  for (auto& s : scratch_) s.pre.resize(static_cast<size_t>(batch_ * scratch_width));
  state_bytes_ = static_cast<int64_t>((buf_h_.size() + buf_c_.size()) * sizeof(float));
}

std::span<const float> InferenceRunner::hidden(int64_t t) const {
  if (t < 0 || t >= length_) throw TensorError("hidden: position out of range");
  return {buf_h_.data() + t * batch_ * d_h_, static_cast<size_t>(batch_ * d_h_)};
}

void InferenceRunner::embed_leaves(std::span<const int32_t> tokens) {
  auto embed_slot = [&](int64_t t) {
    float* h = buf_h_.data() + t * batch_ * d_h_;
    float* c = variant_ == Variant::pr_lstm ? buf_c_.data() + t * batch_ * d_h_ : nullptr;
    for (int64_t b = 0; b < batch_; b++) {
      const int32_t tok = tokens[t * batch_ + b];
      if (tok < 0 || tok >= d_x_) throw TensorError("token id out of range");
      if (variant_ == Variant::pr_lstm) {
        const float* col = embed_wt_.data() + static_cast<int64_t>(tok) * 3 * d_h_;
        for (int64_t j = 0; j < d_h_; j++) {
          const float i_g = fast_sigmoid(col[j] + embed_b_[j]);
          const float o_g = fast_sigmoid(col[d_h_ + j] + embed_b_[d_h_ + j]);
          const float u = fast_tanh(col[2 * d_h_ + j] + embed_b_[2 * d_h_ + j]);
          const float cv = i_g * u;
          c[b * d_h_ + j] = cv;
          h[b * d_h_ + j] = o_g * fast_tanh(cv);
        }
      } else {
        const float* col = embed_wt_.data() + static_cast<int64_t>(tok) * d_h_;
        for (int64_t j = 0; j < d_h_; j++) {
          const float v = col[j] + embed_b_[j];
          h[b * d_h_ + j] = v > 0.0f ? v : 0.0f;
        }
      }
    }
  };
  if (pool_) {
    pool_->parallel_for(length_, [&](int64_t lo, int64_t hi) {
      for (int64_t t = lo; t < hi; t++) embed_slot(t);
    });
  } else {
    for (int64_t t = 0; t < length_; t++) embed_slot(t);
  }
}

void InferenceRunner::combine_lstm(const scan::ScanStep& s, Scratch& scratch) {
  const int64_t d = d_h_;
  const float* hl = buf_h_.data() + s.left * batch_ * d;
  const float* hr = buf_h_.data() + s.right * batch_ * d;
  const float* cl = buf_c_.data() + s.left * batch_ * d;
  const float* cr = buf_c_.data() + s.right * batch_ * d;
  float* ho = buf_h_.data() + s.out * batch_ * d;
  float* co = buf_c_.data() + s.out * batch_ * d;
  float* pre = scratch.pre.data();
  const int64_t width = 5 * d;  // [f1, f2, i, o, u]
  for (int64_t b = 0; b < batch_; b++) {
    float* row = pre + b * width;
    std::memcpy(row, comp_b_.data(), sizeof(float) * width);
    const float* xl = hl + b * d;
    const float* xr = hr + b * d;
    for (int64_t k = 0; k < d; k++) {
      const float xv = xl[k];
      const float* w = comp_wt_.data() + k * width;
      for (int64_t o = 0; o < width; o++) row[o] += xv * w[o];
    }
    for (int64_t k = 0; k < d; k++) {
      const float xv = xr[k];
      const float* w = comp_wt_.data() + (d + k) * width;
      for (int64_t o = 0; o < width; o++) row[o] += xv * w[o];
    }
  }
  for (int64_t b = 0; b < batch_; b++) {
    const float* row = pre + b * width;
    for (int64_t j = 0; j < d; j++) {
      const float f1 = fast_sigmoid(row[j]);
      const float f2 = fast_sigmoid(row[d + j]);
      const float i_g = fast_sigmoid(row[2 * d + j]);
      const float o_g = fast_sigmoid(row[3 * d + j]);
      const float u = fast_tanh(row[4 * d + j]);
      const float cv = i_g * u + f1 * cl[b * d + j] + f2 * cr[b * d + j];
      co[b * d + j] = cv;
      ho[b * d + j] = o_g * fast_tanh(cv);
    }
  }
  const int64_t rwidth = 4 * d;  // [f1, i, o, u]
  for (size_t stage = 0; stage < model_.refine.size(); stage++) {
    const float* wt = refine_wt_.data() + stage * d * rwidth;
    const float* bias = refine_b_.data() + stage * rwidth;
    for (int64_t b = 0; b < batch_; b++) {
      float* row = pre + b * rwidth;
      affine_rows(ho + b * d, d, wt, bias, rwidth, row);
    }
    for (int64_t b = 0; b < batch_; b++) {
      const float* row = pre + b * rwidth;
      for (int64_t j = 0; j < d; j++) {
        const float f1 = fast_sigmoid(row[j]);
        const float i_g = fast_sigmoid(row[d + j]);
        const float o_g = fast_sigmoid(row[2 * d + j]);
        const float u = fast_tanh(row[3 * d + j]);
        const float cv = i_g * u + f1 * co[b * d + j];
        co[b * d + j] = cv;
        ho[b * d + j] = o_g * fast_tanh(cv);
      }
    }
  }
}

void InferenceRunner::combine_rnn(const scan::ScanStep& s, Scratch& scratch) {
  const int64_t d = d_h_;
  const float* hl = buf_h_.data() + s.left * batch_ * d;
  const float* hr = buf_h_.data() + s.right * batch_ * d;
  float* ho = buf_h_.data() + s.out * batch_ * d;
  float* pre = scratch.pre.data();
  for (int64_t b = 0; b < batch_; b++) {
    float* row = pre + b * d;
    std::memcpy(row, comp_b_.data(), sizeof(float) * d);
    const float* xl = hl + b * d;
    const float* xr = hr + b * d;
    for (int64_t k = 0; k < d; k++) {
      const float xv = xl[k];
      const float* w = comp_wt_.data() + k * d;
      for (int64_t o = 0; o < d; o++) row[o] += xv * w[o];
    }
    for (int64_t k = 0; k < d; k++) {
      const float xv = xr[k];
      const float* w = comp_wt_.data() + (d + k) * d;
      for (int64_t o = 0; o < d; o++) row[o] += xv * w[o];
    }
  }
  for (int64_t b = 0; b < batch_; b++) {
    float* row = pre + b * d;
    float* out = ho + b * d;
    for (int64_t j = 0; j < d; j++) out[j] = row[j] > 0.0f ? row[j] : 0.0f;
  }
  for (size_t stage = 0; stage < model_.fc_refine.size(); stage++) {
    const float* wt = refine_wt_.data() + stage * d * d;
    const float* bias = refine_b_.data() + stage * d;
    for (int64_t b = 0; b < batch_; b++) {
      float* row = pre + b * d;
      affine_rows(ho + b * d, d, wt, bias, d, row);
      float* out = ho + b * d;
      for (int64_t j = 0; j < d; j++) out[j] = row[j] > 0.0f ? row[j] : 0.0f;
    }
  }
}

void InferenceRunner::run_recursive() {
  depth_executed_ = 0;
  for (const auto& level : plan_.levels) {
    const int64_t n = static_cast<int64_t>(level.size());
    auto do_steps = [&](int64_t lo, int64_t hi, Scratch& scratch) {
      for (int64_t i = lo; i < hi; i++) {
        if (variant_ == Variant::pr_lstm)
          combine_lstm(level[i], scratch);
        else
          combine_rnn(level[i], scratch);
      }
    };
    if (pool_) {
      const int64_t p = pool_->workers();
      pool_->run_per_worker([&](int w) {
        const int64_t chunk = (n + p - 1) / p;
        const int64_t lo = std::min<int64_t>(n, w * chunk);
        const int64_t hi = std::min<int64_t>(n, lo + chunk);
        if (lo < hi) do_steps(lo, hi, scratch_[w]);
      });
    } else {
      do_steps(0, n, scratch_[0]);
    }
    depth_executed_++;
  }
}

void InferenceRunner::run_sequential(std::span<const int32_t> tokens) {
  depth_executed_ = 0;
  const int64_t d = d_h_;
  const int64_t gates = variant_ == Variant::seq_lstm ? 4 * d : d;
  std::vector<float> h_prev(static_cast<size_t>(batch_ * d), 0.0f);
  auto step_rows = [&](int64_t t, int64_t lo, int64_t hi, Scratch& scratch) {
    float* h_out = buf_h_.data() + t * batch_ * d;
    for (int64_t b = lo; b < hi; b++) {
      float* row = scratch.pre.data() + b * gates;
      affine_rows(h_prev.data() + b * d, d, cell_h_wt_.data(), cell_b_.data(), gates, row);
      const int32_t tok = tokens[t * batch_ + b];
      if (tok < 0 || tok >= d_x_) throw TensorError("token id out of range");
      const float* xw = cell_x_wt_.data() + static_cast<int64_t>(tok) * gates;
      for (int64_t o = 0; o < gates; o++) row[o] += xw[o];
      if (variant_ == Variant::seq_lstm) {
        float* c = buf_c_.data() + b * d;
        for (int64_t j = 0; j < d; j++) {
          const float f = fast_sigmoid(row[j]);
          const float i_g = fast_sigmoid(row[d + j]);
          const float o_g = fast_sigmoid(row[2 * d + j]);
          const float u = fast_tanh(row[3 * d + j]);
          const float cv = f * c[j] + i_g * u;
          c[j] = cv;
          h_out[b * d + j] = o_g * fast_tanh(cv);
        }
      } else {
        for (int64_t j = 0; j < d; j++) h_out[b * d + j] = fast_tanh(row[j]);
      }
    }
  };
  for (int64_t t = 0; t < length_; t++) {
    if (pool_) {
      const int64_t p = pool_->workers();
      pool_->run_per_worker([&](int w) {
        const int64_t chunk = (batch_ + p - 1) / p;
        const int64_t lo = std::min<int64_t>(batch_, w * chunk);
        const int64_t hi = std::min<int64_t>(batch_, lo + chunk);
        if (lo < hi) step_rows(t, lo, hi, scratch_[w]);
      });
    } else {
      step_rows(t, 0, batch_, scratch_[0]);
    }
    std::memcpy(h_prev.data(), buf_h_.data() + t * batch_ * d, sizeof(float) * batch_ * d);
    depth_executed_++;
  }
}

void InferenceRunner::forward(std::span<const int32_t> tokens) {
  if (static_cast<int64_t>(tokens.size()) != length_ * batch_)
    throw TensorError("forward: token buffer size mismatch");
  switch (variant_) {
    case Variant::pr_lstm:
    case Variant::pr_rnn:
      embed_leaves(tokens);
      run_recursive();
      break;
    case Variant::seq_lstm:
      std::fill(buf_c_.begin(), buf_c_.end(), 0.0f);
      run_sequential(tokens);
      break;
    case Variant::seq_rnn:
      run_sequential(tokens);
      break;
  }
}

std::vector<int32_t> InferenceRunner::predict(
    const std::vector<std::pair<int64_t, int64_t>>& mask) const {
  const int64_t k_out = model_.config.k_out;
  auto wv = model_.head.W.values();
  auto bv = model_.head.b.values();
  std::vector<int32_t> out;
  out.reserve(mask.size());
  for (const auto& [t, b] : mask) {
    if (t < 0 || t >= length_ || b < 0 || b >= batch_)
      throw TensorError("predict: mask position outside sequence");
    const float* h = buf_h_.data() + (t * batch_ + b) * d_h_;
    int32_t best = 0;
    float best_z = -std::numeric_limits<float>::infinity();
    for (int64_t k = 0; k < k_out; k++) {
      float z = bv[k];
      const float* w = wv.data() + k * d_h_;
      for (int64_t j = 0; j < d_h_; j++) z += w[j] * h[j];
      if (z > best_z) {  // strict: ties keep the lowest class index
        best_z = z;
        best = static_cast<int32_t>(k);
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace prlstm
