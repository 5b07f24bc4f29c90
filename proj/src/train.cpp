#include "prlstm/train.hpp"

#include <chrono>
#include <cmath>

#include "prlstm/runner.hpp"

namespace prlstm::train {

void Adam::step(const std::vector<Tensor>& params, double lr) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); i++) {
      m_[i].assign(params[i].numel(), 0.0f);
      v_[i].assign(params[i].numel(), 0.0f);
    }
  }
  if (m_.size() != params.size()) throw TensorError("Adam: parameter list changed size");
  t_++;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  for (size_t i = 0; i < params.size(); i++) {
    Tensor p = params[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < w.size(); j++) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

double global_grad_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double clip_global_norm(const std::vector<Tensor>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const float scale = static_cast<float>(max_norm / norm);
    for (const auto& cp : params) {
      Tensor p = cp;
      if (!p.has_grad()) continue;
      for (float& g : p.grad()) g *= scale;
    }
  }
  return norm;
}

ModelConfig with_task_dims(ModelConfig config, tasks::TaskId task) {
  const auto& ts = tasks::spec(task);
  config.d_x = static_cast<int64_t>(ts.input_vocab.size());
  config.k_out = static_cast<int64_t>(ts.output_vocab.size());
  return config;
}

namespace {

// One loss evaluation over an encoded batch; labels come with the batch.
Tensor batch_loss(Tape& tape, const Model& m, const tasks::EncodedBatch& batch) {
  auto states = forward(tape, m, batch.onehot);
  Tensor gathered = gather_masked(tape, states, batch.mask_positions);
  Tensor logits = head_logits(tape, m, gathered);
  return tape.softmax_cross_entropy(logits, batch.labels);
}

std::vector<tasks::TaskSample> draw_batch(tasks::TaskId task, int64_t length, int64_t count,
                                          uint64_t stream_seed) {
  std::vector<tasks::TaskSample> samples;
  samples.reserve(count);
  for (int64_t b = 0; b < count; b++) {
    Rng rng = tasks::sample_rng(stream_seed, static_cast<uint64_t>(b));
    samples.push_back(tasks::generate(task, length, rng));
  }
  return samples;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, tasks::TaskId task, const TrainConfig& tc) {
  if (tc.steps < 0 || tc.batch < 1) throw TensorError("train: bad steps/batch");
  const ModelConfig mc = with_task_dims(model_config, task);
  Model model = Model::init(mc, tc.seed);
  auto params = model.params();
  Adam adam;
  const auto lengths = tasks::valid_lengths(task, tc.train_min, tc.train_max);
  Rng length_rng(mix_seed(tc.seed, 0x6c656e677468ull));  // "length"

  TrainResult out{std::move(model), {}};
  out.trace.reserve(tc.steps);
  const auto start = std::chrono::steady_clock::now();
  for (int64_t step = 0; step < tc.steps; step++) {
    const int64_t T = lengths[length_rng.next_below(lengths.size())];
    const uint64_t stream = mix_seed(tc.seed, 0xb000000000000000ull + static_cast<uint64_t>(step));
    auto batch = tasks::encode(task, draw_batch(task, T, tc.batch, stream));

    Tape tape;
    Tensor loss = batch_loss(tape, out.model, batch);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value))
      throw DivergenceError("training diverged at step " + std::to_string(step) +
                            " (loss not finite)");
    out.model.zero_grads();
    tape.backward(loss);
    clip_global_norm(params, tc.clip_norm);
    adam.step(params, tc.lr);

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    out.trace.push_back({step, wall_ms, loss_value});
  }
  return out;
}

EvalReport evaluate_predictor(const Predictor& predict, tasks::TaskId task,
                              const std::vector<int64_t>& lengths, int64_t eval_batch,
                              uint64_t seed) {
  if (lengths.empty()) throw TensorError("evaluate: no lengths");
  EvalReport report;
  report.seed = seed;
  double acc_sum = 0.0;
  int64_t used = 0;
  for (int64_t length : lengths) {
    if (!tasks::spec(task).valid_length(length)) continue;
    const uint64_t stream = mix_seed(seed, 0xe000000000000000ull + static_cast<uint64_t>(length));
    auto samples = draw_batch(task, length, eval_batch, stream);
    auto predictions = predict(length, samples);
    int64_t hits = 0, total = 0;
    size_t k = 0;
    // predictions are ordered by (position, sample), matching encode()
    const int64_t padded = static_cast<int64_t>(samples[0].input.size());
    for (int64_t t = 0; t < padded; t++) {
      for (size_t b = 0; b < samples.size(); b++) {
        if (!samples[b].mask[t]) continue;
        int64_t nth = 0;
        for (int64_t u = 0; u < t; u++) nth += samples[b].mask[u] ? 1 : 0;
        if (predictions.at(k) == samples[b].target.at(nth)) hits++;
        total++;
        k++;
      }
    }
    const double acc = total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    report.per_length.emplace_back(length, acc);
    acc_sum += acc;
    used++;
  }
  if (used == 0) throw TensorError("evaluate: no valid lengths for task");
  report.score = acc_sum / static_cast<double>(used);
  report.success = report.score >= 0.90;
  return report;
}

EvalReport evaluate(const Model& m, tasks::TaskId task, const std::vector<int64_t>& lengths,
                    int64_t eval_batch, uint64_t seed, WorkerPool* pool) {
  auto predict = [&](int64_t, const std::vector<tasks::TaskSample>& samples) {
    auto batch = tasks::encode(task, samples);
    InferenceRunner runner(m, batch.length, batch.batch, pool);
    runner.forward(batch.token_ids);
    return runner.predict(batch.mask_positions);
  };
  auto report = evaluate_predictor(predict, task, lengths, eval_batch, seed);
  return report;
}

SeedsResult run_seeds(const ModelConfig& model_config, tasks::TaskId task, const TrainConfig& tc,
                      const std::vector<uint64_t>& seeds, WorkerPool* eval_pool,
                      const std::function<void(const SeedRun&)>& on_seed_done) {
  if (seeds.empty()) throw TensorError("run_seeds: empty seed list");
  SeedsResult out;
  std::vector<int64_t> eval_lengths;
  for (int64_t t = tc.eval_min; t <= tc.eval_max; t++) eval_lengths.push_back(t);
  for (uint64_t seed : seeds) {
    TrainConfig seeded = tc;
    seeded.seed = seed;
    SeedRun run;
    run.seed = seed;
    run.result = train(model_config, task, seeded);
    run.report = evaluate(run.result.model, task, eval_lengths, tc.eval_batch, seed, eval_pool);
    run.report.seed = seed;
    if (on_seed_done) on_seed_done(run);
    out.runs.push_back(std::move(run));
  }
  for (size_t i = 1; i < out.runs.size(); i++)
    if (out.runs[i].report.score > out.runs[out.best].report.score) out.best = i;
  return out;
}

}  // namespace prlstm::train
