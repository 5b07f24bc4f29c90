#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "prlstm/model.hpp"
#include "prlstm/tasks.hpp"
#include "prlstm/threadpool.hpp"

namespace prlstm::train {

// Non-finite loss during optimization.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int64_t steps = 40000;
  int64_t batch = 128;
  double lr = 1e-3;
  double clip_norm = 1.0;
  uint64_t seed = 0;
  int64_t train_min = 1;
  int64_t train_max = 40;
  int64_t eval_min = 41;
  int64_t eval_max = 500;
  int64_t eval_batch = 64;
};

struct LossPoint {
  int64_t step;
  double wall_ms;
  double loss;
};

struct TrainResult {
  Model model;
  std::vector<LossPoint> trace;
};

// Adam with bias correction; moments are allocated on first step and keyed
// by parameter order, which must stay fixed across steps.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<Tensor>& params, double lr);

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

double global_grad_norm(const std::vector<Tensor>& params);
// Scales grads so the global norm is at most max_norm; returns the pre-clip norm.
double clip_global_norm(const std::vector<Tensor>& params, double max_norm);

// Fills d_x and k_out from the task's vocabularies.
ModelConfig with_task_dims(ModelConfig config, tasks::TaskId task);

// Cross-entropy training over per-step batches of one uniformly drawn valid
// length in [train_min, train_max]. Fully deterministic given (configs, seed).
TrainResult train(const ModelConfig& model_config, tasks::TaskId task, const TrainConfig& tc);

struct EvalReport {
  std::vector<std::pair<int64_t, double>> per_length;  // (length, accuracy)
  double score = 0.0;   // unweighted mean accuracy over evaluated lengths
  bool success = false; // score >= 0.90
  uint64_t seed = 0;
};

// Accuracy = exact matches / masked positions per length (integer counts, so
// the value is independent of batch order). Lengths violating the task's
// constraint are skipped.
EvalReport evaluate(const Model& m, tasks::TaskId task, const std::vector<int64_t>& lengths,
                    int64_t eval_batch, uint64_t seed, WorkerPool* pool = nullptr);

// Same protocol with an arbitrary labeler; lets tests score oracles and
// chance baselines through the identical code path.
using Predictor =
    std::function<std::vector<int32_t>(int64_t length, const std::vector<tasks::TaskSample>&)>;
EvalReport evaluate_predictor(const Predictor& predict, tasks::TaskId task,
                              const std::vector<int64_t>& lengths, int64_t eval_batch,
                              uint64_t seed);

struct SeedRun {
  uint64_t seed = 0;
  TrainResult result;
  EvalReport report;
};

struct SeedsResult {
  std::vector<SeedRun> runs;
  size_t best = 0;  // index of the max score (first on ties)
  const EvalReport& best_report() const { return runs[best].report; }
};

// Trains and evaluates each seed independently; reports all scores and the max.
SeedsResult run_seeds(const ModelConfig& model_config, tasks::TaskId task, const TrainConfig& tc,
                      const std::vector<uint64_t>& seeds, WorkerPool* eval_pool = nullptr,
                      const std::function<void(const SeedRun&)>& on_seed_done = nullptr);

}  // namespace prlstm::train
