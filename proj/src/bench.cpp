#include "prlstm/bench.hpp"

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

#include "prlstm/rng.hpp"
#include "prlstm/runner.hpp"
#include "prlstm/scan.hpp"
#include "prlstm/threadpool.hpp"

namespace prlstm::bench {

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::completed: return "completed";
    case Termination::time_threshold: return "time_threshold";
    case Termination::memory: return "memory";
  }
  return "?";
}

Termination termination_from_name(const std::string& name) {
  if (name == "completed") return Termination::completed;
  if (name == "time_threshold") return Termination::time_threshold;
  if (name == "memory") return Termination::memory;
  throw TensorError("unknown termination: " + name);
}

namespace {

void validate(const BenchConfig& c) {
  if (c.lengths.empty()) throw TensorError("bench: no lengths");
  for (size_t i = 1; i < c.lengths.size(); i++)
    if (c.lengths[i] <= c.lengths[i - 1]) throw TensorError("bench: lengths must be ascending");
  if (c.repeats < 1) throw TensorError("bench: repeats must be >= 1");
  if (c.batch < 1 || c.workers < 1) throw TensorError("bench: bad batch/workers");
}

struct Timing {
  double mean_ms = 0.0;
  double std_ms = 0.0;
};

template <typename Fn>
Timing time_repeats(int64_t warmup, int64_t repeats, Fn&& fn) {
  for (int64_t i = 0; i < warmup; i++) fn();
  std::vector<double> ms;
  ms.reserve(repeats);
  for (int64_t i = 0; i < repeats; i++) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  Timing t;
  for (double v : ms) t.mean_ms += v;
  t.mean_ms /= static_cast<double>(ms.size());
  if (ms.size() > 1) {
    double sq = 0.0;
    for (double v : ms) sq += (v - t.mean_ms) * (v - t.mean_ms);
    t.std_ms = std::sqrt(sq / static_cast<double>(ms.size() - 1));
  }
  return t;
}

std::vector<int32_t> random_tokens(int64_t length, int64_t batch, int64_t d_x, uint64_t seed) {
  Rng rng(mix_seed(seed, static_cast<uint64_t>(length)));
  std::vector<int32_t> tokens(static_cast<size_t>(length * batch));
  for (auto& t : tokens) t = static_cast<int32_t>(rng.next_below(static_cast<uint64_t>(d_x)));
  return tokens;
}

}  // namespace

BenchReport profile_inference(const BenchConfig& config) {
  validate(config);
  ModelConfig mc;
  mc.variant = config.variant;
  mc.d_h = config.d_h;
  mc.d_x = config.d_x;
  mc.k_out = config.k_out;
  mc.refine_stages = config.refine_stages;
  const Model model = Model::init(mc, config.seed);
  WorkerPool pool(static_cast<int>(config.workers));

  BenchReport report;
  for (int64_t length : config.lengths) {
    BenchRecord rec;
    rec.variant = variant_name(config.variant);
    rec.length = length;
    try {
      auto tokens = random_tokens(length, config.batch, config.d_x, config.seed);
      InferenceRunner runner(model, length, config.batch, &pool);
      const Timing t =
          time_repeats(config.warmup, config.repeats, [&] { runner.forward(tokens); });
      rec.mean_ms = t.mean_ms;
      rec.std_ms = t.std_ms;
      rec.peak_mem_bytes = runner.state_bytes();
      rec.depth = runner.depth_executed();
      rec.state_slots = runner.state_slots();
      if (rec.mean_ms >= config.threshold_ms) {
        rec.termination = Termination::time_threshold;
        report.records.push_back(std::move(rec));
        break;
      }
      report.records.push_back(std::move(rec));
    } catch (const std::bad_alloc&) {
      rec.termination = Termination::memory;
      report.records.push_back(std::move(rec));
      break;
    }
  }
  return report;
}

BenchReport profile_harness_overhead(const BenchConfig& config) {
  validate(config);
  WorkerPool pool(static_cast<int>(config.workers));
  BenchReport report;
  const auto noop = [](int64_t, int64_t) {};
  for (int64_t length : config.lengths) {
    auto plan = scan::build_plan(length);
    const Timing t = time_repeats(config.warmup, config.repeats, [&] {
      pool.parallel_for(length, noop);  // leaf pass
      for (const auto& level : plan.levels)
        pool.parallel_for(static_cast<int64_t>(level.size()), noop);
    });
    BenchRecord rec;
    rec.variant = "harness";
    rec.length = length;
    rec.mean_ms = t.mean_ms;
    rec.std_ms = t.std_ms;
    rec.depth = plan.depth();
    if (rec.mean_ms >= config.threshold_ms) {
      rec.termination = Termination::time_threshold;
      report.records.push_back(std::move(rec));
      break;
    }
    report.records.push_back(std::move(rec));
  }
  return report;
}

double predict_runtime_ms(int64_t work, int64_t depth, int64_t workers, double op_cost_ms,
                          double level_cost_ms) {
  if (workers < 1) throw TensorError("predict_runtime_ms: workers must be >= 1");
  return static_cast<double>(depth) * level_cost_ms +
         static_cast<double>(work) * op_cost_ms / static_cast<double>(workers);
}

void emit_csv(const BenchReport& report, std::ostream& os) {
  os << "variant,length,mean_ms,std_ms,peak_mem_bytes,termination\n";
  char buf[64];
  for (const auto& r : report.records) {
    os << r.variant << "," << r.length << ",";
    std::snprintf(buf, sizeof(buf), "%.6f", r.mean_ms);
    os << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.6f", r.std_ms);
    os << buf << "," << r.peak_mem_bytes << "," << termination_name(r.termination) << "\n";
  }
}

std::string csv_string(const BenchReport& report) {
  std::ostringstream os;
  emit_csv(report, os);
  return os.str();
}

BenchReport parse_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "variant,length,mean_ms,std_ms,peak_mem_bytes,termination")
    throw TensorError("bench csv: bad header");
  BenchReport report;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    BenchRecord r;
    std::getline(ss, r.variant, ',');
    std::getline(ss, field, ',');
    r.length = std::stoll(field);
    std::getline(ss, field, ',');
    r.mean_ms = std::stod(field);
    std::getline(ss, field, ',');
    r.std_ms = std::stod(field);
    std::getline(ss, field, ',');
    r.peak_mem_bytes = std::stoll(field);
    std::getline(ss, field, ',');
    r.termination = termination_from_name(field);
    report.records.push_back(std::move(r));
  }
  return report;
}

int64_t peak_rss_bytes() {
  struct rusage ru;
  if (getrusage(RUSAGE_SELF, &ru) != 0) return 0;
  return static_cast<int64_t>(ru.ru_maxrss) * 1024;
}

}  // namespace prlstm::bench
