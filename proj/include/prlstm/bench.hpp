#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "prlstm/model.hpp"

namespace prlstm::bench {

struct BenchConfig {
  Variant variant = Variant::pr_lstm;
  std::vector<int64_t> lengths;  // ascending
  int64_t batch = 1024;
  int64_t repeats = 100;
  int64_t warmup = 3;  // discarded leading repeats
  double threshold_ms = 500.0;
  int64_t workers = 1;
  int64_t d_h = 16;
  int64_t d_x = 6;
  int64_t k_out = 5;
  int64_t refine_stages = 1;
  uint64_t seed = 0;
};

enum class Termination { completed, time_threshold, memory };
std::string termination_name(Termination t);
Termination termination_from_name(const std::string& name);

struct BenchRecord {
  std::string variant;
  int64_t length = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  int64_t peak_mem_bytes = 0;  // activation buffers, exact
  Termination termination = Termination::completed;
  // not part of the CSV schema; exposed for structural assertions
  int64_t depth = 0;
  int64_t state_slots = 0;
};

struct BenchReport {
  std::vector<BenchRecord> records;
};

// Forward-only sweep over ascending lengths. The first length whose mean
// time reaches threshold_ms ends the sweep with reason time_threshold; an
// allocation failure ends it with reason memory (recorded, not thrown).
BenchReport profile_inference(const BenchConfig& config);

// Same loop shape with no per-step work: pure scheduling/barrier cost of
// the harness, for separating measurement overhead from model time.
BenchReport profile_harness_overhead(const BenchConfig& config);

// Brent-style cost model: depth * level_cost + work * op_cost / workers.
double predict_runtime_ms(int64_t work, int64_t depth, int64_t workers, double op_cost_ms,
                          double level_cost_ms);

// Schema: variant,length,mean_ms,std_ms,peak_mem_bytes,termination
void emit_csv(const BenchReport& report, std::ostream& os);
std::string csv_string(const BenchReport& report);
BenchReport parse_csv(std::istream& is);

// Process peak resident set (informative only; not asserted anywhere).
int64_t peak_rss_bytes();

}  // namespace prlstm::bench
