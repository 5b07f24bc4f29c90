#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace prlstm::scan {

class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StepKind : uint8_t { pair, fill };

// One binary combine over a working buffer of T slots. out always equals
// right: pair steps overwrite the right pair element, fill steps overwrite
// the leaf they complete. Reads happen before the write within a step, so
// in-place execution is safe.
struct ScanStep {
  StepKind kind;
  int64_t left;
  int64_t right;
  int64_t out;
};

// Leveled schedule computing all prefixes of a length-T sequence under a
// binary combiner. Steps within a level write pairwise-disjoint slots and
// read only slots finalized in earlier levels (or untouched leaves), so a
// level may execute in any order or in parallel; levels are barriers.
//
// The combiner is treated as an opaque binary map: nothing here assumes
// associativity. The schedule is the recursive odd-even one: combine
// consecutive pairs, scan the half-length sequence of pair results, then
// fill the remaining odd positions from the preceding even prefix.
struct ScanPlan {
  int64_t length = 0;
  std::vector<std::vector<ScanStep>> levels;

  int64_t depth() const { return static_cast<int64_t>(levels.size()); }
  int64_t op_count() const {
    int64_t n = 0;
    for (const auto& lvl : levels) n += static_cast<int64_t>(lvl.size());
    return n;
  }
};

// Pure function of T. Throws PlanError for T < 1.
ScanPlan build_plan(int64_t length);

// (total combiner applications, level count) = (work tau_1, depth tau_N).
std::pair<int64_t, int64_t> depth_work(const ScanPlan& plan);

// The subset of plan steps feeding the final prefix, empty levels dropped.
ScanPlan reduce_subplan(const ScanPlan& plan);

// Longest dependency chain of combiner applications from any leaf to the
// prefix output at the final position.
int64_t critical_path_to_last(const ScanPlan& plan);

// Runs the schedule over a copy of the leaves; slot t of the result is the
// combination of leaves 0..t in the tree shape the plan encodes. Slot 0 is
// the untouched first leaf.
template <typename State, typename Combiner>
std::vector<State> execute_prefix(const ScanPlan& plan, const std::vector<State>& leaves,
                                  Combiner&& combine) {
  if (static_cast<int64_t>(leaves.size()) != plan.length)
    throw PlanError("execute_prefix: leaf count " + std::to_string(leaves.size()) +
                    " does not match plan length " + std::to_string(plan.length));
  std::vector<State> buf = leaves;
  for (const auto& level : plan.levels)
    for (const auto& s : level) buf[s.out] = combine(buf[s.left], buf[s.right]);
  return buf;
}

// Prefix at the final position only, executing just the steps that feed it.
template <typename State, typename Combiner>
State execute_reduce(const ScanPlan& plan, const std::vector<State>& leaves, Combiner&& combine) {
  ScanPlan sub = reduce_subplan(plan);
  sub.length = plan.length;
  auto buf = execute_prefix(sub, leaves, std::forward<Combiner>(combine));
  return buf[plan.length - 1];
}

}  // namespace prlstm::scan
