#include "prlstm/scan.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace prlstm::scan {

namespace {

// slots: buffer indices of the (virtual) sequence at this recursion depth,
// in original order. Emits the pair level, recurses on the pair outputs,
// then emits the fill level.
void build_rec(const std::vector<int64_t>& slots, std::vector<std::vector<ScanStep>>& levels) {
  const int64_t n = static_cast<int64_t>(slots.size());
  if (n <= 1) return;

  std::vector<ScanStep> pair_level;
  pair_level.reserve(n / 2);
  std::vector<int64_t> sub;
  sub.reserve(n / 2);
  for (int64_t k = 0; 2 * k + 1 < n; k++) {
    pair_level.push_back({StepKind::pair, slots[2 * k], slots[2 * k + 1], slots[2 * k + 1]});
    sub.push_back(slots[2 * k + 1]);
  }
  levels.push_back(std::move(pair_level));

  build_rec(sub, levels);

  // Positions 2,4,... (0-based) hold leaves; combine the prefix finished at
  // the preceding odd slot with them. An odd-length tail lands here too.
  std::vector<ScanStep> fill_level;
  for (int64_t m = 2; m < n; m += 2)
    fill_level.push_back({StepKind::fill, slots[m - 1], slots[m], slots[m]});
  if (!fill_level.empty()) levels.push_back(std::move(fill_level));
}

}  // namespace

ScanPlan build_plan(int64_t length) {
  if (length < 1) throw PlanError("build_plan: length must be >= 1");
  ScanPlan plan;
  plan.length = length;
  std::vector<int64_t> slots(length);
  for (int64_t i = 0; i < length; i++) slots[i] = i;
  build_rec(slots, plan.levels);
  return plan;
}

std::pair<int64_t, int64_t> depth_work(const ScanPlan& plan) {
  return {plan.op_count(), plan.depth()};
}

ScanPlan reduce_subplan(const ScanPlan& plan) {
  ScanPlan sub;
  sub.length = plan.length;
  if (plan.length <= 1) return sub;
  std::unordered_set<int64_t> needed = {plan.length - 1};
  std::vector<std::vector<ScanStep>> kept_rev;
  for (auto it = plan.levels.rbegin(); it != plan.levels.rend(); ++it) {
    std::vector<ScanStep> kept;
    for (const auto& s : *it)
      if (needed.count(s.out)) kept.push_back(s);
    for (const auto& s : kept) needed.erase(s.out);
    for (const auto& s : kept) {
      needed.insert(s.left);
      needed.insert(s.right);
    }
    if (!kept.empty()) kept_rev.push_back(std::move(kept));
  }
  sub.levels.assign(kept_rev.rbegin(), kept_rev.rend());
  return sub;
}

int64_t critical_path_to_last(const ScanPlan& plan) {
  // chain[s] = longest combiner chain ending in the current value of slot s
  std::unordered_map<int64_t, int64_t> chain;
  ScanPlan sub = reduce_subplan(plan);
  for (const auto& level : sub.levels) {
    std::vector<std::pair<int64_t, int64_t>> updates;
    for (const auto& s : level) {
      int64_t l = chain.count(s.left) ? chain[s.left] : 0;
      int64_t r = chain.count(s.right) ? chain[s.right] : 0;
      updates.emplace_back(s.out, std::max(l, r) + 1);
    }
    for (auto& [slot, len] : updates) chain[slot] = len;
  }
  return chain.count(plan.length - 1) ? chain[plan.length - 1] : 0;
}

}  // namespace prlstm::scan
