#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ciopt/dataset.hpp"

namespace ciopt {

// Normalized average percentage of faults detected for a prioritized
// selection. `selected` holds the executed verdicts in rank order;
// total_faults is the failing-verdict count of the full scheduled suite.
// Zero detected faults score 0.
inline double napfd(const std::vector<Verdict>& selected, std::size_t total_faults) {
  if (selected.empty()) throw std::invalid_argument("napfd: empty selection");
  if (total_faults == 0)
    throw std::invalid_argument("napfd: cycle has no faults (pre-filter input)");
  std::size_t detected = 0;
  std::size_t rank_sum = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i] == Verdict::Fail) {
      ++detected;
      rank_sum += i + 1;
    }
  }
  if (detected == 0) return 0.0;
  double p = static_cast<double>(detected) / static_cast<double>(total_faults);
  double n = static_cast<double>(selected.size());
  return p - static_cast<double>(rank_sum) / (static_cast<double>(detected) * n) +
         p / (2.0 * n);
}

struct FirstFailMetric {
  double value = 1.0;
  bool miss = false;  // no failing test in the selection
};

// Normalized failure rank: fraction of the selection executed before the
// first failure. Cycles where no failure was selected score 1.0 and are
// flagged as misses.
inline FirstFailMetric nfr(const std::vector<Verdict>& selected) {
  if (selected.empty()) throw std::invalid_argument("nfr: empty selection");
  for (std::size_t i = 0; i < selected.size(); ++i)
    if (selected[i] == Verdict::Fail)
      return {static_cast<double>(i) / static_cast<double>(selected.size()), false};
  return {1.0, true};
}

// Normalized time to fail: execution time spent before the first failing
// test (excluding its own duration) over the cycle's time budget.
inline FirstFailMetric nttf(
    const std::vector<std::pair<Verdict, std::int64_t>>& selected,
    double time_budget_ms) {
  if (time_budget_ms <= 0.0) throw std::invalid_argument("nttf: non-positive budget");
  double elapsed = 0.0;
  for (const auto& [verdict, duration] : selected) {
    if (verdict == Verdict::Fail)
      return {std::clamp(elapsed / time_budget_ms, 0.0, 1.0), false};
    elapsed += static_cast<double>(duration);
  }
  return {1.0, true};
}

// One cycle's executed selection, in rank order.
struct CycleSelection {
  std::int64_t cycle_id = 0;
  std::vector<std::string> selected;
};

// Share of relevant-transition records whose target was selected in the
// transition's own cycle, as a percentage. Absent when the dataset has no
// relevant transitions.
inline std::optional<double> transition_recall(
    const std::vector<CycleSelection>& decisions, const TransitionMap& labels) {
  std::map<std::int64_t, std::set<std::string>> selected_by_cycle;
  for (const auto& d : decisions)
    selected_by_cycle[d.cycle_id].insert(d.selected.begin(), d.selected.end());

  std::size_t relevant = 0;
  std::size_t caught = 0;
  for (const auto& [key, label] : labels) {
    if (label.kind != TransitionKind::Relevant) continue;
    ++relevant;
    auto it = selected_by_cycle.find(key.first);
    if (it != selected_by_cycle.end() && it->second.count(key.second)) ++caught;
  }
  if (relevant == 0) return std::nullopt;
  return 100.0 * static_cast<double>(caught) / static_cast<double>(relevant);
}

struct DetectionDelays {
  std::map<std::int64_t, std::size_t> histogram;  // delay in cycles -> count
  std::size_t undetected = 0;
};

// A relevant transition at cycle t of target g is detected at the first cycle
// t+d (d >= 0) where g is selected and its executed verdict differs from g's
// previously executed verdict; a first-ever execution always reveals.
inline DetectionDelays detection_delays(const std::vector<CycleSelection>& decisions,
                                        const TransitionMap& labels,
                                        const CycleSeries& series) {
  std::map<std::int64_t, std::size_t> cycle_pos;
  std::map<std::pair<std::int64_t, std::string>, Verdict> truth;
  for (std::size_t i = 0; i < series.cycles.size(); ++i) {
    const auto& cyc = series.cycles[i];
    cycle_pos[cyc.cycle_id] = i;
    for (const auto& rec : cyc.records)
      if (rec.verdict() != Verdict::Ignored)
        truth[{cyc.cycle_id, rec.target}] = rec.verdict();
  }

  // Replay the executed stream per target and mark signal-revealing runs.
  std::map<std::string, std::vector<std::size_t>> revealing_positions;
  {
    std::map<std::string, Verdict> last_executed;
    std::map<std::int64_t, const CycleSelection*> by_cycle;
    for (const auto& d : decisions) by_cycle[d.cycle_id] = &d;
    for (const auto& cyc : series.cycles) {
      auto it = by_cycle.find(cyc.cycle_id);
      if (it == by_cycle.end()) continue;
      for (const auto& target : it->second->selected) {
        auto t = truth.find({cyc.cycle_id, target});
        if (t == truth.end()) continue;  // ignored or not scheduled
        auto prev = last_executed.find(target);
        if (prev == last_executed.end() || prev->second != t->second)
          revealing_positions[target].push_back(cycle_pos[cyc.cycle_id]);
        last_executed[target] = t->second;
      }
    }
  }

  DetectionDelays out;
  for (const auto& [key, label] : labels) {
    if (label.kind != TransitionKind::Relevant) continue;
    auto pos_it = cycle_pos.find(key.first);
    if (pos_it == cycle_pos.end()) continue;
    std::size_t t_pos = pos_it->second;
    const auto& reveals = revealing_positions[key.second];
    auto hit = std::lower_bound(reveals.begin(), reveals.end(), t_pos);
    if (hit == reveals.end()) {
      ++out.undetected;
    } else {
      ++out.histogram[static_cast<std::int64_t>(*hit - t_pos)];
    }
  }
  return out;
}

}  // namespace ciopt
