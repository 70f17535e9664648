#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "ciopt/dataset.hpp"
#include "ciopt/rng.hpp"

namespace ciopt {

// Uniform random permutation (Fisher-Yates) over the given targets.
inline std::vector<std::string> random_prioritize(std::vector<std::string> targets,
                                                  Rng& rng) {
  for (std::size_t i = targets.size(); i > 1; --i)
    std::swap(targets[i - 1], targets[rng.next_index(i)]);
  return targets;
}

// ROCKET failure-matrix priority: recency-weighted sum over the last three
// verdicts, newest first. Missing history slots count as passes.
inline double rocket_priority(const std::vector<Verdict>& newest_first) {
  static constexpr double kWeights[3] = {0.7, 0.2, 0.1};
  double priority = 0.0;
  for (std::size_t j = 0; j < 3 && j < newest_first.size(); ++j)
    if (newest_first[j] == Verdict::Fail) priority += kWeights[j];
  return priority;
}

// Descending priority, ties broken by target name ascending.
inline std::vector<std::string> rocket_prioritize(
    const std::vector<std::pair<std::string, std::vector<Verdict>>>& histories) {
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(histories.size());
  for (const auto& [name, verdicts] : histories)
    scored.emplace_back(rocket_priority(verdicts), name);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> order;
  order.reserve(scored.size());
  for (auto& [p, name] : scored) order.push_back(std::move(name));
  return order;
}

}  // namespace ciopt
