#pragma once

#include <cstdint>
#include <stdexcept>

#include "ciopt/dataset.hpp"

namespace ciopt {

// One executed test inside a prioritized cycle, with everything the reward
// functions need: its rank, cost context, and (for post-submit rewards) the
// resolved transition label.
struct ScheduledOutcome {
  std::string target;
  std::size_t rank = 1;  // 1-based position in the prioritized suite
  Verdict verdict = Verdict::Pass;
  std::int64_t duration_ms = 0;
  // Sum of durations of all earlier-ranked executed tests.
  std::int64_t prefix_cost_ms = 0;
  // Total duration of the scheduled full suite.
  std::int64_t suite_cost_ms = 0;
  TransitionKind transition = TransitionKind::None;
  // duration / max duration in the current suite, in [0, 1].
  double normalized_duration = 0.0;
};

// Pre-submit: positive for failures, negative for passes, scaled towards the
// extremes the earlier the test ran. A degenerate zero-cost suite counts as
// prefix ratio 0.
inline double cost_rank(const ScheduledOutcome& o, double alpha = 0.9) {
  double ratio = o.suite_cost_ms > 0
                     ? static_cast<double>(o.prefix_cost_ms) /
                           static_cast<double>(o.suite_cost_ms)
                     : 0.0;
  if (o.verdict == Verdict::Fail) return 1.0 - alpha * ratio;
  return -1.0 + alpha * ratio;
}

inline double rn_fail(const ScheduledOutcome& o) {
  return o.verdict == Verdict::Fail ? 1.0 : 0.0;
}

// Post-submit: reward relevant transitions, punish flaky ones, and charge
// unchanged results their (normalized) execution cost.
inline double cost_change_rank(const ScheduledOutcome& o) {
  switch (o.transition) {
    case TransitionKind::Flaky: return -1.0;
    case TransitionKind::Relevant: return 1.0;
    case TransitionKind::None: return -o.normalized_duration;
  }
  throw std::logic_error("cost_change_rank: invalid transition label");
}

inline double rn_change(const ScheduledOutcome& o) {
  switch (o.transition) {
    case TransitionKind::Flaky: return -1.0;
    case TransitionKind::Relevant: return 1.0;
    case TransitionKind::None: return 0.0;
  }
  throw std::logic_error("rn_change: invalid transition label");
}

enum class RewardId { CostRank, RnFail, CostChangeRank, RnChange };

inline std::optional<RewardId> parse_reward(std::string_view s) {
  if (s == "costrank") return RewardId::CostRank;
  if (s == "rnfail") return RewardId::RnFail;
  if (s == "costchangerank") return RewardId::CostChangeRank;
  if (s == "rnchange") return RewardId::RnChange;
  return std::nullopt;
}

inline std::string_view to_string(RewardId r) {
  switch (r) {
    case RewardId::CostRank: return "costrank";
    case RewardId::RnFail: return "rnfail";
    case RewardId::CostChangeRank: return "costchangerank";
    case RewardId::RnChange: return "rnchange";
  }
  return "?";
}

// Transition-based rewards need lookahead and belong to post-submit replays.
inline bool reward_matches_pipeline(RewardId r, Pipeline p) {
  bool post = r == RewardId::CostChangeRank || r == RewardId::RnChange;
  return post == (p == Pipeline::PostSubmit);
}

inline double apply_reward(RewardId id, const ScheduledOutcome& o, double alpha = 0.9) {
  switch (id) {
    case RewardId::CostRank: return cost_rank(o, alpha);
    case RewardId::RnFail: return rn_fail(o);
    case RewardId::CostChangeRank: return cost_change_rank(o);
    case RewardId::RnChange: return rn_change(o);
  }
  throw std::logic_error("apply_reward: invalid reward id");
}

}  // namespace ciopt
