#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ciopt/rng.hpp"

namespace ciopt {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

enum class RawStatus { Passed, Failed, Flaky, Timeout, NoStatus, FailedToBuild };

// A FLAKY report means the target passed within its rerun set, so it counts
// as a pass. TIMEOUT / NO_STATUS / FAILED_TO_BUILD carry no outcome signal
// and are ignored everywhere downstream.
enum class Verdict { Pass, Fail, Ignored };

inline std::string_view to_string(RawStatus s) {
  switch (s) {
    case RawStatus::Passed: return "PASSED";
    case RawStatus::Failed: return "FAILED";
    case RawStatus::Flaky: return "FLAKY";
    case RawStatus::Timeout: return "TIMEOUT";
    case RawStatus::NoStatus: return "NO_STATUS";
    case RawStatus::FailedToBuild: return "FAILED_TO_BUILD";
  }
  return "?";
}

inline std::optional<RawStatus> parse_status(std::string_view s) {
  if (s == "PASSED") return RawStatus::Passed;
  if (s == "FAILED") return RawStatus::Failed;
  if (s == "FLAKY") return RawStatus::Flaky;
  if (s == "TIMEOUT") return RawStatus::Timeout;
  if (s == "NO_STATUS") return RawStatus::NoStatus;
  if (s == "FAILED_TO_BUILD") return RawStatus::FailedToBuild;
  return std::nullopt;
}

inline Verdict effective_verdict(RawStatus s) {
  switch (s) {
    case RawStatus::Passed:
    case RawStatus::Flaky:
      return Verdict::Pass;
    case RawStatus::Failed:
      return Verdict::Fail;
    default:
      return Verdict::Ignored;
  }
}

struct ExecutionRecord {
  std::int64_t cycle_id = 0;
  std::string target;
  RawStatus status = RawStatus::Passed;
  std::int64_t duration_ms = 0;

  Verdict verdict() const { return effective_verdict(status); }
};

struct Cycle {
  std::int64_t cycle_id = 0;
  std::vector<ExecutionRecord> records;
};

enum class Pipeline { PreSubmit, PostSubmit };

inline std::string_view to_string(Pipeline p) {
  return p == Pipeline::PreSubmit ? "pre_submit" : "post_submit";
}

struct CycleSeries {
  Pipeline pipeline = Pipeline::PreSubmit;
  std::vector<Cycle> cycles;
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::int64_t parse_nonneg_int(const std::string& s, const char* what,
                                     std::size_t line_no) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": invalid " + what +
                    " '" + s + "'");
  }
}

}  // namespace detail

// CSV schema: `cycle_id,target,status,duration_ms`. Rows may appear in any
// order; output cycles are sorted by cycle_id. Duplicate (cycle_id, target)
// pairs and unknown status strings are load errors.
inline CycleSeries load_dataset(const std::string& path, Pipeline pipeline) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "cycle_id,target,status,duration_ms")
    throw DataError(path + ": unexpected header '" + line + "'");

  std::map<std::int64_t, Cycle> cycles;
  std::map<std::pair<std::int64_t, std::string>, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 4)
      throw DataError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                      std::to_string(fields.size()));
    ExecutionRecord rec;
    rec.cycle_id = detail::parse_nonneg_int(fields[0], "cycle_id", line_no);
    rec.target = fields[1];
    if (rec.target.empty())
      throw DataError("line " + std::to_string(line_no) + ": empty target name");
    auto status = parse_status(fields[2]);
    if (!status)
      throw DataError("line " + std::to_string(line_no) + ": unknown status '" +
                      fields[2] + "'");
    rec.status = *status;
    rec.duration_ms = detail::parse_nonneg_int(fields[3], "duration_ms", line_no);

    auto key = std::make_pair(rec.cycle_id, rec.target);
    auto [it, inserted] = seen.emplace(key, line_no);
    if (!inserted)
      throw DataError("line " + std::to_string(line_no) + ": duplicate (cycle_id, target) (" +
                      fields[0] + ", " + rec.target + "), first seen at line " +
                      std::to_string(it->second));
    auto& cyc = cycles[rec.cycle_id];
    cyc.cycle_id = rec.cycle_id;
    cyc.records.push_back(std::move(rec));
  }

  CycleSeries series;
  series.pipeline = pipeline;
  series.cycles.reserve(cycles.size());
  for (auto& [id, cyc] : cycles) series.cycles.push_back(std::move(cyc));
  return series;
}

inline void write_dataset_csv(const CycleSeries& series, std::ostream& out) {
  out << "cycle_id,target,status,duration_ms\n";
  for (const auto& cyc : series.cycles)
    for (const auto& rec : cyc.records)
      out << rec.cycle_id << ',' << rec.target << ',' << to_string(rec.status)
          << ',' << rec.duration_ms << '\n';
}

inline void write_dataset_csv(const CycleSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  write_dataset_csv(series, out);
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

// Keeps cycles with at least min_targets non-ignored records and, when
// require_failure is set, at least one failing verdict. Order preserved.
inline CycleSeries filter_cycles(const CycleSeries& series,
                                 std::size_t min_targets = 6,
                                 bool require_failure = true) {
  CycleSeries out;
  out.pipeline = series.pipeline;
  for (const auto& cyc : series.cycles) {
    std::size_t informative = 0;
    bool has_failure = false;
    for (const auto& rec : cyc.records) {
      Verdict v = rec.verdict();
      if (v == Verdict::Ignored) continue;
      ++informative;
      if (v == Verdict::Fail) has_failure = true;
    }
    if (informative < min_targets) continue;
    if (require_failure && !has_failure) continue;
    out.cycles.push_back(cyc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transition labeling
// ---------------------------------------------------------------------------

enum class TransitionKind { None, Relevant, Flaky };

struct TransitionLabel {
  TransitionKind kind = TransitionKind::None;
  // True when fewer than flaky_window subsequent executions existed to decide
  // flakiness; labeled Relevant optimistically.
  bool tail_labeled = false;
};

using TransitionMap =
    std::map<std::pair<std::int64_t, std::string>, TransitionLabel>;

// A record transitions when its verdict differs from the target's previous
// non-ignored verdict. The transition is flaky if the target switches back
// within its next flaky_window executions, relevant otherwise. The window
// counts the target's executions, not wall-clock cycles: a target that skips
// cycles still gets judged on its own signal stability.
inline TransitionMap label_transitions(const CycleSeries& series,
                                       std::size_t flaky_window = 3) {
  std::map<std::string, std::vector<std::pair<std::int64_t, Verdict>>> per_target;
  for (const auto& cyc : series.cycles)
    for (const auto& rec : cyc.records)
      if (rec.verdict() != Verdict::Ignored)
        per_target[rec.target].emplace_back(cyc.cycle_id, rec.verdict());

  TransitionMap labels;
  for (const auto& [target, runs] : per_target) {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      TransitionLabel label;
      if (i > 0 && runs[i].second != runs[i - 1].second) {
        bool switched_back = false;
        std::size_t lookahead = std::min(flaky_window, runs.size() - 1 - i);
        for (std::size_t j = i + 1; j <= i + lookahead; ++j) {
          if (runs[j].second != runs[i].second) {
            switched_back = true;
            break;
          }
        }
        if (switched_back) {
          label.kind = TransitionKind::Flaky;
        } else {
          label.kind = TransitionKind::Relevant;
          label.tail_labeled = lookahead < flaky_window;
        }
      }
      labels[{runs[i].first, target}] = label;
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Synthetic scenarios
// ---------------------------------------------------------------------------

enum class Scenario { DeterministicFailures, RandomNoise, FlakyMix, TransitionChurn };

inline std::optional<Scenario> parse_scenario(std::string_view s) {
  if (s == "deterministic_failures") return Scenario::DeterministicFailures;
  if (s == "random_noise") return Scenario::RandomNoise;
  if (s == "flaky_mix") return Scenario::FlakyMix;
  if (s == "transition_churn") return Scenario::TransitionChurn;
  return std::nullopt;
}

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::DeterministicFailures: return "deterministic_failures";
    case Scenario::RandomNoise: return "random_noise";
    case Scenario::FlakyMix: return "flaky_mix";
    case Scenario::TransitionChurn: return "transition_churn";
  }
  return "?";
}

struct ScenarioSpec {
  Scenario scenario = Scenario::DeterministicFailures;
  // deterministic_failures: fraction of targets that always fail.
  // random_noise / flaky_mix: per-execution failure probability.
  double failure_fraction = 0.2;
  // Fraction of targets exhibiting 1-cycle flaky blips (flaky_mix,
  // transition_churn).
  double flaky_fraction = 0.2;
  // Per-cycle probability of a persistent verdict flip (churn targets) or of
  // a flaky blip (flaky targets).
  double transition_rate = 0.05;
  // transition_churn: fraction of targets whose verdict flips persistently.
  double churn_fraction = 0.2;
  // Probability of an uninformative record (NO_STATUS) replacing the outcome.
  double ignored_rate = 0.0;
  // Per-target base duration ~ exp(N(duration_log_mean, duration_log_sigma)) ms.
  double duration_log_mean = 7.6;  // ~2s
  double duration_log_sigma = 0.5;
  // transition_churn only: duration multiplier for stable targets, making
  // irrelevant executions expensive.
  double stable_duration_scale = 1.0;
  // Leading all-pass cycles before deterministic failures start.
  std::size_t warmup_cycles = 0;
};

// Reproducible given (spec, cycles, targets, seed). The role a target plays
// (always-failing, churning, flaky, stable) is decided by its index alone,
// never by the seed, and is reflected in its name.
inline CycleSeries generate_synthetic(const ScenarioSpec& spec,
                                      std::size_t cycles, std::size_t targets,
                                      std::uint64_t seed) {
  if (cycles == 0 || targets == 0)
    throw DataError("synthetic scenario requires cycles > 0 and targets > 0");

  Rng rng(derive_seed(seed, "synthetic"));

  auto count_of = [&](double fraction) {
    auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(targets)));
    return std::min(n, targets);
  };

  enum class Role { AlwaysFail, Churn, Flaky, Stable };
  std::vector<Role> roles(targets, Role::Stable);
  switch (spec.scenario) {
    case Scenario::DeterministicFailures:
      for (std::size_t i = 0; i < count_of(spec.failure_fraction); ++i)
        roles[i] = Role::AlwaysFail;
      break;
    case Scenario::TransitionChurn: {
      std::size_t churn = count_of(spec.churn_fraction);
      std::size_t flaky = count_of(spec.flaky_fraction);
      for (std::size_t i = 0; i < churn; ++i) roles[i] = Role::Churn;
      for (std::size_t i = targets; i > targets - std::min(flaky, targets - churn); --i)
        roles[i - 1] = Role::Flaky;
      break;
    }
    case Scenario::FlakyMix:
      for (std::size_t i = targets - count_of(spec.flaky_fraction); i < targets; ++i)
        roles[i] = Role::Flaky;
      break;
    case Scenario::RandomNoise:
      break;
  }

  std::vector<std::string> names(targets);
  std::vector<double> base_duration(targets);
  for (std::size_t i = 0; i < targets; ++i) {
    const char* group = "stable";
    if (roles[i] == Role::AlwaysFail) group = "failing";
    else if (roles[i] == Role::Churn) group = "churn";
    else if (roles[i] == Role::Flaky) group = "flaky";
    names[i] = "//suite/" + std::string(group) + ":t" + std::to_string(i);
    double d = std::exp(rng.next_gaussian(spec.duration_log_mean, spec.duration_log_sigma));
    if (spec.scenario == Scenario::TransitionChurn && roles[i] == Role::Stable)
      d *= spec.stable_duration_scale;
    base_duration[i] = std::max(1.0, d);
  }

  // Persistent verdict state for transition_churn; odd churn targets start out
  // failing so filtered series keep enough failing cycles.
  std::vector<Verdict> state(targets, Verdict::Pass);
  if (spec.scenario == Scenario::TransitionChurn)
    for (std::size_t i = 0; i < targets; ++i)
      if (roles[i] == Role::Churn && i % 2 == 1) state[i] = Verdict::Fail;
  std::vector<bool> blip(targets, false);

  CycleSeries series;
  series.pipeline = spec.scenario == Scenario::TransitionChurn
                        ? Pipeline::PostSubmit
                        : Pipeline::PreSubmit;
  for (std::size_t c = 0; c < cycles; ++c) {
    Cycle cyc;
    cyc.cycle_id = static_cast<std::int64_t>(c + 1);
    for (std::size_t i = 0; i < targets; ++i) {
      RawStatus status = RawStatus::Passed;
      switch (spec.scenario) {
        case Scenario::DeterministicFailures:
          if (roles[i] == Role::AlwaysFail && c >= spec.warmup_cycles)
            status = RawStatus::Failed;
          break;
        case Scenario::RandomNoise:
          if (rng.next_bool(spec.failure_fraction)) status = RawStatus::Failed;
          break;
        case Scenario::FlakyMix:
          if (roles[i] == Role::Flaky) {
            if (rng.next_bool(spec.transition_rate)) status = RawStatus::Flaky;
          } else if (rng.next_bool(spec.failure_fraction)) {
            status = RawStatus::Failed;
          }
          break;
        case Scenario::TransitionChurn:
          if (roles[i] == Role::Churn) {
            if (rng.next_bool(spec.transition_rate))
              state[i] = state[i] == Verdict::Pass ? Verdict::Fail : Verdict::Pass;
          } else if (roles[i] == Role::Flaky) {
            if (blip[i]) {
              blip[i] = false;  // revert after one cycle
            } else if (rng.next_bool(spec.transition_rate)) {
              blip[i] = true;
            }
          }
          {
            Verdict v = state[i];
            if (roles[i] == Role::Flaky && blip[i]) v = Verdict::Fail;
            status = v == Verdict::Fail ? RawStatus::Failed : RawStatus::Passed;
          }
          break;
      }
      if (spec.ignored_rate > 0.0 && rng.next_bool(spec.ignored_rate))
        status = RawStatus::NoStatus;

      ExecutionRecord rec;
      rec.cycle_id = cyc.cycle_id;
      rec.target = names[i];
      rec.status = status;
      rec.duration_ms = static_cast<std::int64_t>(
          base_duration[i] * (0.9 + 0.2 * rng.next_double()));
      cyc.records.push_back(std::move(rec));
    }
    series.cycles.push_back(std::move(cyc));
  }
  return series;
}

}  // namespace ciopt
