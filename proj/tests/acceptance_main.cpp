// End-to-end acceptance checks, one per shipped guarantee. Each check prints
// a single PASS/FAIL line; the process exits non-zero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ciopt/harness.hpp"

using namespace ciopt;

namespace {

int failures = 0;

void run_check(const std::string& name, const std::function<bool()>& body) {
  auto start = std::chrono::steady_clock::now();
  bool ok = false;
  std::string note;
  try {
    ok = body();
  } catch (const std::exception& e) {
    note = std::string(" (exception: ") + e.what() + ")";
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
  std::printf("%s: %s [%.2fs]%s\n", ok ? "PASS" : "FAIL", name.c_str(), secs,
              note.c_str());
  if (!ok) ++failures;
}

constexpr Verdict P = Verdict::Pass;
constexpr Verdict F = Verdict::Fail;

CycleSeries series_from(
    const std::vector<std::vector<std::pair<std::string, Verdict>>>& table,
    std::int64_t duration_ms = 1000) {
  CycleSeries series;
  for (std::size_t c = 0; c < table.size(); ++c) {
    Cycle cyc;
    cyc.cycle_id = static_cast<std::int64_t>(c + 1);
    for (const auto& [target, verdict] : table[c]) {
      ExecutionRecord rec;
      rec.cycle_id = cyc.cycle_id;
      rec.target = target;
      rec.status = verdict == F ? RawStatus::Failed : RawStatus::Passed;
      rec.duration_ms = duration_ms;
      cyc.records.push_back(rec);
    }
    series.cycles.push_back(std::move(cyc));
  }
  return series;
}

CycleSeries single_target_series(const std::vector<Verdict>& verdicts) {
  std::vector<std::vector<std::pair<std::string, Verdict>>> table;
  for (Verdict v : verdicts) table.push_back({{"//a:t", v}});
  return series_from(table);
}

TransitionKind kind_at(const TransitionMap& labels, std::int64_t cycle) {
  auto it = labels.find({cycle, "//a:t"});
  return it == labels.end() ? TransitionKind::None : it->second.kind;
}

// ---------------------------------------------------------------------------

// 1. Suite-level fault metric vs. an independent rank-sum transcription.
bool check_napfd_oracle() {
  Rng rng(2024);
  for (int trial = 0; trial < 10000; ++trial) {
    std::size_t n = 1 + rng.next_index(10);
    std::vector<Verdict> sel(n);
    std::size_t fails = 0;
    std::vector<std::size_t> ranks;
    for (std::size_t i = 0; i < n; ++i) {
      sel[i] = rng.next_bool(0.4) ? F : P;
      if (sel[i] == F) {
        ++fails;
        ranks.push_back(i + 1);
      }
    }
    std::size_t total = fails + rng.next_index(4);
    if (total == 0) total = 1;

    double oracle = 0.0;
    if (!ranks.empty()) {
      double p = static_cast<double>(ranks.size()) / static_cast<double>(total);
      double sum = 0.0;
      for (std::size_t r : ranks) sum += static_cast<double>(r);
      oracle = p - sum / (static_cast<double>(ranks.size()) * static_cast<double>(n)) +
               p / (2.0 * static_cast<double>(n));
    }
    if (std::abs(napfd(sel, total) - oracle) > 1e-12) return false;
  }
  return true;
}

// 2. Random policy on a 2-target / 1-persistent-failure suite at full budget
// must average NAPFD 0.5 over its repetitions.
bool check_random_baseline_mean() {
  std::vector<std::vector<std::pair<std::string, Verdict>>> table;
  for (int c = 0; c < 20; ++c) table.push_back({{"//a:fails", F}, {"//b:passes", P}});
  auto series = series_from(table);

  ReplayConfig cfg;
  cfg.policy = PolicyId::Random;
  cfg.budget = 1.0;
  cfg.random_reps = 10000;
  auto report = run_replay(cfg, series);
  double mean = report.aggregates.at("napfd").first;
  return std::abs(mean - 0.5) <= 0.02;
}

// 3. Reward functions: boundary values, antisymmetry, ranges, label values.
bool check_reward_suite() {
  auto mk = [](Verdict v, std::int64_t prefix, std::int64_t suite) {
    ScheduledOutcome o;
    o.verdict = v;
    o.prefix_cost_ms = prefix;
    o.suite_cost_ms = suite;
    return o;
  };
  if (cost_rank(mk(F, 0, 40000)) != 1.0) return false;
  if (cost_rank(mk(P, 0, 40000)) != -1.0) return false;

  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    std::int64_t suite = 1 + static_cast<std::int64_t>(rng.next_index(100000));
    std::int64_t prefix = static_cast<std::int64_t>(
        rng.next_index(static_cast<std::uint64_t>(suite) + 1));
    double fail = cost_rank(mk(F, prefix, suite));
    double pass = cost_rank(mk(P, prefix, suite));
    if (std::abs(fail + pass) > 1e-12) return false;          // antisymmetry
    if (fail < 0.1 - 1e-12 || fail > 1.0 + 1e-12) return false;
    if (pass > -0.1 + 1e-12 || pass < -1.0 - 1e-12) return false;
  }

  ScheduledOutcome o;
  o.normalized_duration = 0.3;
  o.transition = TransitionKind::Flaky;
  if (cost_change_rank(o) != -1.0 || rn_change(o) != -1.0) return false;
  o.transition = TransitionKind::Relevant;
  if (cost_change_rank(o) != 1.0 || rn_change(o) != 1.0) return false;
  o.transition = TransitionKind::None;
  if (cost_change_rank(o) != -0.3 || rn_change(o) != 0.0) return false;
  if (rn_fail(mk(F, 0, 1)) != 1.0 || rn_fail(mk(P, 0, 1)) != 0.0) return false;
  return true;
}

// 4. Backprop vs. central finite differences on a four-layer network.
bool check_gradient() {
  NetworkConfig ncfg;
  ncfg.input_dim = 6;
  ncfg.hidden = {6, 5, 4};  // 106 parameters over four weight layers
  ncfg.dropout = 0.0;
  ncfg.l2 = 1e-3;
  Rng init(31);
  QNetwork net(ncfg, init);
  if (net.param_count() > 200) return false;

  Rng data(77);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 8; ++i) {
    std::vector<double> x(6);
    for (auto& v : x) v = data.next_gaussian();
    xs.push_back(x);
    ys.push_back(data.next_gaussian());
  }
  std::vector<std::pair<const std::vector<double>*, double>> batch;
  for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({&xs[i], ys[i]});

  std::vector<double> grad;
  net.batch_loss_and_grad(batch, grad, nullptr);

  const double h = 1e-5;
  std::vector<double> scratch;
  Rng probe(99);
  for (int k = 0; k < 100; ++k) {
    std::size_t i = probe.next_index(net.param_count());
    double saved = net.params()[i];
    net.params()[i] = saved + h;
    double up = net.batch_loss_and_grad(batch, scratch, nullptr);
    net.params()[i] = saved - h;
    double down = net.batch_loss_and_grad(batch, scratch, nullptr);
    net.params()[i] = saved;
    double numeric = (up - down) / (2.0 * h);
    double scale = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
    if (std::abs(grad[i] - numeric) / scale > 1e-4) return false;
  }
  return true;
}

// 5. The learner front-loads two persistent failures at full budget and beats
// the random baseline on the same window.
bool check_learning_smoke() {
  ScenarioSpec spec;
  spec.scenario = Scenario::DeterministicFailures;
  spec.failure_fraction = 0.2;  // 2 of 10 targets
  auto series = generate_synthetic(spec, 250, 10, 11);

  ReplayConfig dqn;
  dqn.policy = PolicyId::Dqn;
  dqn.reward = RewardId::CostRank;
  dqn.budget = 1.0;
  dqn.buffer_capacity = 256;
  dqn.warm_start_cycles = 30;
  auto dqn_report = run_replay(dqn, series);

  ReplayConfig rnd;
  rnd.policy = PolicyId::Random;
  rnd.budget = 1.0;
  rnd.random_reps = 1000;
  rnd.warm_start_cycles = 30;
  auto rnd_report = run_replay(rnd, series);

  auto tail_mean = [](const ReplayReport& r) {
    double sum = 0.0;
    std::size_t n = 0;
    std::size_t from = r.per_cycle.size() > 50 ? r.per_cycle.size() - 50 : 0;
    for (std::size_t i = from; i < r.per_cycle.size(); ++i) {
      if (!r.per_cycle[i].napfd) continue;
      sum += *r.per_cycle[i].napfd;
      ++n;
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
  };

  double dqn_mean = tail_mean(dqn_report);
  double rnd_mean = tail_mean(rnd_report);
  // Two failures front-loaded in a 10-target suite score exactly 0.9.
  return dqn_mean >= 0.9 - 1e-9 && dqn_mean > rnd_mean;
}

// 6. On a churn scenario at half budget, the transition-trained learner
// catches relevant transitions far more often than random selection.
bool check_transition_selection() {
  ScenarioSpec spec;
  spec.scenario = Scenario::TransitionChurn;
  spec.churn_fraction = 0.2;
  spec.flaky_fraction = 0.2;
  spec.transition_rate = 0.05;
  spec.stable_duration_scale = 4.0;
  auto series = generate_synthetic(spec, 350, 20, 13);
  series.pipeline = Pipeline::PostSubmit;

  ReplayConfig dqn;
  dqn.pipeline = Pipeline::PostSubmit;
  dqn.policy = PolicyId::Dqn;
  dqn.reward = RewardId::CostChangeRank;
  dqn.budget = 0.5;
  dqn.buffer_capacity = 256;
  dqn.warm_start_cycles = 50;
  auto dqn_report = run_replay(dqn, series);

  ReplayConfig rnd;
  rnd.pipeline = Pipeline::PostSubmit;
  rnd.policy = PolicyId::Random;
  rnd.reward = RewardId::RnChange;
  rnd.budget = 0.5;
  rnd.random_reps = 200;
  rnd.warm_start_cycles = 50;
  auto rnd_report = run_replay(rnd, series);

  if (!dqn_report.recall_pct || !rnd_report.recall_pct) return false;
  return *dqn_report.recall_pct >= *rnd_report.recall_pct + 15.0;
}

// 7. Detection-delay accounting on a hand-scripted five-cycle run with
// forced skips, including a same-cycle (delay-zero) detection.
bool check_detection_delays() {
  // a: turns FAIL at cycle 2, selected that cycle -> delay 0.
  // b: turns FAIL at cycle 2, skipped until cycle 5 -> delay 3.
  // c: turns FAIL at cycle 4, never re-selected -> undetected.
  auto series = series_from({
      {{"a", P}, {"b", P}, {"c", P}},
      {{"a", F}, {"b", F}, {"c", P}},
      {{"a", F}, {"b", F}, {"c", P}},
      {{"a", F}, {"b", F}, {"c", F}},
      {{"a", F}, {"b", F}, {"c", F}},
  });
  auto labels = label_transitions(series);
  std::vector<CycleSelection> decisions = {
      {1, {"a", "b", "c"}}, {2, {"a"}}, {3, {"a"}}, {4, {"a"}}, {5, {"a", "b"}}};
  auto delays = detection_delays(decisions, labels, series);
  return delays.undetected == 1 && delays.histogram.size() == 2 &&
         delays.histogram.count(0) == 1 && delays.histogram.at(0) == 1 &&
         delays.histogram.count(3) == 1 && delays.histogram.at(3) == 1;
}

// 8. Flaky-vs-relevant transition labeling, including the window boundary.
bool check_flaky_rule() {
  // Quick revert: flaky.
  auto flaky = label_transitions(single_target_series({P, F, P}));
  if (kind_at(flaky, 2) != TransitionKind::Flaky) return false;

  // Persistent change: relevant.
  auto relevant = label_transitions(single_target_series({P, F, F, F, F}));
  if (kind_at(relevant, 2) != TransitionKind::Relevant) return false;

  // Revert at exactly the third subsequent execution: still flaky.
  auto boundary = label_transitions(single_target_series({P, F, F, F, P}));
  if (kind_at(boundary, 2) != TransitionKind::Flaky) return false;

  // Revert one execution beyond the window: relevant.
  auto beyond = label_transitions(single_target_series({P, F, F, F, F, P}));
  return kind_at(beyond, 2) == TransitionKind::Relevant;
}

// 9. Replays are reproducible: equal seeds give byte-identical reports,
// different seeds change the selections.
bool check_determinism() {
  ScenarioSpec spec;
  spec.scenario = Scenario::RandomNoise;
  auto series = generate_synthetic(spec, 60, 10, 21);

  ReplayConfig cfg;
  cfg.policy = PolicyId::Dqn;
  cfg.budget = 0.5;
  cfg.buffer_capacity = 128;
  cfg.warm_start_cycles = 15;
  auto a = run_replay(cfg, series);
  auto b = run_replay(cfg, series);
  if (a.to_json().dump() != b.to_json().dump()) return false;

  cfg.seed = cfg.seed + 1;
  auto c = run_replay(cfg, series);
  return a.selection_hash != c.selection_hash;
}

// 10. Dataset hygiene: small cycles and all-pass cycles are dropped; raw
// statuses map onto the three effective verdicts.
bool check_dataset_filtering() {
  // Five targets with a failure: dropped (too small).
  auto small = series_from({{{"a", F}, {"b", P}, {"c", P}, {"d", P}, {"e", P}}});
  if (!filter_cycles(small).cycles.empty()) return false;

  // Six targets, no failure: dropped.
  auto green = series_from(
      {{{"a", P}, {"b", P}, {"c", P}, {"d", P}, {"e", P}, {"f", P}}});
  if (!filter_cycles(green).cycles.empty()) return false;

  // Six targets with a failure: kept.
  auto mixed = series_from(
      {{{"a", F}, {"b", P}, {"c", P}, {"d", P}, {"e", P}, {"f", P}}});
  if (filter_cycles(mixed).cycles.size() != 1) return false;

  // Ignored statuses do not count toward the size threshold: six records of
  // which one is TIMEOUT leave five informative -> dropped.
  auto padded = mixed;
  padded.cycles[0].records[1].status = RawStatus::Timeout;
  if (!filter_cycles(padded).cycles.empty()) return false;

  return effective_verdict(RawStatus::Passed) == Verdict::Pass &&
         effective_verdict(RawStatus::Flaky) == Verdict::Pass &&
         effective_verdict(RawStatus::Failed) == Verdict::Fail &&
         effective_verdict(RawStatus::Timeout) == Verdict::Ignored &&
         effective_verdict(RawStatus::NoStatus) == Verdict::Ignored &&
         effective_verdict(RawStatus::FailedToBuild) == Verdict::Ignored;
}

}  // namespace

int main() {
  run_check("fault-detection metric matches rank-sum oracle", check_napfd_oracle);
  run_check("random baseline averages 0.5 on a coin-flip suite",
            check_random_baseline_mean);
  run_check("reward boundary values, antisymmetry, and label mapping",
            check_reward_suite);
  run_check("analytic gradients match finite differences", check_gradient);
  run_check("learner front-loads persistent failures and beats random",
            check_learning_smoke);
  run_check("learner catches relevant transitions beyond random recall",
            check_transition_selection);
  run_check("detection delays counted exactly on a scripted run",
            check_detection_delays);
  run_check("flaky revert window separates flaky from relevant transitions",
            check_flaky_rule);
  run_check("replays are seed-deterministic and seed-sensitive", check_determinism);
  run_check("dataset filtering and status mapping", check_dataset_filtering);
  return failures == 0 ? 0 : 1;
}
