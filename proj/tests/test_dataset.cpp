#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ciopt/dataset.hpp"

using namespace ciopt;

namespace {

std::string write_temp(const std::string& contents) {
  static int counter = 0;
  std::string path = "ciopt_test_dataset_" + std::to_string(counter++) + ".csv";
  std::ofstream out(path);
  out << contents;
  return path;
}

Cycle make_cycle(std::int64_t id, const std::vector<std::pair<std::string, RawStatus>>& rows,
                 std::int64_t duration = 100) {
  Cycle c;
  c.cycle_id = id;
  for (const auto& [target, status] : rows)
    c.records.push_back({id, target, status, duration});
  return c;
}

// Builds a single-target series from a verdict string like "PFFP".
CycleSeries verdict_series(const std::string& verdicts) {
  CycleSeries s;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    RawStatus st = verdicts[i] == 'F' ? RawStatus::Failed : RawStatus::Passed;
    s.cycles.push_back(make_cycle(static_cast<std::int64_t>(i + 1), {{"//a:t", st}}));
  }
  return s;
}

TransitionKind kind_at(const TransitionMap& m, std::int64_t cycle) {
  return m.at({cycle, "//a:t"}).kind;
}

}  // namespace

TEST_CASE("effective verdict mapping") {
  CHECK(effective_verdict(RawStatus::Passed) == Verdict::Pass);
  CHECK(effective_verdict(RawStatus::Flaky) == Verdict::Pass);
  CHECK(effective_verdict(RawStatus::Failed) == Verdict::Fail);
  CHECK(effective_verdict(RawStatus::Timeout) == Verdict::Ignored);
  CHECK(effective_verdict(RawStatus::NoStatus) == Verdict::Ignored);
  CHECK(effective_verdict(RawStatus::FailedToBuild) == Verdict::Ignored);
}

TEST_CASE("load_dataset parses a well-formed file") {
  auto path = write_temp(
      "cycle_id,target,status,duration_ms\n"
      "1,//a:x,PASSED,10\n"
      "1,//a:y,FAILED,20\n"
      "1,//a:z,FLAKY,30\n");
  auto series = load_dataset(path, Pipeline::PreSubmit);
  REQUIRE(series.cycles.size() == 1);
  CHECK(series.cycles[0].records.size() == 3);
  CHECK(series.cycles[0].records[1].verdict() == Verdict::Fail);
  std::remove(path.c_str());
}

TEST_CASE("load_dataset rejects unknown status with line number") {
  auto path = write_temp(
      "cycle_id,target,status,duration_ms\n"
      "1,//a:x,PASSED,10\n"
      "2,//a:x,BROKEN,10\n");
  CHECK_THROWS_WITH(load_dataset(path, Pipeline::PreSubmit),
                    Catch::Matchers::ContainsSubstring("line 3") &&
                        Catch::Matchers::ContainsSubstring("BROKEN"));
  std::remove(path.c_str());
}

TEST_CASE("load_dataset rejects duplicate (cycle, target) pairs") {
  auto path = write_temp(
      "cycle_id,target,status,duration_ms\n"
      "1,//a:x,PASSED,10\n"
      "1,//a:x,FAILED,20\n");
  CHECK_THROWS_WITH(load_dataset(path, Pipeline::PreSubmit),
                    Catch::Matchers::ContainsSubstring("duplicate"));
  std::remove(path.c_str());
}

TEST_CASE("load_dataset sorts cycles by id") {
  auto path = write_temp(
      "cycle_id,target,status,duration_ms\n"
      "5,//a:x,PASSED,10\n"
      "2,//a:x,FAILED,10\n");
  auto series = load_dataset(path, Pipeline::PreSubmit);
  REQUIRE(series.cycles.size() == 2);
  CHECK(series.cycles[0].cycle_id == 2);
  CHECK(series.cycles[1].cycle_id == 5);
  std::remove(path.c_str());
}

TEST_CASE("dataset CSV round-trips through write and load") {
  ScenarioSpec spec;
  spec.scenario = Scenario::RandomNoise;
  spec.ignored_rate = 0.1;
  auto series = generate_synthetic(spec, 8, 7, 3);
  std::stringstream ss;
  write_dataset_csv(series, ss);
  auto path = write_temp(ss.str());
  auto loaded = load_dataset(path, series.pipeline);
  REQUIRE(loaded.cycles.size() == series.cycles.size());
  for (std::size_t i = 0; i < loaded.cycles.size(); ++i) {
    REQUIRE(loaded.cycles[i].records.size() == series.cycles[i].records.size());
    for (std::size_t j = 0; j < loaded.cycles[i].records.size(); ++j) {
      CHECK(loaded.cycles[i].records[j].target == series.cycles[i].records[j].target);
      CHECK(loaded.cycles[i].records[j].status == series.cycles[i].records[j].status);
      CHECK(loaded.cycles[i].records[j].duration_ms ==
            series.cycles[i].records[j].duration_ms);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("filter_cycles drops small and all-pass cycles") {
  CycleSeries s;
  s.cycles.push_back(make_cycle(1, {{"//a:1", RawStatus::Failed},
                                    {"//a:2", RawStatus::Passed},
                                    {"//a:3", RawStatus::Passed},
                                    {"//a:4", RawStatus::Passed},
                                    {"//a:5", RawStatus::Passed}}));  // 5 targets
  s.cycles.push_back(make_cycle(2, {{"//a:1", RawStatus::Passed},
                                    {"//a:2", RawStatus::Passed},
                                    {"//a:3", RawStatus::Passed},
                                    {"//a:4", RawStatus::Passed},
                                    {"//a:5", RawStatus::Passed},
                                    {"//a:6", RawStatus::Passed},
                                    {"//a:7", RawStatus::Passed},
                                    {"//a:8", RawStatus::Passed},
                                    {"//a:9", RawStatus::Passed},
                                    {"//a:10", RawStatus::Passed}}));  // no failure
  s.cycles.push_back(make_cycle(3, {{"//a:1", RawStatus::Failed},
                                    {"//a:2", RawStatus::Passed},
                                    {"//a:3", RawStatus::Passed},
                                    {"//a:4", RawStatus::Passed},
                                    {"//a:5", RawStatus::Passed},
                                    {"//a:6", RawStatus::Passed}}));  // boundary: kept
  auto filtered = filter_cycles(s);
  REQUIRE(filtered.cycles.size() == 1);
  CHECK(filtered.cycles[0].cycle_id == 3);
}

TEST_CASE("filter_cycles counts only informative records") {
  // 6 records but one is TIMEOUT: informative count 5, dropped.
  CycleSeries s;
  s.cycles.push_back(make_cycle(1, {{"//a:1", RawStatus::Failed},
                                    {"//a:2", RawStatus::Passed},
                                    {"//a:3", RawStatus::Passed},
                                    {"//a:4", RawStatus::Passed},
                                    {"//a:5", RawStatus::Passed},
                                    {"//a:6", RawStatus::Timeout}}));
  CHECK(filter_cycles(s).cycles.empty());
}

TEST_CASE("filter_cycles is idempotent") {
  ScenarioSpec spec;
  spec.scenario = Scenario::RandomNoise;
  spec.failure_fraction = 0.3;
  spec.ignored_rate = 0.15;
  auto series = generate_synthetic(spec, 40, 8, 11);
  auto once = filter_cycles(series);
  auto twice = filter_cycles(once);
  REQUIRE(twice.cycles.size() == once.cycles.size());
  for (std::size_t i = 0; i < once.cycles.size(); ++i)
    CHECK(twice.cycles[i].cycle_id == once.cycles[i].cycle_id);
}

TEST_CASE("transition labels: persistent failure is relevant") {
  auto labels = label_transitions(verdict_series("PPFFFF"));
  CHECK(kind_at(labels, 3) == TransitionKind::Relevant);
  CHECK(kind_at(labels, 1) == TransitionKind::None);  // first-ever execution
  CHECK(kind_at(labels, 4) == TransitionKind::None);
}

TEST_CASE("transition labels: one-cycle blip is flaky") {
  auto labels = label_transitions(verdict_series("PFP"));
  CHECK(kind_at(labels, 2) == TransitionKind::Flaky);
}

TEST_CASE("transition labels: window boundary") {
  // First F reverts after 4 executions, outside the 3-execution window.
  auto labels = label_transitions(verdict_series("PFFFFP"));
  CHECK(kind_at(labels, 2) == TransitionKind::Relevant);
  CHECK(kind_at(labels, 6) == TransitionKind::Relevant);
  CHECK(labels.at({6, "//a:t"}).tail_labeled);

  // Revert exactly at the third subsequent execution: still flaky.
  auto boundary = label_transitions(verdict_series("PFFFP"));
  CHECK(kind_at(boundary, 2) == TransitionKind::Flaky);
}

TEST_CASE("transition labels skip ignored records") {
  // P, TIMEOUT, F: the F transitions against the last informative verdict.
  CycleSeries s;
  s.cycles.push_back(make_cycle(1, {{"//a:t", RawStatus::Passed}}));
  s.cycles.push_back(make_cycle(2, {{"//a:t", RawStatus::Timeout}}));
  s.cycles.push_back(make_cycle(3, {{"//a:t", RawStatus::Failed}}));
  auto labels = label_transitions(s);
  CHECK(labels.count({2, "//a:t"}) == 0);
  CHECK(kind_at(labels, 3) == TransitionKind::Relevant);
}

TEST_CASE("transition counts match verdict changes") {
  ScenarioSpec spec;
  spec.scenario = Scenario::RandomNoise;
  spec.failure_fraction = 0.4;
  auto series = generate_synthetic(spec, 60, 6, 17);
  auto labels = label_transitions(series);

  // Independent re-scan: every non-None label must sit at a verdict change,
  // and the label count must equal the change count.
  std::map<std::string, Verdict> last;
  std::size_t changes = 0;
  std::size_t labeled = 0;
  for (const auto& cyc : series.cycles) {
    for (const auto& rec : cyc.records) {
      if (rec.verdict() == Verdict::Ignored) continue;
      auto it = last.find(rec.target);
      bool change = it != last.end() && it->second != rec.verdict();
      if (change) ++changes;
      auto label = labels.at({cyc.cycle_id, rec.target});
      if (label.kind != TransitionKind::None) {
        ++labeled;
        CHECK(change);
      }
      last[rec.target] = rec.verdict();
    }
  }
  CHECK(labeled == changes);
}

TEST_CASE("synthetic deterministic_failures") {
  ScenarioSpec spec;
  spec.scenario = Scenario::DeterministicFailures;
  spec.failure_fraction = 0.2;
  auto series = generate_synthetic(spec, 50, 10, 123);
  REQUIRE(series.cycles.size() == 50);
  for (const auto& cyc : series.cycles) {
    std::size_t failed = 0;
    for (const auto& rec : cyc.records)
      if (rec.status == RawStatus::Failed) ++failed;
    CHECK(failed == 2);
  }
}

TEST_CASE("synthetic generation is seed-deterministic") {
  ScenarioSpec spec;
  spec.scenario = Scenario::TransitionChurn;
  auto a = generate_synthetic(spec, 20, 10, 99);
  auto b = generate_synthetic(spec, 20, 10, 99);
  std::stringstream sa, sb;
  write_dataset_csv(a, sa);
  write_dataset_csv(b, sb);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("always-fail target set is seed-independent") {
  ScenarioSpec spec;
  spec.scenario = Scenario::DeterministicFailures;
  spec.failure_fraction = 0.3;
  auto a = generate_synthetic(spec, 2, 10, 1);
  auto b = generate_synthetic(spec, 2, 10, 2);
  auto failing = [](const CycleSeries& s) {
    std::set<std::string> names;
    for (const auto& rec : s.cycles[0].records)
      if (rec.status == RawStatus::Failed) names.insert(rec.target);
    return names;
  };
  CHECK(failing(a) == failing(b));
}

TEST_CASE("transition_churn with rate 0 never changes verdicts") {
  ScenarioSpec spec;
  spec.scenario = Scenario::TransitionChurn;
  spec.transition_rate = 0.0;
  auto series = generate_synthetic(spec, 30, 10, 5);
  std::map<std::string, Verdict> first;
  for (const auto& cyc : series.cycles)
    for (const auto& rec : cyc.records) {
      auto [it, inserted] = first.emplace(rec.target, rec.verdict());
      if (!inserted) CHECK(it->second == rec.verdict());
    }
}

TEST_CASE("synthetic rejects empty dimensions") {
  ScenarioSpec spec;
  CHECK_THROWS_AS(generate_synthetic(spec, 0, 10, 1), DataError);
  CHECK_THROWS_AS(generate_synthetic(spec, 10, 0, 1), DataError);
}
