// Minimal end-to-end walkthrough: generate a synthetic pre-submit log, replay
// it with the learning agent, and print the aggregate metrics.

#include <iostream>

#include "ciopt/harness.hpp"

int main() {
  ciopt::ScenarioSpec spec;
  spec.scenario = ciopt::Scenario::DeterministicFailures;
  spec.failure_fraction = 0.2;
  auto series = ciopt::generate_synthetic(spec, /*cycles=*/150, /*targets=*/10,
                                          /*seed=*/7);
  series = ciopt::filter_cycles(series);

  ciopt::ReplayConfig config;
  config.pipeline = ciopt::Pipeline::PreSubmit;
  config.policy = ciopt::PolicyId::Dqn;
  config.reward = ciopt::RewardId::CostRank;
  config.budget = 0.5;
  config.buffer_capacity = 256;
  config.warm_start_cycles = 30;
  config.seed = 42;

  auto report = ciopt::run_replay(config, series);
  for (const auto& [metric, ms] : report.aggregates)
    std::cout << metric << ": " << ms.first << " +- " << ms.second << "\n";
  return 0;
}
