// Command-line front end: replay CI logs under a policy and budget, sweep
// budgets, generate synthetic scenario datasets, and flatten reports for
// plotting.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "ciopt/dataset.hpp"
#include "ciopt/harness.hpp"

namespace {

struct CliOptions {
  ciopt::ReplayConfig config;
  std::string dataset;
  std::string pipeline = "pre";
  std::string policy = "dqn";
  std::string reward = "costrank";
  std::string out;
  std::string config_file;
  std::string checkpoint_out;
  std::string checkpoint_in;
  std::vector<std::size_t> hidden = {64, 32, 16};
  long long warm_start = -1;
  std::vector<double> budgets = {0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0};
};

// Expands `--config FILE` into `--key=value` arguments appended after the
// explicit flags. Keys already given on the command line are skipped, so
// flags override the file.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw ciopt::ConfigError("cannot open config file: " + path);

  std::set<std::string> given;
  for (const auto& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(0, a.find('=')));

  auto trim = [](std::string s) {
    auto from = s.find_first_not_of(" \t\r");
    auto to = s.find_last_not_of(" \t\r");
    return from == std::string::npos ? std::string() : s.substr(from, to - from + 1);
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ciopt::ConfigError("config file line " + std::to_string(lineno) +
                               ": expected key=value");
    std::string key = "--" + trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!given.count(key)) args.push_back(key + "=" + value);
  }
  return args;
}

void add_replay_options(CLI::App& cmd, CliOptions& opt) {
  cmd.add_option("--config", opt.config_file,
                 "flat key=value config file; flags override");
  cmd.add_option("--dataset", opt.dataset, "dataset CSV path")->required();
  cmd.add_option("--pipeline", opt.pipeline, "pre|post")
      ->check(CLI::IsMember({"pre", "post"}));
  cmd.add_option("--policy", opt.policy, "dqn|random|rocket")
      ->check(CLI::IsMember({"dqn", "random", "rocket"}));
  cmd.add_option("--reward", opt.reward, "costrank|rnfail|costchangerank|rnchange")
      ->check(CLI::IsMember({"costrank", "rnfail", "costchangerank", "rnchange"}));
  cmd.add_option("--budget", opt.config.budget, "budget fraction in (0,1]");
  cmd.add_option("--alpha", opt.config.cost_rank_alpha, "CostRank cost weight");
  cmd.add_option("--seed", opt.config.seed, "master seed");
  cmd.add_option("--warm-start", opt.warm_start,
                 "warm-start cycle count (-1 = auto)");
  cmd.add_option("--history-length", opt.config.features.history_length,
                 "result history length k");
  cmd.add_option("--pca-dim", opt.config.features.embedding_dim,
                 "name embedding dimension");
  cmd.add_option("--horizon", opt.config.features.recency_horizon,
                 "recency normalization horizon (cycles)");
  cmd.add_option("--hidden", opt.hidden, "hidden layer sizes")->delimiter(',');
  cmd.add_option("--dropout", opt.config.network.dropout, "dropout rate");
  cmd.add_option("--l2", opt.config.network.l2, "L2 coefficient");
  cmd.add_option("--learning-rate", opt.config.adam.learning_rate, "Adam learning rate");
  cmd.add_option("--batch-size", opt.config.batch_size, "training batch size");
  cmd.add_option("--buffer-capacity", opt.config.buffer_capacity,
                 "replay buffer capacity");
  cmd.add_option("--sigma", opt.config.exploration.sigma, "exploration noise stddev");
  cmd.add_option("--sigma-decay", opt.config.exploration.decay,
                 "per-cycle noise decay factor");
  cmd.add_option("--sigma-min", opt.config.exploration.sigma_min, "noise floor");
  cmd.add_option("--flaky-window", opt.config.flaky_window,
                 "flaky transition window (executions)");
  cmd.add_option("--random-reps", opt.config.random_reps,
                 "repetitions for the RANDOM baseline");
  cmd.add_flag("--force", opt.config.force_reward,
               "allow reward/pipeline mismatch");
  cmd.add_flag("--also-full-rank", opt.config.also_full_rank,
               "additionally report metrics at budget 1.0");
  cmd.add_option("--checkpoint", opt.checkpoint_out,
                 "write agent + feature pipeline checkpoint JSON");
  cmd.add_option("--load-checkpoint", opt.checkpoint_in,
                 "restore agent + feature pipeline before the run");
  cmd.add_option("--out", opt.out, "report JSON output path");
}

void finalize_config(CliOptions& opt) {
  opt.config.pipeline = opt.pipeline == "post" ? ciopt::Pipeline::PostSubmit
                                               : ciopt::Pipeline::PreSubmit;
  opt.config.policy = *ciopt::parse_policy(opt.policy);
  opt.config.reward = *ciopt::parse_reward(opt.reward);
  opt.config.network.hidden = opt.hidden;
  if (opt.warm_start >= 0)
    opt.config.warm_start_cycles = static_cast<std::size_t>(opt.warm_start);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ciopt::DataError("cannot write output file: " + path);
  out << text;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ciopt::DataError("cannot open file: " + path);
  return nlohmann::json::parse(in);
}

int run_replay_cmd(CliOptions& opt) {
  finalize_config(opt);
  auto series = ciopt::load_dataset(opt.dataset, opt.config.pipeline);
  nlohmann::json restore;
  const nlohmann::json* restore_ptr = nullptr;
  if (!opt.checkpoint_in.empty()) {
    restore = read_json(opt.checkpoint_in);
    restore_ptr = &restore;
  }
  auto report = ciopt::run_replay(opt.config, series, restore_ptr);
  std::string text = report.to_json().dump(2);
  if (opt.out.empty()) std::cout << text << "\n";
  else write_text(opt.out, text + "\n");
  if (!opt.checkpoint_out.empty())
    write_text(opt.checkpoint_out, report.checkpoint.dump(2) + "\n");
  return 0;
}

int run_sweep_cmd(CliOptions& opt) {
  finalize_config(opt);
  auto series = ciopt::load_dataset(opt.dataset, opt.config.pipeline);
  auto results = ciopt::budget_sweep(opt.config, series, opt.budgets);
  nlohmann::json out = nlohmann::json::array();
  for (auto& [budget, report] : results)
    out.push_back({{"budget", budget}, {"report", report.to_json()}});
  std::string text = out.dump(2);
  if (opt.out.empty()) std::cout << text << "\n";
  else write_text(opt.out, text + "\n");
  return 0;
}

struct SynthOptions {
  ciopt::ScenarioSpec spec;
  std::string scenario = "deterministic_failures";
  std::size_t cycles = 50;
  std::size_t targets = 10;
  std::uint64_t seed = 1;
  std::string out;
  std::string config_file;
};

int run_synth_cmd(SynthOptions& opt) {
  opt.spec.scenario = *ciopt::parse_scenario(opt.scenario);
  auto series = ciopt::generate_synthetic(opt.spec, opt.cycles, opt.targets, opt.seed);
  if (opt.out.empty()) ciopt::write_dataset_csv(series, std::cout);
  else ciopt::write_dataset_csv(series, opt.out);
  return 0;
}

int run_report_cmd(const std::string& in_path, const std::string& csv_path) {
  nlohmann::json report = read_json(in_path);
  std::ofstream out(csv_path);
  if (!out) throw ciopt::DataError("cannot write CSV file: " + csv_path);
  out << "cycle_id,metric,value\n";
  for (const auto& row : report.at("per_cycle")) {
    auto id = row.at("cycle_id").get<std::int64_t>();
    for (const char* metric : {"napfd", "nfr", "nttf", "selected_count", "budget_ms"}) {
      const auto& v = row.at(metric);
      out << id << ',' << metric << ',';
      if (v.is_null()) out << "";
      else out << v.dump();
      out << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RL-based, pipeline-aware CI test prioritization and budgeted selection"};
  app.require_subcommand(1);

  CliOptions replay_opt;
  CLI::App* replay = app.add_subcommand("replay", "replay a dataset under one policy/budget");
  add_replay_options(*replay, replay_opt);

  CliOptions sweep_opt;
  CLI::App* sweep = app.add_subcommand("sweep", "independent replays across budgets");
  add_replay_options(*sweep, sweep_opt);
  sweep->add_option("--budgets", sweep_opt.budgets, "budget fractions")->delimiter(',');

  SynthOptions synth_opt;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scenario dataset");
  synth->add_option("--config", synth_opt.config_file,
                    "flat key=value config file; flags override");
  synth->add_option("--scenario", synth_opt.scenario,
                    "deterministic_failures|random_noise|flaky_mix|transition_churn")
      ->check(CLI::IsMember({"deterministic_failures", "random_noise", "flaky_mix",
                             "transition_churn"}));
  synth->add_option("--cycles", synth_opt.cycles, "cycle count")->required();
  synth->add_option("--targets", synth_opt.targets, "target count")->required();
  synth->add_option("--seed", synth_opt.seed, "generator seed");
  synth->add_option("--failure-fraction", synth_opt.spec.failure_fraction,
                    "failing-target fraction / failure probability");
  synth->add_option("--flaky-fraction", synth_opt.spec.flaky_fraction,
                    "flaky-target fraction");
  synth->add_option("--transition-rate", synth_opt.spec.transition_rate,
                    "per-cycle flip/blip probability");
  synth->add_option("--churn-fraction", synth_opt.spec.churn_fraction,
                    "persistently flipping target fraction (transition_churn)");
  synth->add_option("--ignored-rate", synth_opt.spec.ignored_rate,
                    "probability of a NO_STATUS record");
  synth->add_option("--duration-log-mean", synth_opt.spec.duration_log_mean,
                    "log-normal duration mu (ms)");
  synth->add_option("--duration-log-sigma", synth_opt.spec.duration_log_sigma,
                    "log-normal duration sigma");
  synth->add_option("--stable-duration-scale", synth_opt.spec.stable_duration_scale,
                    "duration multiplier for stable targets (transition_churn)");
  synth->add_option("--warmup", synth_opt.spec.warmup_cycles,
                    "all-pass cycles before deterministic failures start");
  synth->add_option("--out", synth_opt.out, "dataset CSV output path");

  std::string report_in, report_csv;
  CLI::App* report = app.add_subcommand("report", "flatten a report JSON to CSV");
  report->add_option("--in", report_in, "report JSON path")->required();
  report->add_option("--csv", report_csv, "CSV output path")->required();

  try {
    auto args = expand_config_args(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 vector parse order
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ciopt::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (replay->parsed()) return run_replay_cmd(replay_opt);
    if (sweep->parsed()) return run_sweep_cmd(sweep_opt);
    if (synth->parsed()) return run_synth_cmd(synth_opt);
    if (report->parsed()) return run_report_cmd(report_in, report_csv);
  } catch (const ciopt::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ciopt::TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ciopt::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
