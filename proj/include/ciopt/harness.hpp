#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciopt/agent.hpp"
#include "ciopt/baselines.hpp"
#include "ciopt/dataset.hpp"
#include "ciopt/features.hpp"
#include "ciopt/metrics.hpp"
#include "ciopt/rewards.hpp"
#include "ciopt/rng.hpp"

namespace ciopt {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class PolicyId { Dqn, Random, Rocket };

inline std::optional<PolicyId> parse_policy(std::string_view s) {
  if (s == "dqn") return PolicyId::Dqn;
  if (s == "random") return PolicyId::Random;
  if (s == "rocket") return PolicyId::Rocket;
  return std::nullopt;
}

inline std::string_view to_string(PolicyId p) {
  switch (p) {
    case PolicyId::Dqn: return "dqn";
    case PolicyId::Random: return "random";
    case PolicyId::Rocket: return "rocket";
  }
  return "?";
}

struct ReplayConfig {
  Pipeline pipeline = Pipeline::PreSubmit;
  PolicyId policy = PolicyId::Dqn;
  RewardId reward = RewardId::CostRank;
  double budget = 1.0;
  double cost_rank_alpha = 0.9;
  std::uint64_t seed = 42;
  // Unset: fill the replay buffer from leading cycles, at least 10 of them
  // (0 for the non-learning baselines).
  std::optional<std::size_t> warm_start_cycles;
  FeatureConfig features;
  NetworkConfig network;  // input_dim derived from features at run time
  AdamConfig adam;
  ExplorationPolicy exploration;
  std::size_t buffer_capacity = 4096;
  std::size_t batch_size = 64;
  std::size_t flaky_window = 3;
  std::size_t random_reps = 10000;
  bool force_reward = false;
  bool also_full_rank = false;

  nlohmann::json to_json() const {
    return {{"pipeline", std::string(ciopt::to_string(pipeline))},
            {"policy", std::string(ciopt::to_string(policy))},
            {"reward", std::string(ciopt::to_string(reward))},
            {"budget", budget},
            {"cost_rank_alpha", cost_rank_alpha},
            {"seed", seed},
            {"warm_start_cycles",
             warm_start_cycles ? nlohmann::json(*warm_start_cycles) : nlohmann::json()},
            {"history_length", features.history_length},
            {"embedding_dim", features.embedding_dim},
            {"recency_horizon", features.recency_horizon},
            {"hidden", network.hidden},
            {"dropout", network.dropout},
            {"l2", network.l2},
            {"learning_rate", adam.learning_rate},
            {"sigma", exploration.sigma},
            {"sigma_decay", exploration.decay},
            {"sigma_min", exploration.sigma_min},
            {"buffer_capacity", buffer_capacity},
            {"batch_size", batch_size},
            {"flaky_window", flaky_window},
            {"random_reps", random_reps},
            {"force_reward", force_reward},
            {"also_full_rank", also_full_rank}};
  }
};

// ---------------------------------------------------------------------------
// Budgeted selection
// ---------------------------------------------------------------------------

struct Selection {
  std::vector<std::string> targets;  // rank order
  double cap_ms = 0.0;
  double estimated_cost_ms = 0.0;
};

// Greedy prefix with skip-and-continue: a target whose estimate would
// overflow the cap is skipped and scanning continues down the ranking. The
// top-ranked target is always selected.
inline Selection select_under_budget(const std::vector<std::string>& ranked,
                                     const std::map<std::string, double>& est_durations,
                                     double budget_fraction,
                                     double full_suite_est_ms) {
  if (ranked.empty()) throw std::invalid_argument("select_under_budget: empty ranking");
  Selection sel;
  sel.cap_ms = budget_fraction * full_suite_est_ms;
  const double slack = sel.cap_ms + 1e-9;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    double d = 0.0;
    if (auto it = est_durations.find(ranked[i]); it != est_durations.end())
      d = it->second;
    if (sel.targets.empty() || sel.estimated_cost_ms + d <= slack) {
      sel.targets.push_back(ranked[i]);
      sel.estimated_cost_ms += d;
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Replay report
// ---------------------------------------------------------------------------

struct ReplayReport {
  struct PerCycle {
    std::int64_t cycle_id = 0;
    std::optional<double> napfd;
    double nfr = 1.0;
    double nttf = 1.0;
    std::size_t selected_count = 0;
    double budget_ms = 0.0;
  };

  nlohmann::json config_echo;
  std::vector<PerCycle> per_cycle;
  std::map<std::string, std::pair<double, double>> aggregates;  // mean, std
  std::optional<double> recall_pct;
  DetectionDelays delays;
  std::size_t no_fail_selected_cycles = 0;
  std::size_t tail_labeled_transitions = 0;
  std::uint64_t selection_hash = 0;
  std::uint64_t history_hash = 0;
  nlohmann::json checkpoint;  // agent + feature pipeline; not part of the report file

  nlohmann::json to_json() const {
    nlohmann::json cycles = nlohmann::json::array();
    for (const auto& c : per_cycle) {
      cycles.push_back({{"cycle_id", c.cycle_id},
                        {"napfd", c.napfd ? nlohmann::json(*c.napfd) : nlohmann::json()},
                        {"nfr", c.nfr},
                        {"nttf", c.nttf},
                        {"selected_count", c.selected_count},
                        {"budget_ms", c.budget_ms}});
    }
    nlohmann::json aggr = nlohmann::json::object();
    for (const auto& [name, ms] : aggregates)
      aggr[name] = {{"mean", ms.first}, {"std", ms.second}};
    nlohmann::json histogram = nlohmann::json::object();
    for (const auto& [delay, count] : delays.histogram)
      histogram[std::to_string(delay)] = count;
    return {{"config", config_echo},
            {"per_cycle", cycles},
            {"aggregates", aggr},
            {"transitions",
             {{"recall_pct", recall_pct ? nlohmann::json(*recall_pct) : nlohmann::json()},
              {"delay_histogram", histogram},
              {"undetected_count", delays.undetected},
              {"tail_labeled_count", tail_labeled_transitions}}},
            {"misses", {{"no_fail_selected_cycles", no_fail_selected_cycles}}},
            {"selection_hash", selection_hash},
            {"history_hash", history_hash}};
  }
};

// ---------------------------------------------------------------------------
// Replay engine
// ---------------------------------------------------------------------------

namespace detail {

inline void hash_mix(std::uint64_t& h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

inline void hash_mix(std::uint64_t& h, const std::string& s) {
  std::uint64_t f = 0xcbf29ce484222325ULL;
  for (char c : s) {
    f ^= static_cast<unsigned char>(c);
    f *= 0x100000001b3ULL;
  }
  hash_mix(h, f);
}

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

// Feature pipeline frozen after the warm-start prefix: vocabulary and PCA are
// fit once; targets appearing later fall back to out-of-vocabulary zeros plus
// their history features.
class FeaturePipeline {
 public:
  FeaturePipeline() = default;

  void fit(const std::vector<std::string>& names, const FeatureConfig& cfg) {
    cfg_ = cfg;
    vocab_ = Vocabulary::fit(names);
    std::vector<std::string> unique = names;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    std::size_t d_eff = std::min({cfg.embedding_dim,
                                  unique.size() > 0 ? unique.size() - 1 : 0,
                                  vocab_.size()});
    if (d_eff > 0) {
      std::vector<std::vector<double>> rows;
      rows.reserve(unique.size());
      for (const auto& name : unique) rows.push_back(vocab_.bow_vector(name));
      pca_ = fit_pca(rows, d_eff);
    }
  }

  std::vector<double> embedding(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    std::vector<double> out(cfg_.embedding_dim, 0.0);
    if (pca_ && vocab_.size() > 0) {
      auto projected = project_pca(*pca_, vocab_.bow_vector(name));
      std::copy(projected.begin(), projected.end(), out.begin());
    }
    cache_.emplace(name, out);
    return out;
  }

  nlohmann::json to_json() const {
    return {{"vocabulary", vocab_.to_json()},
            {"pca", pca_ ? pca_->to_json() : nlohmann::json()}};
  }

  void restore(const nlohmann::json& j, const FeatureConfig& cfg) {
    cfg_ = cfg;
    vocab_ = Vocabulary::from_json(j.at("vocabulary"));
    if (!j.at("pca").is_null()) pca_ = PCAModel::from_json(j.at("pca"));
    cache_.clear();
  }

 private:
  FeatureConfig cfg_;
  Vocabulary vocab_;
  std::optional<PCAModel> pca_;
  std::map<std::string, std::vector<double>> cache_;
};

}  // namespace detail

inline ReplayReport run_replay(const ReplayConfig& config, const CycleSeries& series,
                               const nlohmann::json* restore_checkpoint = nullptr) {
  if (config.budget <= 0.0 || config.budget > 1.0)
    throw ConfigError("budget must be in (0, 1]");
  if (!config.force_reward && !reward_matches_pipeline(config.reward, config.pipeline))
    throw ConfigError(std::string("reward '") + std::string(to_string(config.reward)) +
                      "' does not match pipeline '" + std::string(to_string(config.pipeline)) +
                      "' (use force to override)");
  if (series.cycles.empty()) throw ConfigError("empty cycle series");

  const std::size_t n_cycles = series.cycles.size();

  // Warm-start prefix length.
  std::size_t warm = 0;
  if (config.warm_start_cycles) {
    warm = std::min(*config.warm_start_cycles, n_cycles - 1);
  } else if (config.policy == PolicyId::Dqn) {
    std::size_t informative = 0;
    for (std::size_t i = 0; i + 1 < n_cycles; ++i) {
      for (const auto& rec : series.cycles[i].records)
        if (rec.verdict() != Verdict::Ignored) ++informative;
      warm = i + 1;
      if (informative >= config.buffer_capacity && warm >= 10) break;
    }
  }

  // Feature pipeline fit on the warm-start prefix (first cycle if none).
  detail::FeaturePipeline pipeline;
  {
    std::vector<std::string> names;
    std::size_t fit_cycles = std::max<std::size_t>(warm, 1);
    for (std::size_t i = 0; i < fit_cycles; ++i)
      for (const auto& rec : series.cycles[i].records) names.push_back(rec.target);
    pipeline.fit(names, config.features);
  }

  AgentConfig agent_cfg;
  agent_cfg.network = config.network;
  agent_cfg.network.input_dim = config.features.feature_dim();
  agent_cfg.adam = config.adam;
  agent_cfg.exploration = config.exploration;
  agent_cfg.buffer_capacity = config.buffer_capacity;
  agent_cfg.batch_size = config.batch_size;
  Agent agent(agent_cfg, config.seed);
  if (restore_checkpoint) {
    agent.restore(restore_checkpoint->at("agent"));
    pipeline.restore(restore_checkpoint->at("features"), config.features);
  }

  std::map<std::string, TestHistory> histories;

  auto suite_p95 = [&]() {
    std::vector<double> avgs;
    for (const auto& [name, h] : histories) {
      if (h.runs.empty()) continue;
      double sum = 0.0;
      for (const auto& r : h.runs) sum += static_cast<double>(r.duration_ms);
      avgs.push_back(sum / static_cast<double>(h.runs.size()));
    }
    if (avgs.empty()) return 0.0;
    std::sort(avgs.begin(), avgs.end());
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(avgs.size())));
    return avgs[std::min(idx == 0 ? 0 : idx - 1, avgs.size() - 1)];
  };

  auto features_of = [&](const std::string& target, std::int64_t now, double p95) {
    return assemble_features(histories[target], pipeline.embedding(target), now,
                             config.features, p95);
  };

  const bool post_mode = config.pipeline == Pipeline::PostSubmit;

  // -------------------------------------------------------------------------
  // Warm start: prefix cycles replayed as if fully executed in recorded order.
  // -------------------------------------------------------------------------
  if (warm > 0 && config.policy == PolicyId::Dqn) {
    CycleSeries prefix;
    prefix.pipeline = series.pipeline;
    prefix.cycles.assign(series.cycles.begin(),
                         series.cycles.begin() + static_cast<std::ptrdiff_t>(warm));
    TransitionMap prefix_labels = label_transitions(prefix, config.flaky_window);

    for (std::size_t ci = 0; ci < warm; ++ci) {
      const Cycle& cyc = series.cycles[ci];
      std::vector<const ExecutionRecord*> executed;
      std::int64_t suite_cost = 0;
      std::int64_t max_duration = 0;
      for (const auto& rec : cyc.records) {
        if (rec.verdict() == Verdict::Ignored) continue;
        executed.push_back(&rec);
        suite_cost += rec.duration_ms;
        max_duration = std::max(max_duration, rec.duration_ms);
      }
      double p95 = suite_p95();
      std::int64_t prefix_cost = 0;
      for (std::size_t r = 0; r < executed.size(); ++r) {
        const ExecutionRecord& rec = *executed[r];
        ScheduledOutcome outcome;
        outcome.target = rec.target;
        outcome.rank = r + 1;
        outcome.verdict = rec.verdict();
        outcome.duration_ms = rec.duration_ms;
        outcome.prefix_cost_ms = prefix_cost;
        outcome.suite_cost_ms = suite_cost;
        outcome.normalized_duration =
            max_duration > 0 ? static_cast<double>(rec.duration_ms) /
                                   static_cast<double>(max_duration)
                             : 0.0;
        if (post_mode) {
          auto it = prefix_labels.find({cyc.cycle_id, rec.target});
          outcome.transition =
              it != prefix_labels.end() ? it->second.kind : TransitionKind::None;
        }
        Experience e;
        e.state = features_of(rec.target, cyc.cycle_id, p95);
        e.reward = apply_reward(config.reward, outcome, config.cost_rank_alpha);
        agent.push_experience(std::move(e));
        prefix_cost += rec.duration_ms;
      }
      for (const auto& rec : cyc.records)
        histories[rec.target].record(cyc.cycle_id, rec.verdict(), rec.duration_ms);
    }
  } else {
    // Baselines still consume the prefix to build their verdict histories.
    for (std::size_t ci = 0; ci < warm; ++ci)
      for (const auto& rec : series.cycles[ci].records)
        histories[rec.target].record(series.cycles[ci].cycle_id, rec.verdict(),
                                     rec.duration_ms);
  }

  // -------------------------------------------------------------------------
  // Evaluation loop
  // -------------------------------------------------------------------------
  ReplayReport report;
  report.config_echo = config.to_json();

  TransitionMap all_labels = label_transitions(series, config.flaky_window);
  const std::int64_t first_eval_cycle = series.cycles[warm].cycle_id;
  std::size_t relevant_total = 0;
  double relevant_caught = 0.0;  // fractional for repetition-averaged RANDOM
  for (const auto& [key, label] : all_labels) {
    if (key.first < first_eval_cycle) continue;
    if (label.kind == TransitionKind::Relevant) {
      ++relevant_total;
      if (label.tail_labeled) ++report.tail_labeled_transitions;
    }
  }

  struct PendingReward {
    Experience experience;
    ScheduledOutcome outcome;
    std::size_t seen = 0;         // subsequent executions observed
    std::size_t created_pos = 0;  // cycle index at creation
  };
  std::map<std::string, std::vector<PendingReward>> pending;

  auto resolve_pending = [&](PendingReward& p, TransitionKind kind) {
    p.outcome.transition = kind;
    p.experience.reward =
        apply_reward(config.reward, p.outcome, config.cost_rank_alpha);
    agent.push_experience(std::move(p.experience));
  };

  std::vector<CycleSelection> decisions;
  std::vector<double> napfd_vals, nfr_vals, nttf_vals;
  std::vector<double> napfd_full_vals, nfr_full_vals, nttf_full_vals;

  for (std::size_t ci = warm; ci < n_cycles; ++ci) {
    const Cycle& cyc = series.cycles[ci];

    std::vector<const ExecutionRecord*> candidates;
    for (const auto& rec : cyc.records)
      if (rec.verdict() != Verdict::Ignored) candidates.push_back(&rec);
    if (candidates.empty()) continue;

    // Duration estimates from executed history; unseen targets get the
    // median of the known per-target averages.
    std::map<std::string, double> est;
    {
      std::vector<double> known;
      for (const auto* rec : candidates) {
        auto it = histories.find(rec->target);
        if (it == histories.end() || it->second.runs.empty()) continue;
        double sum = 0.0;
        for (const auto& r : it->second.runs) sum += static_cast<double>(r.duration_ms);
        est[rec->target] = sum / static_cast<double>(it->second.runs.size());
        known.push_back(est[rec->target]);
      }
      double fallback = 1.0;
      if (!known.empty()) {
        std::sort(known.begin(), known.end());
        fallback = known[known.size() / 2];
      }
      for (const auto* rec : candidates)
        if (!est.count(rec->target)) est[rec->target] = fallback;
    }
    double full_suite_est = 0.0;
    for (const auto* rec : candidates) full_suite_est += est[rec->target];

    std::map<std::string, const ExecutionRecord*> by_name;
    for (const auto* rec : candidates) by_name[rec->target] = rec;

    std::int64_t actual_suite_ms = 0;
    std::int64_t max_duration = 0;
    std::size_t total_faults = 0;
    for (const auto* rec : candidates) {
      actual_suite_ms += rec->duration_ms;
      max_duration = std::max(max_duration, rec->duration_ms);
      if (rec->verdict() == Verdict::Fail) ++total_faults;
    }
    const double budget_ms = config.budget * static_cast<double>(actual_suite_ms);

    double p95 = suite_p95();

    // Rank the candidates.
    std::vector<std::string> ranked;
    std::vector<std::vector<double>> feats;
    std::vector<double> scores;
    if (config.policy == PolicyId::Dqn) {
      feats.reserve(candidates.size());
      for (const auto* rec : candidates)
        feats.push_back(features_of(rec->target, cyc.cycle_id, p95));
      scores = agent.score_suite(feats, /*explore=*/true);
      std::vector<std::size_t> order(candidates.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a]->target < candidates[b]->target;
      });
      for (std::size_t i : order) ranked.push_back(candidates[i]->target);
    } else if (config.policy == PolicyId::Rocket) {
      std::vector<std::pair<std::string, std::vector<Verdict>>> rocket_input;
      for (const auto* rec : candidates) {
        std::vector<Verdict> newest_first;
        const auto& runs = histories[rec->target].runs;
        for (std::size_t j = runs.size(); j-- > 0 && newest_first.size() < 3;)
          newest_first.push_back(runs[j].verdict);
        rocket_input.emplace_back(rec->target, std::move(newest_first));
      }
      ranked = rocket_prioritize(rocket_input);
    } else {
      Rng rng(derive_seed(config.seed, "random", ci * 1000003ULL));
      std::vector<std::string> names;
      for (const auto* rec : candidates) names.push_back(rec->target);
      std::sort(names.begin(), names.end());
      ranked = random_prioritize(std::move(names), rng);
    }

    auto eval_order = [&](const std::vector<std::string>& order, double budget_frac,
                          double cap_suite_est)
        -> std::tuple<Selection, std::optional<double>, FirstFailMetric, FirstFailMetric> {
      Selection sel = select_under_budget(order, est, budget_frac, cap_suite_est);
      std::vector<Verdict> verdicts;
      std::vector<std::pair<Verdict, std::int64_t>> timed;
      for (const auto& name : sel.targets) {
        const ExecutionRecord* rec = by_name.at(name);
        verdicts.push_back(rec->verdict());
        timed.emplace_back(rec->verdict(), rec->duration_ms);
      }
      std::optional<double> napfd_v;
      if (total_faults > 0) napfd_v = napfd(verdicts, total_faults);
      double tb = budget_frac * static_cast<double>(actual_suite_ms);
      return {std::move(sel), napfd_v, nfr(verdicts), nttf(timed, tb)};
    };

    ReplayReport::PerCycle row;
    row.cycle_id = cyc.cycle_id;
    row.budget_ms = budget_ms;

    Selection executed_selection;
    if (config.policy == PolicyId::Random && config.random_reps > 1) {
      // Metrics averaged over repetitions; the first repetition's selection
      // drives history updates and transition accounting.
      double napfd_acc = 0.0, nfr_acc = 0.0, nttf_acc = 0.0;
      std::size_t napfd_n = 0;
      double full_napfd_acc = 0.0, full_nfr_acc = 0.0, full_nttf_acc = 0.0;
      std::map<std::string, std::size_t> selected_in_reps;
      FirstFailMetric rep0_nfr, rep0_nttf;
      for (std::size_t rep = 0; rep < config.random_reps; ++rep) {
        Rng rng(derive_seed(config.seed, "random", ci * 1000003ULL + rep));
        std::vector<std::string> names;
        for (const auto* rec : candidates) names.push_back(rec->target);
        std::sort(names.begin(), names.end());
        auto order = random_prioritize(std::move(names), rng);
        auto [sel, napfd_v, nfr_v, nttf_v] =
            eval_order(order, config.budget, full_suite_est);
        if (napfd_v) {
          napfd_acc += *napfd_v;
          ++napfd_n;
        }
        nfr_acc += nfr_v.value;
        nttf_acc += nttf_v.value;
        for (const auto& name : sel.targets) ++selected_in_reps[name];
        if (config.also_full_rank) {
          auto [fsel, fnapfd, fnfr, fnttf] = eval_order(order, 1.0, full_suite_est);
          if (fnapfd) full_napfd_acc += *fnapfd;
          full_nfr_acc += fnfr.value;
          full_nttf_acc += fnttf.value;
        }
        if (rep == 0) {
          executed_selection = std::move(sel);
          rep0_nfr = nfr_v;
          rep0_nttf = nttf_v;
        }
      }
      double n = static_cast<double>(config.random_reps);
      if (napfd_n > 0) row.napfd = napfd_acc / static_cast<double>(napfd_n);
      row.nfr = nfr_acc / n;
      row.nttf = nttf_acc / n;
      if (rep0_nfr.miss) ++report.no_fail_selected_cycles;
      if (config.also_full_rank) {
        if (total_faults > 0) napfd_full_vals.push_back(full_napfd_acc / n);
        nfr_full_vals.push_back(full_nfr_acc / n);
        nttf_full_vals.push_back(full_nttf_acc / n);
      }
      // Expected per-transition detection over repetitions.
      for (const auto* rec : candidates) {
        auto it = all_labels.find({cyc.cycle_id, rec->target});
        if (it == all_labels.end() || it->second.kind != TransitionKind::Relevant)
          continue;
        auto sit = selected_in_reps.find(rec->target);
        if (sit != selected_in_reps.end())
          relevant_caught += static_cast<double>(sit->second) / n;
      }
    } else {
      auto [sel, napfd_v, nfr_v, nttf_v] =
          eval_order(ranked, config.budget, full_suite_est);
      executed_selection = std::move(sel);
      row.napfd = napfd_v;
      row.nfr = nfr_v.value;
      row.nttf = nttf_v.value;
      if (nfr_v.miss) ++report.no_fail_selected_cycles;
      if (config.also_full_rank) {
        auto [fsel, fnapfd, fnfr, fnttf] = eval_order(ranked, 1.0, full_suite_est);
        if (fnapfd) napfd_full_vals.push_back(*fnapfd);
        nfr_full_vals.push_back(fnfr.value);
        nttf_full_vals.push_back(fnttf.value);
      }
      for (const auto& name : executed_selection.targets) {
        auto it = all_labels.find({cyc.cycle_id, name});
        if (it != all_labels.end() && it->second.kind == TransitionKind::Relevant)
          relevant_caught += 1.0;
      }
    }

    row.selected_count = executed_selection.targets.size();
    if (row.napfd) napfd_vals.push_back(*row.napfd);
    nfr_vals.push_back(row.nfr);
    nttf_vals.push_back(row.nttf);
    report.per_cycle.push_back(row);

    detail::hash_mix(report.selection_hash, static_cast<std::uint64_t>(cyc.cycle_id));
    for (const auto& name : executed_selection.targets)
      detail::hash_mix(report.selection_hash, name);
    decisions.push_back({cyc.cycle_id, executed_selection.targets});

    // Reveal ground truth of the executed selection; feed the agent.
    if (config.policy == PolicyId::Dqn) {
      std::map<std::string, std::size_t> feat_index;
      for (std::size_t i = 0; i < candidates.size(); ++i)
        feat_index[candidates[i]->target] = i;

      std::int64_t prefix_cost = 0;
      for (std::size_t r = 0; r < executed_selection.targets.size(); ++r) {
        const ExecutionRecord& rec = *by_name.at(executed_selection.targets[r]);
        ScheduledOutcome outcome;
        outcome.target = rec.target;
        outcome.rank = r + 1;
        outcome.verdict = rec.verdict();
        outcome.duration_ms = rec.duration_ms;
        outcome.prefix_cost_ms = prefix_cost;
        outcome.suite_cost_ms = actual_suite_ms;
        outcome.normalized_duration =
            max_duration > 0 ? static_cast<double>(rec.duration_ms) /
                                   static_cast<double>(max_duration)
                             : 0.0;

        std::size_t fi = feat_index[rec.target];
        Experience e;
        e.state = feats[fi];
        e.action_score = scores[fi];

        if (!post_mode) {
          e.reward = apply_reward(config.reward, outcome, config.cost_rank_alpha);
          agent.push_experience(std::move(e));
        } else {
          // Advance pending labels of this target with the fresh execution.
          auto& queue = pending[rec.target];
          for (auto it = queue.begin(); it != queue.end();) {
            if (rec.verdict() != it->outcome.verdict) {
              resolve_pending(*it, TransitionKind::Flaky);
              it = queue.erase(it);
            } else if (++it->seen >= config.flaky_window) {
              resolve_pending(*it, TransitionKind::Relevant);
              it = queue.erase(it);
            } else {
              ++it;
            }
          }
          const auto& runs = histories[rec.target].runs;
          bool is_transition = !runs.empty() && runs.back().verdict != rec.verdict();
          if (!is_transition) {
            outcome.transition = TransitionKind::None;
            e.reward = apply_reward(config.reward, outcome, config.cost_rank_alpha);
            agent.push_experience(std::move(e));
          } else {
            PendingReward p;
            p.experience = std::move(e);
            p.outcome = outcome;
            p.created_pos = ci;
            queue.push_back(std::move(p));
          }
        }
        prefix_cost += rec.duration_ms;
      }

      // Window expiry: targets not re-executed for 3x flaky_window cycles get
      // the optimistic tail label.
      for (auto& [target, queue] : pending) {
        for (auto it = queue.begin(); it != queue.end();) {
          if (ci - it->created_pos >= 3 * config.flaky_window) {
            resolve_pending(*it, TransitionKind::Relevant);
            it = queue.erase(it);
          } else {
            ++it;
          }
        }
      }

      if (agent.ready_to_train())
        for (std::size_t s = 0; s < executed_selection.targets.size(); ++s)
          agent.train_step();
      agent.end_of_cycle();
    }

    // Histories grow by executed runs only: the agent never observes verdicts
    // of tests it skipped.
    for (const auto& name : executed_selection.targets) {
      const ExecutionRecord& rec = *by_name.at(name);
      histories[name].record(cyc.cycle_id, rec.verdict(), rec.duration_ms);
    }
  }

  // Flush unresolved pending labels with the tail rule.
  if (config.policy == PolicyId::Dqn && post_mode)
    for (auto& [target, queue] : pending)
      for (auto& p : queue) resolve_pending(p, TransitionKind::Relevant);

  // Aggregates.
  auto add_aggregate = [&](const std::string& name, const std::vector<double>& xs) {
    if (!xs.empty()) report.aggregates[name] = detail::mean_std(xs);
  };
  add_aggregate("napfd", napfd_vals);
  add_aggregate("nfr", nfr_vals);
  add_aggregate("nttf", nttf_vals);
  add_aggregate("napfd_full", napfd_full_vals);
  add_aggregate("nfr_full", nfr_full_vals);
  add_aggregate("nttf_full", nttf_full_vals);

  if (relevant_total > 0)
    report.recall_pct =
        100.0 * relevant_caught / static_cast<double>(relevant_total);

  TransitionMap eval_labels;
  for (const auto& [key, label] : all_labels)
    if (key.first >= first_eval_cycle) eval_labels.emplace(key, label);
  report.delays = detection_delays(decisions, eval_labels, series);

  for (const auto& [name, h] : histories) {
    detail::hash_mix(report.history_hash, name);
    for (const auto& r : h.runs) {
      detail::hash_mix(report.history_hash, static_cast<std::uint64_t>(r.cycle_id));
      detail::hash_mix(report.history_hash,
                       static_cast<std::uint64_t>(r.verdict == Verdict::Fail ? 1 : 0));
      detail::hash_mix(report.history_hash, static_cast<std::uint64_t>(r.duration_ms));
    }
  }

  report.checkpoint = {{"version", 1},
                       {"agent", agent.checkpoint()},
                       {"features", pipeline.to_json()}};
  return report;
}

// Independent replays per budget; seeds derived from the master seed by
// budget index.
inline std::vector<std::pair<double, ReplayReport>> budget_sweep(
    const ReplayConfig& config, const CycleSeries& series,
    const std::vector<double>& budgets) {
  std::vector<std::pair<double, ReplayReport>> out;
  out.reserve(budgets.size());
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    ReplayConfig cfg = config;
    cfg.budget = budgets[i];
    cfg.seed = derive_seed(config.seed, "budget", i);
    out.emplace_back(budgets[i], run_replay(cfg, series));
  }
  return out;
}

}  // namespace ciopt
