#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciopt/dataset.hpp"

namespace ciopt {

// ---------------------------------------------------------------------------
// Execution history (selected/executed runs only)
// ---------------------------------------------------------------------------

struct TestHistory {
  struct Run {
    std::int64_t cycle_id = 0;
    Verdict verdict = Verdict::Pass;
    std::int64_t duration_ms = 0;
  };

  std::string target;
  std::vector<Run> runs;  // chronological, Pass/Fail only
  std::optional<std::int64_t> last_failure_cycle;

  void record(std::int64_t cycle_id, Verdict verdict, std::int64_t duration_ms) {
    if (verdict == Verdict::Ignored) return;
    runs.push_back({cycle_id, verdict, duration_ms});
    if (verdict == Verdict::Fail) last_failure_cycle = cycle_id;
  }

  std::optional<std::int64_t> last_execution_cycle() const {
    if (runs.empty()) return std::nullopt;
    return runs.back().cycle_id;
  }
};

// Most-recent-first ordinal encoding: pass = 0, fail = 1, padded with 0.
inline std::vector<double> encode_history(const TestHistory& history,
                                          std::size_t k = 25) {
  std::vector<double> out(k, 0.0);
  std::size_t n = std::min(k, history.runs.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& run = history.runs[history.runs.size() - 1 - i];
    out[i] = run.verdict == Verdict::Fail ? 1.0 : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Name tokenization and bag-of-words
// ---------------------------------------------------------------------------

inline std::vector<std::string> tokenize_name(std::string_view target) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(cur);
    cur.clear();
  };
  for (char c : target) {
    if (c == '/' || c == ':' || c == '_' || c == '.' || c == '-') {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return tokens;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  // Dense indices in sorted token order, deterministic for a given corpus.
  static Vocabulary fit(const std::vector<std::string>& names) {
    std::map<std::string, std::size_t> index;
    for (const auto& name : names)
      for (auto& tok : tokenize_name(name)) index.emplace(tok, 0);
    std::size_t i = 0;
    for (auto& [tok, idx] : index) idx = i++;
    Vocabulary v;
    v.index_ = std::move(index);
    return v;
  }

  std::size_t size() const { return index_.size(); }

  std::optional<std::size_t> lookup(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Token counts; out-of-vocabulary tokens are ignored.
  std::vector<double> bow_vector(std::string_view target) const {
    std::vector<double> counts(index_.size(), 0.0);
    for (auto& tok : tokenize_name(target)) {
      auto it = index_.find(tok);
      if (it != index_.end()) counts[it->second] += 1.0;
    }
    return counts;
  }

  nlohmann::json to_json() const {
    nlohmann::json tokens = nlohmann::json::object();
    for (const auto& [tok, idx] : index_) tokens[tok] = idx;
    return {{"tokens", tokens}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    for (auto& [tok, idx] : j.at("tokens").items())
      v.index_[tok] = idx.get<std::size_t>();
    return v;
  }

 private:
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PCAModel {
  std::vector<double> mean;                       // length V
  std::vector<std::vector<double>> components;    // d rows of length V
  std::vector<double> explained_variance;         // length d, non-increasing

  std::size_t input_dim() const { return mean.size(); }
  std::size_t output_dim() const { return components.size(); }

  nlohmann::json to_json() const {
    return {{"mean", mean},
            {"components", components},
            {"explained_variance", explained_variance}};
  }

  static PCAModel from_json(const nlohmann::json& j) {
    PCAModel m;
    m.mean = j.at("mean").get<std::vector<double>>();
    m.components = j.at("components").get<std::vector<std::vector<double>>>();
    m.explained_variance = j.at("explained_variance").get<std::vector<double>>();
    return m;
  }
};

// Mean-centered covariance eigendecomposition; components are the top-d
// eigenvectors, sign-fixed so each one's first nonzero entry is positive.
// Directions with (numerically) zero variance come back as zero vectors.
inline PCAModel fit_pca(const std::vector<std::vector<double>>& rows,
                        std::size_t d) {
  const std::size_t n = rows.size();
  if (n < 2) throw std::invalid_argument("fit_pca: need at least 2 rows");
  const std::size_t v = rows[0].size();
  if (d > std::min(n - 1, v))
    throw std::invalid_argument("fit_pca: d must be <= min(N-1, V)");

  Eigen::MatrixXd x(n, v);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != v)
      throw std::invalid_argument("fit_pca: ragged input rows");
    for (std::size_t j = 0; j < v; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }

  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  // Eigen returns eigenvalues in increasing order.
  const auto& evals = solver.eigenvalues();
  const auto& evecs = solver.eigenvectors();

  PCAModel model;
  model.mean.assign(mean.data(), mean.data() + v);
  model.components.resize(d);
  model.explained_variance.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    Eigen::Index col = static_cast<Eigen::Index>(v - 1 - i);
    double ev = evals(col);
    auto& comp = model.components[i];
    comp.assign(v, 0.0);
    if (ev <= 1e-12) {
      model.explained_variance[i] = 0.0;
      continue;
    }
    model.explained_variance[i] = ev;
    Eigen::VectorXd vec = evecs.col(col);
    for (Eigen::Index j = 0; j < vec.size(); ++j) {
      if (std::abs(vec(j)) > 1e-12) {
        if (vec(j) < 0) vec = -vec;
        break;
      }
    }
    for (std::size_t j = 0; j < v; ++j) comp[j] = vec(static_cast<Eigen::Index>(j));
  }
  return model;
}

// components * (v - mean)
inline std::vector<double> project_pca(const PCAModel& model,
                                       const std::vector<double>& v) {
  if (v.size() != model.input_dim())
    throw std::invalid_argument("project_pca: input length mismatch");
  std::vector<double> out(model.output_dim(), 0.0);
  for (std::size_t i = 0; i < model.output_dim(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < model.input_dim(); ++j)
      acc += model.components[i][j] * (v[j] - model.mean[j]);
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

struct FeatureConfig {
  std::size_t history_length = 25;     // k
  std::size_t embedding_dim = 16;      // d
  double recency_horizon = 100.0;      // H, cycles
  double cold_avg_duration = 1.0;      // value for never-executed targets

  std::size_t feature_dim() const { return history_length + embedding_dim + 3; }
};

// Layout: [history k | name embedding d | last_failure | last_execution |
// avg_duration]. Recency features are (now - cycle)/H clamped to [0,1] and
// 1.0 for never-seen targets; avg_duration is the target's mean recorded
// duration over the suite's p95 duration, clamped to [0,2].
inline std::vector<double> assemble_features(const TestHistory& history,
                                             const std::vector<double>& name_embedding,
                                             std::int64_t now,
                                             const FeatureConfig& cfg,
                                             double suite_p95_duration_ms) {
  std::vector<double> out;
  out.reserve(cfg.feature_dim());

  auto hist = encode_history(history, cfg.history_length);
  out.insert(out.end(), hist.begin(), hist.end());

  if (name_embedding.size() != cfg.embedding_dim)
    throw std::invalid_argument("assemble_features: embedding length mismatch");
  out.insert(out.end(), name_embedding.begin(), name_embedding.end());

  auto recency = [&](std::optional<std::int64_t> cycle) {
    if (!cycle) return 1.0;
    double delta = static_cast<double>(now - *cycle);
    return std::clamp(delta / cfg.recency_horizon, 0.0, 1.0);
  };
  out.push_back(recency(history.last_failure_cycle));
  out.push_back(recency(history.last_execution_cycle()));

  if (history.runs.empty() || suite_p95_duration_ms <= 0.0) {
    out.push_back(cfg.cold_avg_duration);
  } else {
    double sum = 0.0;
    for (const auto& run : history.runs) sum += static_cast<double>(run.duration_ms);
    double avg = sum / static_cast<double>(history.runs.size());
    out.push_back(std::clamp(avg / suite_p95_duration_ms, 0.0, 2.0));
  }
  return out;
}

}  // namespace ciopt
