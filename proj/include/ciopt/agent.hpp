#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciopt/network.hpp"
#include "ciopt/rng.hpp"

namespace ciopt {

struct Experience {
  std::vector<double> state;
  double action_score = 0.0;  // score emitted, post-noise
  double reward = 0.0;
  std::optional<std::vector<double>> next_state;
};

// Fixed-capacity FIFO ring of experiences.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 4096) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  std::uint64_t insertions() const { return insertions_; }
  bool full() const { return items_.size() == capacity_; }

  void push(Experience e) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(e));
    } else {
      items_[head_] = std::move(e);
      head_ = (head_ + 1) % capacity_;
    }
    ++insertions_;
  }

  const Experience& at(std::size_t i) const { return items_[i]; }

  // Uniform with replacement.
  std::vector<const Experience*> sample(std::size_t batch_size, Rng& rng) const {
    if (items_.empty()) throw std::logic_error("ReplayBuffer::sample: empty buffer");
    std::vector<const Experience*> batch(batch_size);
    for (auto& slot : batch) slot = &items_[rng.next_index(items_.size())];
    return batch;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next eviction slot once full
  std::uint64_t insertions_ = 0;
  std::vector<Experience> items_;
};

// Gaussian score noise in place of epsilon-greedy: continuous actions have no
// discrete arm to flip, so exploration perturbs the Q-values directly.
struct ExplorationPolicy {
  double sigma = 0.15;
  double decay = 0.999;  // applied once per cycle
  double sigma_min = 0.01;

  void decay_step() { sigma = std::max(sigma * decay, sigma_min); }
};

struct AgentConfig {
  NetworkConfig network;
  AdamConfig adam;
  ExplorationPolicy exploration;
  std::size_t buffer_capacity = 4096;
  std::size_t batch_size = 64;
};

// Pointwise deep Q scorer. Q-targets are the immediate rewards (discount 0):
// each test is scored independently, so there is no successor value to
// bootstrap from. next_state is stored but unused.
class Agent {
 public:
  Agent(AgentConfig cfg, std::uint64_t seed)
      : cfg_(cfg),
        init_rng_(derive_seed(seed, "agent/init")),
        dropout_rng_(derive_seed(seed, "agent/dropout")),
        sample_rng_(derive_seed(seed, "agent/sample")),
        noise_rng_(derive_seed(seed, "agent/noise")),
        network_(cfg.network, init_rng_),
        optimizer_(cfg.adam, network_.param_count()),
        buffer_(cfg.buffer_capacity),
        exploration_(cfg.exploration) {}

  const AgentConfig& config() const { return cfg_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  QNetwork& network() { return network_; }
  const ExplorationPolicy& exploration() const { return exploration_; }

  double score(const std::vector<double>& features) const {
    return network_.forward(features);
  }

  // One independent noise draw per target when exploring.
  std::vector<double> score_suite(const std::vector<std::vector<double>>& features,
                                  bool explore) {
    std::vector<double> scores;
    scores.reserve(features.size());
    for (const auto& f : features) {
      double s = network_.forward(f);
      if (explore && exploration_.sigma > 0.0)
        s += noise_rng_.next_gaussian(0.0, exploration_.sigma);
      scores.push_back(s);
    }
    return scores;
  }

  void push_experience(Experience e) { buffer_.push(std::move(e)); }

  bool ready_to_train() const { return buffer_.full(); }

  // One Adam step on a uniformly sampled batch. Returns the pre-update loss.
  double train_step() {
    auto batch = buffer_.sample(cfg_.batch_size, sample_rng_);
    std::vector<std::pair<const std::vector<double>*, double>> pairs;
    pairs.reserve(batch.size());
    for (const Experience* e : batch) pairs.emplace_back(&e->state, e->reward);
    std::vector<double> grad;
    double loss = network_.batch_loss_and_grad(pairs, grad, &dropout_rng_);
    if (!std::isfinite(loss))
      throw TrainingError("non-finite training loss (step " +
                          std::to_string(optimizer_.step_count() + 1) + ")");
    optimizer_.step(network_.params(), grad);
    return loss;
  }

  void end_of_cycle() { exploration_.decay_step(); }

  nlohmann::json checkpoint() const {
    return {{"version", 1},
            {"network", network_.to_json()},
            {"adam", optimizer_.to_json()},
            {"exploration",
             {{"sigma", exploration_.sigma},
              {"decay", exploration_.decay},
              {"sigma_min", exploration_.sigma_min}}},
            {"buffer",
             {{"capacity", buffer_.capacity()},
              {"size", buffer_.size()},
              {"insertions", buffer_.insertions()}}},
            {"batch_size", cfg_.batch_size}};
  }

  void restore(const nlohmann::json& j) {
    if (j.at("version").get<int>() != 1)
      throw std::invalid_argument("unsupported checkpoint version");
    network_ = QNetwork::from_json(j.at("network"));
    optimizer_ = AdamOptimizer::from_json(j.at("adam"));
    exploration_.sigma = j.at("exploration").at("sigma").get<double>();
    exploration_.decay = j.at("exploration").at("decay").get<double>();
    exploration_.sigma_min = j.at("exploration").at("sigma_min").get<double>();
  }

 private:
  AgentConfig cfg_;
  Rng init_rng_;
  Rng dropout_rng_;
  Rng sample_rng_;
  Rng noise_rng_;
  QNetwork network_;
  AdamOptimizer optimizer_;
  ReplayBuffer buffer_;
  ExplorationPolicy exploration_;
};

}  // namespace ciopt
