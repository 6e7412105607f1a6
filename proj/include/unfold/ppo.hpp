#pragma once

// Stage-2 actor-critic fine-tuning with the clipped surrogate objective.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "unfold/env.hpp"
#include "unfold/neuralnet.hpp"
#include "unfold/pretrain.hpp"
#include "unfold/rng.hpp"

namespace unfold {

struct PPOConfig {
  double gamma = 0.99;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 64;
  int rollout_steps = 512;
  int envs = 8;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double lr = 3e-4;
  double critic_lr = 3e-4;
  int max_episode_steps = 10;
  double success_threshold = 0.95;
  bool normalize_advantages = true;
  bool scale_rewards = true;
  // Critic targets from scaled rather than raw rewards.
  bool scaled_returns = true;
  double max_grad_norm = 0.0;  // 0 disables clipping

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

// Dense -1 / 20 * delta reward plus 5 when coverage crosses 0.9 upwards.
double compute_reward(double prev_cov, double new_cov);

// Running population standard deviation of every reward seen (Welford).
class RewardScaler {
 public:
  static constexpr double kFloor = 1e-8;

  void update(double r);
  // max(sigma, floor); 1 until two different rewards have been seen.
  double sigma() const;
  // r / sigma().
  double scale(double r) const;
  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

double advantage(double scaled_reward, double value, double next_value, bool done, double gamma);

struct Transition {
  Observation obs;
  std::vector<std::uint8_t> mask;
  std::uint32_t action = 0;
  double log_prob_old = 0.0;
  double entropy = 0.0;
  double reward = 0.0;
  double scaled_reward = 0.0;
  bool done = false;
  double value = 0.0;       // V(o_t)
  double next_value = 0.0;  // V(o_{t+1}); 0 when done
  double coverage_before = 0.0;
  double coverage_after = 0.0;
  std::uint64_t episode = 0;
  int step = 0;
  // Filled by finalize.
  double advantage = 0.0;
  double ret = 0.0;
};

enum class EpisodeEnd { Threshold, MaxSteps, OutOfObservation, NoValidAction, SimFailure };
const char* to_string(EpisodeEnd end);

struct EpisodeResult {
  std::vector<Transition> transitions;
  EpisodeEnd end = EpisodeEnd::MaxSteps;
  std::string error;  // simulator failure message
};

// Runs one episode from the env's current state with the stochastic policy.
// Rewards are raw here; the scaler is applied afterwards in episode order.
EpisodeResult run_episode(ClothEnv& env, const NetSpec& spec, const ParamSet<float>& actor,
                          const ParamSet<float>& critic, const PPOConfig& cfg, Rng& rng);

class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity) : capacity_(capacity) {}

  // Appends a whole episode, scaling its rewards through `scaler` in order.
  // Returns false when the buffer is already at capacity.
  bool add_episode(std::vector<Transition> episode, RewardScaler& scaler, bool scale_rewards);
  // One-step advantages and discounted return-to-go targets.
  void finalize(double gamma, bool scaled_returns);
  void clear();

  bool full() const { return transitions_.size() >= capacity_; }
  bool finalized() const { return finalized_; }
  std::size_t size() const { return transitions_.size(); }
  const std::vector<Transition>& transitions() const { return transitions_; }
  std::vector<Transition>& transitions() { return transitions_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> transitions_;
  bool finalized_ = false;
};

// Network-ready view of a transition.
template <typename T>
struct PPOItem {
  std::vector<T> stack;   // [L][C][H][W]
  std::vector<T> obs;     // [C][H][W]
  std::vector<std::uint8_t> mask;
  std::size_t action = 0;
  double log_prob_old = 0.0;
  double advantage = 0.0;
  double target = 0.0;
};

template <typename T>
PPOItem<T> make_item(const NetSpec& spec, const ActionSpaceConfig& action, const Transition& t);

struct PPODiagnostics {
  double loss = 0.0;
  double loss_policy = 0.0;
  double loss_value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  double ratio_mean = 0.0;
};

// Full objective on a minibatch:
//   -mean min(p A, clip(p, 1-eps, 1+eps) A) + c_v mean (V - target)^2 - c_H mean H
// Advantages are normalized within the minibatch when the config says so.
// Accumulates gradients when the grads pointers are given. Throws
// NonFiniteError naming the item index on a non-finite ratio.
template <typename T>
PPODiagnostics ppo_loss(const NetSpec& spec, const ParamSet<T>& actor, const ParamSet<T>& critic,
                        std::span<const PPOItem<T>> batch, int height, int width,
                        const PPOConfig& cfg, ParamSet<T>* actor_grads,
                        ParamSet<T>* critic_grads);

struct IterationStats {
  int iteration = 0;
  std::size_t steps = 0;
  std::size_t episodes = 0;
  double mean_reward = 0.0;
  double mean_final_coverage = 0.0;
  double loss_policy = 0.0;
  double loss_value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

struct TrainState {
  ParamSet<float> actor;
  ParamSet<float> critic;
  RewardScaler scaler;
  std::uint64_t episodes = 0;
};

// Worker-local environment and random stream for rollouts.
struct RolloutWorker {
  ClothEnv env;
  Rng rng;
};

// Collects whole episodes across the workers in rounds (one episode per
// worker per round, in parallel) until the buffer holds `rollout_steps`
// transitions; episodes enter the buffer in worker order. Each episode starts
// from a task drawn from the worker's stream.
void collect_rollout(std::vector<RolloutWorker>& workers, const NetSpec& spec, TrainState& state,
                     const PPOConfig& cfg, const std::vector<Task>& tasks, RolloutBuffer& buffer,
                     std::vector<EpisodeResult>* episode_log = nullptr);

// K epochs of shuffled minibatch updates on a finalized buffer.
IterationStats ppo_update(const NetSpec& spec, const ActionSpaceConfig& action, TrainState& state,
                          Adam<float>& actor_opt, Adam<float>& critic_opt, const PPOConfig& cfg,
                          const RolloutBuffer& buffer, Rng& rng);

}  // namespace unfold
