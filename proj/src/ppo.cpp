#include "unfold/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace unfold {

void PPOConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo.gamma must lie in [0, 1]");
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("ppo.clip must lie in (0, 1)");
  if (!(success_threshold > 0.0 && success_threshold <= 1.0))
    throw std::invalid_argument("ppo.success_threshold must lie in (0, 1]");
  if (epochs < 1 || minibatch < 1 || rollout_steps < 1 || envs < 1 || max_episode_steps < 1)
    throw std::invalid_argument("ppo counts must be positive");
  if (!(lr > 0.0) || !(critic_lr > 0.0)) throw std::invalid_argument("ppo learning rates must be positive");
  if (value_coef < 0.0 || entropy_coef < 0.0 || max_grad_norm < 0.0)
    throw std::invalid_argument("ppo coefficients must be non-negative");
}

double compute_reward(double prev_cov, double new_cov) {
  double r = 0.0;
  if (new_cov < prev_cov) r = -1.0;
  else if (new_cov > prev_cov) r = 20.0 * new_cov - 20.0 * prev_cov;
  if (prev_cov <= 0.9 && new_cov > 0.9) r += 5.0;
  return r;
}

void RewardScaler::update(double r) {
  ++count_;
  const double delta = r - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (r - mean_);
}

double RewardScaler::sigma() const {
  // No spread yet: identical rewards so far would otherwise divide by the floor.
  if (count_ < 2 || m2_ == 0.0) return 1.0;
  return std::max(std::sqrt(m2_ / static_cast<double>(count_)), kFloor);
}

double RewardScaler::scale(double r) const { return r / sigma(); }

double advantage(double scaled_reward, double value, double next_value, bool done, double gamma) {
  return scaled_reward + gamma * (done ? 0.0 : next_value) - value;
}

const char* to_string(EpisodeEnd end) {
  switch (end) {
    case EpisodeEnd::Threshold: return "threshold";
    case EpisodeEnd::MaxSteps: return "max_steps";
    case EpisodeEnd::OutOfObservation: return "out_of_observation";
    case EpisodeEnd::NoValidAction: return "no_valid_action";
    case EpisodeEnd::SimFailure: return "sim_failure";
  }
  return "unknown";
}

EpisodeResult run_episode(ClothEnv& env, const NetSpec& spec, const ParamSet<float>& actor,
                          const ParamSet<float>& critic, const PPOConfig& cfg, Rng& rng) {
  EpisodeResult result;
  auto& ts = result.transitions;
  const ActionSpaceConfig& action = env.config().action;
  // A start already past the threshold gets one step, then ends.
  const bool solved_at_start = env.coverage() > cfg.success_threshold;
  for (int step = 0; step < cfg.max_episode_steps; ++step) {
    Observation obs = env.observe();
    MaskStack masks = build_masks_unchecked(obs, action);
    if (masks.valid_count() == 0) {
      result.end = EpisodeEnd::NoValidAction;
      break;
    }
    const auto logits = forward_policy(spec, actor, build_layer_stack(obs, action));
    const MaskedCategorical dist(logits, masks.mask);
    Transition t;
    t.action = static_cast<std::uint32_t>(dist.sample(rng));
    t.log_prob_old = dist.log_prob(t.action);
    t.entropy = dist.entropy();
    t.value = forward_critic(spec, critic, obs);
    t.step = step;
    StepResult r;
    try {
      r = env.step(t.action);
    } catch (const SimError& e) {
      result.end = EpisodeEnd::SimFailure;
      result.error = e.what();
      break;
    }
    t.obs = std::move(obs);
    t.mask = std::move(masks.mask);
    t.coverage_before = r.coverage_before;
    t.coverage_after = r.coverage_after;
    t.reward = compute_reward(r.coverage_before, r.coverage_after);
    ts.push_back(std::move(t));
    if (solved_at_start || env.coverage() > cfg.success_threshold) {
      result.end = EpisodeEnd::Threshold;
      break;
    }
    if (env.out_of_observation()) {
      result.end = EpisodeEnd::OutOfObservation;
      break;
    }
  }
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) ts[i].next_value = ts[i + 1].value;
  if (!ts.empty()) {
    ts.back().done = true;
    ts.back().next_value = 0.0;
  }
  return result;
}

bool RolloutBuffer::add_episode(std::vector<Transition> episode, RewardScaler& scaler,
                                bool scale_rewards) {
  if (full()) return false;
  for (Transition& t : episode) {
    scaler.update(t.reward);
    t.scaled_reward = scale_rewards ? scaler.scale(t.reward) : t.reward;
    transitions_.push_back(std::move(t));
  }
  finalized_ = false;
  return true;
}

void RolloutBuffer::finalize(double gamma, bool scaled_returns) {
  double ret = 0.0;
  for (std::size_t i = transitions_.size(); i-- > 0;) {
    Transition& t = transitions_[i];
    const double r = scaled_returns ? t.scaled_reward : t.reward;
    ret = t.done ? r : r + gamma * ret;
    t.ret = ret;
    t.advantage = advantage(t.scaled_reward, t.value, t.next_value, t.done, gamma);
  }
  finalized_ = true;
}

void RolloutBuffer::clear() {
  transitions_.clear();
  finalized_ = false;
}

template <typename T>
PPOItem<T> make_item(const NetSpec& spec, const ActionSpaceConfig& action, const Transition& t) {
  PPOItem<T> item;
  item.stack = stack_input<T>(spec, build_layer_stack(t.obs, action));
  item.obs = observation_input<T>(spec, t.obs);
  item.mask = t.mask;
  item.action = t.action;
  item.log_prob_old = t.log_prob_old;
  item.advantage = t.advantage;
  item.target = t.ret;
  return item;
}

template PPOItem<float> make_item<float>(const NetSpec&, const ActionSpaceConfig&, const Transition&);
template PPOItem<double> make_item<double>(const NetSpec&, const ActionSpaceConfig&, const Transition&);

template <typename T>
PPODiagnostics ppo_loss(const NetSpec& spec, const ParamSet<T>& actor, const ParamSet<T>& critic,
                        std::span<const PPOItem<T>> batch, int height, int width,
                        const PPOConfig& cfg, ParamSet<T>* actor_grads,
                        ParamSet<T>* critic_grads) {
  if (batch.empty()) throw std::invalid_argument("ppo minibatch must be non-empty");
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const double n = static_cast<double>(batch.size());

  std::vector<double> adv(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) adv[i] = batch[i].advantage;
  if (cfg.normalize_advantages && batch.size() > 1) {
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  PPODiagnostics d;
  d.ratio_min = std::numeric_limits<double>::infinity();
  d.ratio_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PPOItem<T>& item = batch[i];
    const int layers = static_cast<int>(item.stack.size() / (plane * static_cast<std::size_t>(spec.in_channels)));
    ForwardTape<T> tape;
    const auto out = policy_forward<T>(spec, actor, item.stack, layers, height, width,
                                       actor_grads ? &tape : nullptr);
    std::vector<double> z(out.begin(), out.end());
    for (double& x : z) x *= spec.logit_scale;
    const MaskedCategorical dist(z, item.mask);
    const double logp = dist.log_prob(item.action);
    const double ratio = std::exp(logp - item.log_prob_old);
    if (!std::isfinite(ratio))
      throw NonFiniteError("non-finite probability ratio at transition " + std::to_string(i));
    const double a = adv[i];
    const double unclipped = ratio * a;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a;
    const double surr = std::min(unclipped, clipped);
    const double h = dist.entropy();
    d.loss_policy -= surr / n;
    d.entropy += h / n;
    d.clip_fraction += (std::abs(ratio - 1.0) > cfg.clip ? 1.0 : 0.0) / n;
    d.ratio_min = std::min(d.ratio_min, ratio);
    d.ratio_max = std::max(d.ratio_max, ratio);
    d.ratio_mean += ratio / n;

    if (actor_grads) {
      // d surr / d log pi: the unclipped branch carries the gradient whenever
      // it is the active minimum.
      const double g = unclipped <= clipped ? ratio * a : 0.0;
      std::vector<T> grad_out(out.size(), T(0));
      for (std::size_t k = 0; k < z.size(); ++k) {
        if (!item.mask[k]) continue;
        const double p = dist.prob(k);
        const double dlogp = (k == item.action ? 1.0 : 0.0) - p;
        double dz = -g * dlogp;
        if (p > 0.0) dz += cfg.entropy_coef * p * (dist.log_prob(k) + h);
        grad_out[k] = static_cast<T>(spec.logit_scale * dz / n);
      }
      policy_backward<T>(spec, actor, tape, grad_out, *actor_grads);
    }

    ForwardTape<T> ctape;
    const T v = critic_forward<T>(spec, critic, item.obs, 1, height, width,
                                  critic_grads ? &ctape : nullptr)[0];
    const double err = static_cast<double>(v) - item.target;
    d.loss_value += err * err / n;
    if (critic_grads) {
      const T gv = static_cast<T>(cfg.value_coef * 2.0 * err / n);
      critic_backward<T>(spec, critic, ctape, std::span<const T>(&gv, 1), *critic_grads);
    }
  }
  d.loss = d.loss_policy + cfg.value_coef * d.loss_value - cfg.entropy_coef * d.entropy;
  return d;
}

template PPODiagnostics ppo_loss<float>(const NetSpec&, const ParamSet<float>&,
                                        const ParamSet<float>&, std::span<const PPOItem<float>>,
                                        int, int, const PPOConfig&, ParamSet<float>*,
                                        ParamSet<float>*);
template PPODiagnostics ppo_loss<double>(const NetSpec&, const ParamSet<double>&,
                                         const ParamSet<double>&, std::span<const PPOItem<double>>,
                                         int, int, const PPOConfig&, ParamSet<double>*,
                                         ParamSet<double>*);

void collect_rollout(std::vector<RolloutWorker>& workers, const NetSpec& spec, TrainState& state,
                     const PPOConfig& cfg, const std::vector<Task>& tasks, RolloutBuffer& buffer,
                     std::vector<EpisodeResult>* episode_log) {
  if (tasks.empty()) throw std::invalid_argument("rollouts need at least one task");
  const int n = static_cast<int>(workers.size());
  while (buffer.size() < static_cast<std::size_t>(cfg.rollout_steps)) {
    std::vector<EpisodeResult> round(workers.size());
    std::vector<std::exception_ptr> errors(workers.size());
#pragma omp parallel for schedule(static, 1)
    for (int i = 0; i < n; ++i) {
      const auto w = static_cast<std::size_t>(i);
      try {
        RolloutWorker& worker = workers[w];
        worker.env.reset(tasks[worker.rng.below(tasks.size())]);
        round[w] = run_episode(worker.env, spec, state.actor, state.critic, cfg, worker.rng);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    std::size_t added = 0;
    for (EpisodeResult& ep : round) {
      const std::uint64_t id = state.episodes++;
      for (Transition& t : ep.transitions) t.episode = id;
      added += ep.transitions.size();
      if (episode_log) {
        EpisodeResult summary;
        summary.end = ep.end;
        summary.error = ep.error;
        episode_log->push_back(std::move(summary));
      }
      buffer.add_episode(std::move(ep.transitions), state.scaler, cfg.scale_rewards);
    }
    if (added == 0) throw NoValidAction();
  }
}

IterationStats ppo_update(const NetSpec& spec, const ActionSpaceConfig& action, TrainState& state,
                          Adam<float>& actor_opt, Adam<float>& critic_opt, const PPOConfig& cfg,
                          const RolloutBuffer& buffer, Rng& rng) {
  if (!buffer.finalized()) throw std::logic_error("rollout buffer must be finalized before updates");
  const auto& ts = buffer.transitions();
  IterationStats stats;
  stats.steps = ts.size();
  std::vector<std::size_t> order(ts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  int batches = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      std::vector<PPOItem<float>> items;
      items.reserve(end - start);
      for (std::size_t j = start; j < end; ++j) items.push_back(make_item<float>(spec, action, ts[order[j]]));
      ParamSet<float> ga = state.actor.zeros_like();
      ParamSet<float> gc = state.critic.zeros_like();
      const PPODiagnostics d = ppo_loss<float>(spec, state.actor, state.critic, items,
                                               action.height, action.width, cfg, &ga, &gc);
      if (!std::isfinite(d.loss)) throw NonFiniteError("non-finite ppo loss");
      if (cfg.max_grad_norm > 0.0) {
        clip_grad_norm(ga, cfg.max_grad_norm);
        clip_grad_norm(gc, cfg.max_grad_norm);
      }
      actor_opt.step(state.actor, ga, cfg.lr);
      critic_opt.step(state.critic, gc, cfg.critic_lr);
      stats.loss_policy += d.loss_policy;
      stats.loss_value += d.loss_value;
      stats.entropy += d.entropy;
      stats.clip_fraction += d.clip_fraction;
      ++batches;
    }
  }
  if (batches > 0) {
    stats.loss_policy /= batches;
    stats.loss_value /= batches;
    stats.entropy /= batches;
    stats.clip_fraction /= batches;
  }
  double reward = 0.0, final_cov = 0.0;
  for (const Transition& t : ts) {
    reward += t.reward;
    if (t.done) {
      final_cov += t.coverage_after;
      ++stats.episodes;
    }
  }
  if (!ts.empty()) stats.mean_reward = reward / static_cast<double>(ts.size());
  if (stats.episodes > 0) stats.mean_final_coverage = final_cov / static_cast<double>(stats.episodes);
  return stats;
}

}  // namespace unfold
