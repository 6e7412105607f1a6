#include "unfold/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>

namespace unfold {

float delta_label(double coverage_before, double coverage_after) {
  return static_cast<float>(std::clamp(coverage_after - coverage_before, -1.0, 1.0));
}

std::size_t masked_argmax(std::span<const double> values, std::span<const std::uint8_t> mask) {
  if (values.size() != mask.size()) throw std::invalid_argument("values and mask sizes differ");
  std::size_t best = values.size();
  for (std::size_t k = 0; k < values.size(); ++k)
    if (mask[k] && (best == values.size() || values[k] > values[best])) best = k;
  if (best == values.size()) throw NoValidAction();
  return best;
}

std::size_t greedy_action(const NetSpec& spec, const ParamSet<float>& params,
                          const Observation& obs, const ActionSpaceConfig& cfg) {
  const MaskStack masks = build_masks(obs, cfg);
  const auto values = value_maps(spec, params, build_layer_stack(obs, cfg));
  return masked_argmax(values, masks.mask);
}

std::size_t random_valid_action(const MaskStack& masks, Rng& rng) {
  const std::size_t n = masks.valid_count();
  if (n == 0) throw NoValidAction();
  std::size_t target = rng.below(n);
  for (std::size_t k = 0; k < masks.mask.size(); ++k)
    if (masks.mask[k] && target-- == 0) return k;
  throw NoValidAction();
}

double epsilon_schedule(double progress, double start, double end, double decay_fraction) {
  if (decay_fraction <= 0.0 || progress >= decay_fraction) return end;
  const double t = std::clamp(progress / decay_fraction, 0.0, 1.0);
  return start + (end - start) * t;
}

Observation sample_observation(const PretrainSample& sample, const ObsGeometry& geometry) {
  const std::size_t plane = geometry.pixel_count();
  if (sample.observation.size() != 2 * plane)
    throw ShapeError("sample observation does not match the observation geometry");
  Observation obs;
  obs.geometry = geometry;
  obs.occupancy.assign(sample.observation.begin(), sample.observation.begin() + static_cast<std::ptrdiff_t>(plane));
  obs.height.assign(sample.observation.begin() + static_cast<std::ptrdiff_t>(plane), sample.observation.end());
  return obs;
}

namespace {

struct PendingSample {
  PretrainSample sample;
  bool positive = false;
};

struct WorkerLog {
  std::exception_ptr error;
  std::vector<PendingSample> samples;
  std::size_t episodes = 0;
  std::size_t no_valid_action = 0;
};

void start_episode(CollectWorker& w, const std::vector<Task>& tasks, WorkerLog& log) {
  w.env.reset(tasks[w.rng.below(tasks.size())]);
  w.episode_steps = 0;
  w.in_episode = true;
  ++log.episodes;
}

void run_worker(CollectWorker& w, const NetSpec& spec, const ParamSet<float>& params, int steps,
                double epsilon, const std::vector<Task>& tasks, const EpisodeRules& rules,
                WorkerLog& log) {
  const ActionSpaceConfig& cfg = w.env.config().action;
  for (int s = 0; s < steps; ++s) {
    if (!w.in_episode) start_episode(w, tasks, log);
    const Observation obs = w.env.observe();
    const MaskStack masks = build_masks_unchecked(obs, cfg);
    if (masks.valid_count() == 0) {
      ++log.no_valid_action;
      w.in_episode = false;
      --s;
      // Tasks without any valid action would otherwise loop forever.
      if (log.no_valid_action > static_cast<std::size_t>(steps) + 16) throw NoValidAction();
      continue;
    }
    std::size_t k;
    if (w.rng.uniform() < epsilon) {
      k = random_valid_action(masks, w.rng);
    } else {
      const auto values = value_maps(spec, params, build_layer_stack(obs, cfg));
      k = masked_argmax(values, masks.mask);
    }
    const StepResult r = w.env.step(k);
    PendingSample p;
    p.sample.observation.reserve(obs.occupancy.size() * 2);
    p.sample.observation.insert(p.sample.observation.end(), obs.occupancy.begin(), obs.occupancy.end());
    p.sample.observation.insert(p.sample.observation.end(), obs.height.begin(), obs.height.end());
    p.sample.action = static_cast<std::uint32_t>(k);
    p.sample.label = delta_label(r.coverage_before, r.coverage_after);
    p.positive = r.coverage_after > r.coverage_before;
    log.samples.push_back(std::move(p));
    ++w.episode_steps;
    if (w.episode_steps >= rules.max_steps || w.env.coverage() > rules.success_threshold ||
        w.env.out_of_observation())
      w.in_episode = false;
  }
}

}  // namespace

CollectStats collect(std::vector<CollectWorker>& workers, const NetSpec& spec,
                     const ParamSet<float>& params, int steps_per_worker, double epsilon,
                     const std::vector<Task>& tasks, const EpisodeRules& rules,
                     ReplayStore& store) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (tasks.empty()) throw std::invalid_argument("collection needs at least one task");
  std::vector<WorkerLog> logs(workers.size());
  const int n = static_cast<int>(workers.size());
#pragma omp parallel for schedule(static, 1)
  for (int i = 0; i < n; ++i) {
    WorkerLog& log = logs[static_cast<std::size_t>(i)];
    try {
      run_worker(workers[static_cast<std::size_t>(i)], spec, params, steps_per_worker, epsilon,
                 tasks, rules, log);
    } catch (...) {
      log.error = std::current_exception();
    }
  }
  for (const WorkerLog& log : logs)
    if (log.error) std::rethrow_exception(log.error);
  CollectStats stats;
  for (const WorkerLog& log : logs) {
    stats.episodes += log.episodes;
    stats.no_valid_action += log.no_valid_action;
    for (const PendingSample& p : log.samples) {
      ++stats.steps;
      stats.positive += p.positive ? 1 : 0;
      stats.stored += store.append(p.sample) ? 1 : 0;
    }
  }
  return stats;
}

template <typename T>
T pretrain_loss(const NetSpec& spec, const ParamSet<T>& params, std::span<const T> inputs,
                int batch, int height, int width, std::span<const std::size_t> pixels,
                std::span<const T> labels, ParamSet<T>* grads) {
  if (batch <= 0) throw std::invalid_argument("pretraining batch must be non-empty");
  if (pixels.size() != static_cast<std::size_t>(batch) || labels.size() != pixels.size())
    throw ShapeError("pretraining batch arrays disagree in length");
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  ForwardTape<T> tape;
  const auto out = policy_forward<T>(spec, params, inputs, batch, height, width, grads ? &tape : nullptr);
  T loss = 0;
  std::vector<T> grad_out(grads ? out.size() : 0, T(0));
  for (int b = 0; b < batch; ++b) {
    const std::size_t i = static_cast<std::size_t>(b) * plane + pixels[static_cast<std::size_t>(b)];
    const T err = out[i] - labels[static_cast<std::size_t>(b)];
    loss += err * err;
    if (grads) grad_out[i] = T(2) * err / static_cast<T>(batch);
  }
  loss /= static_cast<T>(batch);
  if (grads) policy_backward<T>(spec, params, tape, grad_out, *grads);
  return loss;
}

template float pretrain_loss<float>(const NetSpec&, const ParamSet<float>&, std::span<const float>,
                                    int, int, int, std::span<const std::size_t>,
                                    std::span<const float>, ParamSet<float>*);
template double pretrain_loss<double>(const NetSpec&, const ParamSet<double>&,
                                      std::span<const double>, int, int, int,
                                      std::span<const std::size_t>, std::span<const double>,
                                      ParamSet<double>*);

double pretrain_step(const NetSpec& spec, ParamSet<float>& params, Adam<float>& adam,
                     const ActionSpaceConfig& action, std::span<const PretrainSample> batch,
                     double lr) {
  if (batch.empty()) throw std::invalid_argument("pretraining batch must be non-empty");
  ObsGeometry geometry;
  geometry.width = action.width;
  geometry.height = action.height;
  const std::size_t plane = static_cast<std::size_t>(action.width) * action.height;
  std::vector<float> inputs;
  inputs.reserve(batch.size() * 2 * plane);
  std::vector<std::size_t> pixels;
  std::vector<float> labels;
  for (const PretrainSample& s : batch) {
    const LayerIndex idx = unflatten_index(s.action, action);
    const int layer = idx.rotation * static_cast<int>(action.scales.size()) + idx.scale;
    const auto in = slice_input<float>(spec, build_layer(sample_observation(s, geometry), action, layer), 0);
    inputs.insert(inputs.end(), in.begin(), in.end());
    pixels.push_back(static_cast<std::size_t>(idx.v) * action.width + idx.u);
    labels.push_back(s.label);
  }
  ParamSet<float> grads = params.zeros_like();
  const float loss = pretrain_loss<float>(spec, params, inputs, static_cast<int>(batch.size()),
                                          action.height, action.width, pixels, labels, &grads);
  if (!std::isfinite(loss)) throw NonFiniteError("non-finite pretraining loss");
  adam.step(params, grads, lr);
  return loss;
}

}  // namespace unfold
