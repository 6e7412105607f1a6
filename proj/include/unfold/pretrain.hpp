#pragma once

// Stage-1 pretraining: act in the simulator, log (observation, action,
// coverage change) samples, and regress the per-pixel value maps on them.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "unfold/env.hpp"
#include "unfold/neuralnet.hpp"
#include "unfold/rng.hpp"

namespace unfold {

struct PretrainSample {
  std::vector<float> observation;  // channel-planar: occupancy plane, then height plane
  std::uint32_t action = 0;
  float label = 0.0f;
};

// Delta coverage (fractions) clipped to [-1, 1].
float delta_label(double coverage_before, double coverage_after);

// Append-only sample log on disk. Each record is
//   u32 payload byte length, payload (f32 observation planes),
//   u32 action index, f32 label
// with no file header. Records are never rewritten; once `capacity` records
// exist further appends are dropped and counted.
class ReplayStore {
 public:
  // Truncates any existing file at `path`.
  ReplayStore(std::filesystem::path path, std::size_t capacity);
  // Reopens an existing log, indexing its records.
  static ReplayStore open(std::filesystem::path path, std::size_t capacity);

  bool append(const PretrainSample& sample);
  PretrainSample get(std::size_t i);
  std::vector<PretrainSample> sample(std::size_t count, Rng& rng);

  std::size_t size() const { return offsets_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dropped() const { return dropped_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  ReplayStore(std::filesystem::path path, std::size_t capacity, bool truncate);

  std::filesystem::path path_;
  std::size_t capacity_;
  std::size_t dropped_ = 0;
  std::vector<std::uint64_t> offsets_;
  std::fstream file_;
  std::uint64_t end_ = 0;
};

// Lowest flat index among the maxima of `values` where mask is set.
// Throws NoValidAction when the mask is empty.
std::size_t masked_argmax(std::span<const double> values, std::span<const std::uint8_t> mask);

std::size_t greedy_action(const NetSpec& spec, const ParamSet<float>& params,
                          const Observation& obs, const ActionSpaceConfig& cfg);

// Uniformly random valid action.
std::size_t random_valid_action(const MaskStack& masks, Rng& rng);

struct EpisodeRules {
  int max_steps = 10;
  double success_threshold = 0.95;  // coverage fraction that ends an episode
};

// One environment worker with its own rng stream and episode position.
struct CollectWorker {
  ClothEnv env;
  Rng rng;
  int episode_steps = 0;
  bool in_episode = false;
};

struct CollectStats {
  std::size_t steps = 0;
  std::size_t episodes = 0;
  std::size_t no_valid_action = 0;
  std::size_t positive = 0;
  std::size_t stored = 0;
};

// Runs `steps_per_worker` steps in every worker (in parallel), then appends
// the samples to `store` in worker order. Each step takes a uniformly random
// valid action with probability epsilon and the greedy action otherwise.
// Episodes start from a task drawn uniformly from `tasks` and end per `rules`
// or when the cloth leaves the observation; NoValidAction also ends them.
CollectStats collect(std::vector<CollectWorker>& workers, const NetSpec& spec,
                     const ParamSet<float>& params, int steps_per_worker, double epsilon,
                     const std::vector<Task>& tasks, const EpisodeRules& rules,
                     ReplayStore& store);

// Epsilon for collection progress in [0, 1]: linear from start to end over
// the first `decay_fraction`, then flat.
double epsilon_schedule(double progress, double start, double end, double decay_fraction);

// Mean over the batch of (head output at pixel_b of item b - label_b)^2.
// inputs holds `batch` single-slice inputs [batch][C][H][W]; pixel_b indexes
// v * width + u. Accumulates d(loss)/d(params) into grads when given.
template <typename T>
T pretrain_loss(const NetSpec& spec, const ParamSet<T>& params, std::span<const T> inputs,
                int batch, int height, int width, std::span<const std::size_t> pixels,
                std::span<const T> labels, ParamSet<T>* grads);

// One Adam step on the MSE of a batch. Returns the loss before the step.
// Throws NonFiniteError on a non-finite loss.
double pretrain_step(const NetSpec& spec, ParamSet<float>& params, Adam<float>& adam,
                     const ActionSpaceConfig& action, std::span<const PretrainSample> batch,
                     double lr);

// Observation rebuilt from a sample's payload.
Observation sample_observation(const PretrainSample& sample, const ObsGeometry& geometry);

}  // namespace unfold
