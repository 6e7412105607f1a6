#pragma once

// Config registry and the stage drivers behind the command line:
// task generation, pretraining, PPO training, evaluation and replay.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "unfold/config.hpp"
#include "unfold/env.hpp"
#include "unfold/evaluate.hpp"
#include "unfold/neuralnet.hpp"
#include "unfold/ppo.hpp"
#include "unfold/pretrain.hpp"

namespace unfold {

struct TaskSetSpec {
  std::uint64_t seed = 0;
  int count = 0;
};

struct PretrainSettings {
  int steps = 4096;          // environment steps in total
  int workers = 8;
  int chunk_steps = 8;       // steps per worker between update rounds
  int updates_per_chunk = 4;
  int batch = 32;
  double lr = 1e-3;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  double epsilon_decay_fraction = 0.5;
  std::size_t capacity = 100000;
  EpisodeRules rules;
  TaskSetSpec tasks{1001, 64};
};

struct TrainSettings {
  int iterations = 20;
  int checkpoint_every = 5;
  TaskSetSpec tasks{2002, 64};
};

struct RunSettings {
  std::uint64_t seed = 0;
  EnvConfig env;
  CrumpleSettings crumple;
  NetSpec net;
  PretrainSettings pretrain;
  PPOConfig ppo;
  TrainSettings train;
  EvalConfig eval;
};

// Every tunable with its default; the key set is closed.
Config default_config();
// Validates and converts. Throws ConfigError on bad values.
RunSettings resolve(const Config& cfg);

// Independent streams of the global seed.
enum class SeedStream : std::uint64_t {
  ActorInit = 1,
  CriticInit = 2,
  Pretrain = 3,
  PretrainBatches = 4,
  Rollouts = 5,
  Minibatches = 6,
  Eval = 7,
};
std::uint64_t stream_seed(const RunSettings& s, SeedStream stream);

using Logger = std::function<void(const std::string&)>;

struct GenTasksResult {
  std::vector<Task> tasks;
  std::vector<double> coverage;  // c_pct per task
};
// Writes the task file and `<out>.manifest.csv`. count must be >= 1.
GenTasksResult gen_tasks(const RunSettings& s, std::uint64_t seed, int count,
                         double target_cov_max, const std::filesystem::path& out);

struct PretrainResult {
  ParamSet<float> params;
  std::filesystem::path checkpoint;
  double final_mse = 0.0;
};
// Outputs in `out_dir`: policy.ckpt, pretrain_metrics.csv, replay.bin.
PretrainResult run_pretrain(const RunSettings& s, const std::filesystem::path& out_dir,
                            const Logger& log = {});

struct TrainResult {
  TrainState state;
  std::vector<IterationStats> iterations;
  std::filesystem::path actor_checkpoint;
  std::filesystem::path critic_checkpoint;
  bool halted = false;  // a non-finite value stopped training
  std::string halt_reason;
};
// `pretrained` empty means a from-scratch actor. Outputs in `out_dir`:
// metrics.csv (one row per transition), iterations.csv, and
// actor_iter{N}.ckpt / critic_iter{N}.ckpt.
TrainResult run_train(const RunSettings& s, const std::filesystem::path& pretrained,
                      const std::filesystem::path& out_dir, const Logger& log = {});

// Writes the eval CSVs into out_dir. `checkpoint` may be empty in random mode.
EvalResult run_eval(const RunSettings& s, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& task_file, const std::filesystem::path& out_dir);

ReplayReport run_replay(const RunSettings& s, const std::filesystem::path& task_file,
                        const std::filesystem::path& steps_csv, const std::filesystem::path& frame_dir);

}  // namespace unfold
