#pragma once

// Gym-style wrapper around the simulator: one cloth, one workspace, the
// action space, and coverage bookkeeping.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "unfold/actionmaps.hpp"
#include "unfold/clothsim.hpp"

namespace unfold {

struct ClothSpec {
  int rows = 16;
  int cols = 16;
  double spacing = 0.02;
};

struct EnvConfig {
  ClothSpec cloth;
  SimConfig sim;
  ObsGeometry geometry;
  ActionSpaceConfig action;
};

// A crumpled starting configuration, storable without re-running the crumpler.
struct Task {
  std::uint64_t seed = 0;
  ClothSpec cloth;
  std::vector<float> positions;  // rows*cols*3, row-major particle order
  bool reached = true;           // crumpler met its coverage target

  ClothState to_state() const;
  static Task from_state(std::uint64_t seed, const ClothState& state, bool reached);
};

struct StepResult {
  WorldAction action;
  ActionEvents events;
  double coverage_before = 0.0;  // fractions of the flat area
  double coverage_after = 0.0;
};

class ClothEnv {
 public:
  explicit ClothEnv(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  void reset(const Task& task);
  void reset(ClothState state);

  const ClothState& state() const { return state_; }
  double a_flat() const { return a_flat_; }
  // c_pct / 100 of the current state.
  double coverage() const { return coverage_; }
  bool out_of_observation() const { return coverage_ == 0.0; }
  Observation observe() const;

  StepResult step(std::size_t flat_action);
  StepResult step(const WorldAction& action);

 private:
  EnvConfig cfg_;
  ClothState state_;
  double a_flat_ = 0.0;
  double coverage_ = 0.0;
};

// Task file: "UTSK", u32 version = 1, u32 task count, then per task
// u64 seed, u32 rows, u32 cols, f32 spacing, u8 reached, and rows*cols*3
// little-endian f32 positions (row-major particles, xyz).
void save_tasks(const std::vector<Task>& tasks, const std::filesystem::path& path);
std::vector<Task> load_tasks(const std::filesystem::path& path);

struct CrumpleSettings {
  double target_cov_max = 55.0;
  CrumpleConfig crumple;
};

Task make_task(std::uint64_t seed, const EnvConfig& env, const CrumpleSettings& settings);
// Task i uses seed Rng::derive(base_seed, i).
std::vector<Task> make_task_set(std::uint64_t base_seed, int count, const EnvConfig& env,
                                const CrumpleSettings& settings);

}  // namespace unfold
