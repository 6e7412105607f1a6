#pragma once

// Evaluation protocol, its CSV artifacts, episode replay and frame dumps.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unfold/env.hpp"
#include "unfold/neuralnet.hpp"

namespace unfold {

enum class PolicyMode { Greedy, Sample, Random };
PolicyMode parse_policy_mode(const std::string& name);
const char* to_string(PolicyMode mode);

struct EvalConfig {
  PolicyMode mode = PolicyMode::Greedy;
  int max_steps = 10;
  double success_threshold = 0.95;  // fraction; checked before every step
  std::uint64_t seed = 0;           // sampling and random modes
};

// Coverages below are percentages (c_pct).
struct EvalStep {
  std::size_t task = 0;
  std::uint64_t seed = 0;
  int step = 0;
  std::uint32_t action = 0;
  double coverage_before = 0.0;
  double coverage_after = 0.0;
  bool positive = false;  // strictly increased coverage
};

struct EvalEpisode {
  std::size_t task = 0;
  std::uint64_t seed = 0;
  double initial_coverage = 0.0;
  double final_coverage = 0.0;
  double delta_coverage = 0.0;
  int steps = 0;
  int positive_steps = 0;
  std::string end;
};

struct EvalSummary {
  std::string policy;
  std::size_t tasks = 0;
  std::size_t total_steps = 0;
  std::size_t positive_steps = 0;
  double final_coverage_mean = 0.0;
  double delta_coverage_mean = 0.0;
  double percent_positive = 0.0;  // 0 when no step was taken
};

struct EvalResult {
  std::vector<EvalStep> steps;
  std::vector<EvalEpisode> episodes;
  EvalSummary summary;
};

// Checks tasks against the env cloth and (outside random mode) the actor
// against the net spec before running anything, then runs every task in
// parallel. Results are in task order and do not depend on thread count.
EvalResult evaluate(const EnvConfig& env, const NetSpec& spec, const ParamSet<float>* actor,
                    const std::vector<Task>& tasks, const EvalConfig& cfg);

// Aggregates from the per-step and per-episode rows alone.
EvalSummary summarize(const std::string& policy, const std::vector<EvalStep>& steps,
                      const std::vector<EvalEpisode>& episodes);

// steps.csv, episodes.csv, summary.csv in `dir`; numbers printed with
// round-trip precision.
void write_eval_csv(const EvalResult& result, const std::filesystem::path& dir);
std::vector<EvalStep> read_steps_csv(const std::filesystem::path& path);

// 8-bit grayscale frame: 0 off the cloth, 64..255 for height 0..full_scale.
std::vector<std::uint8_t> frame_pixels(const Observation& obs, double full_scale = 0.1);
void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& pixels);

struct ReplayReport {
  std::size_t episodes = 0;
  std::size_t steps = 0;
  std::size_t mismatches = 0;  // steps whose coverage differs from the log
  std::vector<std::filesystem::path> frames;
};

// Re-executes logged actions from the logged tasks; frames (when a directory
// is given) are named task{T}_step{S}.pgm, step 0 being the start state.
ReplayReport replay(const EnvConfig& env, const std::vector<Task>& tasks,
                    const std::vector<EvalStep>& log, const std::filesystem::path& frame_dir);

}  // namespace unfold
