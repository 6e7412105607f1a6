// Command-line entry point: gen-tasks, pretrain, train, eval, replay.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "unfold/pipeline.hpp"

namespace {

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloth unfolding: simulator, pretraining, PPO fine-tuning and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "Config file (dotted.key = value lines)");
  app.add_option("--set", overrides, "Override one config entry, key=value (repeatable)");
  app.add_option("--seed", seed, "Global seed (overrides the config's seed)");
  app.add_option("--out-dir", out_dir, "Directory for all outputs");

  auto* gen = app.add_subcommand("gen-tasks", "Generate a crumpled task file");
  int count = 0;
  double target = -1.0;
  std::string task_out;
  gen->add_option("--count", count, "Number of tasks")->required();
  gen->add_option("--target", target, "Maximum coverage percentage (default: sim.crumple.target_cov_max)");
  gen->add_option("--out", task_out, "Task file (default: <out-dir>/tasks.bin)");

  auto* pre = app.add_subcommand("pretrain", "Self-supervised value-map pretraining");

  auto* train = app.add_subcommand("train", "PPO fine-tuning");
  std::string pretrained;
  bool from_scratch = false;
  auto* pre_opt = train->add_option("--pretrained", pretrained, "Pretrained policy checkpoint");
  auto* scratch_opt = train->add_flag("--from-scratch", from_scratch, "Start from a random actor");
  pre_opt->excludes(scratch_opt);

  auto* eval = app.add_subcommand("eval", "Evaluate a policy on a task file");
  std::string checkpoint, eval_tasks, mode;
  eval->add_option("--checkpoint", checkpoint, "Actor checkpoint (not needed for --mode random)");
  eval->add_option("--tasks", eval_tasks, "Task file")->required();
  eval->add_option("--mode", mode, "greedy, sample or random (default: eval.mode)");

  auto* rep = app.add_subcommand("replay", "Replay an evaluation log and dump frames");
  std::string rep_tasks, rep_log;
  rep->add_option("--tasks", rep_tasks, "Task file used by the evaluation")->required();
  rep->add_option("--log", rep_log, "steps.csv written by eval")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (train->parsed() && pretrained.empty() && !from_scratch) {
    std::cerr << "train: give --pretrained <checkpoint> or --from-scratch\n";
    return 1;
  }

  unfold::RunSettings settings;
  unfold::Config cfg = unfold::default_config();
  const std::filesystem::path out(out_dir);
  try {
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (const auto& o : overrides) cfg.set_assignment(o);
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (eval->parsed() && !mode.empty()) cfg.set("eval.mode", mode);
    settings = unfold::resolve(cfg);
  } catch (const unfold::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    std::filesystem::create_directories(out);
    cfg.write(out / "config.resolved.cfg");
    if (gen->parsed()) {
      const double t = target > 0.0 ? target : settings.crumple.target_cov_max;
      const std::filesystem::path file = task_out.empty() ? out / "tasks.bin" : std::filesystem::path(task_out);
      const auto r = unfold::gen_tasks(settings, settings.seed, count, t, file);
      std::size_t unreached = 0;
      for (const auto& task : r.tasks) unreached += task.reached ? 0 : 1;
      std::printf("wrote %zu tasks to %s (%zu above the %.1f%% target)\n", r.tasks.size(),
                  file.string().c_str(), unreached, t);
    } else if (pre->parsed()) {
      const auto r = unfold::run_pretrain(settings, out, log_line);
      std::printf("pretrained policy: %s (final mse %.6g)\n", r.checkpoint.string().c_str(), r.final_mse);
    } else if (train->parsed()) {
      const auto r = unfold::run_train(settings, from_scratch ? "" : pretrained, out, log_line);
      std::printf("actor: %s\ncritic: %s\n", r.actor_checkpoint.string().c_str(),
                  r.critic_checkpoint.string().c_str());
      if (r.halted) {
        std::fprintf(stderr, "training halted: %s\n", r.halt_reason.c_str());
        return 2;
      }
    } else if (eval->parsed()) {
      const auto r = unfold::run_eval(settings, checkpoint, eval_tasks, out);
      const auto& s = r.summary;
      std::printf("policy %s tasks %zu final_coverage_mean %.4f delta_coverage_mean %.4f percent_positive %.2f\n",
                  s.policy.c_str(), s.tasks, s.final_coverage_mean, s.delta_coverage_mean,
                  s.percent_positive);
    } else if (rep->parsed()) {
      const auto r = unfold::run_replay(settings, rep_tasks, rep_log, out / "frames");
      std::printf("replayed %zu episodes, %zu steps, %zu coverage mismatches, %zu frames\n",
                  r.episodes, r.steps, r.mismatches, r.frames.size());
      if (r.mismatches != 0) return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << stage << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}
