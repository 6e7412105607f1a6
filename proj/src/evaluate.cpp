#include "unfold/evaluate.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "unfold/pretrain.hpp"

namespace unfold {
namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct TaskRun {
  std::vector<EvalStep> steps;
  EvalEpisode episode;
};

TaskRun run_task(const EnvConfig& env_cfg, const NetSpec& spec, const ParamSet<float>* actor,
                 const Task& task, std::size_t index, const EvalConfig& cfg) {
  ClothEnv env(env_cfg);
  env.reset(task);
  Rng rng(Rng::derive(cfg.seed, index));
  const ActionSpaceConfig& action = env_cfg.action;
  TaskRun run;
  EvalEpisode& ep = run.episode;
  ep.task = index;
  ep.seed = task.seed;
  ep.initial_coverage = env.coverage() * 100.0;
  ep.end = "max_steps";
  for (int step = 0; step < cfg.max_steps; ++step) {
    if (env.coverage() > cfg.success_threshold) {
      ep.end = "threshold";
      break;
    }
    if (env.out_of_observation()) {
      ep.end = "out_of_observation";
      break;
    }
    const Observation obs = env.observe();
    const MaskStack masks = build_masks_unchecked(obs, action);
    if (masks.valid_count() == 0) {
      ep.end = "no_valid_action";
      break;
    }
    std::size_t k = 0;
    switch (cfg.mode) {
      case PolicyMode::Random:
        k = random_valid_action(masks, rng);
        break;
      case PolicyMode::Greedy:
        k = masked_argmax(forward_policy(spec, *actor, build_layer_stack(obs, action)), masks.mask);
        break;
      case PolicyMode::Sample:
        k = MaskedCategorical(forward_policy(spec, *actor, build_layer_stack(obs, action)), masks.mask)
                .sample(rng);
        break;
    }
    const StepResult r = env.step(k);
    EvalStep s;
    s.task = index;
    s.seed = task.seed;
    s.step = step;
    s.action = static_cast<std::uint32_t>(k);
    s.coverage_before = r.coverage_before * 100.0;
    s.coverage_after = r.coverage_after * 100.0;
    s.positive = s.coverage_after > s.coverage_before;
    run.steps.push_back(s);
    ++ep.steps;
    ep.positive_steps += s.positive ? 1 : 0;
  }
  ep.final_coverage = env.coverage() * 100.0;
  ep.delta_coverage = ep.final_coverage - ep.initial_coverage;
  return run;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

PolicyMode parse_policy_mode(const std::string& name) {
  if (name == "greedy") return PolicyMode::Greedy;
  if (name == "sample") return PolicyMode::Sample;
  if (name == "random") return PolicyMode::Random;
  throw std::invalid_argument("unknown policy mode '" + name + "' (greedy, sample, random)");
}

const char* to_string(PolicyMode mode) {
  switch (mode) {
    case PolicyMode::Greedy: return "greedy";
    case PolicyMode::Sample: return "sample";
    case PolicyMode::Random: return "random";
  }
  return "unknown";
}

EvalResult evaluate(const EnvConfig& env, const NetSpec& spec, const ParamSet<float>* actor,
                    const std::vector<Task>& tasks, const EvalConfig& cfg) {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const ClothSpec& c = tasks[i].cloth;
    if (c.rows != env.cloth.rows || c.cols != env.cloth.cols ||
        static_cast<float>(c.spacing) != static_cast<float>(env.cloth.spacing))
      throw SimError("task " + std::to_string(i) + " does not match the configured cloth");
  }
  if (cfg.mode != PolicyMode::Random) {
    if (!actor) throw std::invalid_argument("policy evaluation needs a checkpoint");
    check_policy_layout(spec, *actor);
  }
  std::vector<TaskRun> runs(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  const int n = static_cast<int>(tasks.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto t = static_cast<std::size_t>(i);
    try {
      runs[t] = run_task(env, spec, actor, tasks[t], t, cfg);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  EvalResult result;
  for (TaskRun& r : runs) {
    result.steps.insert(result.steps.end(), r.steps.begin(), r.steps.end());
    result.episodes.push_back(std::move(r.episode));
  }
  result.summary = summarize(to_string(cfg.mode), result.steps, result.episodes);
  return result;
}

EvalSummary summarize(const std::string& policy, const std::vector<EvalStep>& steps,
                      const std::vector<EvalEpisode>& episodes) {
  EvalSummary s;
  s.policy = policy;
  s.tasks = episodes.size();
  s.total_steps = steps.size();
  for (const EvalStep& st : steps) s.positive_steps += st.positive ? 1 : 0;
  for (const EvalEpisode& ep : episodes) {
    s.final_coverage_mean += ep.final_coverage;
    s.delta_coverage_mean += ep.delta_coverage;
  }
  if (s.tasks > 0) {
    s.final_coverage_mean /= static_cast<double>(s.tasks);
    s.delta_coverage_mean /= static_cast<double>(s.tasks);
  }
  if (s.total_steps > 0)
    s.percent_positive = static_cast<double>(s.positive_steps) / static_cast<double>(s.total_steps) * 100.0;
  return s;
}

void write_eval_csv(const EvalResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("steps.csv");
    f << "task,seed,step,action,coverage_before,coverage_after,positive\n";
    for (const EvalStep& s : result.steps)
      f << s.task << ',' << s.seed << ',' << s.step << ',' << s.action << ','
        << fmt(s.coverage_before) << ',' << fmt(s.coverage_after) << ',' << (s.positive ? 1 : 0) << '\n';
  }
  {
    auto f = open("episodes.csv");
    f << "task,seed,initial_coverage,final_coverage,delta_coverage,steps,positive_steps,end\n";
    for (const EvalEpisode& e : result.episodes)
      f << e.task << ',' << e.seed << ',' << fmt(e.initial_coverage) << ',' << fmt(e.final_coverage)
        << ',' << fmt(e.delta_coverage) << ',' << e.steps << ',' << e.positive_steps << ','
        << e.end << '\n';
  }
  {
    auto f = open("summary.csv");
    const EvalSummary& s = result.summary;
    f << "policy,tasks,total_steps,positive_steps,final_coverage_mean,delta_coverage_mean,percent_positive\n";
    f << s.policy << ',' << s.tasks << ',' << s.total_steps << ',' << s.positive_steps << ','
      << fmt(s.final_coverage_mean) << ',' << fmt(s.delta_coverage_mean) << ','
      << fmt(s.percent_positive) << '\n';
  }
}

std::vector<EvalStep> read_steps_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open episode log " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("task,seed,step,action", 0) != 0)
    throw std::runtime_error("episode log " + path.string() + " lacks the steps header");
  std::vector<EvalStep> steps;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 7)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    EvalStep s;
    s.task = std::stoull(c[0]);
    s.seed = std::stoull(c[1]);
    s.step = std::stoi(c[2]);
    s.action = static_cast<std::uint32_t>(std::stoul(c[3]));
    s.coverage_before = std::strtod(c[4].c_str(), nullptr);
    s.coverage_after = std::strtod(c[5].c_str(), nullptr);
    s.positive = c[6] == "1";
    steps.push_back(s);
  }
  return steps;
}

ReplayReport replay(const EnvConfig& env_cfg, const std::vector<Task>& tasks,
                    const std::vector<EvalStep>& log, const std::filesystem::path& frame_dir) {
  if (!frame_dir.empty()) std::filesystem::create_directories(frame_dir);
  ReplayReport report;
  ClothEnv env(env_cfg);
  const int w = env_cfg.geometry.width;
  const int h = env_cfg.geometry.height;
  auto dump = [&](std::size_t task, int step) {
    if (frame_dir.empty()) return;
    const auto path = frame_dir / ("task" + std::to_string(task) + "_step" + std::to_string(step) + ".pgm");
    write_pgm(path, w, h, frame_pixels(env.observe()));
    report.frames.push_back(path);
  };
  std::size_t current = static_cast<std::size_t>(-1);
  for (const EvalStep& s : log) {
    if (s.task != current) {
      if (s.task >= tasks.size()) throw std::runtime_error("episode log names task " + std::to_string(s.task) + " beyond the task file");
      if (tasks[s.task].seed != s.seed)
        throw std::runtime_error("episode log seed disagrees with task " + std::to_string(s.task));
      current = s.task;
      env.reset(tasks[current]);
      ++report.episodes;
      dump(current, 0);
    }
    const StepResult r = env.step(s.action);
    ++report.steps;
    if (r.coverage_before * 100.0 != s.coverage_before || r.coverage_after * 100.0 != s.coverage_after)
      ++report.mismatches;
    dump(current, s.step + 1);
  }
  return report;
}

}  // namespace unfold
