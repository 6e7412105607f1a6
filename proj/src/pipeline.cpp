#include "unfold/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace unfold {
namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int get_count(const Config& c, const std::string& key, int min_value) {
  const std::int64_t v = c.get_int(key);
  if (v < min_value || v > 1'000'000'000)
    throw ConfigError("config key " + key + " must be an integer >= " + std::to_string(min_value));
  return static_cast<int>(v);
}

double get_positive(const Config& c, const std::string& key) {
  const double v = c.get_double(key);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("config key " + key + " must be positive");
  return v;
}

double get_fraction(const Config& c, const std::string& key) {
  const double v = c.get_double(key);
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("config key " + key + " must lie in [0, 1]");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

}  // namespace

Config default_config() {
  Config c;
  const RunSettings d;
  c.declare("seed", std::int64_t{0});

  const SimConfig& sim = d.env.sim;
  c.declare("sim.rows", std::int64_t{d.env.cloth.rows});
  c.declare("sim.cols", std::int64_t{d.env.cloth.cols});
  c.declare("sim.spacing", d.env.cloth.spacing);
  c.declare("sim.image_size", std::int64_t{d.env.geometry.width});
  c.declare("sim.pixel_size", d.env.geometry.pixel_size);
  c.declare("sim.origin_x", d.env.geometry.origin_x);
  c.declare("sim.origin_y", d.env.geometry.origin_y);
  c.declare("sim.gravity", sim.gravity);
  c.declare("sim.dt", sim.dt);
  c.declare("sim.damping", sim.damping);
  c.declare("sim.projection_passes", std::int64_t{sim.projection_passes});
  c.declare("sim.substeps", std::int64_t{sim.substeps});
  c.declare("sim.lift_iters", std::int64_t{sim.lift_iters});
  c.declare("sim.substep_iters", std::int64_t{sim.substep_iters});
  c.declare("sim.settle_iters", std::int64_t{sim.settle_iters});
  c.declare("sim.settle_tolerance", sim.settle_tolerance);
  c.declare("sim.contact_tolerance", sim.contact_tolerance);
  c.declare("sim.rest_velocity", sim.rest_velocity);
  c.declare("sim.shear_stiffness", sim.shear_stiffness);
  c.declare("sim.bend_stiffness", sim.bend_stiffness);
  c.declare("sim.grasp_radius_factor", sim.grasp_radius_factor);
  c.declare("sim.lift_height_factor", sim.lift_height_factor);
  c.declare("sim.max_particles", static_cast<std::int64_t>(sim.max_particles));
  c.declare("sim.crumple.target_cov_max", d.crumple.target_cov_max);
  c.declare("sim.crumple.min_moves", std::int64_t{d.crumple.crumple.min_moves});
  c.declare("sim.crumple.max_moves", std::int64_t{d.crumple.crumple.max_moves});
  c.declare("sim.crumple.min_dist_frac", d.crumple.crumple.min_dist_frac);
  c.declare("sim.crumple.max_dist_frac", d.crumple.crumple.max_dist_frac);
  c.declare("sim.crumple.inward_spread_deg", d.crumple.crumple.inward_spread_deg);

  c.declare("action.rotations", std::int64_t{d.env.action.rotations});
  c.declare("action.scales", d.env.action.scales);
  c.declare("action.d_ref", d.env.action.d_ref);

  std::vector<double> channels(d.net.trunk_channels.begin(), d.net.trunk_channels.end());
  c.declare("net.trunk_channels", channels);
  c.declare("net.down_up", d.net.down_up);
  c.declare("net.height_gain", d.net.height_gain);
  c.declare("net.logit_scale", d.net.logit_scale);

  const PretrainSettings& p = d.pretrain;
  c.declare("pretrain.steps", std::int64_t{p.steps});
  c.declare("pretrain.workers", std::int64_t{p.workers});
  c.declare("pretrain.chunk_steps", std::int64_t{p.chunk_steps});
  c.declare("pretrain.updates_per_chunk", std::int64_t{p.updates_per_chunk});
  c.declare("pretrain.batch", std::int64_t{p.batch});
  c.declare("pretrain.lr", p.lr);
  c.declare("pretrain.epsilon_start", p.epsilon_start);
  c.declare("pretrain.epsilon_end", p.epsilon_end);
  c.declare("pretrain.epsilon_decay_fraction", p.epsilon_decay_fraction);
  c.declare("pretrain.capacity", static_cast<std::int64_t>(p.capacity));
  c.declare("pretrain.max_steps", std::int64_t{p.rules.max_steps});
  c.declare("pretrain.success_threshold", p.rules.success_threshold);
  c.declare("pretrain.task_seed", static_cast<std::int64_t>(p.tasks.seed));
  c.declare("pretrain.task_count", std::int64_t{p.tasks.count});

  const PPOConfig& o = d.ppo;
  c.declare("ppo.gamma", o.gamma);
  c.declare("ppo.clip", o.clip);
  c.declare("ppo.epochs", std::int64_t{o.epochs});
  c.declare("ppo.minibatch", std::int64_t{o.minibatch});
  c.declare("ppo.rollout_steps", std::int64_t{o.rollout_steps});
  c.declare("ppo.envs", std::int64_t{o.envs});
  c.declare("ppo.value_coef", o.value_coef);
  c.declare("ppo.entropy_coef", o.entropy_coef);
  c.declare("ppo.lr", o.lr);
  c.declare("ppo.critic_lr", o.critic_lr);
  c.declare("ppo.max_episode_steps", std::int64_t{o.max_episode_steps});
  c.declare("ppo.success_threshold", o.success_threshold);
  c.declare("ppo.normalize_advantages", o.normalize_advantages);
  c.declare("ppo.scale_rewards", o.scale_rewards);
  c.declare("ppo.scaled_returns", o.scaled_returns);
  c.declare("ppo.max_grad_norm", o.max_grad_norm);
  c.declare("ppo.iterations", std::int64_t{d.train.iterations});
  c.declare("ppo.checkpoint_every", std::int64_t{d.train.checkpoint_every});
  c.declare("ppo.task_seed", static_cast<std::int64_t>(d.train.tasks.seed));
  c.declare("ppo.task_count", std::int64_t{d.train.tasks.count});

  c.declare("eval.mode", std::string(to_string(d.eval.mode)));
  c.declare("eval.max_steps", std::int64_t{d.eval.max_steps});
  c.declare("eval.success_threshold", d.eval.success_threshold);
  return c;
}

RunSettings resolve(const Config& c) {
  RunSettings s;
  const std::int64_t seed = c.get_int("seed");
  if (seed < 0) throw ConfigError("config key seed must be non-negative");
  s.seed = static_cast<std::uint64_t>(seed);

  s.env.cloth.rows = get_count(c, "sim.rows", 2);
  s.env.cloth.cols = get_count(c, "sim.cols", 2);
  s.env.cloth.spacing = get_positive(c, "sim.spacing");
  const int image = get_count(c, "sim.image_size", 1);
  s.env.geometry.width = s.env.geometry.height = image;
  s.env.geometry.pixel_size = get_positive(c, "sim.pixel_size");
  s.env.geometry.origin_x = c.get_double("sim.origin_x");
  s.env.geometry.origin_y = c.get_double("sim.origin_y");
  SimConfig& sim = s.env.sim;
  sim.gravity = c.get_double("sim.gravity");
  sim.dt = get_positive(c, "sim.dt");
  sim.damping = get_fraction(c, "sim.damping");
  sim.projection_passes = get_count(c, "sim.projection_passes", 1);
  sim.substeps = get_count(c, "sim.substeps", 1);
  sim.lift_iters = get_count(c, "sim.lift_iters", 0);
  sim.substep_iters = get_count(c, "sim.substep_iters", 0);
  sim.settle_iters = get_count(c, "sim.settle_iters", 0);
  sim.settle_tolerance = get_positive(c, "sim.settle_tolerance");
  sim.contact_tolerance = get_positive(c, "sim.contact_tolerance");
  sim.rest_velocity = get_positive(c, "sim.rest_velocity");
  sim.shear_stiffness = get_fraction(c, "sim.shear_stiffness");
  sim.bend_stiffness = get_fraction(c, "sim.bend_stiffness");
  sim.grasp_radius_factor = get_positive(c, "sim.grasp_radius_factor");
  sim.lift_height_factor = get_positive(c, "sim.lift_height_factor");
  sim.max_particles = static_cast<std::size_t>(get_count(c, "sim.max_particles", 4));

  s.crumple.target_cov_max = c.get_double("sim.crumple.target_cov_max");
  if (!(s.crumple.target_cov_max > 0.0 && s.crumple.target_cov_max < 100.0))
    throw ConfigError("config key sim.crumple.target_cov_max must lie in (0, 100)");
  s.crumple.crumple.min_moves = get_count(c, "sim.crumple.min_moves", 0);
  s.crumple.crumple.max_moves = get_count(c, "sim.crumple.max_moves", 1);
  s.crumple.crumple.min_dist_frac = get_positive(c, "sim.crumple.min_dist_frac");
  s.crumple.crumple.max_dist_frac = get_positive(c, "sim.crumple.max_dist_frac");
  s.crumple.crumple.inward_spread_deg = c.get_double("sim.crumple.inward_spread_deg");
  if (s.crumple.crumple.min_moves > s.crumple.crumple.max_moves ||
      s.crumple.crumple.min_dist_frac > s.crumple.crumple.max_dist_frac)
    throw ConfigError("sim.crumple ranges are inverted");

  s.env.action.width = s.env.action.height = image;
  s.env.action.rotations = get_count(c, "action.rotations", 1);
  s.env.action.scales = c.get_list("action.scales");
  s.env.action.d_ref = get_positive(c, "action.d_ref");
  try {
    s.env.action.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("action: ") + e.what());
  }

  s.net.trunk_channels.clear();
  for (double ch : c.get_list("net.trunk_channels")) {
    if (ch < 1.0 || ch != std::floor(ch) || ch > 4096.0)
      throw ConfigError("config key net.trunk_channels must list positive integers");
    s.net.trunk_channels.push_back(static_cast<int>(ch));
  }
  s.net.down_up = c.get_bool("net.down_up");
  if (s.net.down_up && (image % 2 != 0 || s.net.trunk_channels.empty()))
    throw ConfigError("net.down_up needs an even image size and a non-empty trunk");
  s.net.height_gain = c.get_double("net.height_gain");
  s.net.logit_scale = get_positive(c, "net.logit_scale");

  PretrainSettings& p = s.pretrain;
  p.steps = get_count(c, "pretrain.steps", 0);
  p.workers = get_count(c, "pretrain.workers", 1);
  p.chunk_steps = get_count(c, "pretrain.chunk_steps", 1);
  p.updates_per_chunk = get_count(c, "pretrain.updates_per_chunk", 0);
  p.batch = get_count(c, "pretrain.batch", 1);
  p.lr = get_positive(c, "pretrain.lr");
  p.epsilon_start = get_fraction(c, "pretrain.epsilon_start");
  p.epsilon_end = get_fraction(c, "pretrain.epsilon_end");
  p.epsilon_decay_fraction = get_fraction(c, "pretrain.epsilon_decay_fraction");
  p.capacity = static_cast<std::size_t>(get_count(c, "pretrain.capacity", 1));
  p.rules.max_steps = get_count(c, "pretrain.max_steps", 1);
  p.rules.success_threshold = get_fraction(c, "pretrain.success_threshold");
  p.tasks.seed = static_cast<std::uint64_t>(get_count(c, "pretrain.task_seed", 0));
  p.tasks.count = get_count(c, "pretrain.task_count", 1);

  PPOConfig& o = s.ppo;
  o.gamma = c.get_double("ppo.gamma");
  o.clip = c.get_double("ppo.clip");
  o.epochs = get_count(c, "ppo.epochs", 1);
  o.minibatch = get_count(c, "ppo.minibatch", 1);
  o.rollout_steps = get_count(c, "ppo.rollout_steps", 1);
  o.envs = get_count(c, "ppo.envs", 1);
  o.value_coef = c.get_double("ppo.value_coef");
  o.entropy_coef = c.get_double("ppo.entropy_coef");
  o.lr = c.get_double("ppo.lr");
  o.critic_lr = c.get_double("ppo.critic_lr");
  o.max_episode_steps = get_count(c, "ppo.max_episode_steps", 1);
  o.success_threshold = c.get_double("ppo.success_threshold");
  o.normalize_advantages = c.get_bool("ppo.normalize_advantages");
  o.scale_rewards = c.get_bool("ppo.scale_rewards");
  o.scaled_returns = c.get_bool("ppo.scaled_returns");
  o.max_grad_norm = c.get_double("ppo.max_grad_norm");
  try {
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  s.train.iterations = get_count(c, "ppo.iterations", 0);
  s.train.checkpoint_every = get_count(c, "ppo.checkpoint_every", 1);
  s.train.tasks.seed = static_cast<std::uint64_t>(get_count(c, "ppo.task_seed", 0));
  s.train.tasks.count = get_count(c, "ppo.task_count", 1);

  try {
    s.eval.mode = parse_policy_mode(c.get_string("eval.mode"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  s.eval.max_steps = get_count(c, "eval.max_steps", 0);
  s.eval.success_threshold = get_fraction(c, "eval.success_threshold");
  s.eval.seed = stream_seed(s, SeedStream::Eval);
  return s;
}

std::uint64_t stream_seed(const RunSettings& s, SeedStream stream) {
  return Rng::derive(s.seed, static_cast<std::uint64_t>(stream));
}

GenTasksResult gen_tasks(const RunSettings& s, std::uint64_t seed, int count,
                         double target_cov_max, const std::filesystem::path& out) {
  if (count < 1) throw std::invalid_argument("task count must be at least 1");
  CrumpleSettings crumple = s.crumple;
  crumple.target_cov_max = target_cov_max;
  GenTasksResult r;
  r.tasks = make_task_set(seed, count, s.env, crumple);
  ClothEnv env(s.env);
  for (const Task& t : r.tasks) {
    env.reset(t);
    r.coverage.push_back(env.coverage() * 100.0);
  }
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_tasks(r.tasks, out);
  auto f = open_out(out.string() + ".manifest.csv");
  f << "index,seed,coverage,reached\n";
  for (std::size_t i = 0; i < r.tasks.size(); ++i)
    f << i << ',' << r.tasks[i].seed << ',' << fmt(r.coverage[i]) << ','
      << (r.tasks[i].reached ? 1 : 0) << '\n';
  return r;
}

PretrainResult run_pretrain(const RunSettings& s, const std::filesystem::path& out_dir,
                            const Logger& log) {
  std::filesystem::create_directories(out_dir);
  const PretrainSettings& p = s.pretrain;
  const auto tasks = make_task_set(p.tasks.seed, p.tasks.count, s.env, s.crumple);
  PretrainResult result;
  result.params = init_policy_params<float>(s.net, stream_seed(s, SeedStream::ActorInit));
  Adam<float> adam(result.params);
  ReplayStore store(out_dir / "replay.bin", p.capacity);

  std::vector<CollectWorker> workers;
  const std::uint64_t base = stream_seed(s, SeedStream::Pretrain);
  for (int w = 0; w < p.workers; ++w)
    workers.push_back({ClothEnv(s.env), Rng(Rng::derive(base, static_cast<std::uint64_t>(w)))});
  Rng batch_rng(stream_seed(s, SeedStream::PretrainBatches));

  auto metrics = open_out(out_dir / "pretrain_metrics.csv");
  metrics << "chunk,steps,epsilon,positive_fraction,mean_label,mse\n";
  int done = 0;
  int chunk = 0;
  while (done < p.steps) {
    const int per_worker = std::min(p.chunk_steps, (p.steps - done + p.workers - 1) / p.workers);
    const double eps = epsilon_schedule(static_cast<double>(done) / p.steps, p.epsilon_start,
                                        p.epsilon_end, p.epsilon_decay_fraction);
    const std::size_t before = store.size();
    const CollectStats cs = collect(workers, s.net, result.params, per_worker, eps, tasks, p.rules, store);
    done += static_cast<int>(cs.steps);
    double label_sum = 0.0;
    for (std::size_t i = before; i < store.size(); ++i) label_sum += store.get(i).label;
    double mse = 0.0;
    for (int u = 0; u < p.updates_per_chunk; ++u) {
      const auto batch = store.sample(static_cast<std::size_t>(p.batch), batch_rng);
      mse = pretrain_step(s.net, result.params, adam, s.env.action, batch, p.lr);
    }
    result.final_mse = mse;
    const double n = static_cast<double>(std::max<std::size_t>(cs.steps, 1));
    metrics << chunk << ',' << done << ',' << fmt(eps) << ',' << fmt(cs.positive / n) << ','
            << fmt(label_sum / n) << ',' << fmt(mse) << '\n';
    if (log && chunk % 10 == 0)
      log("pretrain chunk " + std::to_string(chunk) + " steps " + std::to_string(done) +
          " eps " + fmt(eps) + " mse " + fmt(mse));
    ++chunk;
  }
  result.checkpoint = out_dir / "policy.ckpt";
  save_checkpoint(result.params, result.checkpoint);
  return result;
}

TrainResult run_train(const RunSettings& s, const std::filesystem::path& pretrained,
                      const std::filesystem::path& out_dir, const Logger& log) {
  std::filesystem::create_directories(out_dir);
  TrainResult result;
  TrainState& state = result.state;
  if (pretrained.empty()) {
    state.actor = init_policy_params<float>(s.net, stream_seed(s, SeedStream::ActorInit));
  } else {
    state.actor = load_checkpoint(pretrained);
    check_policy_layout(s.net, state.actor);
  }
  state.critic = init_critic_params<float>(s.net, stream_seed(s, SeedStream::CriticInit));
  if (!pretrained.empty()) copy_trunk(state.actor, state.critic);

  const auto tasks = make_task_set(s.train.tasks.seed, s.train.tasks.count, s.env, s.crumple);
  std::vector<RolloutWorker> workers;
  const std::uint64_t base = stream_seed(s, SeedStream::Rollouts);
  for (int w = 0; w < s.ppo.envs; ++w)
    workers.push_back({ClothEnv(s.env), Rng(Rng::derive(base, static_cast<std::uint64_t>(w)))});
  Rng mb_rng(stream_seed(s, SeedStream::Minibatches));
  Adam<float> actor_opt(state.actor);
  Adam<float> critic_opt(state.critic);

  auto metrics = open_out(out_dir / "metrics.csv");
  metrics << "iter,episode,step,coverage,reward,scaled_reward,value,advantage,entropy,"
             "clip_fraction,loss_policy,loss_value\n";
  auto iters = open_out(out_dir / "iterations.csv");
  iters << "iter,steps,episodes,mean_reward,mean_final_coverage,entropy,clip_fraction,"
           "loss_policy,loss_value,reward_sigma\n";

  auto save = [&](int it) {
    result.actor_checkpoint = out_dir / ("actor_iter" + std::to_string(it) + ".ckpt");
    result.critic_checkpoint = out_dir / ("critic_iter" + std::to_string(it) + ".ckpt");
    save_checkpoint(state.actor, result.actor_checkpoint);
    save_checkpoint(state.critic, result.critic_checkpoint);
  };
  save(0);
  for (int it = 1; it <= s.train.iterations; ++it) {
    const TrainState last_good = state;
    const Adam<float> actor_opt_good = actor_opt;
    const Adam<float> critic_opt_good = critic_opt;
    IterationStats st;
    RolloutBuffer buffer(static_cast<std::size_t>(s.ppo.rollout_steps));
    try {
      collect_rollout(workers, s.net, state, s.ppo, tasks, buffer);
      buffer.finalize(s.ppo.gamma, s.ppo.scaled_returns);
      st = ppo_update(s.net, s.env.action, state, actor_opt, critic_opt, s.ppo, buffer, mb_rng);
    } catch (const NonFiniteError& e) {
      state = last_good;
      actor_opt = actor_opt_good;
      critic_opt = critic_opt_good;
      result.halted = true;
      result.halt_reason = "iteration " + std::to_string(it) + ": " + e.what();
      save(it - 1);
      if (log) log("training halted: " + result.halt_reason);
      return result;
    }
    st.iteration = it;
    result.iterations.push_back(st);
    for (const Transition& t : buffer.transitions())
      metrics << it << ',' << t.episode << ',' << t.step << ',' << fmt(t.coverage_after) << ','
              << fmt(t.reward) << ',' << fmt(t.scaled_reward) << ',' << fmt(t.value) << ','
              << fmt(t.advantage) << ',' << fmt(t.entropy) << ',' << fmt(st.clip_fraction) << ','
              << fmt(st.loss_policy) << ',' << fmt(st.loss_value) << '\n';
    iters << it << ',' << st.steps << ',' << st.episodes << ',' << fmt(st.mean_reward) << ','
          << fmt(st.mean_final_coverage) << ',' << fmt(st.entropy) << ','
          << fmt(st.clip_fraction) << ',' << fmt(st.loss_policy) << ',' << fmt(st.loss_value)
          << ',' << fmt(state.scaler.sigma()) << '\n';
    metrics.flush();
    iters.flush();
    if (log)
      log("iter " + std::to_string(it) + " steps " + std::to_string(st.steps) + " final_cov " +
          fmt(st.mean_final_coverage) + " loss_v " + fmt(st.loss_value) + " clip " +
          fmt(st.clip_fraction));
    if (it % s.train.checkpoint_every == 0 || it == s.train.iterations) save(it);
  }
  return result;
}

EvalResult run_eval(const RunSettings& s, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& task_file, const std::filesystem::path& out_dir) {
  const auto tasks = load_tasks(task_file);
  std::optional<ParamSet<float>> actor;
  if (!checkpoint.empty()) actor = load_checkpoint(checkpoint);
  const EvalResult r = evaluate(s.env, s.net, actor ? &*actor : nullptr, tasks, s.eval);
  write_eval_csv(r, out_dir);
  return r;
}

ReplayReport run_replay(const RunSettings& s, const std::filesystem::path& task_file,
                        const std::filesystem::path& steps_csv, const std::filesystem::path& frame_dir) {
  return replay(s.env, load_tasks(task_file), read_steps_csv(steps_csv), frame_dir);
}

}  // namespace unfold
