#include "unfold/env.hpp"

#include "unfold/rng.hpp"

namespace unfold {

ClothState Task::to_state() const {
  ClothState state;
  state.mesh = make_grid_mesh(cloth.rows, cloth.cols, cloth.spacing);
  if (positions.size() != state.mesh->particle_count() * 3)
    throw SimError("task particle count does not match its mesh");
  state.positions.resize(state.mesh->particle_count());
  for (std::size_t i = 0; i < state.positions.size(); ++i)
    state.positions[i] = {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]};
  return state;
}

Task Task::from_state(std::uint64_t seed, const ClothState& state, bool reached) {
  Task t;
  t.seed = seed;
  t.cloth = {state.mesh->rows, state.mesh->cols, state.mesh->rest_spacing};
  t.reached = reached;
  t.positions.reserve(state.positions.size() * 3);
  for (const Vec3& p : state.positions) {
    t.positions.push_back(static_cast<float>(p.x));
    t.positions.push_back(static_cast<float>(p.y));
    t.positions.push_back(static_cast<float>(p.z));
  }
  return t;
}

ClothEnv::ClothEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.action.validate();
  if (cfg_.action.width != cfg_.geometry.width || cfg_.action.height != cfg_.geometry.height)
    throw std::invalid_argument("action space and observation geometry disagree");
  reset(new_flat_cloth(cfg_.cloth.rows, cfg_.cloth.cols, cfg_.cloth.spacing,
                       cfg_.geometry.center(), cfg_.sim));
}

void ClothEnv::reset(const Task& task) {
  if (task.cloth.rows != cfg_.cloth.rows || task.cloth.cols != cfg_.cloth.cols ||
      static_cast<float>(task.cloth.spacing) != static_cast<float>(cfg_.cloth.spacing))
    throw SimError("task mesh does not match the environment cloth");
  ClothState state = task.to_state();
  state.mesh = make_grid_mesh(cfg_.cloth.rows, cfg_.cloth.cols, cfg_.cloth.spacing);
  reset(std::move(state));
}

void ClothEnv::reset(ClothState state) {
  state_ = std::move(state);
  state_.pinned.reset();
  a_flat_ = flat_area(*state_.mesh, cfg_.geometry);
  coverage_ = unfold::coverage(state_, cfg_.geometry, a_flat_).c_pct / 100.0;
}

Observation ClothEnv::observe() const { return render_observation(state_, cfg_.geometry); }

StepResult ClothEnv::step(std::size_t flat_action) {
  return step(decode_action(flat_action, cfg_.action, cfg_.geometry));
}

StepResult ClothEnv::step(const WorldAction& action) {
  StepResult r;
  r.action = action;
  r.coverage_before = coverage_;
  r.events = apply_pick_place(state_, action.pick, action.phi_deg, action.dist, cfg_.sim,
                              &cfg_.geometry);
  coverage_ = unfold::coverage(state_, cfg_.geometry, a_flat_).c_pct / 100.0;
  r.coverage_after = coverage_;
  return r;
}

Task make_task(std::uint64_t seed, const EnvConfig& env, const CrumpleSettings& settings) {
  const GeneratedTask g =
      generate_task(seed, settings.target_cov_max, env.cloth.rows, env.cloth.cols,
                    env.cloth.spacing, env.geometry, env.sim, settings.crumple);
  return Task::from_state(seed, g.state, g.reached);
}

std::vector<Task> make_task_set(std::uint64_t base_seed, int count, const EnvConfig& env,
                                const CrumpleSettings& settings) {
  std::vector<Task> tasks(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i)
    tasks[static_cast<std::size_t>(i)] =
        make_task(Rng::derive(base_seed, static_cast<std::uint64_t>(i)), env, settings);
  return tasks;
}

}  // namespace unfold
