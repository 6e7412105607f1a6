#include "unfold/clothsim.hpp"

#include <algorithm>
#include <numbers>

#include "unfold/rng.hpp"

namespace unfold {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void project_edge(std::vector<Vec3>& p, const Edge& e, std::optional<std::uint32_t> pinned,
                  double k, bool stretch_only) {
  const double wa = (pinned && *pinned == e.a) ? 0.0 : 1.0;
  const double wb = (pinned && *pinned == e.b) ? 0.0 : 1.0;
  const double wsum = wa + wb;
  if (wsum == 0.0) return;
  Vec3& pa = p[e.a];
  Vec3& pb = p[e.b];
  const Vec3 d = pb - pa;
  const double len = d.norm();
  const double c = len - e.rest;
  if (len < 1e-12 || std::abs(c) <= 1e-12 * e.rest) return;
  if (stretch_only && c < 0.0) return;
  const double s = k * c / (len * wsum);
  pa = pa + (wa * s) * d;
  pb = pb - (wb * s) * d;
}

// Soft edges first so every pass ends on the structural set. Soft edges only
// resist stretching; a flattened fold collapses quads, which must stay legal.
void project_edges(std::vector<Vec3>& p, const std::vector<Edge>& edges,
                   std::optional<std::uint32_t> pinned, double shear_k, double bend_k) {
  for (const Edge& e : edges) {
    const double k = e.kind == EdgeKind::Shear ? shear_k : e.kind == EdgeKind::Bend ? bend_k : 0.0;
    if (k > 0.0) project_edge(p, e, pinned, k, true);
  }
  for (const Edge& e : edges)
    if (e.kind == EdgeKind::Structural) project_edge(p, e, pinned, 1.0, false);
}

}  // namespace

std::size_t Observation::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), 1.0f));
}

std::shared_ptr<const ClothMesh> make_grid_mesh(int rows, int cols, double spacing) {
  auto mesh = std::make_shared<ClothMesh>();
  mesh->rows = rows;
  mesh->cols = cols;
  mesh->rest_spacing = spacing;
  auto add = [&](int r0, int c0, int r1, int c1, double rest, EdgeKind kind) {
    mesh->edges.push_back({mesh->index(r0, c0), mesh->index(r1, c1), rest, kind});
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) add(r, c, r, c + 1, spacing, EdgeKind::Structural);
      if (r + 1 < rows) add(r, c, r + 1, c, spacing, EdgeKind::Structural);
    }
  const double diag = spacing * std::numbers::sqrt2;
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c) {
      add(r, c, r + 1, c + 1, diag, EdgeKind::Shear);
      add(r, c + 1, r + 1, c, diag, EdgeKind::Shear);
    }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 2 < cols) add(r, c, r, c + 2, 2.0 * spacing, EdgeKind::Bend);
      if (r + 2 < rows) add(r, c, r + 2, c, 2.0 * spacing, EdgeKind::Bend);
    }
  return mesh;
}

ClothState new_flat_cloth(int rows, int cols, double spacing, Point2 center, const SimConfig& cfg) {
  if (rows < 2 || cols < 2) throw SimError("degenerate cloth grid: rows and cols must be >= 2");
  if (!(spacing > 0.0)) throw SimError("cloth spacing must be positive");
  if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) > cfg.max_particles)
    throw SimError("cloth grid exceeds particle budget");
  ClothState state;
  state.mesh = make_grid_mesh(rows, cols, spacing);
  state.positions.resize(state.mesh->particle_count());
  const double x0 = center.x - 0.5 * (cols - 1) * spacing;
  const double y0 = center.y - 0.5 * (rows - 1) * spacing;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      state.positions[state.mesh->index(r, c)] = {x0 + c * spacing, y0 + r * spacing, 0.0};
  return state;
}

double structural_residual(const ClothState& state) {
  double worst = 0.0;
  for (const Edge& e : state.mesh->edges) {
    if (e.kind != EdgeKind::Structural) continue;
    const double len = (state.positions[e.b] - state.positions[e.a]).norm();
    worst = std::max(worst, std::abs(len - e.rest) / e.rest);
  }
  return worst;
}

SettleReport settle(ClothState& state, int max_iters, const SimConfig& cfg) {
  auto& pos = state.positions;
  const std::size_t n = pos.size();
  std::vector<Vec3> vel(n);
  std::vector<Vec3> prev(n);
  const double g_step = cfg.gravity * cfg.dt * cfg.dt;
  SettleReport report;
  for (int it = 0; it < max_iters; ++it) {
    prev = pos;
    for (std::size_t i = 0; i < n; ++i) {
      if (state.pinned && *state.pinned == i) continue;
      vel[i] = cfg.damping * vel[i];
      pos[i] = pos[i] + cfg.dt * vel[i];
      pos[i].z -= g_step;
    }
    // Soft edges take part in the first half of the sweeps only, so the
    // structural set has the last word within every iteration.
    const int soft_passes = cfg.projection_passes / 2;
    for (int pass = 0; pass < cfg.projection_passes; ++pass) {
      const bool soft = pass < soft_passes;
      project_edges(pos, state.mesh->edges, state.pinned, soft ? cfg.shear_stiffness : 0.0,
                    soft ? cfg.bend_stiffness : 0.0);
      for (Vec3& q : pos) q.z = std::max(q.z, 0.0);
    }
    double max_speed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pos[i].z < 0.0) pos[i].z = 0.0;
      Vec3 v = (1.0 / cfg.dt) * (pos[i] - prev[i]);
      if (pos[i].z <= cfg.contact_tolerance) {
        // Static friction: resting particles keep no tangential momentum.
        v.x = 0.0;
        v.y = 0.0;
        if (v.z < 0.0) v.z = 0.0;
      }
      vel[i] = v;
      max_speed = std::max(max_speed, (pos[i] - prev[i]).norm() / cfg.dt);
    }
    report.iterations = it + 1;
    report.residual = structural_residual(state);
    report.max_speed = max_speed;
    if (report.residual <= cfg.settle_tolerance && max_speed <= cfg.rest_velocity) {
      report.converged = true;
      break;
    }
  }
  if (max_iters <= 0) {
    report.residual = structural_residual(state);
    report.converged = report.residual <= cfg.settle_tolerance;
  }
  return report;
}

ActionEvents apply_pick_place(ClothState& state, Point2 pick, double phi_deg, double dist,
                              const SimConfig& cfg, const ObsGeometry* workspace) {
  if (!(phi_deg >= 0.0 && phi_deg <= 360.0)) throw SimError("pick-place angle outside [0, 360]");
  if (!(dist >= 0.0)) throw SimError("pick-place distance must be non-negative");
  ActionEvents events;
  const double spacing = state.mesh->rest_spacing;
  const double radius = cfg.grasp_radius_factor * spacing;

  std::optional<std::uint32_t> best;
  double best_d2 = radius * radius;
  for (std::uint32_t i = 0; i < state.positions.size(); ++i) {
    const double dx = state.positions[i].x - pick.x;
    const double dy = state.positions[i].y - pick.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 <= best_d2 && (!best || d2 < best_d2)) {
      best = i;
      best_d2 = d2;
    }
  }

  const double phi = phi_deg * kDegToRad;
  const double dx = dist * std::cos(phi);
  const double dy = dist * std::sin(phi);
  events.place_point = {pick.x + dx, pick.y + dy};
  if (workspace) events.out_of_workspace = !workspace->contains(events.place_point);

  if (!best) {
    state.pinned.reset();
    events.settle = settle(state, cfg.settle_iters, cfg);
    return events;
  }

  events.grasped = true;
  events.pick_particle = best;
  state.pinned = best;
  Vec3& grip = state.positions[*best];
  const Vec3 start{grip.x, grip.y, cfg.lift_height_factor * spacing};
  state.positions[*best] = start;
  settle(state, cfg.lift_iters, cfg);
  for (int k = 1; k <= cfg.substeps; ++k) {
    const double t = static_cast<double>(k) / cfg.substeps;
    state.positions[*best] = {start.x + t * dx, start.y + t * dy, start.z};
    settle(state, cfg.substep_iters, cfg);
  }
  state.pinned.reset();
  events.settle = settle(state, cfg.settle_iters, cfg);
  return events;
}

bool is_out_of_observation(const ClothState& state, const ObsGeometry& geometry) {
  return covered_area(state, geometry) == 0.0;
}

GeneratedTask generate_task(std::uint64_t seed, double target_cov_max, int rows, int cols,
                            double spacing, const ObsGeometry& geometry, const SimConfig& sim,
                            const CrumpleConfig& crumple) {
  if (!(target_cov_max > 0.0 && target_cov_max < 100.0))
    throw SimError("task coverage target must lie in (0, 100)");
  Rng rng(seed);
  GeneratedTask task;
  task.state = new_flat_cloth(rows, cols, spacing, geometry.center(), sim);
  const double a_flat = flat_area(*task.state.mesh, geometry);
  const double width = (cols - 1) * spacing;
  task.c_pct = coverage(task.state, geometry, a_flat).c_pct;
  for (int move = 0; move < crumple.max_moves; ++move) {
    const auto idx = rng.below(task.state.positions.size());
    const Vec3 p = task.state.positions[idx];
    double cx = 0.0, cy = 0.0;
    for (const Vec3& q : task.state.positions) {
      cx += q.x;
      cy += q.y;
    }
    cx /= static_cast<double>(task.state.positions.size());
    cy /= static_cast<double>(task.state.positions.size());
    // Fold toward the centroid, with spread.
    double base = std::atan2(cy - p.y, cx - p.x) / kDegToRad;
    if (std::hypot(cx - p.x, cy - p.y) < 1e-9) base = rng.uniform(0.0, 360.0);
    double phi = base + rng.uniform(-crumple.inward_spread_deg, crumple.inward_spread_deg);
    phi = std::fmod(phi + 720.0, 360.0);
    double dist = width * rng.uniform(crumple.min_dist_frac, crumple.max_dist_frac);
    const double rad = phi * kDegToRad;
    for (int shrink = 0; shrink < 20; ++shrink) {
      const Point2 place{p.x + dist * std::cos(rad), p.y + dist * std::sin(rad)};
      if (geometry.contains(place)) break;
      dist *= 0.8;
    }
    apply_pick_place(task.state, {p.x, p.y}, phi, dist, sim, &geometry);
    task.moves = move + 1;
    task.c_pct = coverage(task.state, geometry, a_flat).c_pct;
    if (task.moves >= crumple.min_moves && task.c_pct <= target_cov_max) {
      task.reached = true;
      break;
    }
  }
  return task;
}

}  // namespace unfold
