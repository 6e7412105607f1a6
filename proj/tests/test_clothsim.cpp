#include "doctest.h"

#include <cmath>
#include <set>
#include <utility>

#include "support.hpp"
#include "unfold/clothsim.hpp"
#include "unfold/env.hpp"

using namespace unfold;

namespace {

const ObsGeometry kDesk{};  // 64x64, 0.5 m workspace centered on the origin

double pct(const ClothState& s, const ObsGeometry& g) {
  return coverage(s, g, flat_area(*s.mesh, g)).c_pct;
}

// Pixels whose cell overlaps the open rectangle (x0,x1) x (y0,y1).
std::set<std::size_t> cells_over_rect(const ObsGeometry& g, double x0, double y0, double x1, double y1) {
  std::set<std::size_t> out;
  for (int v = 0; v < g.height; ++v)
    for (int u = 0; u < g.width; ++u) {
      const double cx0 = g.origin_x + u * g.pixel_size, cy0 = g.origin_y + v * g.pixel_size;
      const double cx1 = cx0 + g.pixel_size, cy1 = cy0 + g.pixel_size;
      if (std::min(cx1, x1) - std::max(cx0, x0) > 1e-12 && std::min(cy1, y1) - std::max(cy0, y0) > 1e-12)
        out.insert(static_cast<std::size_t>(v) * g.width + u);
    }
  return out;
}

ClothState crumpled(std::uint64_t seed, const ObsGeometry& g = kDesk) {
  return generate_task(seed, 55.0, 16, 16, 0.02, g, SimConfig{}).state;
}

}  // namespace

TEST_CASE("grid mesh edges") {
  SUBCASE("2x2 has four structural and two shear edges") {
    const auto mesh = make_grid_mesh(2, 2, 0.1);
    int structural = 0, shear = 0, bend = 0;
    for (const Edge& e : mesh->edges) {
      structural += e.kind == EdgeKind::Structural;
      shear += e.kind == EdgeKind::Shear;
      bend += e.kind == EdgeKind::Bend;
    }
    CHECK(structural == 4);
    CHECK(shear == 2);
    CHECK(bend == 0);
  }
  SUBCASE("rest lengths, indices, no duplicates") {
    const auto mesh = make_grid_mesh(7, 5, 0.03);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const Edge& e : mesh->edges) {
      CHECK(e.a < mesh->particle_count());
      CHECK(e.b < mesh->particle_count());
      CHECK(seen.insert({std::min(e.a, e.b), std::max(e.a, e.b)}).second);
      const double expect = e.kind == EdgeKind::Structural ? 0.03
                            : e.kind == EdgeKind::Shear    ? 0.03 * std::sqrt(2.0)
                                                           : 0.06;
      CHECK(e.rest == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("new_flat_cloth") {
  SUBCASE("2x2 corners of a square") {
    const ClothState s = new_flat_cloth(2, 2, 0.1, {0.0, 0.0});
    REQUIRE(s.positions.size() == 4);
    CHECK(s.positions[0] == Vec3{-0.05, -0.05, 0.0});
    CHECK(s.positions[3] == Vec3{0.05, 0.05, 0.0});
    CHECK(structural_residual(s) == 0.0);
  }
  SUBCASE("16x16 flat area is the rasterized 0.30 m square") {
    const ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    CHECK(s.positions.size() == 256);
    CHECK(structural_residual(s) <= 1e-12);
    const double a_flat = flat_area(*s.mesh, kDesk);
    const auto cells = cells_over_rect(kDesk, -0.15, -0.15, 0.15, 0.15);
    CHECK(a_flat == doctest::Approx(cells.size() * kDesk.pixel_area()).epsilon(1e-12));
    const double ring = std::pow(0.30 + 2 * kDesk.pixel_size, 2) - 0.09;
    CHECK(std::abs(a_flat - 0.09) <= ring);
  }
  SUBCASE("degenerate and oversized grids") {
    CHECK_THROWS_AS(new_flat_cloth(1, 5, 0.1, {}), SimError);
    CHECK_THROWS_AS(new_flat_cloth(3, 3, 0.0, {}), SimError);
    SimConfig tiny;
    tiny.max_particles = 100;
    CHECK_THROWS_AS(new_flat_cloth(11, 10, 0.02, {}, tiny), SimError);
  }
}

TEST_CASE("settle") {
  const SimConfig cfg;
  SUBCASE("flat cloth is a fixed point") {
    ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    const auto before = s.positions;
    const SettleReport r = settle(s, 50, cfg);
    CHECK(r.converged);
    CHECK(s.positions == before);
  }
  SUBCASE("uniformly lifted cloth drops to the table") {
    ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    for (Vec3& p : s.positions) p.z = 0.1;
    const SettleReport r = settle(s, cfg.settle_iters, cfg);
    CHECK(r.converged);
    for (const Vec3& p : s.positions) CHECK(p.z <= cfg.contact_tolerance);
    CHECK(structural_residual(s) <= cfg.settle_tolerance);
  }
  SUBCASE("displaced corner relaxes") {
    ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    s.positions[0].x += 0.01;
    CHECK(structural_residual(s) > cfg.settle_tolerance);
    settle(s, cfg.settle_iters, cfg);
    CHECK(structural_residual(s) <= cfg.settle_tolerance);
  }
  SUBCASE("plane containment and residual after crumpling") {
    for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
      const ClothState s = crumpled(seed);
      CHECK(structural_residual(s) <= cfg.settle_tolerance);
      for (const Vec3& p : s.positions) CHECK(p.z >= -cfg.contact_tolerance);
    }
  }
}

TEST_CASE("apply_pick_place") {
  const SimConfig cfg;
  SUBCASE("null displacement at the edge keeps coverage") {
    ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    const Vec3 p = s.positions[s.mesh->index(0, 7)];
    const ActionEvents ev = apply_pick_place(s, {p.x, p.y}, 0.0, 0.0, cfg, &kDesk);
    CHECK(ev.grasped);
    CHECK(ev.pick_particle == s.mesh->index(0, 7));
    CHECK(std::abs(pct(s, kDesk) - 100.0) <= 0.5);
  }
  SUBCASE("interior null displacement only bunches the lifted cone") {
    // Material drawn in under the lift falls straight down on release.
    for (const auto& [r, c] : {std::pair{5, 6}, std::pair{8, 8}, std::pair{3, 12}}) {
      ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
      const Vec3 p = s.positions[s.mesh->index(r, c)];
      const ActionEvents ev = apply_pick_place(s, {p.x, p.y}, 0.0, 0.0, cfg, &kDesk);
      CHECK(ev.grasped);
      CHECK(ev.settle.converged);
      CHECK(pct(s, kDesk) <= 100.0);
      CHECK(pct(s, kDesk) >= 80.0);
    }
  }
  SUBCASE("void action leaves the state alone") {
    ClothState s = crumpled(5);
    const double before = pct(s, kDesk);
    const ActionEvents ev = apply_pick_place(s, {1.0, 1.0}, 90.0, 0.05, cfg, &kDesk);
    CHECK_FALSE(ev.grasped);
    CHECK(std::abs(pct(s, kDesk) - before) <= 0.5);
  }
  SUBCASE("place point and workspace flag") {
    ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    const Vec3 p = s.positions[0];
    const ActionEvents ev = apply_pick_place(s, {p.x, p.y}, 180.0, 0.3, cfg, &kDesk);
    CHECK(ev.place_point.x == doctest::Approx(p.x - 0.3));
    CHECK(ev.out_of_workspace);
  }
  SUBCASE("bad arguments") {
    ClothState s = new_flat_cloth(4, 4, 0.02, {});
    CHECK_THROWS_AS(apply_pick_place(s, {0, 0}, 400.0, 0.1, cfg), SimError);
    CHECK_THROWS_AS(apply_pick_place(s, {0, 0}, 10.0, -0.1, cfg), SimError);
  }
  SUBCASE("determinism") {
    ClothState a = crumpled(7), b = crumpled(7);
    const Vec3 p = a.positions[40];
    apply_pick_place(a, {p.x, p.y}, 135.0, 0.12, cfg, &kDesk);
    apply_pick_place(b, {p.x, p.y}, 135.0, 0.12, cfg, &kDesk);
    CHECK(a.positions == b.positions);
  }
  SUBCASE("best of a coarse action scan unfolds a crumpled task") {
    const EnvConfig env_cfg = testing::desk_env();
    ClothEnv env(env_cfg);
    const Task task = make_task(0, env_cfg, CrumpleSettings{});
    env.reset(task);
    const Observation obs = env.observe();
    const MaskStack masks = build_masks(obs, env_cfg.action);
    double best = -1.0;
    std::size_t seen = 0;
    for (std::size_t k = 0; k < masks.mask.size(); ++k) {
      if (!masks.mask[k]) continue;
      if (seen++ % 97 != 0) continue;
      env.reset(task);
      const StepResult r = env.step(k);
      best = std::max(best, r.coverage_after - r.coverage_before);
    }
    CHECK(best > 0.0);
  }
}

TEST_CASE("coverage") {
  SUBCASE("flat rest state is exactly 100") {
    const ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    CHECK(pct(s, kDesk) == 100.0);
  }
  SUBCASE("half fold about a grid-aligned midline") {
    // 17 columns put particle column 8 on x = 0, a pixel boundary.
    ClothState s = new_flat_cloth(16, 17, 0.02, kDesk.center());
    const double a_flat = flat_area(*s.mesh, kDesk);
    for (Vec3& p : s.positions)
      if (p.x > 1e-12) p = {-p.x, p.y, 0.002};
    const double c = coverage(s, kDesk, a_flat).c_pct;
    const double row = (0.30 / kDesk.pixel_size + 2) * kDesk.pixel_area() / a_flat * 100.0;
    CHECK(std::abs(c - 50.0) <= row);
  }
  SUBCASE("nothing over the grid") {
    ClothState s = new_flat_cloth(16, 16, 0.02, {10.0, 10.0});
    CHECK(covered_area(s, kDesk) == 0.0);
  }
  SUBCASE("bounded by the flat area plus a boundary ring") {
    const double ring = 4 * (0.30 + kDesk.pixel_size) * kDesk.pixel_size;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      const ClothState s = crumpled(seed);
      const CoverageReport r = coverage(s, kDesk, flat_area(*s.mesh, kDesk));
      CHECK(r.c_sim >= 0.0);
      CHECK(r.c_sim <= r.a_flat + ring);
    }
  }
}

TEST_CASE("render_observation") {
  SUBCASE("flat cloth silhouette with zero height") {
    const ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    const Observation obs = render_observation(s, kDesk);
    const auto cells = cells_over_rect(kDesk, -0.15, -0.15, 0.15, 0.15);
    CHECK(obs.occupied_count() == cells.size());
    for (std::size_t i = 0; i < obs.occupancy.size(); ++i) {
      CHECK(obs.occupancy[i] == (cells.count(i) ? 1.0f : 0.0f));
      CHECK(obs.height[i] == 0.0f);
    }
  }
  SUBCASE("one lifted particle marks exactly the cells under its quads") {
    ClothState s = new_flat_cloth(16, 16, 0.02, kDesk.center());
    const std::uint32_t idx = s.mesh->index(6, 9);
    s.positions[idx].z = 0.05;
    const Vec3 p = s.positions[idx];
    const auto expect = cells_over_rect(kDesk, p.x - 0.02, p.y - 0.02, p.x + 0.02, p.y + 0.02);
    const Observation obs = render_observation(s, kDesk);
    for (std::size_t i = 0; i < obs.height.size(); ++i) CHECK((obs.height[i] > 0.0f) == (expect.count(i) == 1));
  }
  SUBCASE("cloth outside the grid") {
    const ClothState s = new_flat_cloth(16, 16, 0.02, {5.0, -5.0});
    const Observation obs = render_observation(s, kDesk);
    CHECK(obs.occupied_count() == 0);
    for (float h : obs.height) CHECK(h == 0.0f);
  }
  SUBCASE("height is zero off the cloth") {
    const Observation obs = render_observation(crumpled(3), kDesk);
    for (std::size_t i = 0; i < obs.height.size(); ++i)
      if (obs.occupancy[i] == 0.0f) CHECK(obs.height[i] == 0.0f);
  }
  SUBCASE("integer-pixel translation shifts occupancy") {
    const ClothState s = crumpled(4);
    ClothState t = s;
    const int du = 3, dv = -2;
    for (Vec3& p : t.positions) {
      p.x += du * kDesk.pixel_size;
      p.y += dv * kDesk.pixel_size;
    }
    const Observation a = render_observation(s, kDesk), b = render_observation(t, kDesk);
    for (int v = 4; v < kDesk.height - 4; ++v)
      for (int u = 4; u < kDesk.width - 4; ++u) CHECK(b.occ(u + du, v + dv) == a.occ(u, v));
  }
}

TEST_CASE("is_out_of_observation") {
  CHECK_FALSE(is_out_of_observation(new_flat_cloth(16, 16, 0.02, kDesk.center()), kDesk));
  CHECK(is_out_of_observation(new_flat_cloth(16, 16, 0.02, {10.0, 0.0}), kDesk));
  // Centered on the right edge of the grid: half the cloth is still seen.
  CHECK_FALSE(is_out_of_observation(new_flat_cloth(16, 16, 0.02, {0.25, 0.0}), kDesk));
}

TEST_CASE("generate_task") {
  const SimConfig sim;
  SUBCASE("seed 0 reaches the target or is flagged") {
    const GeneratedTask t = generate_task(0, 55.0, 16, 16, 0.02, kDesk, sim);
    CHECK((t.c_pct <= 55.0 || !t.reached));
    CHECK(t.moves >= 3);
    CHECK(t.moves <= 8);
    CHECK(t.c_pct == doctest::Approx(pct(t.state, kDesk)).epsilon(1e-12));
  }
  SUBCASE("same seed, same state") {
    const GeneratedTask a = generate_task(42, 55.0, 16, 16, 0.02, kDesk, sim);
    const GeneratedTask b = generate_task(42, 55.0, 16, 16, 0.02, kDesk, sim);
    CHECK(a.state.positions == b.state.positions);
  }
  SUBCASE("a loose target stops at the move floor") {
    CrumpleConfig one;
    one.min_moves = 1;
    CHECK(generate_task(9, 99.0, 16, 16, 0.02, kDesk, sim, one).moves <= 1);
    CHECK(generate_task(9, 99.0, 16, 16, 0.02, kDesk, sim).moves == CrumpleConfig{}.min_moves);
  }
  SUBCASE("target outside (0, 100)") {
    CHECK_THROWS_AS(generate_task(0, 0.0, 16, 16, 0.02, kDesk, sim), SimError);
    CHECK_THROWS_AS(generate_task(0, 100.0, 16, 16, 0.02, kDesk, sim), SimError);
  }
}

TEST_CASE("task file round trip") {
  const EnvConfig env = testing::small_env();
  const auto tasks = make_task_set(3, 3, env, CrumpleSettings{});
  const auto dir = testing::scratch_dir("tasks");
  save_tasks(tasks, dir / "t.bin");
  const auto back = load_tasks(dir / "t.bin");
  REQUIRE(back.size() == tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(back[i].seed == tasks[i].seed);
    CHECK(back[i].positions == tasks[i].positions);
    CHECK(back[i].reached == tasks[i].reached);
  }
  std::filesystem::resize_file(dir / "t.bin", std::filesystem::file_size(dir / "t.bin") - 5);
  CHECK_THROWS_AS(load_tasks(dir / "t.bin"), SimError);
}
