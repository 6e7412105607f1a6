#pragma once

// Deterministic quasi-static cloth simulator: a rectangular particle grid
// relaxed by position-based dynamics on a table plane (z = 0), a pick-place
// primitive, top-down rasterization and coverage metrics.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace unfold {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

struct Point2 {
  double x = 0.0, y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EdgeKind : std::uint8_t { Structural, Shear, Bend };

struct Edge {
  std::uint32_t a = 0, b = 0;
  double rest = 0.0;
  EdgeKind kind = EdgeKind::Structural;
};

struct ClothMesh {
  int rows = 0, cols = 0;
  double rest_spacing = 0.0;
  std::vector<Edge> edges;

  std::size_t particle_count() const { return static_cast<std::size_t>(rows) * cols; }
  std::uint32_t index(int r, int c) const { return static_cast<std::uint32_t>(r * cols + c); }
};

struct ClothState {
  std::vector<Vec3> positions;
  std::optional<std::uint32_t> pinned;
  std::shared_ptr<const ClothMesh> mesh;
};

struct SimConfig {
  double gravity = 9.8;          // m/s^2
  double dt = 1.0 / 120.0;       // s, per relaxation iteration
  double damping = 0.98;
  int projection_passes = 40;    // Gauss-Seidel sweeps per iteration
  int substeps = 8;              // carry interpolation steps per pick-place
  int lift_iters = 4;
  int substep_iters = 4;
  int settle_iters = 400;        // budget of the final settle after release
  double settle_tolerance = 0.02;  // relative structural stretch
  double contact_tolerance = 1e-3; // m
  double rest_velocity = 1e-2;     // m/s, converged when all speeds below
  double shear_stiffness = 0.2;
  double bend_stiffness = 0.0;
  double grasp_radius_factor = 1.5;  // x rest spacing
  double lift_height_factor = 3.0;   // x rest spacing
  std::size_t max_particles = 4096;
};

struct SettleReport {
  int iterations = 0;
  double residual = 0.0;   // max relative structural stretch
  double max_speed = 0.0;  // m/s over the last iteration
  bool converged = false;
};

struct ActionEvents {
  bool grasped = false;
  std::optional<std::uint32_t> pick_particle;
  Point2 place_point;
  bool out_of_workspace = false;
  SettleReport settle;
};

// Top-down pixel grid. Pixel (u, v) covers
// [origin_x + u*pixel_size, origin_x + (u+1)*pixel_size) x the same in y.
// u indexes columns (world x), v indexes rows (world y).
struct ObsGeometry {
  int width = 64;
  int height = 64;
  double pixel_size = 0.0078125;
  double origin_x = -0.25;
  double origin_y = -0.25;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  double pixel_area() const { return pixel_size * pixel_size; }
  Point2 center() const {
    return {origin_x + 0.5 * width * pixel_size, origin_y + 0.5 * height * pixel_size};
  }
  bool contains(Point2 p) const {
    return p.x >= origin_x && p.x <= origin_x + width * pixel_size && p.y >= origin_y &&
           p.y <= origin_y + height * pixel_size;
  }
  // Continuous pixel coordinates have pixel centers at integer values.
  Point2 pixel_to_world(double u, double v) const {
    return {origin_x + (u + 0.5) * pixel_size, origin_y + (v + 0.5) * pixel_size};
  }
  Point2 world_to_pixel(Point2 p) const {
    return {(p.x - origin_x) / pixel_size - 0.5, (p.y - origin_y) / pixel_size - 0.5};
  }
  friend bool operator==(const ObsGeometry&, const ObsGeometry&) = default;
};

struct Observation {
  ObsGeometry geometry;
  std::vector<float> occupancy;  // height x width, row-major, values in {0, 1}
  std::vector<float> height;     // meters; 0 where unoccupied

  float occ(int u, int v) const { return occupancy[static_cast<std::size_t>(v) * geometry.width + u]; }
  float h(int u, int v) const { return height[static_cast<std::size_t>(v) * geometry.width + u]; }
  std::size_t occupied_count() const;
};

struct CoverageReport {
  double c_sim = 0.0;   // m^2
  double a_flat = 0.0;  // m^2
  double c_pct = 0.0;   // c_sim / a_flat * 100
};

std::shared_ptr<const ClothMesh> make_grid_mesh(int rows, int cols, double spacing);

ClothState new_flat_cloth(int rows, int cols, double spacing, Point2 center,
                          const SimConfig& cfg = {});

// Max relative stretch |len - rest| / rest over structural edges.
double structural_residual(const ClothState& state);

// Relaxes the state in place. Velocities start at zero on every call.
SettleReport settle(ClothState& state, int max_iters, const SimConfig& cfg);

ActionEvents apply_pick_place(ClothState& state, Point2 pick, double phi_deg, double dist,
                              const SimConfig& cfg, const ObsGeometry* workspace = nullptr);

Observation render_observation(const ClothState& state, const ObsGeometry& geometry);

// Covered-cell area of the state on the grid.
double covered_area(const ClothState& state, const ObsGeometry& geometry);

// Reference area: the flat configuration of `mesh` centered in the workspace.
double flat_area(const ClothMesh& mesh, const ObsGeometry& geometry);

CoverageReport coverage(const ClothState& state, const ObsGeometry& geometry, double a_flat);

bool is_out_of_observation(const ClothState& state, const ObsGeometry& geometry);

struct CrumpleConfig {
  int min_moves = 3;
  int max_moves = 8;
  double min_dist_frac = 0.3;  // x cloth width
  double max_dist_frac = 1.0;
  double inward_spread_deg = 60.0;
};

struct GeneratedTask {
  ClothState state;
  double c_pct = 100.0;
  int moves = 0;
  bool reached = false;  // c_pct <= target within the move budget
};

GeneratedTask generate_task(std::uint64_t seed, double target_cov_max, int rows, int cols,
                            double spacing, const ObsGeometry& geometry, const SimConfig& sim,
                            const CrumpleConfig& crumple = {});

}  // namespace unfold
