#include <algorithm>
#include <array>
#include <cmath>

#include "unfold/clothsim.hpp"

namespace unfold {
namespace {

struct Tri {
  std::array<Point2, 3> v;
};

// Positive-area overlap between a triangle and the cell [x0,x1] x [y0,y1].
// Touching boundaries do not count.
bool overlaps(const Tri& t, double x0, double y0, double x1, double y1, double eps) {
  double tx0 = t.v[0].x, tx1 = t.v[0].x, ty0 = t.v[0].y, ty1 = t.v[0].y;
  for (int i = 1; i < 3; ++i) {
    tx0 = std::min(tx0, t.v[i].x);
    tx1 = std::max(tx1, t.v[i].x);
    ty0 = std::min(ty0, t.v[i].y);
    ty1 = std::max(ty1, t.v[i].y);
  }
  if (tx1 <= x0 + eps || tx0 >= x1 - eps || ty1 <= y0 + eps || ty0 >= y1 - eps) return false;
  for (int i = 0; i < 3; ++i) {
    const Point2 a = t.v[i];
    const Point2 b = t.v[(i + 1) % 3];
    const double nx = -(b.y - a.y);
    const double ny = b.x - a.x;
    const double nlen = std::hypot(nx, ny);
    if (nlen == 0.0) continue;
    double tmin = nx * t.v[0].x + ny * t.v[0].y, tmax = tmin;
    for (int k = 1; k < 3; ++k) {
      const double p = nx * t.v[k].x + ny * t.v[k].y;
      tmin = std::min(tmin, p);
      tmax = std::max(tmax, p);
    }
    const std::array<double, 4> box{nx * x0 + ny * y0, nx * x1 + ny * y0, nx * x0 + ny * y1,
                                    nx * x1 + ny * y1};
    const double bmin = *std::min_element(box.begin(), box.end());
    const double bmax = *std::max_element(box.begin(), box.end());
    const double e = eps * nlen;
    if (bmax <= tmin + e || bmin >= tmax - e) return false;
  }
  return true;
}

// Calls fn(pixel_index, quad_max_z) for every (quad triangle, overlapped cell)
// pair. A cell may be visited more than once.
template <typename Fn>
void for_each_covered_cell(const ClothState& state, const ObsGeometry& g, Fn&& fn) {
  const ClothMesh& mesh = *state.mesh;
  const auto& p = state.positions;
  const double ps = g.pixel_size;
  const double eps = 1e-9 * ps;
  for (int r = 0; r + 1 < mesh.rows; ++r)
    for (int c = 0; c + 1 < mesh.cols; ++c) {
      const Vec3& a = p[mesh.index(r, c)];
      const Vec3& b = p[mesh.index(r, c + 1)];
      const Vec3& cc = p[mesh.index(r + 1, c + 1)];
      const Vec3& d = p[mesh.index(r + 1, c)];
      const double zmax = std::max({a.z, b.z, cc.z, d.z});
      const std::array<Tri, 2> tris{Tri{{Point2{a.x, a.y}, Point2{b.x, b.y}, Point2{cc.x, cc.y}}},
                                    Tri{{Point2{a.x, a.y}, Point2{cc.x, cc.y}, Point2{d.x, d.y}}}};
      for (const Tri& t : tris) {
        const double area2 = (t.v[1].x - t.v[0].x) * (t.v[2].y - t.v[0].y) -
                             (t.v[2].x - t.v[0].x) * (t.v[1].y - t.v[0].y);
        if (std::abs(area2) < 1e-18) continue;
        double xmin = t.v[0].x, xmax = xmin, ymin = t.v[0].y, ymax = ymin;
        for (int i = 1; i < 3; ++i) {
          xmin = std::min(xmin, t.v[i].x);
          xmax = std::max(xmax, t.v[i].x);
          ymin = std::min(ymin, t.v[i].y);
          ymax = std::max(ymax, t.v[i].y);
        }
        const int u0 = std::max(0, static_cast<int>(std::floor((xmin - g.origin_x) / ps)));
        const int u1 = std::min(g.width - 1, static_cast<int>(std::floor((xmax - g.origin_x) / ps)));
        const int v0 = std::max(0, static_cast<int>(std::floor((ymin - g.origin_y) / ps)));
        const int v1 = std::min(g.height - 1, static_cast<int>(std::floor((ymax - g.origin_y) / ps)));
        for (int v = v0; v <= v1; ++v)
          for (int u = u0; u <= u1; ++u) {
            const double cx0 = g.origin_x + u * ps;
            const double cy0 = g.origin_y + v * ps;
            if (overlaps(t, cx0, cy0, cx0 + ps, cy0 + ps, eps))
              fn(static_cast<std::size_t>(v) * g.width + u, zmax);
          }
      }
    }
}

}  // namespace

Observation render_observation(const ClothState& state, const ObsGeometry& geometry) {
  Observation obs;
  obs.geometry = geometry;
  obs.occupancy.assign(geometry.pixel_count(), 0.0f);
  obs.height.assign(geometry.pixel_count(), 0.0f);
  for_each_covered_cell(state, geometry, [&](std::size_t idx, double z) {
    obs.occupancy[idx] = 1.0f;
    obs.height[idx] = std::max(obs.height[idx], static_cast<float>(std::max(z, 0.0)));
  });
  return obs;
}

double covered_area(const ClothState& state, const ObsGeometry& geometry) {
  std::vector<std::uint8_t> covered(geometry.pixel_count(), 0);
  for_each_covered_cell(state, geometry, [&](std::size_t idx, double) { covered[idx] = 1; });
  const auto count = std::count(covered.begin(), covered.end(), std::uint8_t{1});
  return static_cast<double>(count) * geometry.pixel_area();
}

double flat_area(const ClothMesh& mesh, const ObsGeometry& geometry) {
  SimConfig unlimited;
  unlimited.max_particles = mesh.particle_count();
  const ClothState flat =
      new_flat_cloth(mesh.rows, mesh.cols, mesh.rest_spacing, geometry.center(), unlimited);
  return covered_area(flat, geometry);
}

CoverageReport coverage(const ClothState& state, const ObsGeometry& geometry, double a_flat) {
  CoverageReport report;
  report.c_sim = covered_area(state, geometry);
  report.a_flat = a_flat;
  report.c_pct = a_flat > 0.0 ? report.c_sim / a_flat * 100.0 : 0.0;
  return report;
}

}  // namespace unfold
