#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "unfold/evaluate.hpp"

namespace unfold {

std::vector<std::uint8_t> frame_pixels(const Observation& obs, double full_scale) {
  const std::size_t n = obs.geometry.pixel_count();
  std::vector<std::uint8_t> px(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (obs.occupancy[i] == 0.0f) continue;
    const double t = std::clamp(static_cast<double>(obs.height[i]) / full_scale, 0.0, 1.0);
    px[i] = static_cast<std::uint8_t>(64 + std::lround(191.0 * t));
  }
  return px;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("frame size does not match its dimensions");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write frame " + path.string());
  // Rows are written top-down with +y up, as seen from above.
  f << "P5\n" << width << ' ' << height << "\n255\n";
  for (int v = height - 1; v >= 0; --v)
    f.write(reinterpret_cast<const char*>(pixels.data()) + static_cast<std::size_t>(v) * width, width);
  if (!f) throw std::runtime_error("failed writing frame " + path.string());
}

}  // namespace unfold
