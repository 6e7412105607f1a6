#include "unfold/actionmaps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace unfold {
namespace {

// Exact values on the quarter turns so identity and half-turn layers
// reproduce the input bit for bit.
void exact_cos_sin(double phi_deg, double& c, double& s) {
  const double turns = phi_deg / 90.0;
  const double rounded = std::round(turns);
  if (std::abs(turns - rounded) < 1e-12) {
    const int q = ((static_cast<int>(rounded) % 4) + 4) % 4;
    static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
    c = kCos[q];
    s = kSin[q];
    return;
  }
  const double rad = phi_deg * std::numbers::pi / 180.0;
  c = std::cos(rad);
  s = std::sin(rad);
}

double snap(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < 1e-9 ? r : x;
}

float sample_nearest(const std::vector<float>& img, int w, int h, Point2 p) {
  const long u = std::lround(snap(p.x));
  const long v = std::lround(snap(p.y));
  if (u < 0 || v < 0 || u >= w || v >= h) return 0.0f;
  return img[static_cast<std::size_t>(v) * w + u];
}

float sample_bilinear(const std::vector<float>& img, int w, int h, Point2 p) {
  const double x = snap(p.x);
  const double y = snap(p.y);
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double ax = x - fx;
  const double ay = y - fy;
  const long u0 = static_cast<long>(fx);
  const long v0 = static_cast<long>(fy);
  auto at = [&](long u, long v) -> double {
    if (u < 0 || v < 0 || u >= w || v >= h) return 0.0;
    return img[static_cast<std::size_t>(v) * w + u];
  };
  double value = (1.0 - ax) * (1.0 - ay) * at(u0, v0);
  if (ax != 0.0) value += ax * (1.0 - ay) * at(u0 + 1, v0);
  if (ay != 0.0) value += (1.0 - ax) * ay * at(u0, v0 + 1);
  if (ax != 0.0 && ay != 0.0) value += ax * ay * at(u0 + 1, v0 + 1);
  return static_cast<float>(value);
}

void check_geometry(const Observation& obs, const ActionSpaceConfig& cfg) {
  if (obs.geometry.width != cfg.width || obs.geometry.height != cfg.height)
    throw std::invalid_argument("observation geometry does not match the action space");
}

}  // namespace

void ActionSpaceConfig::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("action grid must be non-empty");
  if (rotations < 1) throw std::invalid_argument("need at least one rotation");
  if (scales.empty()) throw std::invalid_argument("need at least one scale");
  if (!(d_ref > 0.0)) throw std::invalid_argument("d_ref must be positive");
  for (std::size_t j = 0; j < scales.size(); ++j) {
    if (!(scales[j] > 0.0 && scales[j] <= 1.0))
      throw std::invalid_argument("scales must lie in (0, 1]");
    if (j > 0 && !(scales[j] < scales[j - 1]))
      throw std::invalid_argument("scales must be strictly decreasing (distances increasing)");
  }
}

ActionSpaceConfig ActionSpaceConfig::for_geometry(const ObsGeometry& g, int rotations,
                                                  std::vector<double> scales, double d_ref) {
  ActionSpaceConfig cfg;
  cfg.width = g.width;
  cfg.height = g.height;
  cfg.rotations = rotations;
  cfg.scales = std::move(scales);
  cfg.d_ref = d_ref;
  cfg.validate();
  return cfg;
}

LayerTransform::LayerTransform(int width, int height, double phi_deg, double scale)
    : cx_(0.5 * (width - 1)), cy_(0.5 * (height - 1)), scale_(scale), phi_deg_(phi_deg) {
  exact_cos_sin(phi_deg, cos_, sin_);
}

Point2 LayerTransform::forward(Point2 p) const {
  const double dx = p.x - cx_;
  const double dy = p.y - cy_;
  return {cx_ + scale_ * (cos_ * dx + sin_ * dy), cy_ + scale_ * (-sin_ * dx + cos_ * dy)};
}

Point2 LayerTransform::inverse(Point2 q) const {
  const double dx = (q.x - cx_) / scale_;
  const double dy = (q.y - cy_) / scale_;
  return {cx_ + cos_ * dx - sin_ * dy, cy_ + sin_ * dx + cos_ * dy};
}

LayerTransform layer_transform(const ActionSpaceConfig& cfg, int rotation, int scale) {
  return LayerTransform(cfg.width, cfg.height, cfg.angle_deg(rotation),
                        cfg.scales[static_cast<std::size_t>(scale)]);
}

namespace {

void fill_layer(const Observation& obs, const ActionSpaceConfig& cfg, int layer, float* occ) {
  const int m = static_cast<int>(cfg.scales.size());
  const LayerTransform t = layer_transform(cfg, layer / m, layer % m);
  float* hgt = occ + static_cast<std::size_t>(cfg.height) * cfg.width;
  for (int v = 0; v < cfg.height; ++v)
    for (int u = 0; u < cfg.width; ++u) {
      const Point2 src = t.inverse({static_cast<double>(u), static_cast<double>(v)});
      const std::size_t idx = static_cast<std::size_t>(v) * cfg.width + u;
      occ[idx] = sample_nearest(obs.occupancy, cfg.width, cfg.height, src);
      hgt[idx] = sample_bilinear(obs.height, cfg.width, cfg.height, src);
    }
}

}  // namespace

LayerStack build_layer_stack(const Observation& obs, const ActionSpaceConfig& cfg) {
  check_geometry(obs, cfg);
  LayerStack stack;
  stack.layers = cfg.layers();
  stack.channels = 2;
  stack.height = cfg.height;
  stack.width = cfg.width;
  stack.data.assign(static_cast<std::size_t>(stack.layers) * stack.slice_size(), 0.0f);
  for (int l = 0; l < stack.layers; ++l)
    fill_layer(obs, cfg, l, stack.data.data() + static_cast<std::size_t>(l) * stack.slice_size());
  return stack;
}

LayerStack build_layer(const Observation& obs, const ActionSpaceConfig& cfg, int layer) {
  check_geometry(obs, cfg);
  if (layer < 0 || layer >= cfg.layers()) throw ActionIndexError("layer index out of range");
  LayerStack stack;
  stack.layers = 1;
  stack.channels = 2;
  stack.height = cfg.height;
  stack.width = cfg.width;
  stack.data.assign(stack.slice_size(), 0.0f);
  fill_layer(obs, cfg, layer, stack.data.data());
  return stack;
}

MaskStack build_masks_unchecked(const Observation& obs, const ActionSpaceConfig& cfg) {
  check_geometry(obs, cfg);
  MaskStack ms;
  ms.layers = cfg.layers();
  ms.height = cfg.height;
  ms.width = cfg.width;
  ms.mask.assign(cfg.action_count(), 0);
  const int m = static_cast<int>(cfg.scales.size());
  const ObsGeometry& g = obs.geometry;
  for (int i = 0; i < cfg.rotations; ++i) {
    double c = 0.0, s = 0.0;
    exact_cos_sin(cfg.angle_deg(i), c, s);
    for (int j = 0; j < m; ++j) {
      const LayerTransform t = layer_transform(cfg, i, j);
      const double dist = cfg.distance(j);
      for (int v = 0; v < cfg.height; ++v)
        for (int u = 0; u < cfg.width; ++u) {
          const Point2 src = t.inverse({static_cast<double>(u), static_cast<double>(v)});
          if (sample_nearest(obs.occupancy, cfg.width, cfg.height, src) != 1.0f) continue;
          const Point2 pick = g.pixel_to_world(src.x, src.y);
          const Point2 place{pick.x + dist * c, pick.y + dist * s};
          if (!g.contains(place)) continue;
          ms.mask[flatten_index({u, v, i, j}, cfg)] = 1;
        }
    }
  }
  return ms;
}

MaskStack build_masks(const Observation& obs, const ActionSpaceConfig& cfg) {
  MaskStack ms = build_masks_unchecked(obs, cfg);
  if (ms.valid_count() == 0) throw NoValidAction();
  return ms;
}

std::size_t MaskStack::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::size_t MaskStack::layer_valid_count(int l) const {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const auto begin = mask.begin() + static_cast<std::ptrdiff_t>(l * plane);
  return static_cast<std::size_t>(
      std::count(begin, begin + static_cast<std::ptrdiff_t>(plane), std::uint8_t{1}));
}

std::size_t flatten_index(const LayerIndex& idx, const ActionSpaceConfig& cfg) {
  const int m = static_cast<int>(cfg.scales.size());
  if (idx.u < 0 || idx.u >= cfg.width || idx.v < 0 || idx.v >= cfg.height || idx.rotation < 0 ||
      idx.rotation >= cfg.rotations || idx.scale < 0 || idx.scale >= m)
    throw ActionIndexError("action coordinates out of range");
  const std::size_t layer = static_cast<std::size_t>(idx.rotation) * m + idx.scale;
  return ((layer * cfg.height + idx.v) * cfg.width) + idx.u;
}

LayerIndex unflatten_index(std::size_t k, const ActionSpaceConfig& cfg) {
  if (k >= cfg.action_count())
    throw ActionIndexError("flat action index " + std::to_string(k) + " out of range");
  const std::size_t m = cfg.scales.size();
  LayerIndex idx;
  idx.u = static_cast<int>(k % cfg.width);
  k /= cfg.width;
  idx.v = static_cast<int>(k % cfg.height);
  k /= cfg.height;
  idx.scale = static_cast<int>(k % m);
  idx.rotation = static_cast<int>(k / m);
  return idx;
}

WorldAction decode_action(std::size_t k, const ActionSpaceConfig& cfg, const ObsGeometry& geometry) {
  const LayerIndex idx = unflatten_index(k, cfg);
  const LayerTransform t = layer_transform(cfg, idx.rotation, idx.scale);
  const Point2 src = t.inverse({static_cast<double>(idx.u), static_cast<double>(idx.v)});
  WorldAction a;
  a.pick = geometry.pixel_to_world(src.x, src.y);
  a.phi_deg = cfg.angle_deg(idx.rotation);
  a.dist = cfg.distance(idx.scale);
  return a;
}

MaskedCategorical::MaskedCategorical(std::span<const double> logits,
                                     std::span<const std::uint8_t> mask)
    : mask_(mask.begin(), mask.end()), logits_(logits.begin(), logits.end()) {
  if (logits.size() != mask.size())
    throw std::invalid_argument("logits and mask sizes differ");
  const std::size_t n = logits.size();
  double zmax = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t k = 0; k < n; ++k) {
    if (!mask[k]) continue;
    if (!std::isfinite(logits[k])) throw std::invalid_argument("non-finite logit");
    zmax = std::max(zmax, logits[k]);
    any = true;
  }
  if (!any) throw NoValidAction();
  probs_.assign(n, 0.0);
  log_probs_.assign(n, -std::numeric_limits<double>::infinity());
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double z = mask[k] ? logits[k] : kMaskedLogit;
    probs_[k] = std::exp(z - zmax);
    if (mask[k]) sum += probs_[k];
  }
  const double log_sum = std::log(sum);
  for (std::size_t k = 0; k < n; ++k) {
    if (mask[k]) {
      probs_[k] /= sum;
      log_probs_[k] = logits[k] - zmax - log_sum;
    } else {
      probs_[k] = 0.0;
    }
  }
}

double MaskedCategorical::log_prob(std::size_t k) const { return log_probs_.at(k); }

double MaskedCategorical::entropy() const {
  double h = 0.0;
  for (std::size_t k = 0; k < probs_.size(); ++k)
    if (mask_[k] && probs_[k] > 0.0) h -= probs_[k] * log_probs_[k];
  return h;
}

std::size_t MaskedCategorical::sample(Rng& rng) const {
  const double target = rng.uniform();
  double cum = 0.0;
  std::size_t last_valid = 0;
  for (std::size_t k = 0; k < probs_.size(); ++k) {
    if (!mask_[k] || probs_[k] == 0.0) continue;
    cum += probs_[k];
    last_valid = k;
    if (target < cum) return k;
  }
  return last_valid;
}

std::size_t MaskedCategorical::argmax() const {
  std::size_t best = probs_.size();
  for (std::size_t k = 0; k < probs_.size(); ++k) {
    if (!mask_[k]) continue;
    if (best == probs_.size() || logits_[k] > logits_[best]) best = k;
  }
  return best;
}

}  // namespace unfold
