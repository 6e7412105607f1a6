#pragma once

// Observation-aligned discrete action space. Each (rotation i, scale j) pair
// owns one layer: the observation resampled so that world direction phi_i
// points along +u and zoomed by s_j about the image center. A pixel of a
// layer is one action: pick at the pixel, move along phi_i by d_ref / s_j.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "unfold/clothsim.hpp"
#include "unfold/rng.hpp"

namespace unfold {

class NoValidAction : public std::runtime_error {
 public:
  NoValidAction() : std::runtime_error("no valid action under the mask") {}
};

class ActionIndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct ActionSpaceConfig {
  int width = 64;
  int height = 64;
  int rotations = 8;                  // n
  std::vector<double> scales{1.0, 0.5};  // s_j, strictly decreasing
  double d_ref = 0.08;                // m, move length at scale 1

  int layers() const { return rotations * static_cast<int>(scales.size()); }
  std::size_t action_count() const {
    return static_cast<std::size_t>(layers()) * static_cast<std::size_t>(width) * height;
  }
  // phi_i = 360 * (i + 1) / n degrees for the zero-based rotation index.
  double angle_deg(int i) const { return 360.0 * (i + 1) / rotations; }
  double distance(int j) const { return d_ref / scales[static_cast<std::size_t>(j)]; }
  // Throws std::invalid_argument when angles or distances are not strictly
  // increasing or a scale leaves (0, 1].
  void validate() const;

  static ActionSpaceConfig for_geometry(const ObsGeometry& g, int rotations,
                                        std::vector<double> scales, double d_ref);
};

// Pixel-space similarity transform of one layer about the image center.
// forward: observation pixel -> layer pixel; inverse: layer -> observation.
class LayerTransform {
 public:
  LayerTransform(int width, int height, double phi_deg, double scale);

  Point2 forward(Point2 p) const;
  Point2 inverse(Point2 q) const;
  double phi_deg() const { return phi_deg_; }
  double scale() const { return scale_; }

 private:
  double cx_, cy_, cos_, sin_, scale_, phi_deg_;
};

struct LayerIndex {
  int u = 0, v = 0, rotation = 0, scale = 0;
  friend bool operator==(const LayerIndex&, const LayerIndex&) = default;
};

// L x C x H x W, channel 0 occupancy (nearest), channel 1 height (bilinear).
struct LayerStack {
  int layers = 0, channels = 2, height = 0, width = 0;
  std::vector<float> data;

  std::size_t slice_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::span<const float> slice(int l) const {
    return {data.data() + static_cast<std::size_t>(l) * slice_size(), slice_size()};
  }
  float at(int l, int c, int v, int u) const {
    return data[((static_cast<std::size_t>(l) * channels + c) * height + v) * width + u];
  }
};

struct MaskStack {
  int layers = 0, height = 0, width = 0;
  std::vector<std::uint8_t> mask;  // flat action order

  std::size_t valid_count() const;
  std::size_t layer_valid_count(int l) const;
};

LayerTransform layer_transform(const ActionSpaceConfig& cfg, int rotation, int scale);

LayerStack build_layer_stack(const Observation& obs, const ActionSpaceConfig& cfg);
// One slice of the stack (layers = 1), identical to build_layer_stack's.
LayerStack build_layer(const Observation& obs, const ActionSpaceConfig& cfg, int layer);

// Valid iff the transformed occupancy is set and the place point stays inside
// the workspace. Throws NoValidAction when nothing is valid.
MaskStack build_masks(const Observation& obs, const ActionSpaceConfig& cfg);
// Same, without the NoValidAction check.
MaskStack build_masks_unchecked(const Observation& obs, const ActionSpaceConfig& cfg);

std::size_t flatten_index(const LayerIndex& idx, const ActionSpaceConfig& cfg);
LayerIndex unflatten_index(std::size_t k, const ActionSpaceConfig& cfg);

struct WorldAction {
  Point2 pick;
  double phi_deg = 0.0;
  double dist = 0.0;
};

WorldAction decode_action(std::size_t k, const ActionSpaceConfig& cfg, const ObsGeometry& geometry);

// Categorical distribution over the flat action space with invalid entries
// removed: p(k) = exp(z_k) / sum_valid exp(z_k') on the mask, exactly 0 off it.
class MaskedCategorical {
 public:
  static constexpr double kMaskedLogit = -1e9;

  MaskedCategorical(std::span<const double> logits, std::span<const std::uint8_t> mask);

  std::size_t size() const { return probs_.size(); }
  double prob(std::size_t k) const { return probs_[k]; }
  const std::vector<double>& probs() const { return probs_; }
  // -infinity for masked k.
  double log_prob(std::size_t k) const;
  double entropy() const;
  std::size_t sample(Rng& rng) const;
  // Lowest index among the maxima of the valid logits.
  std::size_t argmax() const;

 private:
  std::vector<double> probs_;
  std::vector<double> log_probs_;
  std::vector<std::uint8_t> mask_;
  std::vector<double> logits_;
};

}  // namespace unfold
