#pragma once

// Fully-convolutional policy over the layer stack and a pooled scalar critic.
//
// Policy:  input [B][C][H][W] -> trunk (3x3 conv + ReLU)* -> 3x3 conv -> [B][H][W]
// Critic:  input [B][C][H][W] -> trunk -> global average pool -> affine -> [B]
//
// Both share the trunk layout, so a pretrained policy trunk can seed the
// critic. Gradients are exact reverse mode over this fixed graph.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "unfold/actionmaps.hpp"

namespace unfold {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;
};

template <typename T>
class ParamSet {
 public:
  void add(std::string name, std::vector<int> shape, std::vector<T> values);
  void add_zeros(std::string name, std::vector<int> shape);

  bool contains(const std::string& name) const;
  NamedTensor<T>& at(const std::string& name);
  const NamedTensor<T>& at(const std::string& name) const;
  std::span<T> values(const std::string& name) { return at(name).values; }
  std::span<const T> values(const std::string& name) const { return at(name).values; }

  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  ParamSet zeros_like() const;
  void fill(T value);
  bool same_layout(const ParamSet& other) const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors_)
      out.add(t.name, t.shape, std::vector<U>(t.values.begin(), t.values.end()));
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.tensors_.size() != b.tensors_.size()) return false;
    for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
      const auto& x = a.tensors_[i];
      const auto& y = b.tensors_[i];
      if (x.name != y.name || x.shape != y.shape || x.values != y.values) return false;
    }
    return true;
  }

 private:
  std::vector<NamedTensor<T>> tensors_;
};

struct NetSpec {
  int in_channels = 2;
  std::vector<int> trunk_channels{16, 32, 16};
  // One 2x average-pool after the first trunk conv and a 2x nearest
  // upsample after the last; H and W must be even.
  bool down_up = false;
  // Input channel 1 (height, meters) is multiplied by this before the trunk.
  double height_gain = 10.0;
  // Policy logits = logit_scale * head output. The head output itself is
  // the per-pixel value regressed during pretraining.
  double logit_scale = 50.0;

  int trunk_depth() const { return static_cast<int>(trunk_channels.size()); }
  int trunk_out_channels() const { return trunk_channels.empty() ? in_channels : trunk_channels.back(); }
};

// Activations recorded by a forward pass for the matching backward pass.
template <typename T>
struct ForwardTape {
  int batch = 0, height = 0, width = 0;
  std::vector<std::vector<T>> conv_inputs;  // input to each trunk conv
  std::vector<std::vector<T>> conv_pre;     // pre-activation of each trunk conv
  std::vector<std::pair<int, int>> conv_dims;
  std::vector<T> pooled_input;  // post-ReLU of conv 0 before pooling (down_up)
  std::vector<T> trunk_out;     // feature map fed to the head
};

template <typename T>
ParamSet<T> init_policy_params(const NetSpec& spec, std::uint64_t seed);
template <typename T>
ParamSet<T> init_critic_params(const NetSpec& spec, std::uint64_t seed);

// Copies trunk.* tensors from `source` into `target` (layouts must agree).
template <typename T>
void copy_trunk(const ParamSet<T>& source, ParamSet<T>& target);

// Raw head output, [batch][h][w].
template <typename T>
std::vector<T> policy_forward(const NetSpec& spec, const ParamSet<T>& params,
                              std::span<const T> input, int batch, int height, int width,
                              ForwardTape<T>* tape = nullptr);

// Accumulates parameter gradients for d(loss)/d(head output) = grad_out.
template <typename T>
void policy_backward(const NetSpec& spec, const ParamSet<T>& params, const ForwardTape<T>& tape,
                     std::span<const T> grad_out, ParamSet<T>& grads);

template <typename T>
std::vector<T> critic_forward(const NetSpec& spec, const ParamSet<T>& params,
                              std::span<const T> input, int batch, int height, int width,
                              ForwardTape<T>* tape = nullptr);

template <typename T>
void critic_backward(const NetSpec& spec, const ParamSet<T>& params, const ForwardTape<T>& tape,
                     std::span<const T> grad_values, ParamSet<T>& grads);

// Network input for the layer stack (all slices, batch = layers) or for a
// single slice.
template <typename T>
std::vector<T> stack_input(const NetSpec& spec, const LayerStack& stack);
template <typename T>
std::vector<T> slice_input(const NetSpec& spec, const LayerStack& stack, int layer);
// Critic input: the observation itself, [1][2][H][W].
template <typename T>
std::vector<T> observation_input(const NetSpec& spec, const Observation& obs);

// Per-action values (head output) over the flat action space.
std::vector<double> value_maps(const NetSpec& spec, const ParamSet<float>& params,
                               const LayerStack& stack);
// Flat logits z = logit_scale * value_maps.
std::vector<double> forward_policy(const NetSpec& spec, const ParamSet<float>& params,
                                   const LayerStack& stack);
double forward_critic(const NetSpec& spec, const ParamSet<float>& params, const Observation& obs);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const ParamSet<T>& like, AdamConfig cfg = {});

  // One bias-corrected update. Throws NonFiniteError naming the tensor when a
  // gradient is not finite; params are untouched in that case.
  void step(ParamSet<T>& params, const ParamSet<T>& grads, double lr);
  int steps() const { return t_; }

 private:
  AdamConfig cfg_;
  ParamSet<T> m_, v_;
  int t_ = 0;
};

// Scales grads so their global L2 norm is at most max_norm. Returns the norm
// before scaling.
template <typename T>
double clip_grad_norm(ParamSet<T>& grads, double max_norm);

template <typename T>
double dot(const ParamSet<T>& a, const ParamSet<T>& b);

// Binary format: "CPPO", u32 version = 1, u32 tensor count, then per tensor
// u32 name length, name bytes, u32 rank, u32 dims..., little-endian f32
// payload in row-major order.
void save_checkpoint(const ParamSet<float>& params, const std::filesystem::path& path);
ParamSet<float> load_checkpoint(const std::filesystem::path& path);

// Throws ShapeError when `params` does not have the layout `spec` implies.
void check_policy_layout(const NetSpec& spec, const ParamSet<float>& params);
void check_critic_layout(const NetSpec& spec, const ParamSet<float>& params);

}  // namespace unfold
