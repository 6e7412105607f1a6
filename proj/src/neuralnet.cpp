#include "unfold/neuralnet.hpp"

#include <algorithm>
#include <cmath>

#include "unfold/kernels.hpp"
#include "unfold/rng.hpp"

namespace unfold {

// ---------------------------------------------------------------- ParamSet

template <typename T>
void ParamSet<T>::add(std::string name, std::vector<int> shape, std::vector<T> values) {
  if (contains(name)) throw ShapeError("duplicate parameter " + name);
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  if (n != values.size()) throw ShapeError("parameter " + name + " size does not match shape");
  tensors_.push_back({std::move(name), std::move(shape), std::move(values)});
}

template <typename T>
void ParamSet<T>::add_zeros(std::string name, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  add(std::move(name), std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
bool ParamSet<T>::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const NamedTensor<T>& t) { return t.name == name; });
}

template <typename T>
NamedTensor<T>& ParamSet<T>::at(const std::string& name) {
  for (auto& t : tensors_)
    if (t.name == name) return t;
  throw ShapeError("missing parameter " + name);
}

template <typename T>
const NamedTensor<T>& ParamSet<T>::at(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw ShapeError("missing parameter " + name);
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  ParamSet out;
  for (const auto& t : tensors_) out.add(t.name, t.shape, std::vector<T>(t.values.size(), T(0)));
  return out;
}

template <typename T>
void ParamSet<T>::fill(T value) {
  for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), value);
}

template <typename T>
bool ParamSet<T>::same_layout(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name != other.tensors_[i].name || tensors_[i].shape != other.tensors_[i].shape)
      return false;
  return true;
}

template class ParamSet<float>;
template class ParamSet<double>;

// ---------------------------------------------------------------- layout

namespace {

std::string trunk_name(int i, const char* what) {
  return "trunk." + std::to_string(i) + "." + what;
}

template <typename T>
void add_conv(ParamSet<T>& p, const std::string& prefix_w, const std::string& prefix_b, int out,
              int in, double stddev, Rng& rng) {
  std::vector<T> w(static_cast<std::size_t>(out) * in * 9);
  for (auto& x : w) x = static_cast<T>(stddev * rng.normal());
  p.add(prefix_w, {out, in, 3, 3}, std::move(w));
  p.add_zeros(prefix_b, {out});
}

template <typename T>
void add_trunk(ParamSet<T>& p, const NetSpec& spec, Rng& rng) {
  int in = spec.in_channels;
  for (int i = 0; i < spec.trunk_depth(); ++i) {
    const int out = spec.trunk_channels[static_cast<std::size_t>(i)];
    add_conv(p, trunk_name(i, "weight"), trunk_name(i, "bias"), out, in,
             std::sqrt(2.0 / (9.0 * in)), rng);
    in = out;
  }
}

template <typename T>
struct Trunk {
  std::vector<T> features;
  int channels = 0, height = 0, width = 0;
};

template <typename T>
Trunk<T> trunk_forward(const NetSpec& spec, const ParamSet<T>& params, std::span<const T> input,
                       int batch, int height, int width, ForwardTape<T>* tape) {
  if (input.size() != static_cast<std::size_t>(batch) * spec.in_channels * height * width)
    throw ShapeError("network input has wrong size");
  if (spec.down_up && (height % 2 || width % 2))
    throw ShapeError("down/up trunk needs even spatial dimensions");
  Trunk<T> cur{std::vector<T>(input.begin(), input.end()), spec.in_channels, height, width};
  if (tape) {
    *tape = ForwardTape<T>{};
    tape->batch = batch;
    tape->height = height;
    tape->width = width;
  }
  const int depth = spec.trunk_depth();
  for (int i = 0; i < depth; ++i) {
    const int out_ch = spec.trunk_channels[static_cast<std::size_t>(i)];
    const auto& w = params.at(trunk_name(i, "weight"));
    if (w.shape != std::vector<int>{out_ch, cur.channels, 3, 3})
      throw ShapeError("parameter " + w.name + " has unexpected shape");
    const ConvShape shape{batch, cur.channels, out_ch, cur.height, cur.width};
    std::vector<T> pre(shape.out_size());
    kernels::conv3x3_forward<T>(shape, cur.features, w.values, params.values(trunk_name(i, "bias")),
                                pre);
    std::vector<T> act(pre.size());
    kernels::relu_forward<T>(pre, act);
    if (tape) {
      tape->conv_inputs.push_back(std::move(cur.features));
      tape->conv_dims.emplace_back(cur.height, cur.width);
      tape->conv_pre.push_back(std::move(pre));
    }
    cur.channels = out_ch;
    if (spec.down_up && i == 0) {
      std::vector<T> pooled(act.size() / 4);
      kernels::avgpool2_forward<T>(batch * out_ch, cur.height, cur.width, act, pooled);
      if (tape) tape->pooled_input = act;
      act = std::move(pooled);
      cur.height /= 2;
      cur.width /= 2;
    }
    if (spec.down_up && i == depth - 1) {
      std::vector<T> up(act.size() * 4);
      kernels::upsample2_forward<T>(batch * out_ch, cur.height, cur.width, act, up);
      act = std::move(up);
      cur.height *= 2;
      cur.width *= 2;
    }
    cur.features = std::move(act);
  }
  if (tape) tape->trunk_out = cur.features;
  return cur;
}

// Returns nothing; accumulates trunk parameter gradients from d/d(features).
template <typename T>
void trunk_backward(const NetSpec& spec, const ParamSet<T>& params, const ForwardTape<T>& tape,
                    std::vector<T> grad, ParamSet<T>& grads) {
  const int depth = spec.trunk_depth();
  const int batch = tape.batch;
  for (int i = depth - 1; i >= 0; --i) {
    const int out_ch = spec.trunk_channels[static_cast<std::size_t>(i)];
    const int in_ch = i == 0 ? spec.in_channels : spec.trunk_channels[static_cast<std::size_t>(i - 1)];
    const auto [ch, cw] = tape.conv_dims[static_cast<std::size_t>(i)];
    if (spec.down_up && i == depth - 1) {
      // Upsample input resolution: pooled if this conv is also the first.
      const int uh = i == 0 ? ch / 2 : ch;
      const int uw = i == 0 ? cw / 2 : cw;
      std::vector<T> g(grad.size() / 4);
      kernels::upsample2_backward<T>(batch * out_ch, uh, uw, grad, g);
      grad = std::move(g);
    }
    if (spec.down_up && i == 0) {
      std::vector<T> g(grad.size() * 4);
      kernels::avgpool2_backward<T>(batch * out_ch, ch, cw, grad, g);
      grad = std::move(g);
    }
    std::vector<T> gpre(grad.size());
    kernels::relu_backward<T>(tape.conv_pre[static_cast<std::size_t>(i)], grad, gpre);
    const ConvShape shape{batch, in_ch, out_ch, ch, cw};
    std::vector<T> gin;
    if (i > 0) gin.resize(shape.in_size());
    kernels::conv3x3_backward<T>(shape, tape.conv_inputs[static_cast<std::size_t>(i)],
                                 params.values(trunk_name(i, "weight")), gpre, gin,
                                 grads.values(trunk_name(i, "weight")),
                                 grads.values(trunk_name(i, "bias")));
    grad = std::move(gin);
  }
}

template <typename T>
ParamSet<T> layout_policy(const NetSpec& spec) {
  return init_policy_params<T>(spec, 0).zeros_like();
}

}  // namespace

template <typename T>
ParamSet<T> init_policy_params(const NetSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet<T> p;
  add_trunk(p, spec, rng);
  const int c = spec.trunk_out_channels();
  add_conv(p, "head.weight", "head.bias", 1, c, std::sqrt(1.0 / (9.0 * c)), rng);
  return p;
}

template <typename T>
ParamSet<T> init_critic_params(const NetSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet<T> p;
  add_trunk(p, spec, rng);
  const int c = spec.trunk_out_channels();
  std::vector<T> w(static_cast<std::size_t>(c));
  for (auto& x : w) x = static_cast<T>(std::sqrt(1.0 / c) * rng.normal());
  p.add("value.weight", {1, c}, std::move(w));
  p.add_zeros("value.bias", {1});
  return p;
}

template <typename T>
void copy_trunk(const ParamSet<T>& source, ParamSet<T>& target) {
  for (auto& t : target) {
    if (t.name.rfind("trunk.", 0) != 0) continue;
    const auto& s = source.at(t.name);
    if (s.shape != t.shape) throw ShapeError("trunk tensor " + t.name + " shape mismatch");
    t.values = s.values;
  }
}

template <typename T>
std::vector<T> policy_forward(const NetSpec& spec, const ParamSet<T>& params,
                              std::span<const T> input, int batch, int height, int width,
                              ForwardTape<T>* tape) {
  const Trunk<T> trunk = trunk_forward(spec, params, input, batch, height, width, tape);
  const auto& hw = params.at("head.weight");
  if (hw.shape != std::vector<int>{1, trunk.channels, 3, 3})
    throw ShapeError("parameter head.weight has unexpected shape");
  const ConvShape shape{batch, trunk.channels, 1, trunk.height, trunk.width};
  std::vector<T> out(shape.out_size());
  kernels::conv3x3_forward<T>(shape, trunk.features, hw.values, params.values("head.bias"), out);
  return out;
}

template <typename T>
void policy_backward(const NetSpec& spec, const ParamSet<T>& params, const ForwardTape<T>& tape,
                     std::span<const T> grad_out, ParamSet<T>& grads) {
  const int c = spec.trunk_out_channels();
  const ConvShape shape{tape.batch, c, 1, tape.height, tape.width};
  if (grad_out.size() != shape.out_size()) throw ShapeError("policy gradient has wrong size");
  std::vector<T> gfeat(shape.in_size());
  kernels::conv3x3_backward<T>(shape, tape.trunk_out, params.values("head.weight"), grad_out,
                               spec.trunk_depth() > 0 ? std::span<T>(gfeat) : std::span<T>(),
                               grads.values("head.weight"), grads.values("head.bias"));
  if (spec.trunk_depth() > 0) trunk_backward(spec, params, tape, std::move(gfeat), grads);
}

template <typename T>
std::vector<T> critic_forward(const NetSpec& spec, const ParamSet<T>& params,
                              std::span<const T> input, int batch, int height, int width,
                              ForwardTape<T>* tape) {
  const Trunk<T> trunk = trunk_forward(spec, params, input, batch, height, width, tape);
  const auto& vw = params.at("value.weight");
  if (vw.shape != std::vector<int>{1, trunk.channels})
    throw ShapeError("parameter value.weight has unexpected shape");
  const T bias = params.values("value.bias")[0];
  const std::size_t plane = static_cast<std::size_t>(trunk.height) * trunk.width;
  std::vector<T> values(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    T v = bias;
    for (int c = 0; c < trunk.channels; ++c) {
      const T* f = trunk.features.data() + (static_cast<std::size_t>(b) * trunk.channels + c) * plane;
      T sum = 0;
      for (std::size_t i = 0; i < plane; ++i) sum += f[i];
      v += vw.values[static_cast<std::size_t>(c)] * (sum / static_cast<T>(plane));
    }
    values[static_cast<std::size_t>(b)] = v;
  }
  return values;
}

template <typename T>
void critic_backward(const NetSpec& spec, const ParamSet<T>& params, const ForwardTape<T>& tape,
                     std::span<const T> grad_values, ParamSet<T>& grads) {
  const int c_out = spec.trunk_out_channels();
  const std::size_t plane = static_cast<std::size_t>(tape.height) * tape.width;
  if (grad_values.size() != static_cast<std::size_t>(tape.batch))
    throw ShapeError("critic gradient has wrong size");
  auto gw = grads.values("value.weight");
  auto vw = params.values("value.weight");
  std::vector<T> gfeat(static_cast<std::size_t>(tape.batch) * c_out * plane);
  T gbias = 0;
  for (int b = 0; b < tape.batch; ++b) {
    const T dv = grad_values[static_cast<std::size_t>(b)];
    gbias += dv;
    for (int c = 0; c < c_out; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * c_out + c) * plane;
      T sum = 0;
      for (std::size_t i = 0; i < plane; ++i) sum += tape.trunk_out[off + i];
      gw[static_cast<std::size_t>(c)] += dv * (sum / static_cast<T>(plane));
      const T g = dv * vw[static_cast<std::size_t>(c)] / static_cast<T>(plane);
      std::fill(gfeat.begin() + static_cast<std::ptrdiff_t>(off),
                gfeat.begin() + static_cast<std::ptrdiff_t>(off + plane), g);
    }
  }
  grads.values("value.bias")[0] += gbias;
  if (spec.trunk_depth() > 0) trunk_backward(spec, params, tape, std::move(gfeat), grads);
}

template <typename T>
std::vector<T> stack_input(const NetSpec& spec, const LayerStack& stack) {
  if (stack.channels != spec.in_channels) throw ShapeError("layer stack channel count mismatch");
  std::vector<T> out(stack.data.size());
  const std::size_t plane = static_cast<std::size_t>(stack.height) * stack.width;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool is_height = (i / plane) % static_cast<std::size_t>(stack.channels) == 1;
    out[i] = static_cast<T>(is_height ? stack.data[i] * spec.height_gain : stack.data[i]);
  }
  return out;
}

template <typename T>
std::vector<T> slice_input(const NetSpec& spec, const LayerStack& stack, int layer) {
  if (stack.channels != spec.in_channels) throw ShapeError("layer stack channel count mismatch");
  const auto s = stack.slice(layer);
  const std::size_t plane = static_cast<std::size_t>(stack.height) * stack.width;
  std::vector<T> out(s.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(i >= plane && i < 2 * plane ? s[i] * spec.height_gain : s[i]);
  return out;
}

template <typename T>
std::vector<T> observation_input(const NetSpec& spec, const Observation& obs) {
  if (spec.in_channels != 2) throw ShapeError("critic expects two observation channels");
  const std::size_t plane = obs.geometry.pixel_count();
  std::vector<T> out(2 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    out[i] = static_cast<T>(obs.occupancy[i]);
    out[plane + i] = static_cast<T>(obs.height[i] * spec.height_gain);
  }
  return out;
}

std::vector<double> value_maps(const NetSpec& spec, const ParamSet<float>& params,
                               const LayerStack& stack) {
  const auto input = stack_input<float>(spec, stack);
  const auto out = policy_forward<float>(spec, params, input, stack.layers, stack.height, stack.width);
  return {out.begin(), out.end()};
}

std::vector<double> forward_policy(const NetSpec& spec, const ParamSet<float>& params,
                                   const LayerStack& stack) {
  auto z = value_maps(spec, params, stack);
  for (auto& x : z) x *= spec.logit_scale;
  return z;
}

double forward_critic(const NetSpec& spec, const ParamSet<float>& params, const Observation& obs) {
  const auto input = observation_input<float>(spec, obs);
  return critic_forward<float>(spec, params, input, 1, obs.geometry.height, obs.geometry.width)[0];
}

// ---------------------------------------------------------------- optimizer

template <typename T>
Adam<T>::Adam(const ParamSet<T>& like, AdamConfig cfg)
    : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

template <typename T>
void Adam<T>::step(ParamSet<T>& params, const ParamSet<T>& grads, double lr) {
  if (!params.same_layout(grads) || !params.same_layout(m_))
    throw ShapeError("optimizer step with mismatched parameter layout");
  for (const auto& g : grads)
    for (const T x : g.values)
      if (!std::isfinite(static_cast<double>(x)))
        throw NonFiniteError("non-finite gradient in parameter " + g.name);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  auto pit = params.begin();
  auto git = grads.begin();
  auto mit = m_.begin();
  auto vit = v_.begin();
  for (; pit != params.end(); ++pit, ++git, ++mit, ++vit) {
    auto& p = pit->values;
    const auto& g = git->values;
    auto& m = mit->values;
    auto& v = vit->values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      p[i] = static_cast<T>(p[i] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template <typename T>
double clip_grad_norm(ParamSet<T>& grads, double max_norm) {
  const double norm = std::sqrt(dot(grads, grads));
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& t : grads)
      for (auto& x : t.values) x = static_cast<T>(x * s);
  }
  return norm;
}

template <typename T>
double dot(const ParamSet<T>& a, const ParamSet<T>& b) {
  if (!a.same_layout(b)) throw ShapeError("dot of mismatched parameter sets");
  double s = 0.0;
  auto ait = a.begin();
  auto bit = b.begin();
  for (; ait != a.end(); ++ait, ++bit)
    for (std::size_t i = 0; i < ait->values.size(); ++i)
      s += static_cast<double>(ait->values[i]) * static_cast<double>(bit->values[i]);
  return s;
}

void check_policy_layout(const NetSpec& spec, const ParamSet<float>& params) {
  if (!params.same_layout(layout_policy<float>(spec)))
    throw ShapeError("checkpoint does not match the policy network layout");
}

void check_critic_layout(const NetSpec& spec, const ParamSet<float>& params) {
  if (!params.same_layout(init_critic_params<float>(spec, 0)))
    throw ShapeError("checkpoint does not match the critic network layout");
}

#define UNFOLD_INSTANTIATE(T)                                                                     \
  template ParamSet<T> init_policy_params<T>(const NetSpec&, std::uint64_t);                     \
  template ParamSet<T> init_critic_params<T>(const NetSpec&, std::uint64_t);                     \
  template void copy_trunk<T>(const ParamSet<T>&, ParamSet<T>&);                                 \
  template std::vector<T> policy_forward<T>(const NetSpec&, const ParamSet<T>&,                  \
                                            std::span<const T>, int, int, int, ForwardTape<T>*); \
  template void policy_backward<T>(const NetSpec&, const ParamSet<T>&, const ForwardTape<T>&,    \
                                   std::span<const T>, ParamSet<T>&);                            \
  template std::vector<T> critic_forward<T>(const NetSpec&, const ParamSet<T>&,                  \
                                            std::span<const T>, int, int, int, ForwardTape<T>*); \
  template void critic_backward<T>(const NetSpec&, const ParamSet<T>&, const ForwardTape<T>&,    \
                                   std::span<const T>, ParamSet<T>&);                            \
  template std::vector<T> stack_input<T>(const NetSpec&, const LayerStack&);                     \
  template std::vector<T> slice_input<T>(const NetSpec&, const LayerStack&, int);                \
  template std::vector<T> observation_input<T>(const NetSpec&, const Observation&);              \
  template class Adam<T>;                                                                        \
  template double clip_grad_norm<T>(ParamSet<T>&, double);                                       \
  template double dot<T>(const ParamSet<T>&, const ParamSet<T>&);

UNFOLD_INSTANTIATE(float)
UNFOLD_INSTANTIATE(double)
#undef UNFOLD_INSTANTIATE

}  // namespace unfold
