#pragma once

// Test-side oracles written directly from the definitions, sharing no code
// with the library's kernels, plus small fixtures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "unfold/env.hpp"
#include "unfold/neuralnet.hpp"
#include "unfold/ppo.hpp"
#include "unfold/rng.hpp"

namespace testing {

// Direct nested-loop 3x3 same convolution for one image.
inline std::vector<double> naive_conv(const std::vector<double>& in, int cin, int h, int w,
                                      const std::vector<double>& weight,
                                      const std::vector<double>& bias, int cout) {
  std::vector<double> out(static_cast<std::size_t>(cout) * h * w, 0.0);
  for (int o = 0; o < cout; ++o)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = bias[o];
        for (int c = 0; c < cin; ++c)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              s += weight[((o * cin + c) * 3 + dy + 1) * 3 + dx + 1] *
                   in[(static_cast<std::size_t>(c) * h + yy) * w + xx];
            }
        out[(static_cast<std::size_t>(o) * h + y) * w + x] = s;
      }
  return out;
}

inline std::vector<double> as_double(std::span<const float> v) { return {v.begin(), v.end()}; }
inline std::vector<double> as_double(std::span<const double> v) { return {v.begin(), v.end()}; }

// Trunk features of one image, following the documented architecture.
template <typename T>
std::vector<double> naive_trunk(const unfold::NetSpec& spec, const unfold::ParamSet<T>& p,
                                std::vector<double> x, int& c, int& h, int& w) {
  c = spec.in_channels;
  const int depth = spec.trunk_depth();
  for (int i = 0; i < depth; ++i) {
    const std::string base = "trunk." + std::to_string(i) + ".";
    const int out = spec.trunk_channels[static_cast<std::size_t>(i)];
    x = naive_conv(x, c, h, w, as_double(p.values(base + "weight")), as_double(p.values(base + "bias")), out);
    for (double& v : x) v = std::max(v, 0.0);
    c = out;
    if (spec.down_up && i == 0) {
      std::vector<double> pooled(static_cast<std::size_t>(c) * (h / 2) * (w / 2));
      for (int k = 0; k < c; ++k)
        for (int y = 0; y < h / 2; ++y)
          for (int xx = 0; xx < w / 2; ++xx) {
            auto at = [&](int yy, int xq) { return x[(static_cast<std::size_t>(k) * h + yy) * w + xq]; };
            pooled[(static_cast<std::size_t>(k) * (h / 2) + y) * (w / 2) + xx] =
                0.25 * (at(2 * y, 2 * xx) + at(2 * y, 2 * xx + 1) + at(2 * y + 1, 2 * xx) + at(2 * y + 1, 2 * xx + 1));
          }
      x = std::move(pooled);
      h /= 2;
      w /= 2;
    }
    if (spec.down_up && i == depth - 1) {
      std::vector<double> up(static_cast<std::size_t>(c) * h * w * 4);
      for (int k = 0; k < c; ++k)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            up[(static_cast<std::size_t>(k) * 2 * h + y) * 2 * w + xx] =
                x[(static_cast<std::size_t>(k) * h + y / 2) * w + xx / 2];
      x = std::move(up);
      h *= 2;
      w *= 2;
    }
  }
  return x;
}

// Head output for a batch of images, [B][H][W].
template <typename T>
std::vector<double> naive_policy(const unfold::NetSpec& spec, const unfold::ParamSet<T>& p,
                                 std::span<const T> input, int batch, int height, int width) {
  const std::size_t in_size = static_cast<std::size_t>(spec.in_channels) * height * width;
  std::vector<double> out;
  for (int b = 0; b < batch; ++b) {
    std::vector<double> x(input.begin() + static_cast<std::ptrdiff_t>(b * in_size),
                          input.begin() + static_cast<std::ptrdiff_t>((b + 1) * in_size));
    int c = 0, h = height, w = width;
    x = naive_trunk(spec, p, std::move(x), c, h, w);
    const auto y = naive_conv(x, c, h, w, as_double(p.values("head.weight")), as_double(p.values("head.bias")), 1);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

template <typename T>
double naive_critic(const unfold::NetSpec& spec, const unfold::ParamSet<T>& p,
                    std::span<const T> input, int height, int width) {
  int c = 0, h = height, w = width;
  const auto x = naive_trunk(spec, p, std::vector<double>(input.begin(), input.end()), c, h, w);
  double v = p.values("value.bias")[0];
  const auto vw = p.values("value.weight");
  for (int k = 0; k < c; ++k) {
    double s = 0.0;
    for (int i = 0; i < h * w; ++i) s += x[static_cast<std::size_t>(k) * h * w + i];
    v += vw[k] * s / (h * w);
  }
  return v;
}

// log softmax over the valid entries, computed from scratch.
inline double naive_log_prob(const std::vector<double>& z, const std::vector<std::uint8_t>& mask,
                             std::size_t k) {
  double zmax = -1e300;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (mask[i]) zmax = std::max(zmax, z[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (mask[i]) s += std::exp(z[i] - zmax);
  return z[k] - zmax - std::log(s);
}

// Central differences of f over every parameter; returns the gradient.
inline unfold::ParamSet<double> finite_difference(unfold::ParamSet<double>& params,
                                                  const std::function<double()>& f,
                                                  double h = 1e-5) {
  auto grads = params.zeros_like();
  for (auto& t : params) {
    auto g = grads.values(t.name);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const double x = t.values[i];
      t.values[i] = x + h;
      const double up = f();
      t.values[i] = x - h;
      const double down = f();
      t.values[i] = x;
      g[i] = (up - down) / (2 * h);
    }
  }
  return grads;
}

// Max over entries of |a - b| / max(|a|, |b|, floor).
inline double max_rel_error(const unfold::ParamSet<double>& a, const unfold::ParamSet<double>& b,
                            double floor = 1e-5) {
  double worst = 0.0;
  for (const auto& t : a) {
    const auto other = b.values(t.name);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const double x = t.values[i], y = other[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    }
  }
  return worst;
}

inline double cosine(const unfold::ParamSet<double>& a, const unfold::ParamSet<double>& b) {
  return unfold::dot(a, b) / std::sqrt(unfold::dot(a, a) * unfold::dot(b, b));
}

// Random parameters with non-zero biases so every path is exercised.
template <typename T>
unfold::ParamSet<T> randomized(unfold::ParamSet<T> p, std::uint64_t seed, double bias_scale = 0.1) {
  unfold::Rng rng(seed);
  for (auto& t : p)
    if (t.name.find("bias") != std::string::npos)
      for (auto& v : t.values) v = static_cast<T>(bias_scale * rng.normal());
  return p;
}

inline std::vector<double> random_input(std::size_t n, unfold::Rng& rng) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

// 16x16 cloth on a 32x32 grid over the default 0.5 m workspace.
inline unfold::EnvConfig small_env() {
  unfold::EnvConfig cfg;
  cfg.geometry.width = 32;
  cfg.geometry.height = 32;
  cfg.geometry.pixel_size = 0.015625;
  cfg.action.width = 32;
  cfg.action.height = 32;
  return cfg;
}

// The desk-scale defaults: 16x16 cloth, 64x64 grid.
inline unfold::EnvConfig desk_env() { return unfold::EnvConfig{}; }

// Synthetic PPO minibatch on [layers][2][h][w] stacks whose stored log-probs
// put each ratio at `ratios[i]` under `actor`.
inline std::vector<unfold::PPOItem<double>> ppo_items(const unfold::NetSpec& spec,
                                                      const unfold::ParamSet<double>& actor,
                                                      int layers, int h, int w,
                                                      const std::vector<double>& ratios,
                                                      const std::vector<double>& advantages,
                                                      unfold::Rng& rng) {
  std::vector<unfold::PPOItem<double>> items;
  const std::size_t n = static_cast<std::size_t>(layers) * h * w;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    unfold::PPOItem<double> it;
    it.stack = random_input(n * 2, rng);
    it.obs = random_input(static_cast<std::size_t>(2) * h * w, rng);
    it.mask.resize(n);
    for (auto& m : it.mask) m = rng.uniform() < 0.6;
    do {
      it.action = rng.below(n);
    } while (!it.mask[it.action]);
    it.advantage = advantages[i];
    it.target = rng.uniform(-1, 1);
    auto z = unfold::policy_forward<double>(spec, actor, it.stack, layers, h, w);
    for (double& x : z) x *= spec.logit_scale;
    it.log_prob_old = unfold::MaskedCategorical(z, it.mask).log_prob(it.action) - std::log(ratios[i]);
    items.push_back(std::move(it));
  }
  return items;
}

// -1/B sum A log pi(a|o) through the oracle net.
inline double reinforce_objective(const unfold::NetSpec& spec, const unfold::ParamSet<double>& actor,
                                  int layers, int h, int w,
                                  const std::vector<unfold::PPOItem<double>>& items) {
  double j = 0;
  for (const auto& it : items) {
    auto z = naive_policy<double>(spec, actor, it.stack, layers, h, w);
    for (double& x : z) x *= spec.logit_scale;
    j -= it.advantage * naive_log_prob(z, it.mask, it.action);
  }
  return j / double(items.size());
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("unfold_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
