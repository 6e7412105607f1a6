#include "unfold/kernels.hpp"

namespace unfold::reference {

template <typename T>
void conv3x3_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> out) {
  const int H = s.height, W = s.width;
  auto at_in = [&](int n, int c, int y, int x) -> T {
    if (y < 0 || y >= H || x < 0 || x >= W) return T(0);
    return in[((static_cast<std::size_t>(n) * s.in_ch + c) * H + y) * W + x];
  };
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_ch; ++co)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          T acc = bias[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < s.in_ch; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx)
                acc += weight[((static_cast<std::size_t>(co) * s.in_ch + ci) * 3 + ky) * 3 + kx] *
                       at_in(n, ci, y + ky - 1, x + kx - 1);
          out[((static_cast<std::size_t>(n) * s.out_ch + co) * H + y) * W + x] = acc;
        }
}

template <typename T>
void conv3x3_backward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                      std::span<const T> grad_out, std::span<T> grad_in,
                      std::span<T> grad_weight, std::span<T> grad_bias) {
  const int H = s.height, W = s.width;
  if (!grad_in.empty())
    for (auto& g : grad_in) g = T(0);
  // Scatter form: each output gradient contributes to the inputs it read.
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_ch; ++co)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const T g = grad_out[((static_cast<std::size_t>(n) * s.out_ch + co) * H + y) * W + x];
          grad_bias[static_cast<std::size_t>(co)] += g;
          for (int ci = 0; ci < s.in_ch; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = y + ky - 1, ix = x + kx - 1;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                const std::size_t wi = ((static_cast<std::size_t>(co) * s.in_ch + ci) * 3 + ky) * 3 + kx;
                const std::size_t ii = ((static_cast<std::size_t>(n) * s.in_ch + ci) * H + iy) * W + ix;
                grad_weight[wi] += g * in[ii];
                if (!grad_in.empty()) grad_in[ii] += g * weight[wi];
              }
        }
}

template void conv3x3_forward<float>(const ConvShape&, std::span<const float>,
                                     std::span<const float>, std::span<const float>,
                                     std::span<float>);
template void conv3x3_forward<double>(const ConvShape&, std::span<const double>,
                                      std::span<const double>, std::span<const double>,
                                      std::span<double>);
template void conv3x3_backward<float>(const ConvShape&, std::span<const float>,
                                      std::span<const float>, std::span<const float>,
                                      std::span<float>, std::span<float>, std::span<float>);
template void conv3x3_backward<double>(const ConvShape&, std::span<const double>,
                                       std::span<const double>, std::span<const double>,
                                       std::span<double>, std::span<double>, std::span<double>);

}  // namespace unfold::reference
