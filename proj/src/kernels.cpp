#include "unfold/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace unfold::kernels {
namespace {

inline std::size_t plane_offset(int n, int c, int channels, int h, int w) {
  return (static_cast<std::size_t>(n) * channels + c) * static_cast<std::size_t>(h) * w;
}

}  // namespace

template <typename T>
void conv3x3_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> out) {
  const int H = s.height, W = s.width;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_ch; ++co) {
      T* o = out.data() + plane_offset(n, co, s.out_ch, H, W);
      std::fill(o, o + plane, bias[static_cast<std::size_t>(co)]);
      for (int ci = 0; ci < s.in_ch; ++ci) {
        const T* src = in.data() + plane_offset(n, ci, s.in_ch, H, W);
        const T* k = weight.data() + (static_cast<std::size_t>(co) * s.in_ch + ci) * 9;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = k[ky * 3 + kx];
            const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
            const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              T* orow = o + static_cast<std::size_t>(y) * W;
              const T* irow = src + static_cast<std::size_t>(y + ky - 1) * W + (kx - 1);
#pragma omp simd
              for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
            }
          }
      }
    }
}

template <typename T>
void conv3x3_backward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                      std::span<const T> grad_out, std::span<T> grad_in,
                      std::span<T> grad_weight, std::span<T> grad_bias) {
  const int H = s.height, W = s.width;
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  if (!grad_in.empty()) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.batch; ++n)
      for (int ci = 0; ci < s.in_ch; ++ci) {
        T* gi = grad_in.data() + plane_offset(n, ci, s.in_ch, H, W);
        std::fill(gi, gi + plane, T(0));
        for (int co = 0; co < s.out_ch; ++co) {
          const T* go = grad_out.data() + plane_offset(n, co, s.out_ch, H, W);
          const T* k = weight.data() + (static_cast<std::size_t>(co) * s.in_ch + ci) * 9;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const T wv = k[ky * 3 + kx];
              // out(y, x) reads in(y + ky - 1, x + kx - 1)
              const int y0 = std::max(0, ky - 1), y1 = std::min(H, H + ky - 1);
              const int x0 = std::max(0, kx - 1), x1 = std::min(W, W + kx - 1);
              for (int y = y0; y < y1; ++y) {
                T* grow = gi + static_cast<std::size_t>(y) * W;
                const T* orow = go + static_cast<std::size_t>(y - ky + 1) * W - (kx - 1);
#pragma omp simd
                for (int x = x0; x < x1; ++x) grow[x] += wv * orow[x];
              }
            }
        }
      }
  }

#pragma omp parallel for schedule(static)
  for (int co = 0; co < s.out_ch; ++co) {
    T bsum = 0;
    for (int n = 0; n < s.batch; ++n) {
      const T* go = grad_out.data() + plane_offset(n, co, s.out_ch, H, W);
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t i = 0; i < plane; ++i) acc += go[i];
      bsum += acc;
    }
    grad_bias[static_cast<std::size_t>(co)] += bsum;

    // Column-wise partial sums per tap keep the inner loop a plain vector
    // multiply-add; columns are reduced once at the end.
    std::vector<T> acc(static_cast<std::size_t>(9) * W);
    for (int ci = 0; ci < s.in_ch; ++ci) {
      std::fill(acc.begin(), acc.end(), T(0));
      for (int n = 0; n < s.batch; ++n) {
        const T* go = grad_out.data() + plane_offset(n, co, s.out_ch, H, W);
        const T* src = in.data() + plane_offset(n, ci, s.in_ch, H, W);
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            T* a = acc.data() + static_cast<std::size_t>(ky * 3 + kx) * W;
            const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
            const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              const T* orow = go + static_cast<std::size_t>(y) * W;
              const T* irow = src + static_cast<std::size_t>(y + ky - 1) * W + (kx - 1);
#pragma omp simd
              for (int x = x0; x < x1; ++x) a[x] += orow[x] * irow[x];
            }
          }
      }
      T* gk = grad_weight.data() + (static_cast<std::size_t>(co) * s.in_ch + ci) * 9;
      for (int k = 0; k < 9; ++k) {
        T total = 0;
        for (int x = 0; x < W; ++x) total += acc[static_cast<std::size_t>(k) * W + x];
        gk[k] += total;
      }
    }
  }
}

template <typename T>
void relu_forward(std::span<const T> in, std::span<T> out) {
  const std::size_t n = in.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(std::span<const T> pre, std::span<const T> grad_out, std::span<T> grad_in) {
  const std::size_t n = pre.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) grad_in[i] = pre[i] > T(0) ? grad_out[i] : T(0);
}

template <typename T>
void avgpool2_forward(int planes, int height, int width, std::span<const T> in, std::span<T> out) {
  const int oh = height / 2, ow = width / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* src = in.data() + static_cast<std::size_t>(p) * height * width;
    T* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const T* r0 = src + static_cast<std::size_t>(2 * y) * width + 2 * x;
        const T* r1 = r0 + width;
        dst[static_cast<std::size_t>(y) * ow + x] = T(0.25) * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
}

template <typename T>
void avgpool2_backward(int planes, int height, int width, std::span<const T> grad_out,
                       std::span<T> grad_in) {
  const int oh = height / 2, ow = width / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* go = grad_out.data() + static_cast<std::size_t>(p) * oh * ow;
    T* gi = grad_in.data() + static_cast<std::size_t>(p) * height * width;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        gi[static_cast<std::size_t>(y) * width + x] =
            T(0.25) * go[static_cast<std::size_t>(y / 2) * ow + x / 2];
  }
}

template <typename T>
void upsample2_forward(int planes, int height, int width, std::span<const T> in, std::span<T> out) {
  const int oh = height * 2, ow = width * 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* src = in.data() + static_cast<std::size_t>(p) * height * width;
    T* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        dst[static_cast<std::size_t>(y) * ow + x] = src[static_cast<std::size_t>(y / 2) * width + x / 2];
  }
}

template <typename T>
void upsample2_backward(int planes, int height, int width, std::span<const T> grad_out,
                        std::span<T> grad_in) {
  const int ow = width * 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* go = grad_out.data() + static_cast<std::size_t>(p) * height * 2 * ow;
    T* gi = grad_in.data() + static_cast<std::size_t>(p) * height * width;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const T* r0 = go + static_cast<std::size_t>(2 * y) * ow + 2 * x;
        const T* r1 = r0 + ow;
        gi[static_cast<std::size_t>(y) * width + x] = r0[0] + r0[1] + r1[0] + r1[1];
      }
  }
}

#define UNFOLD_INSTANTIATE(T)                                                                    \
  template void conv3x3_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,    \
                                   std::span<const T>, std::span<T>);                           \
  template void conv3x3_backward<T>(const ConvShape&, std::span<const T>, std::span<const T>,   \
                                    std::span<const T>, std::span<T>, std::span<T>,             \
                                    std::span<T>);                                              \
  template void relu_forward<T>(std::span<const T>, std::span<T>);                              \
  template void relu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);         \
  template void avgpool2_forward<T>(int, int, int, std::span<const T>, std::span<T>);           \
  template void avgpool2_backward<T>(int, int, int, std::span<const T>, std::span<T>);          \
  template void upsample2_forward<T>(int, int, int, std::span<const T>, std::span<T>);          \
  template void upsample2_backward<T>(int, int, int, std::span<const T>, std::span<T>);

UNFOLD_INSTANTIATE(float)
UNFOLD_INSTANTIATE(double)
#undef UNFOLD_INSTANTIATE

}  // namespace unfold::kernels
