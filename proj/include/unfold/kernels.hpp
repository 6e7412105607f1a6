#pragma once

// Dense kernels behind the networks. Tensors are NCHW, row-major.
// The unfold::kernels versions are OpenMP-parallel; every output element is
// produced by one thread with a fixed summation order, so results do not
// depend on the thread count. unfold::reference holds direct nested-loop
// versions used as test oracles and as the benchmark baseline.

#include <span>

namespace unfold {

// 3x3 convolution, stride 1, zero "same" padding.
// Weights are [out_ch][in_ch][3][3].
struct ConvShape {
  int batch = 1;
  int in_ch = 1;
  int out_ch = 1;
  int height = 1;
  int width = 1;

  std::size_t in_size() const { return static_cast<std::size_t>(batch) * in_ch * height * width; }
  std::size_t out_size() const { return static_cast<std::size_t>(batch) * out_ch * height * width; }
  std::size_t weight_size() const { return static_cast<std::size_t>(out_ch) * in_ch * 9; }
};

namespace kernels {

template <typename T>
void conv3x3_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> out);

// Accumulates into grad_weight and grad_bias. grad_in is overwritten; pass an
// empty span to skip it.
template <typename T>
void conv3x3_backward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                      std::span<const T> grad_out, std::span<T> grad_in,
                      std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
void relu_forward(std::span<const T> in, std::span<T> out);

// grad_in = grad_out where pre > 0, else 0.
template <typename T>
void relu_backward(std::span<const T> pre, std::span<const T> grad_out, std::span<T> grad_in);

// 2x2 average pooling over `planes` planes of height x width (both even).
template <typename T>
void avgpool2_forward(int planes, int height, int width, std::span<const T> in, std::span<T> out);
template <typename T>
void avgpool2_backward(int planes, int height, int width, std::span<const T> grad_out,
                       std::span<T> grad_in);

// Nearest 2x upsampling; height and width are the input dimensions.
template <typename T>
void upsample2_forward(int planes, int height, int width, std::span<const T> in, std::span<T> out);
template <typename T>
void upsample2_backward(int planes, int height, int width, std::span<const T> grad_out,
                        std::span<T> grad_in);

}  // namespace kernels

namespace reference {

template <typename T>
void conv3x3_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> out);

template <typename T>
void conv3x3_backward(const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                      std::span<const T> grad_out, std::span<T> grad_in,
                      std::span<T> grad_weight, std::span<T> grad_bias);

}  // namespace reference
}  // namespace unfold
