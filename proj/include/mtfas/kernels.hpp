/*
 * Copyright 2026 The mtfas Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

// Single-sample (C, H, W) kernels for stride-1 "same" convolution and 2x2
// max pooling. The OpenMP versions in mtfas::kernels split work over output
// channels (forward, weight gradient) or input channels (input gradient), so
// every output element is owned by exactly one thread. The accumulation order
// per element is identical to mtfas::kernels::reference, which makes the two
// families bit-identical as long as floating-point contraction is disabled.
//
// Accumulation orders:
//   forward        y[o,i,j]   = b[o], then + w*x over (c, ky, kx) ascending
//   input grad     gx[c,i,j]  = 0, then + w*gy over (o, ky, kx) ascending
//   weight grad    gw[o,c,ky,kx] = sum over columns j of (sum over rows i)
//   bias grad      gb[o]      = sum over columns j of (sum over rows i)
// Out-of-bounds taps are skipped, never added as zero.

namespace mtfas::kernels {

struct ConvDims {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 3;  // odd; padding is kernel / 2

  std::size_t input_size() const { return in_channels * height * width; }
  std::size_t output_size() const { return out_channels * height * width; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel * kernel; }
};

struct PoolDims {
  std::size_t channels = 0;
  std::size_t height = 0;  // input height, even
  std::size_t width = 0;   // input width, even

  std::size_t input_size() const { return channels * height * width; }
  std::size_t output_size() const { return channels * (height / 2) * (width / 2); }
};

/// An empty bias span means no bias.
template <typename T>
void conv2d_forward(const ConvDims& d, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y);

/// gx is overwritten.
template <typename T>
void conv2d_backward_input(const ConvDims& d, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx);

/// gw and gb are overwritten.
template <typename T>
void conv2d_backward_weight(const ConvDims& d, std::span<const T> gy, std::span<const T> x,
                            std::span<T> gw, std::span<T> gb);

/// argmax receives the flat input index selected for each output. Ties go to
/// the first maximal element in scan order.
template <typename T>
void max_pool2_forward(const PoolDims& d, std::span<const T> x, std::span<T> y,
                       std::span<std::uint32_t> argmax);

namespace reference {

template <typename T>
void conv2d_forward(const ConvDims& d, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y);

template <typename T>
void conv2d_backward_input(const ConvDims& d, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx);

template <typename T>
void conv2d_backward_weight(const ConvDims& d, std::span<const T> gy, std::span<const T> x,
                            std::span<T> gw, std::span<T> gb);

template <typename T>
void max_pool2_forward(const PoolDims& d, std::span<const T> x, std::span<T> y,
                       std::span<std::uint32_t> argmax);

}  // namespace reference

}  // namespace mtfas::kernels
