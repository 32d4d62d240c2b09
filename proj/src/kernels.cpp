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

#include "mtfas/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace mtfas::kernels {

namespace {

// Valid output range [lo, hi) for a tap offset `off` along an axis of length n.
struct Range {
  std::ptrdiff_t lo;
  std::ptrdiff_t hi;
};

inline Range tap_range(std::ptrdiff_t off, std::ptrdiff_t n) {
  return {std::max<std::ptrdiff_t>(0, -off), std::min<std::ptrdiff_t>(n, n - off)};
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvDims& d, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const std::ptrdiff_t plane = H * W;
  const auto C = static_cast<std::ptrdiff_t>(d.in_channels);
  const auto O = static_cast<std::ptrdiff_t>(d.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < O; ++o) {
    T* yo = y.data() + o * plane;
    const T bias = b.empty() ? T(0) : b[o];
    std::fill(yo, yo + plane, bias);
    for (std::ptrdiff_t c = 0; c < C; ++c) {
      const T* xc = x.data() + c * plane;
      const T* wk = w.data() + (o * C + c) * K * K;
      for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
        const std::ptrdiff_t dy = ky - pad;
        const Range ry = tap_range(dy, H);
        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
          const std::ptrdiff_t dx = kx - pad;
          const Range rx = tap_range(dx, W);
          const T wv = wk[ky * K + kx];
          for (std::ptrdiff_t i = ry.lo; i < ry.hi; ++i) {
            T* out = yo + i * W;
            const T* in = xc + (i + dy) * W + dx;
            for (std::ptrdiff_t j = rx.lo; j < rx.hi; ++j) out[j] += wv * in[j];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvDims& d, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const std::ptrdiff_t plane = H * W;
  const auto C = static_cast<std::ptrdiff_t>(d.in_channels);
  const auto O = static_cast<std::ptrdiff_t>(d.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < C; ++c) {
    T* gxc = gx.data() + c * plane;
    std::fill(gxc, gxc + plane, T(0));
    for (std::ptrdiff_t o = 0; o < O; ++o) {
      const T* go = gy.data() + o * plane;
      const T* wk = w.data() + (o * C + c) * K * K;
      for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
        const std::ptrdiff_t dy = ky - pad;
        const Range ry = tap_range(dy, H);
        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
          const std::ptrdiff_t dx = kx - pad;
          const Range rx = tap_range(dx, W);
          const T wv = wk[ky * K + kx];
          for (std::ptrdiff_t i = ry.lo; i < ry.hi; ++i) {
            T* out = gxc + (i + dy) * W + dx;
            const T* g = go + i * W;
            for (std::ptrdiff_t j = rx.lo; j < rx.hi; ++j) out[j] += wv * g[j];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvDims& d, std::span<const T> gy, std::span<const T> x,
                            std::span<T> gw, std::span<T> gb) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const std::ptrdiff_t plane = H * W;
  const auto C = static_cast<std::ptrdiff_t>(d.in_channels);
  const auto O = static_cast<std::ptrdiff_t>(d.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < O; ++o) {
    std::vector<T> col(static_cast<std::size_t>(W));
    const T* go = gy.data() + o * plane;

    std::fill(col.begin(), col.end(), T(0));
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      const T* g = go + i * W;
      for (std::ptrdiff_t j = 0; j < W; ++j) col[j] += g[j];
    }
    T sb = T(0);
    for (std::ptrdiff_t j = 0; j < W; ++j) sb += col[j];
    if (!gb.empty()) gb[o] = sb;

    for (std::ptrdiff_t c = 0; c < C; ++c) {
      const T* xc = x.data() + c * plane;
      T* wk = gw.data() + (o * C + c) * K * K;
      for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
        const std::ptrdiff_t dy = ky - pad;
        const Range ry = tap_range(dy, H);
        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
          const std::ptrdiff_t dx = kx - pad;
          const Range rx = tap_range(dx, W);
          std::fill(col.begin(), col.end(), T(0));
          for (std::ptrdiff_t i = ry.lo; i < ry.hi; ++i) {
            const T* g = go + i * W;
            const T* in = xc + (i + dy) * W + dx;
            for (std::ptrdiff_t j = rx.lo; j < rx.hi; ++j) col[j] += g[j] * in[j];
          }
          T s = T(0);
          for (std::ptrdiff_t j = rx.lo; j < rx.hi; ++j) s += col[j];
          wk[ky * K + kx] = s;
        }
      }
    }
  }
}

template <typename T>
void max_pool2_forward(const PoolDims& d, std::span<const T> x, std::span<T> y,
                       std::span<std::uint32_t> argmax) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const std::ptrdiff_t OH = H / 2;
  const std::ptrdiff_t OW = W / 2;
  const auto C = static_cast<std::ptrdiff_t>(d.channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < C; ++c) {
    for (std::ptrdiff_t i = 0; i < OH; ++i) {
      for (std::ptrdiff_t j = 0; j < OW; ++j) {
        const std::ptrdiff_t base = (c * H + 2 * i) * W + 2 * j;
        const std::ptrdiff_t cand[4] = {base, base + 1, base + W, base + W + 1};
        std::ptrdiff_t best = cand[0];
        for (int t = 1; t < 4; ++t) {
          if (x[cand[t]] > x[best]) best = cand[t];
        }
        const std::ptrdiff_t out = (c * OH + i) * OW + j;
        y[out] = x[best];
        argmax[out] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvDims& d, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const auto C = static_cast<std::ptrdiff_t>(d.in_channels);
  const auto O = static_cast<std::ptrdiff_t>(d.out_channels);
  for (std::ptrdiff_t o = 0; o < O; ++o) {
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      for (std::ptrdiff_t j = 0; j < W; ++j) {
        T acc = b.empty() ? T(0) : b[o];
        for (std::ptrdiff_t c = 0; c < C; ++c) {
          for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
            for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
              const std::ptrdiff_t si = i + ky - pad;
              const std::ptrdiff_t sj = j + kx - pad;
              if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
              acc += w[((o * C + c) * K + ky) * K + kx] * x[(c * H + si) * W + sj];
            }
          }
        }
        y[(o * H + i) * W + j] = acc;
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvDims& d, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const auto C = static_cast<std::ptrdiff_t>(d.in_channels);
  const auto O = static_cast<std::ptrdiff_t>(d.out_channels);
  for (std::ptrdiff_t c = 0; c < C; ++c) {
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      for (std::ptrdiff_t j = 0; j < W; ++j) {
        T acc = T(0);
        for (std::ptrdiff_t o = 0; o < O; ++o) {
          for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
            for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
              // output pixel that read input (i, j) through this tap
              const std::ptrdiff_t oi = i - (ky - pad);
              const std::ptrdiff_t oj = j - (kx - pad);
              if (oi < 0 || oi >= H || oj < 0 || oj >= W) continue;
              acc += w[((o * C + c) * K + ky) * K + kx] * gy[(o * H + oi) * W + oj];
            }
          }
        }
        gx[(c * H + i) * W + j] = acc;
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvDims& d, std::span<const T> gy, std::span<const T> x,
                            std::span<T> gw, std::span<T> gb) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const auto C = static_cast<std::ptrdiff_t>(d.in_channels);
  const auto O = static_cast<std::ptrdiff_t>(d.out_channels);
  for (std::ptrdiff_t o = 0; o < O; ++o) {
    if (!gb.empty()) {
      T s = T(0);
      for (std::ptrdiff_t j = 0; j < W; ++j) {
        T col = T(0);
        for (std::ptrdiff_t i = 0; i < H; ++i) col += gy[(o * H + i) * W + j];
        s += col;
      }
      gb[o] = s;
    }
    for (std::ptrdiff_t c = 0; c < C; ++c) {
      for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
          const std::ptrdiff_t dy = ky - pad;
          const std::ptrdiff_t dx = kx - pad;
          T s = T(0);
          for (std::ptrdiff_t j = 0; j < W; ++j) {
            if (j + dx < 0 || j + dx >= W) continue;
            T col = T(0);
            for (std::ptrdiff_t i = 0; i < H; ++i) {
              if (i + dy < 0 || i + dy >= H) continue;
              col += gy[(o * H + i) * W + j] * x[(c * H + i + dy) * W + j + dx];
            }
            s += col;
          }
          gw[((o * C + c) * K + ky) * K + kx] = s;
        }
      }
    }
  }
}

template <typename T>
void max_pool2_forward(const PoolDims& d, std::span<const T> x, std::span<T> y,
                       std::span<std::uint32_t> argmax) {
  const std::size_t OH = d.height / 2;
  const std::size_t OW = d.width / 2;
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t i = 0; i < OH; ++i) {
      for (std::size_t j = 0; j < OW; ++j) {
        std::size_t best = (c * d.height + 2 * i) * d.width + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (c * d.height + 2 * i + di) * d.width + 2 * j + dj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t out = (c * OH + i) * OW + j;
        y[out] = x[best];
        argmax[out] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

}  // namespace reference

#define MTFAS_INSTANTIATE_KERNELS(NS, T)                                                        \
  template void NS::conv2d_forward<T>(const ConvDims&, std::span<const T>, std::span<const T>,  \
                                      std::span<const T>, std::span<T>);                        \
  template void NS::conv2d_backward_input<T>(const ConvDims&, std::span<const T>,               \
                                             std::span<const T>, std::span<T>);                 \
  template void NS::conv2d_backward_weight<T>(const ConvDims&, std::span<const T>,              \
                                              std::span<const T>, std::span<T>, std::span<T>);  \
  template void NS::max_pool2_forward<T>(const PoolDims&, std::span<const T>, std::span<T>,     \
                                         std::span<std::uint32_t>);

MTFAS_INSTANTIATE_KERNELS(kernels, float)
MTFAS_INSTANTIATE_KERNELS(kernels, double)
MTFAS_INSTANTIATE_KERNELS(kernels::reference, float)
MTFAS_INSTANTIATE_KERNELS(kernels::reference, double)

#undef MTFAS_INSTANTIATE_KERNELS

}  // namespace mtfas::kernels
