// Copyright 2026 The aqc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "aqc/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "aqc/error.hpp"

namespace aqc::ops {

namespace {
thread_local RegionTrace* active_trace = nullptr;
}  // namespace

RegionTrace::RegionTrace() : previous_(active_trace) { active_trace = this; }
RegionTrace::~RegionTrace() { active_trace = previous_; }
RegionTrace* RegionTrace::active() { return active_trace; }

namespace {
constexpr std::size_t kMlpBlock = 1024;
}  // namespace

namespace {

template <typename T>
bool tracks(Tape* tape, std::initializer_list<const BasicTensor<T>*> inputs) {
  if (!tape) return false;
  for (const BasicTensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
BasicTensor<T> make_output(Shape shape, bool requires_grad) {
  return BasicTensor<T>::zeros(std::move(shape), requires_grad);
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

// Lowers rows [y0, y1) of one sample [C,H,W] into columns
// [C*k*k, (y1-y0)*W] for a k x k kernel with padding k/2.
template <typename T>
void im2col(const T* src, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, std::size_t y0,
            std::size_t y1, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w, bw = (y1 - y0) * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = src + c * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = col + ((c * k + ky) * k + kx) * bw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
        const std::size_t x1 = dx > 0 ? w - static_cast<std::size_t>(dx) : w;
        for (std::size_t y = y0; y < y1; ++y) {
          T* row = dst + (y - y0) * w;
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(row, row + w, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(sy) * w;
          std::fill(row, row + x0, T(0));
          std::memcpy(row + x0, srow + (x0 + dx), (x1 - x0) * sizeof(T));
          std::fill(row + x1, row + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, std::size_t y0,
                std::size_t y1, T* dst) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w, bw = (y1 - y0) * w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = dst + c * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * bw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
        const std::size_t x1 = dx > 0 ? w - static_cast<std::size_t>(dx) : w;
        for (std::size_t y = y0; y < y1; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* row = src + (y - y0) * w;
          T* drow = plane + static_cast<std::size_t>(sy) * w + dx;
          for (std::size_t x = x0; x < x1; ++x) drow[x] += row[x];
        }
      }
    }
  }
}

// Rows per im2col band, sized so the column buffer stays near L2.
std::size_t conv_band_rows(std::size_t kdim, std::size_t h, std::size_t w, std::size_t elem) {
  constexpr std::size_t kBandBytes = std::size_t{384} << 10;
  const std::size_t rows = kBandBytes / std::max<std::size_t>(1, kdim * w * elem);
  return std::clamp<std::size_t>(rows, 1, h);
}

template <typename T>
void add_into(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0f, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(Tape* tape, const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin)
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  if (weight.dim(3) != k || (k != 3 && k != 1))
    throw ShapeError("conv2d: kernel must be 3x3 (or 1x1 projection), got " + shape_string(weight.shape()));
  if (bias.numel() != cout) throw ShapeError("conv2d: bias must have " + std::to_string(cout) + " elements");

  const std::size_t hw = h * w, kdim = cin * k * k;
  const bool grad = tracks<T>(tape, {&input, &weight, &bias});
  auto out = make_output<T>({n, cout, h, w}, grad);

  const std::size_t band = conv_band_rows(kdim, h, w, sizeof(T));
  std::vector<T> col(k == 1 ? 0 : kdim * band * w);
  const T* wp = weight.ptr();
  for (std::size_t s = 0; s < n; ++s) {
    const T* src = input.ptr() + s * cin * hw;
    T* dst = out.ptr() + s * cout * hw;
    for (std::size_t o = 0; o < cout; ++o) std::fill(dst + o * hw, dst + (o + 1) * hw, bias.ptr()[o]);
    if (k == 1) {
      gemm(CblasNoTrans, CblasNoTrans, cout, hw, kdim, wp, kdim, src, hw, T(1), dst, hw);
      continue;
    }
    for (std::size_t y0 = 0; y0 < h; y0 += band) {
      const std::size_t y1 = std::min(h, y0 + band), bw = (y1 - y0) * w;
      im2col(src, cin, h, w, k, y0, y1, col.data());
      gemm(CblasNoTrans, CblasNoTrans, cout, bw, kdim, wp, kdim, col.data(), bw, T(1), dst + y0 * w, hw);
    }
  }

  if (grad) {
    tape->record([input = BasicTensor<T>(input), weight = BasicTensor<T>(weight), bias = BasicTensor<T>(bias), out, n, cin, cout, h, w, k, hw, kdim, band]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      std::vector<T> col(k == 1 ? 0 : kdim * band * w);
      std::vector<T> dcol;
      T* gw = weight.requires_grad() ? weight.ensure_grad().data() : nullptr;
      T* gx = input.requires_grad() ? input.ensure_grad().data() : nullptr;
      if (gx && k != 1) dcol.resize(kdim * band * w);
      std::vector<double> gb(cout, 0.0);
      for (std::size_t s = 0; s < n; ++s) {
        const T* gys = gy + s * cout * hw;
        for (std::size_t o = 0; o < cout; ++o) {
          double acc = 0.0;
          const T* row = gys + o * hw;
#pragma omp simd reduction(+ : acc)
          for (std::size_t i = 0; i < hw; ++i) acc += row[i];
          gb[o] += acc;
        }
        const T* src = input.ptr() + s * cin * hw;
        T* gxs = gx ? gx + s * cin * hw : nullptr;
        if (k == 1) {
          if (gw) gemm(CblasNoTrans, CblasTrans, cout, kdim, hw, gys, hw, src, hw, T(1), gw, kdim);
          if (gxs) gemm(CblasTrans, CblasNoTrans, cin, hw, cout, weight.ptr(), kdim, gys, hw, T(1), gxs, hw);
          continue;
        }
        for (std::size_t y0 = 0; y0 < h; y0 += band) {
          const std::size_t y1 = std::min(h, y0 + band), bw = (y1 - y0) * w;
          const T* gyb = gys + y0 * w;
          if (gw) {
            im2col(src, cin, h, w, k, y0, y1, col.data());
            gemm(CblasNoTrans, CblasTrans, cout, kdim, bw, gyb, hw, col.data(), bw, T(1), gw, kdim);
          }
          if (gxs) {
            gemm(CblasTrans, CblasNoTrans, kdim, bw, cout, weight.ptr(), kdim, gyb, hw, T(0), dcol.data(), bw);
            col2im_add(dcol.data(), cin, h, w, k, y0, y1, gxs);
          }
        }
      }
      if (bias.requires_grad()) {
        auto gbias = bias.ensure_grad();
        for (std::size_t o = 0; o < cout; ++o) gbias[o] += static_cast<T>(gb[o]);
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool2d(Tape* tape, const BasicTensor<T>& input) {
  require_rank(input, 4, "maxpool2d input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 || w % 2) throw ShapeError("maxpool2d requires even spatial extents, got " + shape_string(input.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  const bool grad = tracks<T>(tape, {&input});
  auto out = make_output<T>({n, c, oh, ow}, grad);
  std::vector<std::uint32_t> argmax(grad ? out.numel() : 0);
  RegionTrace* trace = RegionTrace::active();

  const T* x = input.ptr();
  T* y = out.ptr();
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* plane = x + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t base = 2 * oy * w + 2 * ox;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (int i = 1; i < 4; ++i)
          if (plane[cand[i]] > plane[best]) best = cand[i];
        const std::size_t o = p * oh * ow + oy * ow + ox;
        y[o] = plane[best];
        if (grad) argmax[o] = static_cast<std::uint32_t>(best);
        if (trace) trace->fold(best - base);
      }
    }
  }
  if (grad) {
    tape->record([input = BasicTensor<T>(input), out, argmax = std::move(argmax), h, w, oh, ow]() mutable {
      if (!out.has_grad()) return;
      auto gx = input.ensure_grad();
      auto gy = out.grad();
      const std::size_t planes = gy.size() / (oh * ow);
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < oh * ow; ++i) gx[p * h * w + argmax[p * oh * ow + i]] += gy[p * oh * ow + i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> batchnorm2d(Tape* tape, const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                   BasicTensor<T>& running_var, Mode mode, BatchNormOptions options) {
  require_rank(input, 4, "batchnorm2d input");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  for (const BasicTensor<T>* t : std::initializer_list<const BasicTensor<T>*>{&gamma, &beta, &running_mean, &running_var})
    if (t->numel() != c) throw ShapeError("batchnorm2d: per-channel tensors must have " + std::to_string(c) + " elements");
  const std::size_t count = n * hw;
  if (mode == Mode::train && count < 2)
    throw ParameterError("batchnorm2d in train mode needs more than one value per channel");

  const bool grad = tracks<T>(tape, {&input, &gamma, &beta});
  auto out = make_output<T>(input.shape(), grad);
  std::vector<double> inv_std(c);
  BasicTensor<T> xhat = grad ? BasicTensor<T>::zeros(input.shape()) : BasicTensor<T>();

  const T* x = input.ptr();
  T* y = out.ptr();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
#pragma omp simd reduction(+ : s)
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mean = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
#pragma omp simd reduction(+ : ss)
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - mean;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(count);
      const double m = options.momentum;
      auto rm = running_mean.data();
      auto rv = running_var.data();
      rm[ch] = static_cast<T>((1.0 - m) * rm[ch] + m * mean);
      rv[ch] = static_cast<T>((1.0 - m) * rv[ch] + m * var * static_cast<double>(count) / (count - 1.0));
    } else {
      mean = running_mean.data()[ch];
      var = running_var.data()[ch];
    }
    const double is = 1.0 / std::sqrt(var + options.epsilon);
    inv_std[ch] = is;
    const double g = gamma.data()[ch], bt = beta.data()[ch];
    T* xh = grad ? xhat.ptr() : nullptr;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      if (xh) {
#pragma omp simd
        for (std::size_t i = 0; i < hw; ++i) {
          const double xn = (x[off + i] - mean) * is;
          xh[off + i] = static_cast<T>(xn);
          y[off + i] = static_cast<T>(g * xn + bt);
        }
      } else {
#pragma omp simd
        for (std::size_t i = 0; i < hw; ++i) y[off + i] = static_cast<T>(g * ((x[off + i] - mean) * is) + bt);
      }
    }
  }

  if (grad) {
    tape->record([input = BasicTensor<T>(input), gamma = BasicTensor<T>(gamma), beta = BasicTensor<T>(beta), out, xhat, inv_std = std::move(inv_std), mode, n, c, hw, count]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      const T* xn = xhat.ptr();
      T* gx = input.requires_grad() ? input.ensure_grad().data() : nullptr;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sdy = 0.0, sdyx = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t off = (b * c + ch) * hw;
#pragma omp simd reduction(+ : sdy, sdyx)
          for (std::size_t i = 0; i < hw; ++i) {
            sdy += gy[off + i];
            sdyx += static_cast<double>(gy[off + i]) * xn[off + i];
          }
        }
        if (gamma.requires_grad()) gamma.ensure_grad()[ch] += static_cast<T>(sdyx);
        if (beta.requires_grad()) beta.ensure_grad()[ch] += static_cast<T>(sdy);
        if (!gx) continue;
        const double scale = gamma.data()[ch] * inv_std[ch];
        if (mode == Mode::train) {
          const double mdy = sdy / static_cast<double>(count), mdyx = sdyx / static_cast<double>(count);
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
#pragma omp simd
            for (std::size_t i = 0; i < hw; ++i)
              gx[off + i] += static_cast<T>(scale * (gy[off + i] - mdy - xn[off + i] * mdyx));
          }
        } else {
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
#pragma omp simd
            for (std::size_t i = 0; i < hw; ++i) gx[off + i] += static_cast<T>(scale * gy[off + i]);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> relu(Tape* tape, const BasicTensor<T>& x) {
  const bool grad = tracks<T>(tape, {&x});
  auto out = make_output<T>(x.shape(), grad);
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : T(0);
  if (auto* trace = RegionTrace::active())
    for (std::size_t i = 0; i < xs.size(); ++i) trace->fold(xs[i] > T(0));
  if (grad) {
    tape->record([x = BasicTensor<T>(x), out]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      auto gy = out.grad();
      auto xs = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xs[i] > T(0) ? gy[i] : T(0);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> sigmoid(Tape* tape, const BasicTensor<T>& x) {
  const bool grad = tracks<T>(tape, {&x});
  auto out = make_output<T>(x.shape(), grad);
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double v = xs[i];
    ys[i] = static_cast<T>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
  }
  if (grad) {
    tape->record([x = BasicTensor<T>(x), out]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      auto gy = out.grad();
      auto ys = out.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * ys[i] * (T(1) - ys[i]);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax(Tape* tape, const BasicTensor<T>& x, std::size_t axis) {
  const auto& shape = x.shape();
  if (axis >= shape.size())
    throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for " + shape_string(shape));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  const bool grad = tracks<T>(tape, {&x});
  auto out = make_output<T>(shape, grad);
  const T* xs = x.ptr();
  T* ys = out.ptr();
  std::vector<double> e(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xs[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xs[base + i * inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        e[i] = std::exp(static_cast<double>(xs[base + i * inner]) - mx);
        z += e[i];
      }
      for (std::size_t i = 0; i < len; ++i) ys[base + i * inner] = static_cast<T>(e[i] / z);
    }
  }
  if (grad) {
    tape->record([x = BasicTensor<T>(x), out, outer, inner, len]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.ensure_grad().data();
      const T* gy = out.grad().data();
      const T* ys = out.ptr();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i)
            dot += static_cast<double>(gy[base + i * inner]) * ys[base + i * inner];
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t j = base + i * inner;
            gx[j] += static_cast<T>(ys[j] * (gy[j] - dot));
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> linear(Tape* tape, const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din)
    throw ShapeError("linear: input width " + std::to_string(din) + " does not match weight " +
                     shape_string(weight.shape()));
  if (bias.numel() != dout) throw ShapeError("linear: bias must have " + std::to_string(dout) + " elements");
  const bool grad = tracks<T>(tape, {&input, &weight, &bias});
  auto out = make_output<T>({n, dout}, grad);
  const T* x = input.ptr();
  const T* wt = weight.ptr();
  T* y = out.ptr();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = bias.ptr()[o];
      const T* wr = wt + o * din;
      const T* xr = x + s * din;
      for (std::size_t i = 0; i < din; ++i) acc += static_cast<double>(wr[i]) * xr[i];
      y[s * dout + o] = static_cast<T>(acc);
    }
  }
  if (grad) {
    tape->record([input = BasicTensor<T>(input), weight = BasicTensor<T>(weight), bias = BasicTensor<T>(bias), out, n, din, dout]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (input.requires_grad()) {
        T* gx = input.ensure_grad().data();
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t i = 0; i < din; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < dout; ++o)
              acc += static_cast<double>(gy[s * dout + o]) * weight.ptr()[o * din + i];
            gx[s * din + i] += static_cast<T>(acc);
          }
      }
      if (weight.requires_grad()) {
        T* gw = weight.ensure_grad().data();
        for (std::size_t o = 0; o < dout; ++o)
          for (std::size_t i = 0; i < din; ++i) {
            double acc = 0.0;
            for (std::size_t s = 0; s < n; ++s)
              acc += static_cast<double>(gy[s * dout + o]) * input.ptr()[s * din + i];
            gw[o * din + i] += static_cast<T>(acc);
          }
      }
      if (bias.requires_grad()) {
        auto gb = bias.ensure_grad();
        for (std::size_t o = 0; o < dout; ++o) {
          double acc = 0.0;
          for (std::size_t s = 0; s < n; ++s) acc += gy[s * dout + o];
          gb[o] += static_cast<T>(acc);
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> dropout(Tape* tape, const BasicTensor<T>& x, float p, Mode mode, Rng& rng) {
  if (!(p >= T(0) && p < T(1))) throw ParameterError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::eval || p == T(0)) return x;
  const bool grad = tracks<T>(tape, {&x});
  auto out = make_output<T>(x.shape(), grad);
  const T scale = T(1) / (T(1) - p);
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() >= p ? scale : T(0);
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] * mask[i];
  if (grad) {
    tape->record([x = BasicTensor<T>(x), out, mask = std::move(mask)]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      auto gy = out.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * mask[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> add(Tape* tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  const bool grad = tracks<T>(tape, {&a, &b});
  auto out = make_output<T>(a.shape(), grad);
  auto as = a.data();
  auto bs = b.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] + bs[i];
  if (grad) {
    tape->record([a = BasicTensor<T>(a), b = BasicTensor<T>(b), out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) add_into<T>(a.ensure_grad(), out.grad());
      if (b.requires_grad()) add_into<T>(b.ensure_grad(), out.grad());
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mul(Tape* tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  const bool grad = tracks<T>(tape, {&a, &b});
  auto out = make_output<T>(a.shape(), grad);
  auto as = a.data();
  auto bs = b.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] * bs[i];
  if (grad) {
    tape->record([a = BasicTensor<T>(a), b = BasicTensor<T>(b), out]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        auto bs = b.data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bs[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        auto as = a.data();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * as[i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> sum(Tape* tape, const BasicTensor<T>& x) {
  const bool grad = tracks<T>(tape, {&x});
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(acc), grad);
  if (grad) {
    tape->record([x = BasicTensor<T>(x), out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      for (auto& v : x.ensure_grad()) v += g;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> reshape(Tape* tape, const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape) + " changes element count");
  const bool grad = tracks<T>(tape, {&x});
  auto src = x.data();
  BasicTensor<T> out = BasicTensor<T>::from(std::move(shape), std::vector<T>(src.begin(), src.end()), grad);
  if (grad) {
    tape->record([x = BasicTensor<T>(x), out]() mutable {
      if (!out.has_grad()) return;
      add_into<T>(x.ensure_grad(), out.grad());
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool(Tape* tape, const BasicTensor<T>& x) {
  require_rank(x, 4, "global_avg_pool input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const bool grad = tracks<T>(tape, {&x});
  auto out = make_output<T>({n, c}, grad);
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    const T* src = x.ptr() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    out.ptr()[p] = static_cast<T>(acc / static_cast<double>(hw));
  }
  if (grad) {
    tape->record([x = BasicTensor<T>(x), out, hw]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.ensure_grad().data();
      auto gy = out.grad();
      const T inv = T(1) / static_cast<T>(hw);
      for (std::size_t p = 0; p < gy.size(); ++p) {
        const T g = gy[p] * inv;
        for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> pointwise_mlp(Tape* tape, const BasicTensor<T>& x, const BasicTensor<T>& w1, const BasicTensor<T>& b1, const BasicTensor<T>& w2,
                     const BasicTensor<T>& b2) {
  const std::size_t hidden = w1.numel();
  if (b1.numel() != hidden || w2.numel() != hidden || b2.numel() != 1)
    throw ShapeError("pointwise_mlp: w1, b1, w2 must share one hidden width and b2 must be a scalar");
  const bool grad = tracks<T>(tape, {&x, &w1, &b1, &w2, &b2});
  auto out = make_output<T>(x.shape(), grad);
  const T* a = w1.ptr();
  const T* c = b1.ptr();
  const T* v = w2.ptr();
  const T bias_out = b2.ptr()[0];
  auto xs = x.data();
  auto ys = out.data();
  // Elements are processed in blocks with the hidden loop outside, so the
  // element loop vectorises; each element still sums over j in order.
  T acc[kMlpBlock];
  for (std::size_t i0 = 0; i0 < xs.size(); i0 += kMlpBlock) {
    const std::size_t len = std::min(kMlpBlock, xs.size() - i0);
    const T* xb = xs.data() + i0;
    std::fill(acc, acc + len, T(0));
    for (std::size_t j = 0; j < hidden; ++j) {
      const T aj = a[j], cj = c[j], vj = v[j];
      for (std::size_t i = 0; i < len; ++i) acc[i] += vj * std::max(aj * xb[i] + cj, T(0));
    }
    for (std::size_t i = 0; i < len; ++i) ys[i0 + i] = acc[i] + bias_out;
  }
  if (auto* trace = RegionTrace::active())
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = 0; j < hidden; ++j) trace->fold(a[j] * xs[i] + c[j] > T(0));
  if (grad) {
    tape->record([x = BasicTensor<T>(x), w1 = BasicTensor<T>(w1), b1 = BasicTensor<T>(b1), w2 = BasicTensor<T>(w2), b2 = BasicTensor<T>(b2), out, hidden]() mutable {
      if (!out.has_grad()) return;
      const T* a = w1.ptr();
      const T* c = b1.ptr();
      const T* v = w2.ptr();
      auto xs = x.data();
      auto gy = out.grad();
      T* gx = x.requires_grad() ? x.ensure_grad().data() : nullptr;
      std::vector<double> ga(hidden, 0.0), gc(hidden, 0.0), gv(hidden, 0.0);
      double gbias = 0.0;
      // Zero-padded block copies keep every inner loop a fixed-width,
      // vectorisable pass; per-block sums are folded into doubles.
      T xb[kMlpBlock], gb[kMlpBlock], dx[kMlpBlock];
      for (std::size_t i0 = 0; i0 < xs.size(); i0 += kMlpBlock) {
        const std::size_t len = std::min(kMlpBlock, xs.size() - i0);
        std::fill(xb, xb + kMlpBlock, T(0));
        std::fill(gb, gb + kMlpBlock, T(0));
        std::fill(dx, dx + kMlpBlock, T(0));
        std::copy_n(xs.data() + i0, len, xb);
        std::copy_n(gy.data() + i0, len, gb);
        for (std::size_t i = 0; i < len; ++i) gbias += gb[i];
        for (std::size_t j = 0; j < hidden; ++j) {
          const T aj = a[j], cj = c[j], vj = v[j];
          const T va = vj * aj;
          T s_gx = T(0), s_g = T(0);
#pragma omp simd reduction(+ : s_gx, s_g)
          for (std::size_t i = 0; i < kMlpBlock; ++i) {
            const T gon = aj * xb[i] + cj > T(0) ? gb[i] : T(0);
            dx[i] += gon * va;
            s_gx += gon * xb[i];
            s_g += gon;
          }
          const double t_gx = s_gx, t_g = s_g;
          // sum_i g_i * relu(pre_i) = a_j * sum(g x) + c_j * sum(g) over active i
          const double t_act = aj * t_gx + cj * t_g;
          ga[j] += vj * t_gx;
          gc[j] += vj * t_g;
          gv[j] += t_act;
        }
        if (gx)
          for (std::size_t i = 0; i < len; ++i) gx[i0 + i] += dx[i];
      }
      auto fold = [](BasicTensor<T>& t, const std::vector<double>& acc) {
        if (!t.requires_grad()) return;
        auto g = t.ensure_grad();
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += static_cast<T>(acc[j]);
      };
      fold(w1, ga);
      fold(b1, gc);
      fold(w2, gv);
      if (b2.requires_grad()) b2.ensure_grad()[0] += static_cast<T>(gbias);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> weighted_sum(Tape* tape, const BasicTensor<T>& weights, const BasicTensor<T>& values) {
  require_rank(weights, 3, "weighted_sum weights");
  require_rank(values, 3, "weighted_sum values");
  const std::size_t n = values.dim(0), c = values.dim(1), s = values.dim(2);
  const std::size_t groups = weights.dim(1);
  if (weights.dim(0) != n || weights.dim(2) != s || (groups != 1 && groups != c))
    throw ShapeError("weighted_sum: weights " + shape_string(weights.shape()) + " incompatible with values " +
                     shape_string(values.shape()));
  const bool grad = tracks<T>(tape, {&weights, &values});
  auto out = make_output<T>({n, c}, grad);
  auto group_of = [groups](std::size_t ch) { return groups == 1 ? std::size_t{0} : ch; };
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* wr = weights.ptr() + (b * groups + group_of(ch)) * s;
      const T* vr = values.ptr() + (b * c + ch) * s;
      double acc = 0.0;
      for (std::size_t i = 0; i < s; ++i) acc += static_cast<double>(wr[i]) * vr[i];
      out.ptr()[b * c + ch] = static_cast<T>(acc);
    }
  if (grad) {
    tape->record([weights = BasicTensor<T>(weights), values = BasicTensor<T>(values), out, n, c, s, groups, group_of]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      T* gw = weights.requires_grad() ? weights.ensure_grad().data() : nullptr;
      T* gv = values.requires_grad() ? values.ensure_grad().data() : nullptr;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T g = gy[b * c + ch];
          const std::size_t woff = (b * groups + group_of(ch)) * s;
          const std::size_t voff = (b * c + ch) * s;
          if (gv)
            for (std::size_t i = 0; i < s; ++i) gv[voff + i] += g * weights.ptr()[woff + i];
          if (gw)
            for (std::size_t i = 0; i < s; ++i) gw[woff + i] += g * values.ptr()[voff + i];
        }
    });
  }
  return out;
}

constexpr double kProbLo = 1e-7;
constexpr double kProbHi = 1.0 - 1e-7;

template <typename T>
BasicTensor<T> bce_loss(Tape* tape, const BasicTensor<T>& probs, std::span<const float> labels) {
  const std::size_t n = probs.numel();
  if (n == 0 || labels.empty()) throw ParameterError("bce_loss on an empty batch");
  if (labels.size() != n)
    throw ShapeError("bce_loss: " + std::to_string(n) + " probabilities but " + std::to_string(labels.size()) +
                     " labels");
  const bool grad = tracks<T>(tape, {&probs});
  double acc = 0.0;
  auto ps = probs.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(static_cast<double>(ps[i]), kProbLo, kProbHi);
    const double y = labels[i];
    acc += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(-acc / static_cast<double>(n)), grad);
  if (grad) {
    std::vector<T> ys(labels.begin(), labels.end());
    tape->record([probs = BasicTensor<T>(probs), out, ys = std::move(ys), n]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / static_cast<double>(n);
      auto gp = probs.ensure_grad();
      auto ps = probs.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(static_cast<double>(ps[i]), kProbLo, kProbHi);
        const double y = ys[i];
        gp[i] += static_cast<T>(-g * (y / p - (1.0 - y) / (1.0 - p)));
      }
    });
  }
  return out;
}

#define AQC_INSTANTIATE_OPS(T)                                                                                     \
  template BasicTensor<T> conv2d(Tape*, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> maxpool2d(Tape*, const BasicTensor<T>&);                                               \
  template BasicTensor<T> batchnorm2d(Tape*, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                      BasicTensor<T>&, BasicTensor<T>&, Mode, BatchNormOptions);                  \
  template BasicTensor<T> relu(Tape*, const BasicTensor<T>&);                                                    \
  template BasicTensor<T> sigmoid(Tape*, const BasicTensor<T>&);                                                 \
  template BasicTensor<T> softmax(Tape*, const BasicTensor<T>&, std::size_t);                                    \
  template BasicTensor<T> linear(Tape*, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> dropout(Tape*, const BasicTensor<T>&, float, Mode, Rng&);                              \
  template BasicTensor<T> add(Tape*, const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> mul(Tape*, const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> sum(Tape*, const BasicTensor<T>&);                                                     \
  template BasicTensor<T> reshape(Tape*, const BasicTensor<T>&, Shape);                                          \
  template BasicTensor<T> global_avg_pool(Tape*, const BasicTensor<T>&);                                         \
  template BasicTensor<T> pointwise_mlp(Tape*, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                        const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> weighted_sum(Tape*, const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template BasicTensor<T> bce_loss(Tape*, const BasicTensor<T>&, std::span<const float>);

AQC_INSTANTIATE_OPS(float)
AQC_INSTANTIATE_OPS(double)

#undef AQC_INSTANTIATE_OPS

}  // namespace aqc::ops
