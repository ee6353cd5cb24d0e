// Copyright 2026, the radarplace authors
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

#include "rpr/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rpr::kernels {

namespace {
std::atomic<bool> g_parallel{true};

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

// ---------------------------------------------------------------------------
// GEMM variants. Row i of C depends only on row/column slices of A and B, so
// the OpenMP split over i reproduces the serial result exactly.
// ---------------------------------------------------------------------------

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) std::memset(crow, 0, sizeof(double) * n);
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int k, int m, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) std::memset(crow, 0, sizeof(double) * n);
    for (int kk = 0; kk < k; ++kk) {
      const double av = a[static_cast<size_t>(kk) * m + i];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      if (accumulate)
        crow[j] += s;
      else
        crow[j] = s;
    }
  }
}

}  // namespace serial

namespace par {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) std::memset(crow, 0, sizeof(double) * n);
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int k, int m, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) std::memset(crow, 0, sizeof(double) * n);
    for (int kk = 0; kk < k; ++kk) {
      const double av = a[static_cast<size_t>(kk) * m + i];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      if (accumulate)
        crow[j] += s;
      else
        crow[j] = s;
    }
  }
}

}  // namespace par

namespace {
// The fork/join overhead outweighs the work below this many inner products.
constexpr long kGemmParallelCutoff = 1 << 15;
}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  const long work = static_cast<long>(m) * k * n;
  if (parallel_enabled() && work >= kGemmParallelCutoff)
    par::matmul_nn(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nn(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, int k, int m, int n,
               bool accumulate) {
  const long work = static_cast<long>(m) * k * n;
  if (parallel_enabled() && work >= kGemmParallelCutoff)
    par::matmul_tn(a, b, c, k, m, n, accumulate);
  else
    serial::matmul_tn(a, b, c, k, m, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  const long work = static_cast<long>(m) * k * n;
  if (parallel_enabled() && work >= kGemmParallelCutoff)
    par::matmul_nt(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nt(a, b, c, m, k, n, accumulate);
}

// ---------------------------------------------------------------------------
// im2col / col2im. col2im is written as a gather over input positions so the
// OpenMP split is deterministic.
// ---------------------------------------------------------------------------

namespace serial_im {

void im2col(const double* input, int channels, int height, int width, int ksize,
            int stride, int pad, int out_h, int out_w, double* col) {
  const int plane = height * width;
  const int out_plane = out_h * out_w;
  for (int row = 0; row < channels * ksize * ksize; ++row) {
    const int c = row / (ksize * ksize);
    const int ky = (row / ksize) % ksize;
    const int kx = row % ksize;
    const double* in_plane = input + static_cast<size_t>(c) * plane;
    double* dst = col + static_cast<size_t>(row) * out_plane;
    for (int oy = 0; oy < out_h; ++oy) {
      const int y = oy * stride + ky - pad;
      for (int ox = 0; ox < out_w; ++ox) {
        const int x = ox * stride + kx - pad;
        dst[oy * out_w + ox] = (y >= 0 && y < height && x >= 0 && x < width)
                                   ? in_plane[y * width + x]
                                   : 0.0;
      }
    }
  }
}

void col2im(const double* col, int channels, int height, int width, int ksize,
            int stride, int pad, int out_h, int out_w, double* input_grad,
            bool accumulate) {
  const int plane = height * width;
  const int out_plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    double* grad_plane = input_grad + static_cast<size_t>(c) * plane;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double s = 0.0;
        for (int ky = 0; ky < ksize; ++ky) {
          const int ty = y + pad - ky;
          if (ty < 0 || ty % stride != 0) continue;
          const int oy = ty / stride;
          if (oy >= out_h) continue;
          for (int kx = 0; kx < ksize; ++kx) {
            const int tx = x + pad - kx;
            if (tx < 0 || tx % stride != 0) continue;
            const int ox = tx / stride;
            if (ox >= out_w) continue;
            const int row = (c * ksize + ky) * ksize + kx;
            s += col[static_cast<size_t>(row) * out_plane + oy * out_w + ox];
          }
        }
        if (accumulate)
          grad_plane[y * width + x] += s;
        else
          grad_plane[y * width + x] = s;
      }
    }
  }
}

}  // namespace serial_im

void im2col(const double* input, int channels, int height, int width, int ksize,
            int stride, int pad, int out_h, int out_w, double* col) {
  const int rows = channels * ksize * ksize;
  const int out_plane = out_h * out_w;
  if (parallel_enabled() && static_cast<long>(rows) * out_plane >= (1 << 14)) {
#pragma omp parallel for schedule(static)
    for (int row = 0; row < rows; ++row) {
      const int c = row / (ksize * ksize);
      const int ky = (row / ksize) % ksize;
      const int kx = row % ksize;
      const double* in_plane = input + static_cast<size_t>(c) * height * width;
      double* dst = col + static_cast<size_t>(row) * out_plane;
      for (int oy = 0; oy < out_h; ++oy) {
        const int y = oy * stride + ky - pad;
        for (int ox = 0; ox < out_w; ++ox) {
          const int x = ox * stride + kx - pad;
          dst[oy * out_w + ox] = (y >= 0 && y < height && x >= 0 && x < width)
                                     ? in_plane[y * width + x]
                                     : 0.0;
        }
      }
    }
  } else {
    serial_im::im2col(input, channels, height, width, ksize, stride, pad, out_h,
                      out_w, col);
  }
}

void col2im(const double* col, int channels, int height, int width, int ksize,
            int stride, int pad, int out_h, int out_w, double* input_grad,
            bool accumulate) {
  if (parallel_enabled() &&
      static_cast<long>(channels) * height * width >= (1 << 14)) {
    // Channel c owns col rows [c*k*k, (c+1)*k*k) and its own grad plane, so
    // the per-channel split is race-free and order-preserving.
    const size_t col_stride = static_cast<size_t>(ksize) * ksize * out_h * out_w;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
      serial_im::col2im(col + static_cast<size_t>(c) * col_stride, 1, height,
                        width, ksize, stride, pad, out_h, out_w,
                        input_grad + static_cast<size_t>(c) * height * width,
                        accumulate);
    }
  } else {
    serial_im::col2im(col, channels, height, width, ksize, stride, pad, out_h,
                      out_w, input_grad, accumulate);
  }
}

// ---------------------------------------------------------------------------
// Bilinear sampling, zero padding outside the grid.
// ---------------------------------------------------------------------------

namespace {

struct BilinearTaps {
  int x0, y0;
  double fx, fy;  // fractional parts
};

inline BilinearTaps taps(double x, double y) {
  const double xf = std::floor(x);
  const double yf = std::floor(y);
  return {static_cast<int>(xf), static_cast<int>(yf), x - xf, y - yf};
}

inline double sample_plane(const double* plane, int height, int width, int y,
                           int x) {
  return (y >= 0 && y < height && x >= 0 && x < width) ? plane[y * width + x]
                                                       : 0.0;
}

}  // namespace

namespace serial_bl {

void bilinear_gather(const double* map, int channels, int height, int width,
                     const double* coords, int n, double* out) {
  for (int i = 0; i < n; ++i) {
    const auto t = taps(coords[2 * i], coords[2 * i + 1]);
    const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
    const double w10 = t.fx * (1.0 - t.fy);
    const double w01 = (1.0 - t.fx) * t.fy;
    const double w11 = t.fx * t.fy;
    for (int c = 0; c < channels; ++c) {
      const double* plane = map + static_cast<size_t>(c) * height * width;
      const double v =
          w00 * sample_plane(plane, height, width, t.y0, t.x0) +
          w10 * sample_plane(plane, height, width, t.y0, t.x0 + 1) +
          w01 * sample_plane(plane, height, width, t.y0 + 1, t.x0) +
          w11 * sample_plane(plane, height, width, t.y0 + 1, t.x0 + 1);
      out[static_cast<size_t>(c) * n + i] = v;
    }
  }
}

}  // namespace serial_bl

void bilinear_gather(const double* map, int channels, int height, int width,
                     const double* coords, int n, double* out) {
  if (parallel_enabled() && static_cast<long>(n) * channels >= (1 << 13)) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      const auto t = taps(coords[2 * i], coords[2 * i + 1]);
      const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
      const double w10 = t.fx * (1.0 - t.fy);
      const double w01 = (1.0 - t.fx) * t.fy;
      const double w11 = t.fx * t.fy;
      for (int c = 0; c < channels; ++c) {
        const double* plane = map + static_cast<size_t>(c) * height * width;
        out[static_cast<size_t>(c) * n + i] =
            w00 * sample_plane(plane, height, width, t.y0, t.x0) +
            w10 * sample_plane(plane, height, width, t.y0, t.x0 + 1) +
            w01 * sample_plane(plane, height, width, t.y0 + 1, t.x0) +
            w11 * sample_plane(plane, height, width, t.y0 + 1, t.x0 + 1);
      }
    }
  } else {
    serial_bl::bilinear_gather(map, channels, height, width, coords, n, out);
  }
}

namespace {

inline void scatter_plane(double* plane, int height, int width, int y, int x,
                          double v) {
  if (y >= 0 && y < height && x >= 0 && x < width) plane[y * width + x] += v;
}

void bilinear_backward_range(const double* map, int channels, int height,
                             int width, const double* coords, int begin,
                             int end, int n, const double* d_out, double* d_map,
                             double* d_coords) {
  for (int i = begin; i < end; ++i) {
    const auto t = taps(coords[2 * i], coords[2 * i + 1]);
    const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
    const double w10 = t.fx * (1.0 - t.fy);
    const double w01 = (1.0 - t.fx) * t.fy;
    const double w11 = t.fx * t.fy;
    double gx = 0.0, gy = 0.0;
    for (int c = 0; c < channels; ++c) {
      const double* plane = map + static_cast<size_t>(c) * height * width;
      const double g = d_out[static_cast<size_t>(c) * n + i];
      if (d_map != nullptr) {
        double* gplane = d_map + static_cast<size_t>(c) * height * width;
        scatter_plane(gplane, height, width, t.y0, t.x0, w00 * g);
        scatter_plane(gplane, height, width, t.y0, t.x0 + 1, w10 * g);
        scatter_plane(gplane, height, width, t.y0 + 1, t.x0, w01 * g);
        scatter_plane(gplane, height, width, t.y0 + 1, t.x0 + 1, w11 * g);
      }
      if (d_coords != nullptr) {
        const double v00 = sample_plane(plane, height, width, t.y0, t.x0);
        const double v10 = sample_plane(plane, height, width, t.y0, t.x0 + 1);
        const double v01 = sample_plane(plane, height, width, t.y0 + 1, t.x0);
        const double v11 =
            sample_plane(plane, height, width, t.y0 + 1, t.x0 + 1);
        gx += g * ((1.0 - t.fy) * (v10 - v00) + t.fy * (v11 - v01));
        gy += g * ((1.0 - t.fx) * (v01 - v00) + t.fx * (v11 - v10));
      }
    }
    if (d_coords != nullptr) {
      d_coords[2 * i] += gx;
      d_coords[2 * i + 1] += gy;
    }
  }
}

}  // namespace

void bilinear_gather_backward(const double* map, int channels, int height,
                              int width, const double* coords, int n,
                              const double* d_out, double* d_map,
                              double* d_coords) {
  const int threads = num_threads();
  const long work = static_cast<long>(n) * channels;
  if (!parallel_enabled() || threads == 1 || work < (1 << 13) ||
      d_map == nullptr) {
    // d_coords-only backward is gather-form per sample; parallel-safe.
    if (d_map == nullptr && parallel_enabled() && work >= (1 << 13)) {
#pragma omp parallel for schedule(static)
      for (int i = 0; i < n; ++i)
        bilinear_backward_range(map, channels, height, width, coords, i, i + 1,
                                n, d_out, nullptr, d_coords);
      return;
    }
    bilinear_backward_range(map, channels, height, width, coords, 0, n, n,
                            d_out, d_map, d_coords);
    return;
  }
  // d_map is a scatter: give each thread a private buffer, merge in thread
  // order afterwards.
  const size_t map_size = static_cast<size_t>(channels) * height * width;
  std::vector<double> buffers(static_cast<size_t>(threads) * map_size, 0.0);
#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    const int chunk = (n + threads - 1) / threads;
    const int begin = tid * chunk;
    const int end = begin + chunk < n ? begin + chunk : n;
    if (begin < end)
      bilinear_backward_range(map, channels, height, width, coords, begin, end,
                              n, d_out, buffers.data() + tid * map_size,
                              d_coords);
  }
  for (int t = 0; t < threads; ++t) {
    const double* buf = buffers.data() + static_cast<size_t>(t) * map_size;
    for (size_t j = 0; j < map_size; ++j) d_map[j] += buf[j];
  }
}

// ---------------------------------------------------------------------------
// Uniform translation warp.
// ---------------------------------------------------------------------------

void translate_bilinear(const double* map, int channels, int height, int width,
                        double drow, double dcol, double* out,
                        bool accumulate) {
  const double rf = std::floor(drow);
  const double cf = std::floor(dcol);
  const int ri = static_cast<int>(rf);
  const int ci = static_cast<int>(cf);
  const double fr = drow - rf;
  const double fc = dcol - cf;
  const double w00 = (1.0 - fr) * (1.0 - fc);
  const double w01 = (1.0 - fr) * fc;
  const double w10 = fr * (1.0 - fc);
  const double w11 = fr * fc;
  const bool use_par =
      parallel_enabled() && static_cast<long>(channels) * height * width >= (1 << 14);
#pragma omp parallel for schedule(static) if (use_par)
  for (int c = 0; c < channels; ++c) {
    const double* plane = map + static_cast<size_t>(c) * height * width;
    double* oplane = out + static_cast<size_t>(c) * height * width;
    for (int i = 0; i < height; ++i) {
      const int y0 = i + ri;
      for (int j = 0; j < width; ++j) {
        const int x0 = j + ci;
        const double v = w00 * sample_plane(plane, height, width, y0, x0) +
                         w01 * sample_plane(plane, height, width, y0, x0 + 1) +
                         w10 * sample_plane(plane, height, width, y0 + 1, x0) +
                         w11 * sample_plane(plane, height, width, y0 + 1, x0 + 1);
        if (accumulate)
          oplane[i * width + j] += v;
        else
          oplane[i * width + j] = v;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Deformable sampling.
// ---------------------------------------------------------------------------

namespace {

void deform_forward_rows(const double* value, const double* locs,
                         const double* weights, int channels, int height,
                         int width, int heads, int points, double* out,
                         int row_begin, int row_end) {
  const int plane = height * width;
  const int head_ch = channels / heads;
  for (int i = row_begin; i < row_end; ++i) {
    for (int j = 0; j < width; ++j) {
      const int cell = i * width + j;
      for (int m = 0; m < heads; ++m) {
        for (int p = 0; p < points; ++p) {
          const int tap = m * points + p;
          const double x = locs[static_cast<size_t>(2 * tap) * plane + cell];
          const double y =
              locs[static_cast<size_t>(2 * tap + 1) * plane + cell];
          const double w = weights[static_cast<size_t>(tap) * plane + cell];
          const auto t = taps(x, y);
          const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
          const double w10 = t.fx * (1.0 - t.fy);
          const double w01 = (1.0 - t.fx) * t.fy;
          const double w11 = t.fx * t.fy;
          for (int hc = 0; hc < head_ch; ++hc) {
            const int c = m * head_ch + hc;
            const double* vplane = value + static_cast<size_t>(c) * plane;
            const double v =
                w00 * sample_plane(vplane, height, width, t.y0, t.x0) +
                w10 * sample_plane(vplane, height, width, t.y0, t.x0 + 1) +
                w01 * sample_plane(vplane, height, width, t.y0 + 1, t.x0) +
                w11 * sample_plane(vplane, height, width, t.y0 + 1, t.x0 + 1);
            out[static_cast<size_t>(c) * plane + cell] += w * v;
          }
        }
      }
    }
  }
}

void deform_backward_rows(const double* value, const double* locs,
                          const double* weights, int channels, int height,
                          int width, int heads, int points, const double* d_out,
                          double* d_value, double* d_locs, double* d_weights,
                          int row_begin, int row_end) {
  const int plane = height * width;
  const int head_ch = channels / heads;
  for (int i = row_begin; i < row_end; ++i) {
    for (int j = 0; j < width; ++j) {
      const int cell = i * width + j;
      for (int m = 0; m < heads; ++m) {
        for (int p = 0; p < points; ++p) {
          const int tap = m * points + p;
          const double x = locs[static_cast<size_t>(2 * tap) * plane + cell];
          const double y =
              locs[static_cast<size_t>(2 * tap + 1) * plane + cell];
          const double w = weights[static_cast<size_t>(tap) * plane + cell];
          const auto t = taps(x, y);
          const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
          const double w10 = t.fx * (1.0 - t.fy);
          const double w01 = (1.0 - t.fx) * t.fy;
          const double w11 = t.fx * t.fy;
          double gw = 0.0, gx = 0.0, gy = 0.0;
          for (int hc = 0; hc < head_ch; ++hc) {
            const int c = m * head_ch + hc;
            const double* vplane = value + static_cast<size_t>(c) * plane;
            const double g = d_out[static_cast<size_t>(c) * plane + cell];
            const double v00 = sample_plane(vplane, height, width, t.y0, t.x0);
            const double v10 =
                sample_plane(vplane, height, width, t.y0, t.x0 + 1);
            const double v01 =
                sample_plane(vplane, height, width, t.y0 + 1, t.x0);
            const double v11 =
                sample_plane(vplane, height, width, t.y0 + 1, t.x0 + 1);
            const double interp = w00 * v00 + w10 * v10 + w01 * v01 + w11 * v11;
            gw += g * interp;
            gx += g * w * ((1.0 - t.fy) * (v10 - v00) + t.fy * (v11 - v01));
            gy += g * w * ((1.0 - t.fx) * (v01 - v00) + t.fx * (v11 - v10));
            if (d_value != nullptr) {
              double* gplane = d_value + static_cast<size_t>(c) * plane;
              const double gv = g * w;
              scatter_plane(gplane, height, width, t.y0, t.x0, w00 * gv);
              scatter_plane(gplane, height, width, t.y0, t.x0 + 1, w10 * gv);
              scatter_plane(gplane, height, width, t.y0 + 1, t.x0, w01 * gv);
              scatter_plane(gplane, height, width, t.y0 + 1, t.x0 + 1,
                            w11 * gv);
            }
          }
          if (d_weights != nullptr)
            d_weights[static_cast<size_t>(tap) * plane + cell] += gw;
          if (d_locs != nullptr) {
            d_locs[static_cast<size_t>(2 * tap) * plane + cell] += gx;
            d_locs[static_cast<size_t>(2 * tap + 1) * plane + cell] += gy;
          }
        }
      }
    }
  }
}

}  // namespace

void deform_sample(const double* value, const double* locs,
                   const double* weights, int channels, int height, int width,
                   int heads, int points, double* out) {
  const size_t out_size = static_cast<size_t>(channels) * height * width;
  std::memset(out, 0, out_size * sizeof(double));
  const long work =
      static_cast<long>(height) * width * heads * points * channels;
  if (parallel_enabled() && work >= (1 << 14)) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < height; ++i)
      deform_forward_rows(value, locs, weights, channels, height, width, heads,
                          points, out, i, i + 1);
  } else {
    deform_forward_rows(value, locs, weights, channels, height, width, heads,
                        points, out, 0, height);
  }
}

void deform_sample_backward(const double* value, const double* locs,
                            const double* weights, int channels, int height,
                            int width, int heads, int points,
                            const double* d_out, double* d_value,
                            double* d_locs, double* d_weights) {
  const int threads = num_threads();
  const long work =
      static_cast<long>(height) * width * heads * points * channels;
  if (!parallel_enabled() || threads == 1 || work < (1 << 14) ||
      d_value == nullptr) {
    deform_backward_rows(value, locs, weights, channels, height, width, heads,
                         points, d_out, d_value, d_locs, d_weights, 0, height);
    return;
  }
  // d_locs / d_weights are per-cell (gather); only d_value scatters across
  // cells. Private buffers per thread, merged in thread order.
  const size_t map_size = static_cast<size_t>(channels) * height * width;
  std::vector<double> buffers(static_cast<size_t>(threads) * map_size, 0.0);
#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    const int chunk = (height + threads - 1) / threads;
    const int begin = tid * chunk;
    const int end = begin + chunk < height ? begin + chunk : height;
    if (begin < end)
      deform_backward_rows(value, locs, weights, channels, height, width, heads,
                           points, d_out, buffers.data() + tid * map_size,
                           d_locs, d_weights, begin, end);
  }
  for (int t = 0; t < threads; ++t) {
    const double* buf = buffers.data() + static_cast<size_t>(t) * map_size;
    for (size_t j = 0; j < map_size; ++j) d_value[j] += buf[j];
  }
}

// ---------------------------------------------------------------------------
// Pillar max-pool scatter.
// ---------------------------------------------------------------------------

void pillar_max_scatter(const double* feat, int n_points, int channels,
                        const std::vector<PillarRange>& ranges, int cells,
                        double* out, int* argmax) {
  (void)n_points;
  std::memset(out, 0, static_cast<size_t>(channels) * cells * sizeof(double));
  const int n_pillars = static_cast<int>(ranges.size());
  const bool use_par =
      parallel_enabled() && static_cast<long>(n_pillars) * channels >= (1 << 12);
#pragma omp parallel for schedule(static) if (use_par)
  for (int q = 0; q < n_pillars; ++q) {
    const auto& r = ranges[q];
    for (int c = 0; c < channels; ++c) {
      double best = feat[static_cast<size_t>(r.start) * channels + c];
      int best_row = r.start;
      for (int k = 1; k < r.count; ++k) {
        const double v = feat[static_cast<size_t>(r.start + k) * channels + c];
        if (v > best) {
          best = v;
          best_row = r.start + k;
        }
      }
      out[static_cast<size_t>(c) * cells + r.cell] = best;
      argmax[static_cast<size_t>(q) * channels + c] = best_row;
    }
  }
}

void pillar_max_scatter_backward(const std::vector<PillarRange>& ranges,
                                 int channels, int cells, const double* d_out,
                                 const int* argmax, double* d_feat) {
  // Each pillar owns a distinct cell and distinct feature rows: gather-safe.
  const int n_pillars = static_cast<int>(ranges.size());
  const bool use_par =
      parallel_enabled() && static_cast<long>(n_pillars) * channels >= (1 << 12);
#pragma omp parallel for schedule(static) if (use_par)
  for (int q = 0; q < n_pillars; ++q) {
    const auto& r = ranges[q];
    for (int c = 0; c < channels; ++c) {
      const int row = argmax[static_cast<size_t>(q) * channels + c];
      d_feat[static_cast<size_t>(row) * channels + c] +=
          d_out[static_cast<size_t>(c) * cells + r.cell];
    }
  }
}

}  // namespace rpr::kernels
