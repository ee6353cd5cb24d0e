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

#pragma once

#include <cstdint>
#include <vector>

// Dense numeric kernels behind the tensor ops. Every kernel has a serial
// reference implementation and an OpenMP one; the public entry points
// dispatch on the process-wide switch below. OpenMP variants partition
// work by output element (or output row) with the inner reduction order
// unchanged, so gather-form kernels match the serial path bit for bit.
// Scatter-form backward kernels accumulate per-thread buffers merged in
// thread order; they match serial exactly when run with one thread and
// to rounding otherwise.

namespace rpr::kernels {

/// Process-wide switch between the OpenMP and serial paths.
void set_parallel(bool enabled);
bool parallel_enabled();

// C[m,n] = A[m,k] * B[k,n]          (accumulate: C +=)
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate);
// C[m,n] = A[k,m]^T * B[k,n]
void matmul_tn(const double* a, const double* b, double* c, int k, int m, int n,
               bool accumulate);
// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate);

// Unrolls [C,H,W] into [C*k*k, OH*OW] patches (zero padding).
void im2col(const double* input, int channels, int height, int width, int ksize,
            int stride, int pad, int out_h, int out_w, double* col);
// Adjoint of im2col, written in gather form (deterministic under OpenMP).
void col2im(const double* col, int channels, int height, int width, int ksize,
            int stride, int pad, int out_h, int out_w, double* input_grad,
            bool accumulate);

// out[c,i] = bilinear interpolation of map[c] at coords[i] = (x=col, y=row),
// zero-padded outside the grid.
void bilinear_gather(const double* map, int channels, int height, int width,
                     const double* coords, int n, double* out);
// Backward: d_map scatter and d_coords gather. Either output may be null.
void bilinear_gather_backward(const double* map, int channels, int height,
                              int width, const double* coords, int n,
                              const double* d_out, double* d_map,
                              double* d_coords);

// out[c,i,j] = bilerp(map[c], row i + drow, col j + dcol), zero padding.
// The adjoint of a uniform translation is translation by the negated offset,
// so the same kernel serves forward and backward.
void translate_bilinear(const double* map, int channels, int height, int width,
                        double drow, double dcol, double* out, bool accumulate);

// Deformable sampling: heads * points offset taps with per-tap weights.
//   value   [C,H,W], head h owns channels [h*C/M, (h+1)*C/M)
//   locs    [M*P*2,H,W], channel (m*P+p)*2 + {0:x, 1:y}, absolute coords
//   weights [M*P,H,W]
//   out     [C,H,W]
void deform_sample(const double* value, const double* locs,
                   const double* weights, int channels, int height, int width,
                   int heads, int points, double* out);
void deform_sample_backward(const double* value, const double* locs,
                            const double* weights, int channels, int height,
                            int width, int heads, int points,
                            const double* d_out, double* d_value,
                            double* d_locs, double* d_weights);

// Per-pillar max over contiguous point ranges, scattered into a dense map.
//   feat [n_points, C] ordered by pillar; ranges give (cell, start, count).
//   out [C, H*W]; argmax records the winning point row per (pillar, channel).
struct PillarRange {
  int cell = 0;   // flattened row*W + col
  int start = 0;  // first row in feat
  int count = 0;
};
void pillar_max_scatter(const double* feat, int n_points, int channels,
                        const std::vector<PillarRange>& ranges, int cells,
                        double* out, int* argmax);
void pillar_max_scatter_backward(const std::vector<PillarRange>& ranges,
                                 int channels, int cells, const double* d_out,
                                 const int* argmax, double* d_feat);

}  // namespace rpr::kernels
