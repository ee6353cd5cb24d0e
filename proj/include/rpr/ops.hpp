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

#include "rpr/kernels.hpp"
#include "rpr/tensor.hpp"

// Differentiable ops over Tensor. Every op validates shapes, rejects
// non-finite outputs, and registers its backward on the active tape when any
// input participates in a gradient. Heavy inner loops live in rpr::kernels.

namespace rpr::nn {

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
/// x^p with fixed exponent p; inputs expected positive (clamp first).
Tensor pow_elem(const Tensor& a, double p);
/// max(x, lo); gradient passes only where x > lo.
Tensor clamp_min(const Tensor& a, double lo);
/// Elementwise square root; subgradient at zero is zero.
Tensor sqrt_elem(const Tensor& a);

// Reductions.
Tensor sum_all(const Tensor& a);
/// [C,H,W] -> [C], arithmetic mean over the spatial plane.
Tensor mean_spatial(const Tensor& a);

// Shape.
Tensor reshape(const Tensor& a, std::vector<int> shape);
/// Concatenation along axis 0 (the channel axis for CHW maps).
Tensor concat0(const std::vector<Tensor>& xs);

// Normalization / attention pieces.
Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& a, int axis, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-5);
Tensor dropout(const Tensor& a, double rate, bool training, uint64_t seed);

// Affine maps.
/// input [..., D_in] x weight [D_out, D_in] + bias -> [..., D_out].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);
/// map [C_in,H,W] x weight [C_out,C_in] + bias -> [C_out,H,W]; the linear
/// transformation applied to the channel vector at every cell.
Tensor channel_linear(const Tensor& map, const Tensor& weight,
                      const Tensor& bias);
/// input [C_in,H,W], weight [C_out,C_in,k,k]: cross-correlation with square
/// kernel; H' = floor((H + 2*pad - k)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

// Sampling.
/// map [C,H,W], coords [n,2] as (x=col, y=row) -> [C,n]; zero padding.
Tensor bilinear_sample(const Tensor& map, const Tensor& coords);
/// Bilinear resize to (out_h, out_w), pixel centers at integer coordinates.
Tensor upsample_bilinear(const Tensor& map, int out_h, int out_w);
/// Uniform translation warp: out(i,j) = map(i+drow, j+dcol), bilinear, zero
/// padding. Offsets are plain numbers (no gradient flows to them).
Tensor translate(const Tensor& map, double drow, double dcol);
/// Deformable sampling; see kernels::deform_sample for layouts.
Tensor deform_sample(const Tensor& value, const Tensor& locs,
                     const Tensor& weights, int heads, int points);
/// Per-pillar max over point features scattered to a dense map.
/// feat [n,C]; ranges index rows of feat; output [C,H,W].
Tensor pillar_scatter(const Tensor& feat,
                      std::vector<kernels::PillarRange> ranges, int height,
                      int width);

}  // namespace rpr::nn
