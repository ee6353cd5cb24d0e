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

#include "rpr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "rpr/rng.hpp"

namespace rpr::nn {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x))
      throw ValidationError(std::string(op) + ": non-finite value in output");
  }
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

Tensor make_out(std::vector<int> shape) { return Tensor::zeros(std::move(shape)); }

/// Marks the output differentiable and registers the closure when a tape is
/// active and any input carries gradient.
template <typename Fn>
void register_op(std::initializer_list<const Tensor*> inputs, Tensor& out,
                 Fn&& backward) {
  Tape* tape = Tape::current();
  if (tape == nullptr) return;
  bool any = false;
  for (const Tensor* t : inputs) any = any || (*t).requires_grad();
  if (!any) return;
  out.node()->requires_grad = true;
  out.node()->ensure_grad();
  tape->record(std::forward<Fn>(backward));
}

void accumulate(const NodePtr& n, const std::vector<double>& g) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) n->grad[i] += g[i];
}

struct AxisSplit {
  int64_t outer, dim, inner;
};

AxisSplit split_axis(const std::vector<int>& shape, int axis) {
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw ValidationError("axis out of range");
  AxisSplit s{1, shape[static_cast<size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i)
    s.inner *= shape[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw ValidationError("add: shape mismatch");
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  const auto& bv = b.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  check_finite("add", ov);
  auto an = a.node(), bn = b.node(), on = out.node();
  register_op({&a, &b}, out, [an, bn, on] {
    accumulate(an, on->grad);
    accumulate(bn, on->grad);
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw ValidationError("sub: shape mismatch");
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  const auto& bv = b.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  check_finite("sub", ov);
  auto an = a.node(), bn = b.node(), on = out.node();
  register_op({&a, &b}, out, [an, bn, on] {
    accumulate(an, on->grad);
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw ValidationError("mul: shape mismatch");
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  const auto& bv = b.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  check_finite("mul", ov);
  auto an = a.node(), bn = b.node(), on = out.node();
  register_op({&a, &b}, out, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        bn->grad[i] += on->grad[i] * an->value[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  check_finite("scale", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on, c] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += c * on->grad[i];
  });
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
  check_finite("add_scalar", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on] { accumulate(an, on->grad); });
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
  check_finite("relu", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i)
      if (an->value[i] > 0.0) an->grad[i] += on->grad[i];
  });
  return out;
}

Tensor pow_elem(const Tensor& a, double p) {
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::pow(av[i], p);
  check_finite("pow_elem", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on, p] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i)
      an->grad[i] += on->grad[i] * p * std::pow(an->value[i], p - 1.0);
  });
  return out;
}

Tensor clamp_min(const Tensor& a, double lo) {
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > lo ? av[i] : lo;
  check_finite("clamp_min", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on, lo] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i)
      if (an->value[i] > lo) an->grad[i] += on->grad[i];
  });
  return out;
}

Tensor sqrt_elem(const Tensor& a) {
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) {
    if (av[i] < 0.0) throw ValidationError("sqrt_elem: negative input");
    ov[i] = std::sqrt(av[i]);
  }
  check_finite("sqrt_elem", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i)
      if (on->value[i] > 0.0) an->grad[i] += on->grad[i] * 0.5 / on->value[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.val()) s += v;
  Tensor out = Tensor::scalar(s);
  check_finite("sum_all", out.val());
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = on->grad[0];
    for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
  });
  return out;
}

Tensor mean_spatial(const Tensor& a) {
  if (a.ndim() != 3) throw ValidationError("mean_spatial expects [C,H,W]");
  const int c = a.dim(0);
  const int64_t plane = static_cast<int64_t>(a.dim(1)) * a.dim(2);
  if (plane == 0) throw ValidationError("mean_spatial: empty plane");
  Tensor out = make_out({c});
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    const double* p = av.data() + static_cast<size_t>(ch) * plane;
    for (int64_t i = 0; i < plane; ++i) s += p[i];
    ov[static_cast<size_t>(ch)] = s / static_cast<double>(plane);
  }
  check_finite("mean_spatial", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on, c, plane] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int ch = 0; ch < c; ++ch) {
      const double g = on->grad[static_cast<size_t>(ch)] / static_cast<double>(plane);
      double* p = an->grad.data() + static_cast<size_t>(ch) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] += g;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape.
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  if (n != a.numel()) throw ValidationError("reshape: element count mismatch");
  Tensor out = Tensor::from_data(std::move(shape), a.val());
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on] { accumulate(an, on->grad); });
  return out;
}

Tensor concat0(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ValidationError("concat0: empty input list");
  std::vector<int> shape = xs[0].shape();
  int64_t total0 = 0;
  for (const auto& x : xs) {
    if (x.ndim() != static_cast<int>(shape.size()))
      throw ValidationError("concat0: rank mismatch");
    for (int i = 1; i < x.ndim(); ++i)
      if (x.dim(i) != shape[static_cast<size_t>(i)])
        throw ValidationError("concat0: trailing dimension mismatch");
    total0 += x.dim(0);
  }
  shape[0] = static_cast<int>(total0);
  Tensor out = make_out(shape);
  auto& ov = out.mut_val();
  size_t offset = 0;
  for (const auto& x : xs) {
    std::memcpy(ov.data() + offset, x.val().data(), x.val().size() * sizeof(double));
    offset += x.val().size();
  }
  check_finite("concat0", ov);
  bool any = false;
  for (const auto& x : xs) any = any || x.requires_grad();
  if (Tape::current() != nullptr && any) {
    out.node()->requires_grad = true;
    out.node()->ensure_grad();
    std::vector<NodePtr> nodes;
    nodes.reserve(xs.size());
    for (const auto& x : xs) nodes.push_back(x.node());
    auto on = out.node();
    Tape::current()->record([nodes, on] {
      size_t off = 0;
      for (const auto& n : nodes) {
        if (n->requires_grad) {
          n->ensure_grad();
          for (size_t i = 0; i < n->value.size(); ++i)
            n->grad[i] += on->grad[off + i];
        }
        off += n->value.size();
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization / attention pieces.
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
  const AxisSplit s = split_axis(a.shape(), axis);
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t in = 0; in < s.inner; ++in) {
      const int64_t base = o * s.dim * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t d = 0; d < s.dim; ++d)
        mx = std::max(mx, av[static_cast<size_t>(base + d * s.inner)]);
      double sum = 0.0;
      for (int64_t d = 0; d < s.dim; ++d) {
        const double e = std::exp(av[static_cast<size_t>(base + d * s.inner)] - mx);
        ov[static_cast<size_t>(base + d * s.inner)] = e;
        sum += e;
      }
      for (int64_t d = 0; d < s.dim; ++d)
        ov[static_cast<size_t>(base + d * s.inner)] /= sum;
    }
  }
  check_finite("softmax", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on, s] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t o = 0; o < s.outer; ++o) {
      for (int64_t in = 0; in < s.inner; ++in) {
        const int64_t base = o * s.dim * s.inner + in;
        double dot = 0.0;
        for (int64_t d = 0; d < s.dim; ++d) {
          const size_t idx = static_cast<size_t>(base + d * s.inner);
          dot += on->grad[idx] * on->value[idx];
        }
        for (int64_t d = 0; d < s.dim; ++d) {
          const size_t idx = static_cast<size_t>(base + d * s.inner);
          an->grad[idx] += on->value[idx] * (on->grad[idx] - dot);
        }
      }
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& a, int axis, const Tensor& gain,
                  const Tensor& bias, double eps) {
  const AxisSplit s = split_axis(a.shape(), axis);
  if (gain.numel() != s.dim || bias.numel() != s.dim)
    throw ValidationError("layer_norm: gain/bias must match normalized dim");
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  const auto& gv = gain.val();
  const auto& bv = bias.val();
  auto& ov = out.mut_val();
  // Normalized values and per-slice 1/sigma are kept for the backward pass.
  std::vector<double> normalized(av.size());
  std::vector<double> inv_sigma(static_cast<size_t>(s.outer * s.inner));
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t in = 0; in < s.inner; ++in) {
      const int64_t base = o * s.dim * s.inner + in;
      double mean = 0.0;
      for (int64_t d = 0; d < s.dim; ++d)
        mean += av[static_cast<size_t>(base + d * s.inner)];
      mean /= static_cast<double>(s.dim);
      double var = 0.0;
      for (int64_t d = 0; d < s.dim; ++d) {
        const double dv = av[static_cast<size_t>(base + d * s.inner)] - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(s.dim);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_sigma[static_cast<size_t>(o * s.inner + in)] = is;
      for (int64_t d = 0; d < s.dim; ++d) {
        const size_t idx = static_cast<size_t>(base + d * s.inner);
        const double y = (av[idx] - mean) * is;
        normalized[idx] = y;
        ov[idx] = gv[static_cast<size_t>(d)] * y + bv[static_cast<size_t>(d)];
      }
    }
  }
  check_finite("layer_norm", ov);
  auto an = a.node(), gn = gain.node(), bn = bias.node(), on = out.node();
  register_op({&a, &gain, &bias}, out,
              [an, gn, bn, on, s, normalized = std::move(normalized),
               inv_sigma = std::move(inv_sigma)] {
    for (int64_t o = 0; o < s.outer; ++o) {
      for (int64_t in = 0; in < s.inner; ++in) {
        const int64_t base = o * s.dim * s.inner + in;
        const double is = inv_sigma[static_cast<size_t>(o * s.inner + in)];
        double mean_dy = 0.0, mean_dyy = 0.0;
        for (int64_t d = 0; d < s.dim; ++d) {
          const size_t idx = static_cast<size_t>(base + d * s.inner);
          const double dy = on->grad[idx] * gn->value[static_cast<size_t>(d)];
          mean_dy += dy;
          mean_dyy += dy * normalized[idx];
        }
        mean_dy /= static_cast<double>(s.dim);
        mean_dyy /= static_cast<double>(s.dim);
        for (int64_t d = 0; d < s.dim; ++d) {
          const size_t idx = static_cast<size_t>(base + d * s.inner);
          const double dy = on->grad[idx] * gn->value[static_cast<size_t>(d)];
          if (an->requires_grad) {
            an->ensure_grad();
            an->grad[idx] += (dy - mean_dy - normalized[idx] * mean_dyy) * is;
          }
          if (gn->requires_grad) {
            gn->ensure_grad();
            gn->grad[static_cast<size_t>(d)] += on->grad[idx] * normalized[idx];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad[static_cast<size_t>(d)] += on->grad[idx];
          }
        }
      }
    }
  });
  return out;
}

Tensor dropout(const Tensor& a, double rate, bool training, uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ValidationError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  Rng rng = Rng::stream(seed, "dropout");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.val().size());
  for (auto& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
  Tensor out = make_out(a.shape());
  const auto& av = a.val();
  auto& ov = out.mut_val();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * mask[i];
  check_finite("dropout", ov);
  auto an = a.node(), on = out.node();
  register_op({&a}, out, [an, on, mask = std::move(mask)] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i)
      an->grad[i] += on->grad[i] * mask[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Affine maps.
// ---------------------------------------------------------------------------

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (weight.ndim() != 2) throw ValidationError("linear: weight must be 2-D");
  const int d_out = weight.dim(0);
  const int d_in = weight.dim(1);
  if (input.ndim() < 1 || input.dim(input.ndim() - 1) != d_in)
    throw ValidationError("linear: inner dimension mismatch");
  if (bias.numel() != d_out) throw ValidationError("linear: bias size mismatch");
  const int64_t rows = input.numel() / (d_in == 0 ? 1 : d_in);
  std::vector<int> out_shape = input.shape();
  out_shape.back() = d_out;
  Tensor out = make_out(out_shape);
  if (rows > 0 && d_in > 0) {
    kernels::matmul_nt(input.val().data(), weight.val().data(),
                       out.mut_val().data(), static_cast<int>(rows), d_in, d_out,
                       false);
  }
  auto& ov = out.mut_val();
  const auto& bv = bias.val();
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < d_out; ++j)
      ov[static_cast<size_t>(r * d_out + j)] += bv[static_cast<size_t>(j)];
  check_finite("linear", ov);
  auto in_n = input.node(), w_n = weight.node(), b_n = bias.node(),
       on = out.node();
  register_op({&input, &weight, &bias}, out, [in_n, w_n, b_n, on, rows, d_in,
                                              d_out] {
    if (rows == 0) return;
    if (in_n->requires_grad && d_in > 0) {
      in_n->ensure_grad();
      kernels::matmul_nn(on->grad.data(), w_n->value.data(), in_n->grad.data(),
                         static_cast<int>(rows), d_out, d_in, true);
    }
    if (w_n->requires_grad && d_in > 0) {
      w_n->ensure_grad();
      kernels::matmul_tn(on->grad.data(), in_n->value.data(), w_n->grad.data(),
                         static_cast<int>(rows), d_out, d_in, true);
    }
    if (b_n->requires_grad) {
      b_n->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < d_out; ++j)
          b_n->grad[static_cast<size_t>(j)] +=
              on->grad[static_cast<size_t>(r * d_out + j)];
    }
  });
  return out;
}

Tensor channel_linear(const Tensor& map, const Tensor& weight,
                      const Tensor& bias) {
  if (map.ndim() != 3) throw ValidationError("channel_linear expects [C,H,W]");
  if (weight.ndim() != 2 || weight.dim(1) != map.dim(0))
    throw ValidationError("channel_linear: weight shape mismatch");
  const int c_in = map.dim(0);
  const int c_out = weight.dim(0);
  const int h = map.dim(1);
  const int w = map.dim(2);
  if (bias.numel() != c_out)
    throw ValidationError("channel_linear: bias size mismatch");
  const int plane = h * w;
  Tensor out = make_out({c_out, h, w});
  kernels::matmul_nn(weight.val().data(), map.val().data(), out.mut_val().data(),
                     c_out, c_in, plane, false);
  auto& ov = out.mut_val();
  const auto& bv = bias.val();
  for (int c = 0; c < c_out; ++c) {
    const double b = bv[static_cast<size_t>(c)];
    double* p = ov.data() + static_cast<size_t>(c) * plane;
    for (int i = 0; i < plane; ++i) p[i] += b;
  }
  check_finite("channel_linear", ov);
  auto mn = map.node(), wn = weight.node(), bn = bias.node(), on = out.node();
  register_op({&map, &weight, &bias}, out, [mn, wn, bn, on, c_in, c_out, plane] {
    if (mn->requires_grad) {
      mn->ensure_grad();
      kernels::matmul_tn(wn->value.data(), on->grad.data(), mn->grad.data(),
                         c_out, c_in, plane, true);
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      kernels::matmul_nt(on->grad.data(), mn->value.data(), wn->grad.data(),
                         c_out, plane, c_in, true);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int c = 0; c < c_out; ++c) {
        const double* p = on->grad.data() + static_cast<size_t>(c) * plane;
        double s = 0.0;
        for (int i = 0; i < plane; ++i) s += p[i];
        bn->grad[static_cast<size_t>(c)] += s;
      }
    }
  });
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  if (input.ndim() != 3) throw ValidationError("conv2d expects input [C,H,W]");
  if (weight.ndim() != 4 || weight.dim(2) != weight.dim(3))
    throw ValidationError("conv2d expects weight [C_out,C_in,k,k]");
  if (weight.dim(1) != input.dim(0))
    throw ValidationError("conv2d: channel mismatch");
  if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
  const int c_in = input.dim(0);
  const int h = input.dim(1);
  const int w = input.dim(2);
  const int c_out = weight.dim(0);
  const int k = weight.dim(2);
  if (bias.numel() != c_out) throw ValidationError("conv2d: bias size mismatch");
  if (h + 2 * padding < k || w + 2 * padding < k)
    throw ValidationError("conv2d: spatial dims smaller than kernel");
  const int out_h = (h + 2 * padding - k) / stride + 1;
  const int out_w = (w + 2 * padding - k) / stride + 1;
  const int ckk = c_in * k * k;
  const int out_plane = out_h * out_w;

  std::vector<double> col(static_cast<size_t>(ckk) * out_plane);
  kernels::im2col(input.val().data(), c_in, h, w, k, stride, padding, out_h,
                  out_w, col.data());
  Tensor out = make_out({c_out, out_h, out_w});
  kernels::matmul_nn(weight.val().data(), col.data(), out.mut_val().data(),
                     c_out, ckk, out_plane, false);
  auto& ov = out.mut_val();
  const auto& bv = bias.val();
  for (int c = 0; c < c_out; ++c) {
    const double b = bv[static_cast<size_t>(c)];
    double* p = ov.data() + static_cast<size_t>(c) * out_plane;
    for (int i = 0; i < out_plane; ++i) p[i] += b;
  }
  check_finite("conv2d", ov);
  auto in_n = input.node(), wn = weight.node(), bn = bias.node(),
       on = out.node();
  register_op({&input, &weight, &bias}, out, [in_n, wn, bn, on, c_in, h, w, k,
                                              stride, padding, out_h, out_w,
                                              c_out, ckk, out_plane] {
    // The patch matrix is recomputed rather than cached; it is cheap relative
    // to the GEMMs and keeps tape memory linear in the map size.
    if (wn->requires_grad || in_n->requires_grad) {
      if (wn->requires_grad) {
        std::vector<double> col(static_cast<size_t>(ckk) * out_plane);
        kernels::im2col(in_n->value.data(), c_in, h, w, k, stride, padding,
                        out_h, out_w, col.data());
        wn->ensure_grad();
        kernels::matmul_nt(on->grad.data(), col.data(), wn->grad.data(), c_out,
                           out_plane, ckk, true);
      }
      if (in_n->requires_grad) {
        std::vector<double> d_col(static_cast<size_t>(ckk) * out_plane);
        kernels::matmul_tn(wn->value.data(), on->grad.data(), d_col.data(),
                           c_out, ckk, out_plane, false);
        in_n->ensure_grad();
        kernels::col2im(d_col.data(), c_in, h, w, k, stride, padding, out_h,
                        out_w, in_n->grad.data(), true);
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int c = 0; c < c_out; ++c) {
        const double* p = on->grad.data() + static_cast<size_t>(c) * out_plane;
        double s = 0.0;
        for (int i = 0; i < out_plane; ++i) s += p[i];
        bn->grad[static_cast<size_t>(c)] += s;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

Tensor bilinear_sample(const Tensor& map, const Tensor& coords) {
  if (map.ndim() != 3) throw ValidationError("bilinear_sample expects [C,H,W]");
  if (coords.ndim() != 2 || coords.dim(1) != 2)
    throw ValidationError("bilinear_sample expects coords [n,2]");
  const int c = map.dim(0);
  const int h = map.dim(1);
  const int w = map.dim(2);
  const int n = coords.dim(0);
  Tensor out = make_out({c, n});
  if (n > 0)
    kernels::bilinear_gather(map.val().data(), c, h, w, coords.val().data(), n,
                             out.mut_val().data());
  check_finite("bilinear_sample", out.val());
  auto mn = map.node(), cn = coords.node(), on = out.node();
  register_op({&map, &coords}, out, [mn, cn, on, c, h, w, n] {
    if (n == 0) return;
    double* d_map = nullptr;
    double* d_coords = nullptr;
    if (mn->requires_grad) {
      mn->ensure_grad();
      d_map = mn->grad.data();
    }
    if (cn->requires_grad) {
      cn->ensure_grad();
      d_coords = cn->grad.data();
    }
    kernels::bilinear_gather_backward(mn->value.data(), c, h, w,
                                      cn->value.data(), n, on->grad.data(),
                                      d_map, d_coords);
  });
  return out;
}

Tensor upsample_bilinear(const Tensor& map, int out_h, int out_w) {
  if (map.ndim() != 3) throw ValidationError("upsample expects [C,H,W]");
  if (out_h < 1 || out_w < 1) throw ValidationError("upsample: bad target size");
  const int c = map.dim(0);
  const int h = map.dim(1);
  const int w = map.dim(2);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  std::vector<double> coords(static_cast<size_t>(out_h) * out_w * 2);
  for (int i = 0; i < out_h; ++i) {
    const double y = (i + 0.5) * sy - 0.5;
    for (int j = 0; j < out_w; ++j) {
      coords[2 * (static_cast<size_t>(i) * out_w + j)] = (j + 0.5) * sx - 0.5;
      coords[2 * (static_cast<size_t>(i) * out_w + j) + 1] = y;
    }
  }
  const int n = out_h * out_w;
  Tensor out = make_out({c, out_h, out_w});
  kernels::bilinear_gather(map.val().data(), c, h, w, coords.data(), n,
                           out.mut_val().data());
  check_finite("upsample_bilinear", out.val());
  auto mn = map.node(), on = out.node();
  register_op({&map}, out, [mn, on, coords = std::move(coords), c, h, w, n] {
    if (!mn->requires_grad) return;
    mn->ensure_grad();
    kernels::bilinear_gather_backward(mn->value.data(), c, h, w, coords.data(),
                                      n, on->grad.data(), mn->grad.data(),
                                      nullptr);
  });
  return out;
}

Tensor translate(const Tensor& map, double drow, double dcol) {
  if (map.ndim() != 3) throw ValidationError("translate expects [C,H,W]");
  const int c = map.dim(0);
  const int h = map.dim(1);
  const int w = map.dim(2);
  Tensor out = make_out({c, h, w});
  kernels::translate_bilinear(map.val().data(), c, h, w, drow, dcol,
                              out.mut_val().data(), false);
  check_finite("translate", out.val());
  auto mn = map.node(), on = out.node();
  register_op({&map}, out, [mn, on, c, h, w, drow, dcol] {
    if (!mn->requires_grad) return;
    mn->ensure_grad();
    kernels::translate_bilinear(on->grad.data(), c, h, w, -drow, -dcol,
                                mn->grad.data(), true);
  });
  return out;
}

Tensor deform_sample(const Tensor& value, const Tensor& locs,
                     const Tensor& weights, int heads, int points) {
  if (value.ndim() != 3) throw ValidationError("deform_sample expects [C,H,W]");
  const int c = value.dim(0);
  const int h = value.dim(1);
  const int w = value.dim(2);
  if (heads < 1 || points < 1 || c % heads != 0)
    throw ValidationError("deform_sample: channels must divide across heads");
  if (locs.ndim() != 3 || locs.dim(0) != heads * points * 2 ||
      locs.dim(1) != h || locs.dim(2) != w)
    throw ValidationError("deform_sample: locs shape mismatch");
  if (weights.ndim() != 3 || weights.dim(0) != heads * points ||
      weights.dim(1) != h || weights.dim(2) != w)
    throw ValidationError("deform_sample: weights shape mismatch");
  Tensor out = make_out({c, h, w});
  kernels::deform_sample(value.val().data(), locs.val().data(),
                         weights.val().data(), c, h, w, heads, points,
                         out.mut_val().data());
  check_finite("deform_sample", out.val());
  auto vn = value.node(), ln = locs.node(), wn = weights.node(),
       on = out.node();
  register_op({&value, &locs, &weights}, out, [vn, ln, wn, on, c, h, w, heads,
                                               points] {
    double* d_value = nullptr;
    double* d_locs = nullptr;
    double* d_weights = nullptr;
    if (vn->requires_grad) {
      vn->ensure_grad();
      d_value = vn->grad.data();
    }
    if (ln->requires_grad) {
      ln->ensure_grad();
      d_locs = ln->grad.data();
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      d_weights = wn->grad.data();
    }
    kernels::deform_sample_backward(vn->value.data(), ln->value.data(),
                                    wn->value.data(), c, h, w, heads, points,
                                    on->grad.data(), d_value, d_locs,
                                    d_weights);
  });
  return out;
}

Tensor pillar_scatter(const Tensor& feat,
                      std::vector<kernels::PillarRange> ranges, int height,
                      int width) {
  if (feat.ndim() != 2) throw ValidationError("pillar_scatter expects [n,C]");
  const int n = feat.dim(0);
  const int c = feat.dim(1);
  const int cells = height * width;
  for (const auto& r : ranges) {
    if (r.cell < 0 || r.cell >= cells || r.start < 0 || r.count < 1 ||
        r.start + r.count > n)
      throw ValidationError("pillar_scatter: range out of bounds");
  }
  Tensor out = make_out({c, height, width});
  std::vector<int> argmax(ranges.size() * static_cast<size_t>(c), 0);
  if (!ranges.empty())
    kernels::pillar_max_scatter(feat.val().data(), n, c, ranges, cells,
                                out.mut_val().data(), argmax.data());
  check_finite("pillar_scatter", out.val());
  auto fn = feat.node(), on = out.node();
  register_op({&feat}, out, [fn, on, ranges = std::move(ranges),
                             argmax = std::move(argmax), c, cells] {
    if (!fn->requires_grad || ranges.empty()) return;
    fn->ensure_grad();
    kernels::pillar_max_scatter_backward(ranges, c, cells, on->grad.data(),
                                         argmax.data(), fn->grad.data());
  });
  return out;
}

}  // namespace rpr::nn
