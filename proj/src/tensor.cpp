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

#include "rpr/tensor.hpp"

#include <cmath>

namespace rpr::nn {

namespace {
thread_local Tape* t_current_tape = nullptr;

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ValidationError("negative tensor dimension");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
  auto n = std::make_shared<TensorNode>();
  const int64_t count = shape_numel(shape);
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(count), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  auto n = std::make_shared<TensorNode>();
  const int64_t count = shape_numel(shape);
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(count), v);
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  const int64_t count = shape_numel(shape);
  if (static_cast<size_t>(count) != data.size())
    throw ValidationError("tensor data size does not match shape");
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

Tensor Tensor::param(std::vector<int> shape, std::vector<double> data) {
  Tensor t = from_data(std::move(shape), std::move(data));
  t.node()->requires_grad = true;
  return t;
}

Tape* Tape::current() { return t_current_tape; }

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) throw ValidationError("backward requires a scalar loss");
  if (consumed_)
    throw ValidationError("tape already consumed; build a new tape per step");
  if (!loss.requires_grad() || ops_.empty())
    throw ValidationError("loss is not connected to an active tape");
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  consumed_ = true;
}

TapeScope::TapeScope(Tape& t) : prev_(t_current_tape) { t_current_tape = &t; }
TapeScope::~TapeScope() { t_current_tape = prev_; }

}  // namespace rpr::nn
