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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rpr/errors.hpp"

namespace rpr::nn {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on demand, zero-filled
  bool requires_grad = false;

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Value-semantics handle to a node in the computation graph. Copies share
/// the underlying buffer.
class Tensor {
 public:
  Tensor() : n_(std::make_shared<TensorNode>()) {}
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double v);
  /// Leaf with requires_grad set; the unit the optimizer updates.
  static Tensor param(std::vector<int> shape, std::vector<double> data);

  const std::vector<int>& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }
  int64_t numel() const { return n_->numel(); }
  bool requires_grad() const { return n_->requires_grad; }

  const std::vector<double>& val() const { return n_->value; }
  std::vector<double>& mut_val() { return n_->value; }
  const std::vector<double>& grad() const { return n_->grad; }
  std::vector<double>& mut_grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }

  double item() const {
    if (numel() != 1) throw ValidationError("item() on non-scalar tensor");
    return n_->value[0];
  }

  const std::shared_ptr<TensorNode>& node() const { return n_; }
  bool defined() const { return n_ && !n_->shape.empty(); }

 private:
  std::shared_ptr<TensorNode> n_;
};

/// Ordered record of differentiable ops. One tape per training step;
/// backward replays it once in exact reverse execution order.
class Tape {
 public:
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  size_t size() const { return ops_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  /// requires_grad leaf reachable from the recorded ops.
  void backward(const Tensor& loss);

  static Tape* current();

 private:
  friend struct TapeScope;
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

/// RAII activation of a tape for the current thread.
struct TapeScope {
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

}  // namespace rpr::nn
