// SPDX-License-Identifier: Apache-2.0
//
// Dense math for small softmax classifiers: a row-major matrix, a layered
// parameter set (linear softmax, optionally with tanh hidden layers),
// cross-entropy loss with analytic gradients, and SGD with momentum.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace fedentropy {

using Rng = std::mt19937_64;

// Derives an independent generator for a (seed, stream) pair so that
// unrelated consumers never share a sequence.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

/// Probability distribution over classes.
using ProbVector = std::vector<double>;

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// One affine layer. `weight` is (outputs x inputs).
struct Layer {
  DenseMatrix weight;
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

/// Parameters (or gradients, or velocity) of a whole model, input layer first.
using ParamSet = std::vector<Layer>;

struct ModelParams {
  ParamSet layers;
  ParamSet velocity;

  std::size_t input_dim() const;
  std::size_t class_count() const;

  bool operator==(const ModelParams&) const = default;
};

struct Batch {
  DenseMatrix inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

struct ProximalTerm {
  double mu;
  std::reference_wrapper<const ParamSet> anchor;
};

struct ForwardResult {
  DenseMatrix logits;
  DenseMatrix probs;
};

struct LossAndGrad {
  double loss = 0.0;
  ParamSet grads;
};

/// Layer widths from input to output, e.g. {16, 10} for linear softmax or
/// {16, 32, 10} for one tanh hidden layer. Velocity starts at zero.
ModelParams zero_model(std::span<const std::size_t> widths);

/// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ModelParams random_model(std::span<const std::size_t> widths, Rng& rng);

ParamSet zeros_like(const ParamSet& params);
bool same_shape(const ParamSet& a, const ParamSet& b);
std::size_t parameter_count(const ParamSet& params);

// Flat (layer-major; weights then bias) access used by gradient checks.
double& parameter_at(ParamSet& params, std::size_t flat_index);
std::vector<double> flatten(const ParamSet& params);

ProbVector softmax(std::span<const double> logits);

ForwardResult forward(const ModelParams& model, const DenseMatrix& inputs);
ForwardResult forward(const ModelParams& model, const Batch& batch);

/// Mean cross-entropy (natural log) plus (mu/2)*||w - anchor||^2 when a
/// proximal term is given.
double loss(const ModelParams& model, const Batch& batch,
            const std::optional<ProximalTerm>& proximal = std::nullopt);

LossAndGrad loss_and_grad(const ModelParams& model, const Batch& batch,
                          const std::optional<ProximalTerm>& proximal = std::nullopt);

/// velocity <- momentum * velocity + grads; params <- params - lr * velocity.
void sgd_step(ModelParams& model, const ParamSet& grads, double lr, double momentum);

}  // namespace fedentropy
