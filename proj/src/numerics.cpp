// SPDX-License-Identifier: Apache-2.0

#include "fedentropy/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedentropy {

namespace {

void require(bool condition, const char* message) {
  if (!condition) throw std::invalid_argument(message);
}

// Hidden activations for every layer (index 0 is the input), plus the
// output logits. Hidden layers use tanh.
struct Activations {
  std::vector<DenseMatrix> layer_inputs;
  DenseMatrix logits;
};

Activations run_layers(const ModelParams& model, const DenseMatrix& inputs) {
  require(!model.layers.empty(), "model has no layers");
  require(inputs.cols() == model.input_dim(), "input dimension does not match model");
  for (double v : inputs.values()) {
    require(std::isfinite(v), "non-finite input");
  }

  Activations acts;
  acts.layer_inputs.reserve(model.layers.size());
  DenseMatrix current = inputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    const std::size_t n = current.rows();
    const std::size_t out = layer.weight.rows();
    const std::size_t in = layer.weight.cols();
    DenseMatrix next(n, out);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = current.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        double z = layer.bias[o];
        for (std::size_t k = 0; k < in; ++k) z += layer.weight(o, k) * x[k];
        next(i, o) = z;
      }
    }
    acts.layer_inputs.push_back(std::move(current));
    if (l + 1 < model.layers.size()) {
      for (double& v : next.values()) v = std::tanh(v);
    }
    current = std::move(next);
  }
  acts.logits = std::move(current);
  return acts;
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

void check_batch(const ModelParams& model, const Batch& batch) {
  require(batch.size() > 0, "empty batch");
  require(batch.inputs.rows() == batch.size(), "batch inputs and labels differ in length");
  const std::size_t c = model.class_count();
  for (std::size_t y : batch.labels) require(y < c, "label out of range");
}

double proximal_penalty(const ParamSet& params, const ProximalTerm& prox) {
  const ParamSet& anchor = prox.anchor.get();
  require(same_shape(params, anchor), "proximal anchor shape differs from model");
  double sq = 0.0;
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto w = params[l].weight.values();
    auto a = anchor[l].weight.values();
    for (std::size_t i = 0; i < w.size(); ++i) sq += (w[i] - a[i]) * (w[i] - a[i]);
    for (std::size_t i = 0; i < params[l].bias.size(); ++i) {
      const double d = params[l].bias[i] - anchor[l].bias[i];
      sq += d * d;
    }
  }
  return 0.5 * prox.mu * sq;
}

double cross_entropy(const DenseMatrix& logits, const Batch& batch) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto z = logits.row(i);
    total += log_sum_exp(z) - z[batch.labels[i]];
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, "matrix data length != rows * cols");
}

std::size_t ModelParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

std::size_t ModelParams::class_count() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

ModelParams zero_model(std::span<const std::size_t> widths) {
  require(widths.size() >= 2, "model needs an input and an output width");
  require(widths.back() >= 2, "model needs at least two classes");
  ModelParams model;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    require(widths[l] > 0 && widths[l + 1] > 0, "layer widths must be positive");
    model.layers.push_back({DenseMatrix(widths[l + 1], widths[l]),
                            std::vector<double>(widths[l + 1], 0.0)});
  }
  model.velocity = zeros_like(model.layers);
  return model;
}

ModelParams random_model(std::span<const std::size_t> widths, Rng& rng) {
  ModelParams model = zero_model(widths);
  for (Layer& layer : model.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weight.values()) w = dist(rng);
    for (double& b : layer.bias) b = dist(rng);
  }
  return model;
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  out.reserve(params.size());
  for (const Layer& layer : params) {
    out.push_back({DenseMatrix(layer.weight.rows(), layer.weight.cols()),
                   std::vector<double>(layer.bias.size(), 0.0)});
  }
  return out;
}

bool same_shape(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].weight.rows() != b[l].weight.rows() || a[l].weight.cols() != b[l].weight.cols() ||
        a[l].bias.size() != b[l].bias.size()) {
      return false;
    }
  }
  return true;
}

std::size_t parameter_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const Layer& layer : params) n += layer.weight.size() + layer.bias.size();
  return n;
}

double& parameter_at(ParamSet& params, std::size_t flat_index) {
  for (Layer& layer : params) {
    if (flat_index < layer.weight.size()) return layer.weight.values()[flat_index];
    flat_index -= layer.weight.size();
    if (flat_index < layer.bias.size()) return layer.bias[flat_index];
    flat_index -= layer.bias.size();
  }
  throw std::out_of_range("parameter index out of range");
}

std::vector<double> flatten(const ParamSet& params) {
  std::vector<double> flat;
  flat.reserve(parameter_count(params));
  for (const Layer& layer : params) {
    auto w = layer.weight.values();
    flat.insert(flat.end(), w.begin(), w.end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

ProbVector softmax(std::span<const double> logits) {
  require(logits.size() >= 2, "softmax needs at least two logits");
  for (double v : logits) require(std::isfinite(v), "non-finite logit");
  const double m = *std::max_element(logits.begin(), logits.end());
  ProbVector p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

ForwardResult forward(const ModelParams& model, const DenseMatrix& inputs) {
  Activations acts = run_layers(model, inputs);
  DenseMatrix probs(acts.logits.rows(), acts.logits.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    ProbVector p = softmax(acts.logits.row(i));
    std::copy(p.begin(), p.end(), probs.row(i).begin());
  }
  return {std::move(acts.logits), std::move(probs)};
}

ForwardResult forward(const ModelParams& model, const Batch& batch) {
  return forward(model, batch.inputs);
}

double loss(const ModelParams& model, const Batch& batch,
            const std::optional<ProximalTerm>& proximal) {
  check_batch(model, batch);
  Activations acts = run_layers(model, batch.inputs);
  double value = cross_entropy(acts.logits, batch);
  if (proximal) value += proximal_penalty(model.layers, *proximal);
  return value;
}

LossAndGrad loss_and_grad(const ModelParams& model, const Batch& batch,
                          const std::optional<ProximalTerm>& proximal) {
  check_batch(model, batch);
  Activations acts = run_layers(model, batch.inputs);

  LossAndGrad result;
  result.loss = cross_entropy(acts.logits, batch);
  result.grads = zeros_like(model.layers);

  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  // dL/dlogits = (softmax - onehot) / n
  DenseMatrix delta(n, model.class_count());
  for (std::size_t i = 0; i < n; ++i) {
    ProbVector p = softmax(acts.logits.row(i));
    for (std::size_t k = 0; k < p.size(); ++k) delta(i, k) = p[k] * inv_n;
    delta(i, batch.labels[i]) -= inv_n;
  }

  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Layer& layer = model.layers[l];
    Layer& grad = result.grads[l];
    const DenseMatrix& a_in = acts.layer_inputs[l];
    const std::size_t out = layer.weight.rows();
    const std::size_t in = layer.weight.cols();
    for (std::size_t i = 0; i < n; ++i) {
      auto x = a_in.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta(i, o);
        grad.bias[o] += d;
        for (std::size_t k = 0; k < in; ++k) grad.weight(o, k) += d * x[k];
      }
    }
    if (l == 0) break;
    // Back through the tanh that produced a_in.
    DenseMatrix prev(n, in);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < in; ++k) {
        double s = 0.0;
        for (std::size_t o = 0; o < out; ++o) s += layer.weight(o, k) * delta(i, o);
        const double a = a_in(i, k);
        prev(i, k) = s * (1.0 - a * a);
      }
    }
    delta = std::move(prev);
  }

  if (proximal) {
    result.loss += proximal_penalty(model.layers, *proximal);
    const ParamSet& anchor = proximal->anchor.get();
    const double mu = proximal->mu;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      auto g = result.grads[l].weight.values();
      auto w = model.layers[l].weight.values();
      auto a = anchor[l].weight.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += mu * (w[i] - a[i]);
      for (std::size_t i = 0; i < result.grads[l].bias.size(); ++i) {
        result.grads[l].bias[i] += mu * (model.layers[l].bias[i] - anchor[l].bias[i]);
      }
    }
  }
  return result;
}

void sgd_step(ModelParams& model, const ParamSet& grads, double lr, double momentum) {
  require(same_shape(model.layers, grads), "gradient shape differs from model");
  require(same_shape(model.layers, model.velocity), "velocity shape differs from model");
  require(lr >= 0.0, "learning rate must be non-negative");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto v = model.velocity[l].weight.values();
    auto w = model.layers[l].weight.values();
    auto g = grads[l].weight.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      w[i] -= lr * v[i];
    }
    auto& vb = model.velocity[l].bias;
    auto& b = model.layers[l].bias;
    for (std::size_t i = 0; i < b.size(); ++i) {
      vb[i] = momentum * vb[i] + grads[l].bias[i];
      b[i] -= lr * vb[i];
    }
  }
}

}  // namespace fedentropy
