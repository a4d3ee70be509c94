#include "cape/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cape/errors.hpp"
#include "cape/fieldgen.hpp"

namespace cape {

ModelParams::ModelParams(std::size_t channels, std::size_t filters)
    : k1({filters, channels, kKernel, kKernel}),
      b1({filters}),
      k2({1, filters, kKernel, kKernel}),
      b2({1}) {}

std::size_t ModelParams::parameter_count() const {
  return k1.size() + b1.size() + k2.size() + b2.size();
}

void ModelParams::validate() const {
  if (k1.rank() != 4 || k1.extent(2) != kKernel || k1.extent(3) != kKernel) {
    throw std::invalid_argument("model: k1 must be F x C x 3 x 3, got " + shape_to_string(k1.shape()));
  }
  const std::size_t f = filters();
  if (b1.shape() != Shape{f}) throw std::invalid_argument("model: b1 must have F entries");
  if (k2.shape() != Shape{1, f, kKernel, kKernel}) {
    throw std::invalid_argument("model: k2 must be 1 x F x 3 x 3, got " + shape_to_string(k2.shape()));
  }
  if (b2.shape() != Shape{1}) throw std::invalid_argument("model: b2 must be a single value");
  auto blocks_ = blocks();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (!blocks_[i]->all_finite()) {
      throw NumericError("model: non-finite weight in block '" + std::string(kBlockNames[i]) + "'");
    }
  }
}

ModelParams init_params(std::size_t channels, std::size_t filters, Rng& rng) {
  if (channels == 0 || filters == 0) {
    throw std::invalid_argument("init_params: channels and filters must be >= 1");
  }
  ModelParams p(channels, filters);
  const double sd1 = std::sqrt(2.0 / static_cast<double>(channels * 9));
  for (auto& w : p.k1.data()) w = sd1 * rng.normal();
  const double sd2 = std::sqrt(2.0 / static_cast<double>(filters * 9));
  for (auto& w : p.k2.data()) w = sd2 * rng.normal();
  return p;
}

Tensor forward(const ModelParams& params, const Tensor& input, ForwardCache& cache) {
  if (input.rank() != 3 || input.extent(0) != params.channels()) {
    throw std::invalid_argument("model: expected input with " + std::to_string(params.channels()) +
                                " channels, got " + shape_to_string(input.shape()));
  }
  cache.hidden_pre = conv2d_forward(input, params.k1, params.b1, cache.conv1);
  Tensor hidden = cache.hidden_pre;
  for (auto& v : hidden.data()) v = std::max(v, 0.0);
  Tensor logits = conv2d_forward(hidden, params.k2, params.b2, cache.conv2);

  const Shape plane{input.extent(1), input.extent(2)};
  cache.logits = logits.reshaped(plane);
  cache.logit_live = Tensor(plane, 1.0);
  cache.probs = Tensor(plane);
  for (std::size_t i = 0; i < cache.logits.size(); ++i) {
    double& z = cache.logits[i];
    if (std::abs(z) > kLogitClamp) {
      z = std::clamp(z, -kLogitClamp, kLogitClamp);
      cache.logit_live[i] = 0.0;
    }
    cache.probs[i] = sigmoid(z);
  }
  return cache.probs;
}

Tensor predict(const ModelParams& params, const Tensor& input) {
  ForwardCache cache;
  return forward(params, input, cache);
}

ModelGrads backward(const ModelParams& /*params*/, const ForwardCache& cache,
                    const Tensor& dloss_dprobs) {
  if (dloss_dprobs.shape() != cache.probs.shape()) {
    throw std::invalid_argument("model backward: gradient shape " +
                                shape_to_string(dloss_dprobs.shape()) + " does not match output");
  }
  const std::size_t h = cache.probs.extent(0);
  const std::size_t w = cache.probs.extent(1);
  Tensor dlogits({1, h, w});
  for (std::size_t i = 0; i < dlogits.size(); ++i) {
    const double p = cache.probs[i];
    dlogits[i] = dloss_dprobs[i] * p * (1.0 - p) * cache.logit_live[i];
  }
  ConvGrads g2 = conv2d_backward(cache.conv2, dlogits);
  Tensor& dhidden = g2.input;
  for (std::size_t i = 0; i < dhidden.size(); ++i) {
    if (!(cache.hidden_pre[i] > 0.0)) dhidden[i] = 0.0;
  }
  ConvGrads g1 = conv2d_backward(cache.conv1, dhidden);

  ModelGrads grads;
  grads.k1 = std::move(g1.kernels);
  grads.b1 = std::move(g1.bias);
  grads.k2 = std::move(g2.kernels);
  grads.b2 = std::move(g2.bias);
  return grads;
}

Tensor flatten(const ModelParams& params) {
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  for (const Tensor* block : params.blocks()) {
    flat.insert(flat.end(), block->storage().begin(), block->storage().end());
  }
  const std::size_t n = flat.size();
  return Tensor({n}, std::move(flat));
}

ModelParams unflatten(const Tensor& flat, std::size_t channels, std::size_t filters) {
  ModelParams p(channels, filters);
  if (flat.size() != p.parameter_count()) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(p.parameter_count()) +
                                " values, got " + std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (Tensor* block : p.blocks()) {
    std::copy_n(flat.storage().begin() + static_cast<std::ptrdiff_t>(offset), block->size(),
                block->storage().begin());
    offset += block->size();
  }
  return p;
}

ModelOptimizer::ModelOptimizer(const ModelParams& like, AdamHyperParams hyper) {
  auto blocks = like.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) states_[i] = AdamState(blocks[i]->shape(), hyper);
}

void ModelOptimizer::step(ModelParams& params, const ModelGrads& grads) {
  auto grad_blocks = grads.blocks();
  for (std::size_t i = 0; i < grad_blocks.size(); ++i) {
    require_finite_gradient(*grad_blocks[i], ModelParams::kBlockNames[i]);
  }
  auto param_blocks = params.blocks();
  for (std::size_t i = 0; i < param_blocks.size(); ++i) {
    adam_step(*param_blocks[i], *grad_blocks[i], states_[i], ModelParams::kBlockNames[i]);
  }
}

}  // namespace cape
