#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "cape/adam.hpp"
#include "cape/conv2d.hpp"
#include "cape/rng.hpp"
#include "cape/tensor.hpp"

namespace cape {

/// Weights of the pixel-wise probability estimator
///
///   probs = sigmoid(conv2(relu(conv1(input))))
///
/// with 3x3 "same" convolutions: conv1 maps C channels to F hidden maps,
/// conv2 maps F hidden maps to one logit map. Gradients share this layout.
struct ModelParams {
  static constexpr std::size_t kKernel = 3;
  static constexpr std::array<std::string_view, 4> kBlockNames{"k1", "b1", "k2", "b2"};

  Tensor k1;  // F x C x 3 x 3
  Tensor b1;  // F
  Tensor k2;  // 1 x F x 3 x 3
  Tensor b2;  // 1

  ModelParams() = default;
  ModelParams(std::size_t channels, std::size_t filters);

  std::size_t channels() const { return k1.extent(1); }
  std::size_t filters() const { return k1.extent(0); }
  std::size_t parameter_count() const;

  std::array<Tensor*, 4> blocks() { return {&k1, &b1, &k2, &b2}; }
  std::array<const Tensor*, 4> blocks() const { return {&k1, &b1, &k2, &b2}; }

  /// Throws std::invalid_argument on inconsistent shapes, NumericError on
  /// non-finite weights.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using ModelGrads = ModelParams;

struct ForwardCache {
  ConvCache conv1;
  Tensor hidden_pre;   // F x H x W
  ConvCache conv2;     // input is relu(hidden_pre)
  Tensor logits;       // H x W, after clamping
  Tensor probs;        // H x W
  Tensor logit_live;   // 1 where the logit clamp is inactive, else 0
};

/// Logits are clamped to +-30 so probabilities stay strictly inside (0, 1).
inline constexpr double kLogitClamp = 30.0;

/// He-normal kernels, N(0, 2 / fan_in) with fan_in = in_channels * 9; zero biases.
ModelParams init_params(std::size_t channels, std::size_t filters, Rng& rng);

Tensor forward(const ModelParams& params, const Tensor& input, ForwardCache& cache);
/// Forward pass without retaining intermediates.
Tensor predict(const ModelParams& params, const Tensor& input);

/// Exact chain-rule gradient of a loss given dloss/dprobs. The relu
/// derivative at exactly 0 is taken as 0.
ModelGrads backward(const ModelParams& params, const ForwardCache& cache,
                    const Tensor& dloss_dprobs);

/// Concatenation of all parameter blocks in k1, b1, k2, b2 order.
Tensor flatten(const ModelParams& params);
ModelParams unflatten(const Tensor& flat, std::size_t channels, std::size_t filters);

/// Adam over the four parameter blocks. All gradients are checked before
/// any block is updated, so a rejected step leaves the model untouched.
class ModelOptimizer {
 public:
  ModelOptimizer() = default;
  ModelOptimizer(const ModelParams& like, AdamHyperParams hyper);
  void step(ModelParams& params, const ModelGrads& grads);
  std::uint64_t steps() const noexcept { return states_[0].t; }

 private:
  std::array<AdamState, 4> states_;
};

}  // namespace cape
