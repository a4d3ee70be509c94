#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cape/rng.hpp"
#include "cape/tensor.hpp"

namespace cape {

/// Parameters of the synthetic probabilistic-segmentation generator.
///
/// The spatial statistics (length_scale, gain, obs_noise) are generator
/// choices; only target_rate is meant to match a real event-rate regime.
struct FieldConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  double length_scale = 4.0;  // Gaussian smoothing std-dev, pixels
  double gain = 2.0;          // logit slope on the standardized field
  double target_rate = 0.07;  // marginal event rate, in (0, 1)
  double obs_noise = 0.5;     // per-channel input noise std-dev
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  /// Half-width of the truncated smoothing kernel, ceil(3 * length_scale).
  std::size_t kernel_radius() const;
};

inline constexpr double kProbabilityClamp = 1e-6;

struct LatentField {
  Tensor g;  // standardized smooth Gaussian field, H x W
  Tensor p;  // event probability sigmoid(gain * g + offset), H x W
};

struct Sample {
  Tensor inputs;                // C x H x W
  Tensor outcomes;              // H x W, values in {0, 1}
  std::optional<Tensor> true_p; // H x W, values in [1e-6, 1 - 1e-6]
};

struct Dataset {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::vector<Sample> samples;
  FieldConfig config;
  double offset = 0.0;
  std::uint32_t format_version = kFormatVersion;

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t channels() const { return samples.at(0).inputs.extent(0); }
  std::size_t height() const { return samples.at(0).inputs.extent(1); }
  std::size_t width() const { return samples.at(0).inputs.extent(2); }
  bool has_true_p() const noexcept;

  /// Checks shape agreement, binary outcomes and probability ranges.
  void validate() const;
};

/// White Gaussian noise smoothed by a separable truncated Gaussian kernel and
/// standardized to zero mean and unit (population) variance over the field.
/// Noise is drawn on a padded grid so every output pixel sees a full kernel.
Tensor smooth_gaussian_field(const FieldConfig& config, Rng& rng);

double sigmoid(double x) noexcept;

/// Draws one latent field and maps it through sigmoid(gain * g + offset),
/// clamping probabilities to [1e-6, 1 - 1e-6].
LatentField gen_latent_field(const FieldConfig& config, double offset, Rng& rng);

/// Bisection on the offset over [-20, 20] so that the mean of
/// sigmoid(gain * g + offset) over `n_fields` fresh fields matches
/// target_rate within `tolerance`.
double calibrate_offset(const FieldConfig& config, Rng& rng, std::size_t n_fields = 100,
                        double tolerance = 1e-3);

/// Outcomes ~ Bernoulli(p) pixel-wise; input channel c = g + obs_noise * eta_c.
Sample make_sample(const FieldConfig& config, double offset, Rng& rng);

/// `n_samples` independent samples under one calibrated offset. Sample i
/// draws from Rng::derive(config.seed, i), so the result depends only on
/// the config.
Dataset generate_dataset(const FieldConfig& config, std::size_t n_samples);

/// Fraction of outcome pixels equal to 1.
double event_rate(const Dataset& dataset);

}  // namespace cape
