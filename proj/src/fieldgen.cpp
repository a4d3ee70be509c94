#include "cape/fieldgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cape/errors.hpp"

namespace cape {
namespace {

// Stream index reserved for offset calibration; sample streams use 0..n-1.
constexpr std::uint64_t kCalibrationStream = std::numeric_limits<std::uint64_t>::max();

std::vector<double> gaussian_kernel(double length_scale, std::size_t radius) {
  std::vector<double> w(2 * radius + 1);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double d = static_cast<double>(k) - static_cast<double>(radius);
    w[k] = std::exp(-d * d / (2.0 * length_scale * length_scale));
  }
  const double total = sum(w);
  for (auto& v : w) v /= total;
  return w;
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

double mean_probability(std::span<const Tensor> fields, double gain, double offset) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& g : fields) {
    for (double v : g.data()) total += clamp_probability(sigmoid(gain * v + offset));
    count += g.size();
  }
  return total / static_cast<double>(count);
}

}  // namespace

void FieldConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid field config '" + field + "': " + why);
  };
  if (height == 0) fail("height", "must be positive");
  if (width == 0) fail("width", "must be positive");
  if (channels == 0) fail("channels", "must be positive");
  if (!(length_scale > 0.0) || !std::isfinite(length_scale)) fail("length_scale", "must be > 0");
  if (!(gain > 0.0) || !std::isfinite(gain)) fail("gain", "must be > 0");
  if (!(target_rate > 0.0 && target_rate < 1.0)) fail("target_rate", "must lie in (0, 1)");
  if (!(obs_noise >= 0.0) || !std::isfinite(obs_noise)) fail("obs_noise", "must be >= 0");
  if (kernel_radius() >= std::min(height, width)) {
    fail("length_scale", "truncated smoothing kernel (radius " + std::to_string(kernel_radius()) +
                             ") exceeds the " + std::to_string(height) + "x" +
                             std::to_string(width) + " field");
  }
}

std::size_t FieldConfig::kernel_radius() const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3.0 * length_scale)));
}

bool Dataset::has_true_p() const noexcept {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(), [](const Sample& s) { return s.true_p.has_value(); });
}

void Dataset::validate() const {
  if (samples.empty()) throw FormatError("dataset has no samples");
  const Shape input_shape = samples.front().inputs.shape();
  if (input_shape.size() != 3) throw FormatError("sample inputs must be C x H x W");
  const Shape plane{input_shape[1], input_shape[2]};
  const bool with_p = samples.front().true_p.has_value();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string where = "sample " + std::to_string(i);
    if (s.inputs.shape() != input_shape) throw FormatError(where + ": input shape differs");
    if (s.outcomes.shape() != plane) throw FormatError(where + ": outcome shape differs");
    for (double y : s.outcomes.data()) {
      if (y != 0.0 && y != 1.0) throw FormatError(where + ": outcomes must be binary");
    }
    if (s.true_p.has_value() != with_p) throw FormatError(where + ": true_p presence differs");
    if (s.true_p) {
      if (s.true_p->shape() != plane) throw FormatError(where + ": true_p shape differs");
      for (double p : s.true_p->data()) {
        if (!(p >= 0.0 && p <= 1.0)) throw FormatError(where + ": true_p outside [0, 1]");
      }
    }
    if (!s.inputs.all_finite()) throw FormatError(where + ": non-finite input");
  }
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor smooth_gaussian_field(const FieldConfig& config, Rng& rng) {
  const std::size_t h = config.height;
  const std::size_t w = config.width;
  const std::size_t r = config.kernel_radius();
  const std::size_t ph = h + 2 * r;
  const std::size_t pw = w + 2 * r;
  const auto kernel = gaussian_kernel(config.length_scale, r);

  std::vector<double> noise(ph * pw);
  for (auto& v : noise) v = rng.normal();

  // Horizontal pass: ph x w.
  std::vector<double> rows(ph * w, 0.0);
  for (std::size_t i = 0; i < ph; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * noise[i * pw + j + k];
      rows[i * w + j] = acc;
    }
  }
  // Vertical pass: h x w.
  Tensor g({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * rows[(i + k) * w + j];
      g.at(i, j) = acc;
    }
  }

  const double mu = mean(g.data());
  double var = 0.0;
  for (double v : g.data()) var += (v - mu) * (v - mu);
  var /= static_cast<double>(g.size());
  if (!(var > 0.0)) throw NumericError("smoothed field has zero variance");
  const double inv_sd = 1.0 / std::sqrt(var);
  for (auto& v : g.data()) v = (v - mu) * inv_sd;
  return g;
}

LatentField gen_latent_field(const FieldConfig& config, double offset, Rng& rng) {
  config.validate();
  LatentField field{smooth_gaussian_field(config, rng), Tensor({config.height, config.width})};
  for (std::size_t i = 0; i < field.g.size(); ++i) {
    field.p[i] = clamp_probability(sigmoid(config.gain * field.g[i] + offset));
  }
  return field;
}

double calibrate_offset(const FieldConfig& config, Rng& rng, std::size_t n_fields,
                        double tolerance) {
  config.validate();
  n_fields = std::max<std::size_t>(n_fields, 100);
  std::vector<Tensor> fields;
  fields.reserve(n_fields);
  for (std::size_t i = 0; i < n_fields; ++i) fields.push_back(smooth_gaussian_field(config, rng));

  double lo = -20.0;
  double hi = 20.0;
  const double rho = config.target_rate;
  if (!(mean_probability(fields, config.gain, lo) < rho &&
        mean_probability(fields, config.gain, hi) > rho)) {
    throw NumericError("calibrate_offset: cannot bracket target_rate " + std::to_string(rho) +
                       " within offsets [-20, 20]");
  }
  // Common random fields make the rate monotone in the offset, so plain
  // bisection converges; iterate to machine precision, not just tolerance.
  for (int iter = 0; iter < 64 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mean_probability(fields, config.gain, mid) < rho) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double offset = 0.5 * (lo + hi);
  const double achieved = mean_probability(fields, config.gain, offset);
  if (std::abs(achieved - rho) > tolerance) {
    throw NumericError("calibrate_offset: achieved rate " + std::to_string(achieved) +
                       " misses target " + std::to_string(rho));
  }
  return offset;
}

Sample make_sample(const FieldConfig& config, double offset, Rng& rng) {
  auto field = gen_latent_field(config, offset, rng);
  const std::size_t plane = config.height * config.width;
  Sample s{Tensor({config.channels, config.height, config.width}),
           Tensor({config.height, config.width}), std::nullopt};
  for (std::size_t i = 0; i < plane; ++i) s.outcomes[i] = rng.bernoulli(field.p[i]) ? 1.0 : 0.0;
  for (std::size_t c = 0; c < config.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      s.inputs[c * plane + i] = field.g[i] + config.obs_noise * rng.normal();
    }
  }
  s.true_p = std::move(field.p);
  return s;
}

Dataset generate_dataset(const FieldConfig& config, std::size_t n_samples) {
  config.validate();
  if (n_samples == 0) throw ConfigError("invalid field config 'n_samples': must be >= 1");
  Dataset ds;
  ds.config = config;
  Rng calib = Rng::derive(config.seed, kCalibrationStream);
  ds.offset = calibrate_offset(config, calib);
  ds.samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng = Rng::derive(config.seed, i);
    ds.samples.push_back(make_sample(config, ds.offset, rng));
  }
  return ds;
}

double event_rate(const Dataset& dataset) {
  double positives = 0.0;
  std::size_t count = 0;
  for (const auto& s : dataset.samples) {
    positives += sum(s.outcomes.data());
    count += s.outcomes.size();
  }
  return count == 0 ? 0.0 : positives / static_cast<double>(count);
}

}  // namespace cape
