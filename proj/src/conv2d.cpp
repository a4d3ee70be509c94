#include "cape/conv2d.hpp"

#include <algorithm>
#include <stdexcept>

namespace cape {
namespace {

struct ConvDims {
  std::size_t channels, height, width, filters, ksize, radius;
};

ConvDims check_shapes(const Tensor& input, const Tensor& kernels) {
  if (input.rank() != 3) {
    throw std::invalid_argument("conv2d: input must be C x H x W, got " +
                                shape_to_string(input.shape()));
  }
  if (kernels.rank() != 4 || kernels.extent(2) != kernels.extent(3) || kernels.extent(2) % 2 == 0) {
    throw std::invalid_argument("conv2d: kernels must be F x C x k x k with odd k, got " +
                                shape_to_string(kernels.shape()));
  }
  if (kernels.extent(1) != input.extent(0)) {
    throw std::invalid_argument("conv2d: kernel channels (" + std::to_string(kernels.extent(1)) +
                                ") do not match input channels (" +
                                std::to_string(input.extent(0)) + ")");
  }
  const std::size_t k = kernels.extent(2);
  return {input.extent(0), input.extent(1), input.extent(2), kernels.extent(0), k, (k - 1) / 2};
}

// Output rows/cols [lo, hi) for which input index (o + d - r) is in range.
struct Range {
  std::size_t lo, hi;
};

Range valid_range(std::size_t d, std::size_t r, std::size_t n) {
  if (d >= r) {
    const std::size_t shift = d - r;
    return {0, shift >= n ? 0 : n - shift};
  }
  return {std::min(r - d, n), n};
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  const auto d = check_shapes(input, kernels);
  if (bias.size() != d.filters) {
    throw std::invalid_argument("conv2d: bias length " + std::to_string(bias.size()) +
                                " does not match filter count " + std::to_string(d.filters));
  }
  Tensor out({d.filters, d.height, d.width});
  const std::size_t plane = d.height * d.width;
  auto o = out.data();
  auto x = input.data();
  for (std::size_t f = 0; f < d.filters; ++f) {
    std::fill_n(o.begin() + static_cast<std::ptrdiff_t>(f * plane), plane, bias[f]);
    for (std::size_t c = 0; c < d.channels; ++c) {
      for (std::size_t di = 0; di < d.ksize; ++di) {
        const auto rows = valid_range(di, d.radius, d.height);
        for (std::size_t dj = 0; dj < d.ksize; ++dj) {
          const auto cols = valid_range(dj, d.radius, d.width);
          const double w = kernels.at(f, c, di, dj);
          const std::size_t n = cols.hi - cols.lo;
          if (n == 0 || rows.lo == rows.hi) continue;
          const std::size_t src_col = cols.lo + dj - d.radius;
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            double* orow = &o[f * plane + i * d.width + cols.lo];
            const double* xrow = &x[c * plane + (i + di - d.radius) * d.width + src_col];
            for (std::size_t j = 0; j < n; ++j) orow[j] += w * xrow[j];
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      ConvCache& cache) {
  Tensor out = conv2d_forward(input, kernels, bias);
  cache.input = input;
  cache.kernels = kernels;
  return out;
}

ConvGrads conv2d_backward(const ConvCache& cache, const Tensor& upstream) {
  const auto d = check_shapes(cache.input, cache.kernels);
  if (upstream.shape() != Shape{d.filters, d.height, d.width}) {
    throw std::invalid_argument("conv2d_backward: upstream gradient shape " +
                                shape_to_string(upstream.shape()) + " does not match output");
  }
  ConvGrads g{Tensor::zeros_like(cache.input), Tensor::zeros_like(cache.kernels),
              Tensor({d.filters})};
  const std::size_t plane = d.height * d.width;
  auto up = upstream.data();
  auto x = cache.input.data();
  auto gx = g.input.data();

  for (std::size_t f = 0; f < d.filters; ++f) {
    g.bias[f] = sum(up.subspan(f * plane, plane));
    for (std::size_t c = 0; c < d.channels; ++c) {
      for (std::size_t di = 0; di < d.ksize; ++di) {
        const auto rows = valid_range(di, d.radius, d.height);
        for (std::size_t dj = 0; dj < d.ksize; ++dj) {
          const auto cols = valid_range(dj, d.radius, d.width);
          const double w = cache.kernels.at(f, c, di, dj);
          const std::size_t n = cols.hi - cols.lo;
          if (n == 0 || rows.lo == rows.hi) continue;
          const std::size_t src_col = cols.lo + dj - d.radius;
          double acc = 0.0;
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            const double* urow = &up[f * plane + i * d.width + cols.lo];
            const std::size_t offset = c * plane + (i + di - d.radius) * d.width + src_col;
            const double* xrow = &x[offset];
            double* gxrow = &gx[offset];
            for (std::size_t j = 0; j < n; ++j) {
              acc += urow[j] * xrow[j];
              gxrow[j] += w * urow[j];
            }
          }
          g.kernels.at(f, c, di, dj) = acc;
        }
      }
    }
  }
  return g;
}

}  // namespace cape
