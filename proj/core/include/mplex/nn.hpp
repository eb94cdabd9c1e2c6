#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mplex/volume.hpp"

namespace mplex::nn {

/// Real multi-channel 3D tensor, channel-major, x fastest within a channel.
struct Tensor {
    std::size_t channels = 0;
    Dims dims;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t c, Dims d) : channels(c), dims(d), data(c * d.voxels(), 0.0) {}

    [[nodiscard]] std::size_t spatial() const noexcept { return dims.voxels(); }
    [[nodiscard]] std::span<double> channel(std::size_t c) noexcept {
        return {data.data() + c * spatial(), spatial()};
    }
    [[nodiscard]] std::span<const double> channel(std::size_t c) const noexcept {
        return {data.data() + c * spatial(), spatial()};
    }
    [[nodiscard]] bool same_shape(const Tensor& o) const noexcept { return channels == o.channels && dims == o.dims; }
};

/// Real part -> channel 0, imaginary part -> channel 1.
[[nodiscard]] Tensor to_channels(std::span<const cplx> values, const Dims& dims);
[[nodiscard]] Tensor to_channels(const ComplexVolume& v);
[[nodiscard]] ComplexVolume from_channels(const Tensor& t, Domain domain = Domain::image);

/// 3D convolution layer (cross-correlation, zero "same" padding).
/// Weights are laid out out x in x kz x ky x kx with kx fastest.
struct Conv3d {
    std::string name;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::array<std::size_t, 3> kernel{3, 3, 3};  // (kx, ky, kz), each odd
    std::vector<double> weight;
    std::vector<double> bias;

    Conv3d() = default;
    Conv3d(std::string name, std::size_t in, std::size_t out, std::array<std::size_t, 3> kernel = {3, 3, 3});

    [[nodiscard]] std::size_t taps() const noexcept { return kernel[0] * kernel[1] * kernel[2]; }
    [[nodiscard]] std::size_t weight_index(std::size_t o, std::size_t i, std::size_t kx, std::size_t ky,
                                           std::size_t kz) const noexcept {
        return (((o * in_channels + i) * kernel[2] + kz) * kernel[1] + ky) * kernel[0] + kx;
    }
    [[nodiscard]] std::size_t fan_in() const noexcept { return in_channels * taps(); }

    /// He (fan-in) normal weights, zero biases.
    void init_he(std::mt19937_64& rng);

    friend bool operator==(const Conv3d&, const Conv3d&) = default;
};

struct ConvGrads {
    std::vector<double> weight;
    std::vector<double> bias;

    explicit ConvGrads(const Conv3d& layer) : weight(layer.weight.size(), 0.0), bias(layer.bias.size(), 0.0) {}
    void zero();
};

[[nodiscard]] Tensor conv3d_forward(const Conv3d& layer, const Tensor& input);

/// Accumulates kernel and bias gradients into `grads` and returns the input gradient.
[[nodiscard]] Tensor conv3d_backward(const Conv3d& layer, const Tensor& input, const Tensor& grad_out,
                                     ConvGrads& grads);

[[nodiscard]] Tensor relu_forward(const Tensor& x);

/// Gradient through max(0, x); the subgradient at 0 is 0. `output` is the forward result.
[[nodiscard]] Tensor relu_backward(const Tensor& output, const Tensor& grad_out);

/// Mean of squared differences over every entry.
[[nodiscard]] double mse_loss(const Tensor& pred, const Tensor& target);

/// d(mse)/d(pred) = 2 (pred - target) / N.
[[nodiscard]] Tensor mse_grad(const Tensor& pred, const Tensor& target);

}  // namespace mplex::nn
