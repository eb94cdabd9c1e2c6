#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mplex/nn.hpp"
#include "mplex/sampling.hpp"
#include "mplex/volume.hpp"

namespace mplex {

/// Shape of the cascaded network. Each block holds `convs_per_block` 3D convolutions
/// (2 -> features -> ... -> features -> 2, ReLU between them) followed by a residual add and a
/// data-consistency layer.
struct CascadeConfig {
    std::size_t n_blocks = 2;
    std::size_t convs_per_block = 3;
    std::size_t features = 8;
    std::array<std::size_t, 3> kernel{3, 3, 3};

    /// 2 blocks x 3 convs x 8 features.
    [[nodiscard]] static CascadeConfig desk() { return {}; }
    /// 5 blocks x 5 convs x 48 features.
    [[nodiscard]] static CascadeConfig large() { return {5, 5, 48, {3, 3, 3}}; }

    void validate() const;
    friend bool operator==(const CascadeConfig&, const CascadeConfig&) = default;
};

inline constexpr std::uint32_t kCascadeFormatVersion = 1;

class CascadeModel {
public:
    CascadeModel() = default;
    /// All weights and biases zero.
    explicit CascadeModel(const CascadeConfig& config);

    /// He-initialized weights, zero biases; deterministic per seed.
    [[nodiscard]] static CascadeModel initialize(const CascadeConfig& config, std::uint64_t seed);

    [[nodiscard]] const CascadeConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::vector<nn::Conv3d>& layers() noexcept { return layers_; }
    [[nodiscard]] const std::vector<nn::Conv3d>& layers() const noexcept { return layers_; }
    [[nodiscard]] const nn::Conv3d& layer(std::size_t block, std::size_t conv) const {
        return layers_.at(block * config_.convs_per_block + conv);
    }
    [[nodiscard]] std::size_t parameter_count() const noexcept;
    [[nodiscard]] bool all_finite() const noexcept;

    friend bool operator==(const CascadeModel&, const CascadeModel&) = default;

private:
    CascadeConfig config_;
    std::vector<nn::Conv3d> layers_;
};

/// Per-layer gradient buffers matching a model.
struct ModelGrads {
    std::vector<nn::ConvGrads> layers;

    explicit ModelGrads(const CascadeModel& model);
    void zero();
    void scale(double s);
};

/// Hard data consistency: ifft((1 - m) fft(x) + m k_meas), mask broadcast along x.
[[nodiscard]] ComplexVolume dc_layer(const ComplexVolume& x_cnn, const ComplexVolume& k_meas, const SamplingMask& mask);

/// Adjoint of dc_layer with respect to x_cnn: ifft((1 - m) fft(g)). The operator is
/// self-adjoint, so this maps the upstream image gradient to the input gradient.
[[nodiscard]] ComplexVolume dc_backward(const ComplexVolume& grad_out, const SamplingMask& mask);

/// Activations saved by the forward pass for reverse-mode differentiation.
struct CascadeTape {
    struct Block {
        std::vector<nn::Tensor> inputs;  // input of every conv (post-ReLU for hidden layers)
    };
    std::vector<Block> blocks;
};

/// x0 = ifft(k_meas); per block x <- dc(x + cnn(x)). `k_meas` must already be masked.
[[nodiscard]] ComplexVolume cascade_forward(const CascadeModel& model, const ComplexVolume& k_meas,
                                            const SamplingMask& mask, CascadeTape* tape = nullptr);

/// Backpropagates d(loss)/d(output) through a taped forward pass, accumulating parameter
/// gradients into `grads`.
void cascade_backward(const CascadeModel& model, const CascadeTape& tape, const ComplexVolume& grad_output,
                      const SamplingMask& mask, ModelGrads& grads);

/// Intensity-normalized inference: the measured k-space is scaled so that the zero-filled
/// image has unit peak magnitude, the cascade runs, and the scale is undone.
[[nodiscard]] ComplexVolume cascade_reconstruct(const CascadeModel& model, const ComplexVolume& k_meas,
                                                const SamplingMask& mask);

/// 1 / max |ifft(k_meas)|, or 1 when the zero-filled image is identically zero.
[[nodiscard]] double normalization_scale(const ComplexVolume& k_meas);

// .cnet: "CNET1\0", u32 version, u64 n_blocks, convs_per_block, features, kx, ky, kz, then per
// layer in order the float64 weights followed by the float64 biases.
void write_cascade(const std::filesystem::path& path, const CascadeModel& model);
[[nodiscard]] CascadeModel read_cascade(const std::filesystem::path& path);

}  // namespace mplex
