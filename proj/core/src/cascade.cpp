#include "mplex/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "binary_io.hpp"
#include "mplex/fft.hpp"

namespace mplex {

void CascadeConfig::validate() const {
    if (n_blocks == 0) throw std::invalid_argument("cascade: need at least one block");
    if (convs_per_block == 0) throw std::invalid_argument("cascade: need at least one conv per block");
    if (features == 0) throw std::invalid_argument("cascade: features must be positive");
    for (auto k : kernel)
        if (k % 2 == 0) throw std::invalid_argument("cascade: kernel extents must be odd");
}

CascadeModel::CascadeModel(const CascadeConfig& config) : config_(config) {
    config.validate();
    for (std::size_t b = 0; b < config.n_blocks; ++b)
        for (std::size_t c = 0; c < config.convs_per_block; ++c) {
            const std::size_t in = c == 0 ? 2 : config.features;
            const std::size_t out = c + 1 == config.convs_per_block ? 2 : config.features;
            layers_.emplace_back("block" + std::to_string(b) + ".conv" + std::to_string(c), in, out, config.kernel);
        }
}

CascadeModel CascadeModel::initialize(const CascadeConfig& config, std::uint64_t seed) {
    CascadeModel m(config);
    std::mt19937_64 rng(seed);
    for (auto& l : m.layers_) l.init_he(rng);
    return m;
}

std::size_t CascadeModel::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

bool CascadeModel::all_finite() const noexcept {
    for (const auto& l : layers_) {
        for (double w : l.weight)
            if (!std::isfinite(w)) return false;
        for (double b : l.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

ModelGrads::ModelGrads(const CascadeModel& model) {
    for (const auto& l : model.layers()) layers.emplace_back(l);
}

void ModelGrads::zero() {
    for (auto& g : layers) g.zero();
}

void ModelGrads::scale(double s) {
    for (auto& g : layers) {
        for (auto& w : g.weight) w *= s;
        for (auto& b : g.bias) b *= s;
    }
}

namespace {

void check_mask(const Dims& d, const SamplingMask& mask) {
    if (d.ny != mask.ny || d.nz != mask.nz || mask.bits.size() != mask.ny * mask.nz)
        throw std::invalid_argument("data consistency: mask dims do not match volume (ny, nz)");
}

/// Zeroes the sampled (y, z) lines of a centered k-space buffer.
void zero_sampled(std::span<cplx> k, const Dims& d, const SamplingMask& mask) {
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y) {
            if (!mask.at(y, z)) continue;
            cplx* row = k.data() + d.index(0, y, z);
            std::fill(row, row + d.nx, cplx{});
        }
}

}  // namespace

ComplexVolume dc_layer(const ComplexVolume& x_cnn, const ComplexVolume& k_meas, const SamplingMask& mask) {
    const Dims& d = x_cnn.dims();
    if (k_meas.dims() != d) throw std::invalid_argument("dc_layer: image and k-space dims differ");
    check_mask(d, mask);
    ComplexVolume k = fft3_centered(x_cnn);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y) {
            if (!mask.at(y, z)) continue;
            for (std::size_t x = 0; x < d.nx; ++x) k(x, y, z) = k_meas(x, y, z);
        }
    return ifft3_centered(k);
}

ComplexVolume dc_backward(const ComplexVolume& grad_out, const SamplingMask& mask) {
    check_mask(grad_out.dims(), mask);
    ComplexVolume g = grad_out.with_domain(Domain::kspace);
    fft3_centered_inplace(g.data(), g.dims(), false);
    zero_sampled(g.data(), g.dims(), mask);
    fft3_centered_inplace(g.data(), g.dims(), true);
    return g.with_domain(Domain::image);
}

ComplexVolume cascade_forward(const CascadeModel& model, const ComplexVolume& k_meas, const SamplingMask& mask,
                              CascadeTape* tape) {
    check_mask(k_meas.dims(), mask);
    const CascadeConfig& cfg = model.config();
    if (tape) tape->blocks.assign(cfg.n_blocks, {});

    ComplexVolume x = ifft3_centered(k_meas);
    for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
        nn::Tensor act = nn::to_channels(x);
        for (std::size_t c = 0; c < cfg.convs_per_block; ++c) {
            if (tape) tape->blocks[b].inputs.push_back(act);
            act = nn::conv3d_forward(model.layer(b, c), act);
            if (c + 1 < cfg.convs_per_block) act = nn::relu_forward(act);
        }
        const ComplexVolume residual = nn::from_channels(act);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += residual[i];
        x = dc_layer(x, k_meas, mask);
    }
    return x;
}

void cascade_backward(const CascadeModel& model, const CascadeTape& tape, const ComplexVolume& grad_output,
                      const SamplingMask& mask, ModelGrads& grads) {
    const CascadeConfig& cfg = model.config();
    if (tape.blocks.size() != cfg.n_blocks) throw std::invalid_argument("cascade_backward: tape does not match model");
    if (grads.layers.size() != model.layers().size())
        throw std::invalid_argument("cascade_backward: gradient buffers do not match model");

    ComplexVolume g = grad_output;
    for (std::size_t b = cfg.n_blocks; b-- > 0;) {
        const ComplexVolume g_sum = dc_backward(g, mask);
        nn::Tensor gt = nn::to_channels(g_sum);
        for (std::size_t c = cfg.convs_per_block; c-- > 0;) {
            const std::size_t li = b * cfg.convs_per_block + c;
            const nn::Tensor& input = tape.blocks[b].inputs[c];
            nn::Tensor g_in = nn::conv3d_backward(model.layers()[li], input, gt, grads.layers[li]);
            // Hidden-layer inputs are ReLU outputs of the previous conv.
            gt = c > 0 ? nn::relu_backward(input, g_in) : std::move(g_in);
        }
        const ComplexVolume g_cnn = nn::from_channels(gt);
        g = g_sum;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += g_cnn[i];
    }
}

double normalization_scale(const ComplexVolume& k_meas) {
    const ComplexVolume zf = ifft3_centered(k_meas);
    double peak = 0.0;
    for (const auto& v : zf.data()) peak = std::max(peak, std::abs(v));
    return peak > 0.0 ? 1.0 / peak : 1.0;
}

ComplexVolume cascade_reconstruct(const CascadeModel& model, const ComplexVolume& k_meas, const SamplingMask& mask) {
    const double s = normalization_scale(k_meas);
    ComplexVolume scaled = k_meas;
    for (auto& v : scaled.data()) v *= s;
    ComplexVolume out = cascade_forward(model, scaled, mask);
    for (auto& v : out.data()) v /= s;
    return out;
}

namespace {
constexpr char kCnetMagic[] = "CNET1";
}

void write_cascade(const std::filesystem::path& path, const CascadeModel& model) {
    detail::BinaryWriter w(path);
    w.magic({kCnetMagic, sizeof kCnetMagic});
    const auto& c = model.config();
    w.put<std::uint32_t>(kCascadeFormatVersion);
    w.put<std::uint64_t>(c.n_blocks);
    w.put<std::uint64_t>(c.convs_per_block);
    w.put<std::uint64_t>(c.features);
    for (auto k : c.kernel) w.put<std::uint64_t>(k);
    for (const auto& l : model.layers()) {
        w.bytes(l.weight.data(), l.weight.size() * sizeof(double));
        w.bytes(l.bias.data(), l.bias.size() * sizeof(double));
    }
}

CascadeModel read_cascade(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    r.expect_magic({kCnetMagic, sizeof kCnetMagic});
    const auto version = r.get<std::uint32_t>();
    if (version != kCascadeFormatVersion)
        throw std::runtime_error(path.string() + ": unsupported .cnet version " + std::to_string(version));
    CascadeConfig c;
    c.n_blocks = r.get<std::uint64_t>();
    c.convs_per_block = r.get<std::uint64_t>();
    c.features = r.get<std::uint64_t>();
    for (auto& k : c.kernel) k = r.get<std::uint64_t>();
    if (c.n_blocks > 1024 || c.convs_per_block > 1024 || c.features > 4096 || c.kernel[0] > 63 || c.kernel[1] > 63 ||
        c.kernel[2] > 63)
        throw std::runtime_error(path.string() + ": implausible cascade header");
    CascadeModel m(c);
    for (auto& l : m.layers()) {
        r.bytes(l.weight.data(), l.weight.size() * sizeof(double));
        r.bytes(l.bias.data(), l.bias.size() * sizeof(double));
    }
    r.expect_eof();
    if (!m.all_finite()) throw std::runtime_error(path.string() + ": non-finite weights");
    return m;
}

}  // namespace mplex
