#include "mplex/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mplex::nn {

Tensor to_channels(std::span<const cplx> values, const Dims& dims) {
    if (values.size() != dims.voxels()) throw std::invalid_argument("to_channels: length mismatch");
    Tensor t(2, dims);
    auto re = t.channel(0);
    auto im = t.channel(1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        re[i] = values[i].real();
        im[i] = values[i].imag();
    }
    return t;
}

Tensor to_channels(const ComplexVolume& v) { return to_channels(v.data(), v.dims()); }

ComplexVolume from_channels(const Tensor& t, Domain domain) {
    if (t.channels != 2) throw std::invalid_argument("from_channels: expected 2 channels");
    ComplexVolume v(t.dims, domain);
    auto re = t.channel(0);
    auto im = t.channel(1);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = {re[i], im[i]};
    return v;
}

Conv3d::Conv3d(std::string n, std::size_t in, std::size_t out, std::array<std::size_t, 3> k)
    : name(std::move(n)), in_channels(in), out_channels(out), kernel(k) {
    if (in == 0 || out == 0) throw std::invalid_argument("Conv3d: channel counts must be positive");
    for (auto e : k)
        if (e % 2 == 0) throw std::invalid_argument("Conv3d: kernel extents must be odd");
    weight.assign(out * in * taps(), 0.0);
    bias.assign(out, 0.0);
}

void Conv3d::init_he(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in())));
    for (auto& w : weight) w = dist(rng);
    std::fill(bias.begin(), bias.end(), 0.0);
}

void ConvGrads::zero() {
    std::fill(weight.begin(), weight.end(), 0.0);
    std::fill(bias.begin(), bias.end(), 0.0);
}

namespace {

/// Valid output range [lo, hi) along one axis for a tap offset `off`.
struct Span {
    std::size_t lo, hi;
};
Span valid_range(std::size_t n, long off) {
    const long lo = std::max(0L, -off);
    const long hi = std::min(static_cast<long>(n), static_cast<long>(n) - off);
    if (hi <= lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void check_input(const Conv3d& layer, const Tensor& input) {
    if (input.channels != layer.in_channels)
        throw std::invalid_argument("conv3d '" + layer.name + "': expected " + std::to_string(layer.in_channels) +
                                    " input channels, got " + std::to_string(input.channels));
}

/// Calls fn(o, i, widx, out_offset, in_offset, len) for every contiguous x-run of every tap.
/// Runs pair output position p with input position p + tap offset.
template <typename Fn>
void for_each_run(const Conv3d& layer, const Dims& d, Fn&& fn) {
    const long hx = static_cast<long>(layer.kernel[0] / 2);
    const long hy = static_cast<long>(layer.kernel[1] / 2);
    const long hz = static_cast<long>(layer.kernel[2] / 2);
    for (std::size_t o = 0; o < layer.out_channels; ++o)
        for (std::size_t i = 0; i < layer.in_channels; ++i)
            for (std::size_t kz = 0; kz < layer.kernel[2]; ++kz) {
                const long oz = static_cast<long>(kz) - hz;
                const Span rz = valid_range(d.nz, oz);
                for (std::size_t ky = 0; ky < layer.kernel[1]; ++ky) {
                    const long oy = static_cast<long>(ky) - hy;
                    const Span ry = valid_range(d.ny, oy);
                    for (std::size_t kx = 0; kx < layer.kernel[0]; ++kx) {
                        const long ox = static_cast<long>(kx) - hx;
                        const Span rx = valid_range(d.nx, ox);
                        if (rx.hi == rx.lo) continue;
                        const std::size_t widx = layer.weight_index(o, i, kx, ky, kz);
                        for (std::size_t z = rz.lo; z < rz.hi; ++z)
                            for (std::size_t y = ry.lo; y < ry.hi; ++y) {
                                const std::size_t out_off = d.index(rx.lo, y, z);
                                const std::size_t in_off = d.index(static_cast<std::size_t>(static_cast<long>(rx.lo) + ox),
                                                                   static_cast<std::size_t>(static_cast<long>(y) + oy),
                                                                   static_cast<std::size_t>(static_cast<long>(z) + oz));
                                fn(o, i, widx, out_off, in_off, rx.hi - rx.lo);
                            }
                    }
                }
            }
}

}  // namespace

Tensor conv3d_forward(const Conv3d& layer, const Tensor& input) {
    check_input(layer, input);
    Tensor out(layer.out_channels, input.dims);
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        auto ch = out.channel(o);
        std::fill(ch.begin(), ch.end(), layer.bias[o]);
    }
    const std::size_t n = input.spatial();
    for_each_run(layer, input.dims, [&](std::size_t o, std::size_t i, std::size_t widx, std::size_t out_off,
                                        std::size_t in_off, std::size_t len) {
        const double w = layer.weight[widx];
        double* __restrict dst = out.data.data() + o * n + out_off;
        const double* __restrict src = input.data.data() + i * n + in_off;
        for (std::size_t x = 0; x < len; ++x) dst[x] += w * src[x];
    });
    return out;
}

Tensor conv3d_backward(const Conv3d& layer, const Tensor& input, const Tensor& grad_out, ConvGrads& grads) {
    check_input(layer, input);
    if (grad_out.channels != layer.out_channels || grad_out.dims != input.dims)
        throw std::invalid_argument("conv3d '" + layer.name + "': gradient shape mismatch");
    if (grads.weight.size() != layer.weight.size() || grads.bias.size() != layer.bias.size())
        throw std::invalid_argument("conv3d '" + layer.name + "': gradient buffers do not match layer");

    Tensor grad_in(layer.in_channels, input.dims);
    const std::size_t n = input.spatial();
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        double s = 0.0;
        for (double g : grad_out.channel(o)) s += g;
        grads.bias[o] += s;
    }
    for_each_run(layer, input.dims, [&](std::size_t o, std::size_t i, std::size_t widx, std::size_t out_off,
                                        std::size_t in_off, std::size_t len) {
        const double w = layer.weight[widx];
        const double* __restrict g = grad_out.data.data() + o * n + out_off;
        const double* __restrict src = input.data.data() + i * n + in_off;
        double* __restrict gin = grad_in.data.data() + i * n + in_off;
        double acc = 0.0;
        for (std::size_t x = 0; x < len; ++x) {
            acc += g[x] * src[x];
            gin[x] += w * g[x];
        }
        grads.weight[widx] += acc;
    });
    return grad_in;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& output, const Tensor& grad_out) {
    if (!output.same_shape(grad_out)) throw std::invalid_argument("relu_backward: shape mismatch");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.data.size(); ++i)
        if (!(output.data[i] > 0.0)) g.data[i] = 0.0;
    return g;
}

double mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.data.size());
}

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse_grad: shape mismatch");
    Tensor g(pred.channels, pred.dims);
    const double scale = 2.0 / static_cast<double>(pred.data.size());
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = scale * (pred.data[i] - target.data[i]);
    return g;
}

}  // namespace mplex::nn
