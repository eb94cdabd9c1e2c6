#include "mplex/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mplex {

void VoxelGeometry::validate() const {
    if (!(dx > 0.0 && dy > 0.0 && dz > 0.0)) throw std::invalid_argument("voxel size must be strictly positive");
}

void validate_dims(const Dims& dims) {
    if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0)
        throw std::invalid_argument("volume dims must be positive, got " + std::to_string(dims.nx) + "x" +
                                    std::to_string(dims.ny) + "x" + std::to_string(dims.nz));
}

bool all_finite(const ComplexVolume& v) noexcept {
    return std::ranges::all_of(v.data(), [](const cplx& c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); });
}

bool all_finite(const RealVolume& v) noexcept {
    return std::ranges::all_of(v.data(), [](double d) { return std::isfinite(d); });
}

namespace {

template <typename T>
std::vector<T> crop_x(std::span<const T> src, const Dims& dims, std::size_t start, std::size_t length) {
    if (length == 0 || start > dims.nx || length > dims.nx - start)
        throw std::out_of_range("crop_readout: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                ") outside readout extent " + std::to_string(dims.nx));
    std::vector<T> out;
    out.reserve(length * dims.ny * dims.nz);
    for (std::size_t z = 0; z < dims.nz; ++z)
        for (std::size_t y = 0; y < dims.ny; ++y) {
            const auto first = src.begin() + static_cast<std::ptrdiff_t>(dims.index(start, y, z));
            out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(length));
        }
    return out;
}

}  // namespace

ComplexVolume crop_readout(const ComplexVolume& vol, std::size_t start, std::size_t length) {
    const Dims& d = vol.dims();
    return {{length, d.ny, d.nz}, vol.domain(), crop_x(vol.data(), d, start, length)};
}

RealVolume crop_readout(const RealVolume& vol, std::size_t start, std::size_t length) {
    const Dims& d = vol.dims();
    return {{length, d.ny, d.nz}, crop_x(vol.data(), d, start, length)};
}

RealVolume rss_combine(std::span<const ComplexVolume> coils) {
    if (coils.empty()) throw std::invalid_argument("rss_combine: no coil images");
    const Dims dims = coils.front().dims();
    RealVolume out(dims);
    for (const auto& c : coils) {
        if (c.dims() != dims) throw std::invalid_argument("rss_combine: coil dims mismatch");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::norm(c[i]);
    }
    for (auto& v : out.data()) v = std::sqrt(v);
    return out;
}

RealVolume magnitude(const ComplexVolume& v) {
    RealVolume out(v.dims());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::abs(v[i]);
    return out;
}

RealVolume phase(const ComplexVolume& v) {
    RealVolume out(v.dims());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::arg(v[i]);
    return out;
}

double energy(const ComplexVolume& v) noexcept {
    double e = 0.0;
    for (const auto& c : v.data()) e += std::norm(c);
    return e;
}

}  // namespace mplex
