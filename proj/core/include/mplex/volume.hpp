#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <span>
#include <vector>

namespace mplex {

using cplx = std::complex<double>;

/// Grid extents: readout (x), phase-encode (y), slice (z). x is the fastest index.
struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    [[nodiscard]] constexpr std::size_t voxels() const noexcept { return nx * ny * nz; }
    [[nodiscard]] constexpr std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return x + nx * (y + ny * z);
    }
    friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

enum class Domain { image, kspace };

/// Physical voxel size in millimetres.
struct VoxelGeometry {
    double dx = 1.0;
    double dy = 1.0;
    double dz = 1.0;

    /// Throws std::invalid_argument unless every extent is strictly positive.
    void validate() const;
    friend constexpr bool operator==(const VoxelGeometry&, const VoxelGeometry&) = default;
};

void validate_dims(const Dims& dims);

template <typename T>
class Volume {
public:
    Volume() = default;
    explicit Volume(Dims dims) : dims_(dims), data_(dims.voxels()) { validate_dims(dims); }
    Volume(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
        validate_dims(dims);
        check_size();
    }

    [[nodiscard]] const Dims& dims() const noexcept { return dims_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::span<const T> data() const& noexcept { return data_; }
    [[nodiscard]] std::span<T> data() & noexcept { return data_; }
    /// Owning copy for temporaries, so `for (auto v : f().data())` does not dangle.
    [[nodiscard]] std::vector<T> data() && noexcept { return std::move(data_); }
    [[nodiscard]] const std::vector<T>& values() const noexcept { return data_; }

    [[nodiscard]] T& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept {
        return data_[dims_.index(x, y, z)];
    }
    [[nodiscard]] const T& operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return data_[dims_.index(x, y, z)];
    }
    [[nodiscard]] T& operator[](std::size_t i) noexcept { return data_[i]; }
    [[nodiscard]] const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    void check_size() const {
        if (data_.size() != dims_.voxels()) throw std::invalid_argument("volume data length does not match dims");
    }

    Dims dims_{};
    std::vector<T> data_;
};

using RealVolume = Volume<double>;
using MaskVolume = Volume<std::uint8_t>;

/// Complex volume tagged with the domain it lives in.
class ComplexVolume {
public:
    ComplexVolume() = default;
    ComplexVolume(Dims dims, Domain domain) : vol_(dims), domain_(domain) {}
    ComplexVolume(Dims dims, Domain domain, std::vector<cplx> data)
        : vol_(dims, std::move(data)), domain_(domain) {}

    [[nodiscard]] const Dims& dims() const noexcept { return vol_.dims(); }
    [[nodiscard]] Domain domain() const noexcept { return domain_; }
    [[nodiscard]] std::size_t size() const noexcept { return vol_.size(); }

    [[nodiscard]] std::span<const cplx> data() const& noexcept { return vol_.data(); }
    [[nodiscard]] std::span<cplx> data() & noexcept { return vol_.data(); }
    [[nodiscard]] std::vector<cplx> data() && noexcept { return std::move(vol_).data(); }

    [[nodiscard]] cplx& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept { return vol_(x, y, z); }
    [[nodiscard]] const cplx& operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return vol_(x, y, z);
    }
    [[nodiscard]] cplx& operator[](std::size_t i) noexcept { return vol_[i]; }
    [[nodiscard]] const cplx& operator[](std::size_t i) const noexcept { return vol_[i]; }

    [[nodiscard]] ComplexVolume with_domain(Domain d) const {
        ComplexVolume out = *this;
        out.domain_ = d;
        return out;
    }

    friend bool operator==(const ComplexVolume&, const ComplexVolume&) = default;

private:
    Volume<cplx> vol_;
    Domain domain_ = Domain::image;
};

/// Every sample finite (no NaN / Inf).
[[nodiscard]] bool all_finite(const ComplexVolume& v) noexcept;
[[nodiscard]] bool all_finite(const RealVolume& v) noexcept;

/// Contiguous readout slab [start, start + length).
[[nodiscard]] ComplexVolume crop_readout(const ComplexVolume& vol, std::size_t start, std::size_t length);
[[nodiscard]] RealVolume crop_readout(const RealVolume& vol, std::size_t start, std::size_t length);

/// Root-sum-of-squares combination of coil images.
[[nodiscard]] RealVolume rss_combine(std::span<const ComplexVolume> coils);

[[nodiscard]] RealVolume magnitude(const ComplexVolume& v);
[[nodiscard]] RealVolume phase(const ComplexVolume& v);

/// Sum of |v|^2.
[[nodiscard]] double energy(const ComplexVolume& v) noexcept;

}  // namespace mplex
