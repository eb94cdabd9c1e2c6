#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "mplex/volume.hpp"

namespace mplex {

/// Unnormalized 1D DFT of arbitrary length.
///
/// Lengths whose prime factors are all small use a recursive mixed-radix
/// Cooley-Tukey decomposition; lengths with a large prime factor fall back to
/// Bluestein's chirp-z algorithm over a power-of-two transform.
class Fft1d {
public:
    explicit Fft1d(std::size_t n);
    ~Fft1d();
    Fft1d(Fft1d&&) noexcept;
    Fft1d& operator=(Fft1d&&) noexcept;

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] bool uses_bluestein() const noexcept { return bluestein_ != nullptr; }

    /// In-place transform. Forward uses exp(-2*pi*i*j*k/n); inverse is the
    /// conjugate kernel without the 1/n factor.
    void transform(std::span<cplx> data, bool inverse) const;

private:
    struct Bluestein;

    void mixed_radix(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t level,
                     bool inverse) const;

    std::size_t n_ = 0;
    std::vector<std::size_t> factors_;
    std::vector<cplx> twiddle_;
    std::unique_ptr<Bluestein> bluestein_;
};

/// Largest prime factor handled by direct mixed-radix butterflies.
inline constexpr std::size_t kMaxDirectRadix = 31;

/// Centered, orthonormal 3D transform over a raw buffer (x fastest).
/// The DC bin sits at index n/2 on each axis.
void fft3_centered_inplace(std::span<cplx> data, const Dims& dims, bool inverse);

/// Image -> k-space. Throws on zero dimensions.
[[nodiscard]] ComplexVolume fft3_centered(const ComplexVolume& image);

/// k-space -> image.
[[nodiscard]] ComplexVolume ifft3_centered(const ComplexVolume& kspace);

}  // namespace mplex
