#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "mplex/volume.hpp"

namespace mplex {

/// Fully sampled centered rectangle extents (phase-encode, slice).
struct CalibRegion {
    std::size_t cy = 0;
    std::size_t cz = 0;
};

inline constexpr CalibRegion kDefaultCalib{24, 16};
inline constexpr double kAccelTolerance = 0.05;
inline constexpr int kMaxRadiusBisections = 40;

/// Binary (phase-encode, slice) pattern, broadcast along readout.
struct SamplingMask {
    std::size_t ny = 0;
    std::size_t nz = 0;
    double target_accel = 1.0;
    CalibRegion calib{};
    std::uint64_t seed = 0;
    /// Minimum distance enforced between non-calibration samples; 0 when not applicable.
    double min_distance = 0.0;
    std::vector<std::uint8_t> bits;  // y fastest

    [[nodiscard]] bool at(std::size_t y, std::size_t z) const noexcept { return bits[y + ny * z] != 0; }
    [[nodiscard]] std::size_t popcount() const noexcept;
    /// True when (y, z) lies inside the centered calibration rectangle.
    [[nodiscard]] bool in_calibration(std::size_t y, std::size_t z) const noexcept;

    friend bool operator==(const SamplingMask&, const SamplingMask&) = default;
};

[[nodiscard]] SamplingMask full_mask(std::size_t ny, std::size_t nz);

/// Uniform-density Poisson-disk mask with a fully sampled calibration block.
///
/// A continuous Bridson point set of radius r (candidates in the annulus [r, 2r]) is snapped
/// to lattice cells in generation order; a cell is kept only if it lies outside the
/// calibration block and no kept cell is closer than r. The radius is bisected (RNG reseeded
/// each trial) until the achieved acceleration is within 5% of the target. Where the
/// acceleration jumps over the tolerance band (r crossing a lattice distance), the closest
/// over-dense trial is thinned at random to the sample budget, which keeps the radius.
///
/// Throws std::invalid_argument on bad arguments and std::runtime_error if the target
/// cannot be reached, e.g. when the calibration block alone exceeds the sample budget.
[[nodiscard]] SamplingMask poisson_disk_mask(std::size_t ny, std::size_t nz, double target_accel,
                                             CalibRegion calib, std::uint64_t seed);

/// Element-wise product with the mask broadcast along x.
[[nodiscard]] ComplexVolume apply_mask(const ComplexVolume& kspace, const SamplingMask& mask);

/// ny*nz / popcount. Throws on an all-zero mask.
[[nodiscard]] double mask_acceleration(const SamplingMask& mask);

// .mask: "MASK1\0", u64 ny, u64 nz, f64 target_accel, u64 seed, ny*nz bytes (0/1), y fastest.
void write_mask(const std::filesystem::path& path, const SamplingMask& mask);
[[nodiscard]] SamplingMask read_mask(const std::filesystem::path& path);

}  // namespace mplex
