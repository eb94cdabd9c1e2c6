#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mplex/sampling.hpp"
#include "mplex/volume.hpp"

namespace mplex {

/// Reduced gyromagnetic ratio of 1H, Hz/T.
inline constexpr double kGammaBarHzPerT = 42.576e6;

struct TissueParams {
    double m0 = 0.0;
    double t1_ms = 0.0;
    double t2star_ms = 0.0;
    double chi_ppm = 0.0;
    double phi0_rad = 0.0;
};

enum class PhantomKind { ellipsoids, blocks };

[[nodiscard]] std::string to_string(PhantomKind kind);
[[nodiscard]] PhantomKind phantom_kind_from_string(const std::string& s);

/// Piecewise-constant region in voxel coordinates (voxel centers at integer positions).
struct TissueRegion {
    enum class Shape { ellipsoid, box };
    Shape shape = Shape::ellipsoid;
    std::array<double, 3> center{};
    std::array<double, 3> half_extent{};  // semi-axes or box half-widths, voxels
    TissueParams params;

    [[nodiscard]] bool contains(double x, double y, double z) const noexcept;
};

struct TissueMaps {
    Dims dims;
    VoxelGeometry geometry;
    RealVolume m0;
    RealVolume t1_ms;
    RealVolume t2star_ms;
    RealVolume chi_ppm;
    RealVolume phi0_rad;
    /// Regions in paint order; later regions overwrite earlier ones. Empty when loaded from disk.
    std::vector<TissueRegion> regions;
};

/// Synthetic head: an outer region plus seeded inner regions. Background has M0 = 0, chi = 0.
/// Requires every dim >= 8.
[[nodiscard]] TissueMaps make_phantom(PhantomKind kind, const Dims& dims, const VoxelGeometry& geometry,
                                      std::uint64_t seed);

/// Multi-flip-angle multi-echo spoiled-GRE protocol.
struct Protocol {
    std::vector<double> fas_deg;
    std::vector<double> tes_ms;
    double tr_ms = 0.0;
    double b0_t = 0.0;
    std::size_t n_coils = 1;

    /// FA 4/16 deg, 7 echoes linearly spaced over 2.1-20.8 ms, TR 34.9 ms, 3 T, 4 coils.
    [[nodiscard]] static Protocol desk_default();
    void validate() const;
    friend bool operator==(const Protocol&, const Protocol&) = default;
};

/// Steady-state spoiled-GRE signal with T2* decay and off-resonance phase.
/// delta_f in Hz; TE enters the phase term in seconds.
[[nodiscard]] cplx spgr_signal(double m0, double t1_ms, double t2star_ms, double phi0_rad, double delta_f_hz,
                               double fa_deg, double tr_ms, double te_ms);

/// Smooth complex receive maps, constant along z: Gaussian magnitude lobes at equispaced
/// in-plane angles with linear phase ramps. A single coil is identically 1.
[[nodiscard]] std::vector<ComplexVolume> coil_sensitivities(std::size_t n_coils, const Dims& dims);

/// Unit dipole kernel D(k) = 1/3 - kz^2/|k|^2 on the centered grid, physical k from voxel size; D(0) = 0.
[[nodiscard]] RealVolume dipole_kernel(const Dims& dims, const VoxelGeometry& geometry);

/// Off-resonance (Hz) induced by a susceptibility distribution (ppm).
[[nodiscard]] RealVolume field_from_susceptibility(const RealVolume& chi_ppm, const VoxelGeometry& geometry,
                                                   double b0_t);

/// Identifies one (flip angle, echo, coil) volume.
struct EchoKey {
    std::size_t fa = 0;
    std::size_t echo = 0;
    std::size_t coil = 0;
    friend bool operator==(const EchoKey&, const EchoKey&) = default;
};

[[nodiscard]] std::string echo_key_name(const EchoKey& key);

/// One simulated scan. Volumes are stored in fa-major, then echo, then coil order.
struct ScanDataset {
    Protocol protocol;
    TissueMaps tissue;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    PhantomKind phantom_kind = PhantomKind::ellipsoids;
    std::uint64_t phantom_seed = 0;
    std::vector<ComplexVolume> kspace;         // fully sampled, noisy
    std::vector<ComplexVolume> images;         // ground truth: inverse transform of `kspace`
    std::optional<SamplingMask> mask;
    std::vector<ComplexVolume> masked_kspace;  // present when `mask` is set

    [[nodiscard]] std::size_t volume_count() const noexcept {
        return protocol.fas_deg.size() * protocol.tes_ms.size() * protocol.n_coils;
    }
    [[nodiscard]] std::size_t index(const EchoKey& k) const noexcept {
        return (k.fa * protocol.tes_ms.size() + k.echo) * protocol.n_coils + k.coil;
    }
    [[nodiscard]] EchoKey key(std::size_t index) const noexcept;
};

/// Forward-simulates every (fa, echo, coil) volume: coil map times the spoiled-GRE signal
/// (with the dipole field), transformed to k-space, plus complex white Gaussian noise of
/// std `noise_sigma` per component. Each key draws noise from its own stream derived from
/// `seed`, so results do not depend on `workers`.
[[nodiscard]] ScanDataset simulate_scan(const TissueMaps& tissue, const Protocol& protocol, double noise_sigma,
                                        std::uint64_t seed, const std::optional<SamplingMask>& mask = std::nullopt,
                                        std::size_t workers = 1);

/// Seed for the per-key noise stream.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                                        std::uint64_t c = 0) noexcept;

}  // namespace mplex
