#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mplex/volume.hpp"

namespace mplex {

// ---------------------------------------------------------------------------
// Composite PDW / T1W

enum class FaGroup { fa1, fa2 };

/// Voxel-wise mean of echo magnitudes. Throws on an empty list or mismatched dims.
[[nodiscard]] RealVolume composite_average(std::span<const RealVolume> echoes);

/// Mean over the echoes of one flip-angle group: FA1 gives PDW, FA2 gives T1W.
/// `echoes_by_fa[f][e]` is the magnitude of echo e at flip angle f.
[[nodiscard]] RealVolume composite_average(const std::vector<std::vector<RealVolume>>& echoes_by_fa, FaGroup group);

// ---------------------------------------------------------------------------
// T2* mapping

enum class T2StarMethod { loglinear, nlls };

[[nodiscard]] std::string to_string(T2StarMethod m);
[[nodiscard]] T2StarMethod t2star_method_from_string(const std::string& s);

enum class T2StarFlag : std::uint8_t { ok = 0, below_threshold = 1, non_decaying = 2 };

struct T2StarOptions {
    T2StarMethod method = T2StarMethod::nlls;
    /// Voxels whose largest echo magnitude is below this fraction of the global maximum are skipped.
    double threshold_fraction = 0.02;
    double t2_min_ms = 0.1;
    double t2_max_ms = 500.0;
    int max_iterations = 25;
};

/// Mono-exponential fit of one voxel: S(TE) = m0 * exp(-r2star * TE), TE in ms.
struct VoxelT2Fit {
    double m0 = 0.0;
    double r2star = 0.0;  // 1/ms
    /// Sum of squared residuals sum (S - m0 exp(-r2star TE))^2.
    double objective = 0.0;
    int iterations = 0;
};

/// Weighted least squares on ln S with weights S^2. Echoes with S <= 0 get zero weight.
[[nodiscard]] VoxelT2Fit fit_voxel_loglinear(std::span<const double> signal, std::span<const double> tes_ms);

/// Gauss-Newton on (m0, r2star) from `start`, halving the step until the objective drops.
[[nodiscard]] VoxelT2Fit fit_voxel_nlls(std::span<const double> signal, std::span<const double> tes_ms,
                                        const VoxelT2Fit& start, int max_iterations);

[[nodiscard]] double t2_objective(std::span<const double> signal, std::span<const double> tes_ms, double m0,
                                  double r2star);

struct T2StarMap {
    RealVolume t2star_ms;
    RealVolume m0;
    MaskVolume flags;  // T2StarFlag per voxel
};

/// Throws if fewer than 2 echoes or TEs are not strictly increasing.
[[nodiscard]] T2StarMap fit_t2star(std::span<const RealVolume> echoes, std::span<const double> tes_ms,
                                   const T2StarOptions& options = {});

// ---------------------------------------------------------------------------
// Field map

/// Wraps an angle to (-pi, pi].
[[nodiscard]] double wrap_phase(double a) noexcept;

/// Off-resonance (Hz) of one voxel from its complex echo train: temporal unwrapping of
/// successive phase differences, then a |S|^2-weighted straight-line fit of phase vs TE.
[[nodiscard]] double fit_voxel_frequency(std::span<const cplx> echoes, std::span<const double> tes_ms);

[[nodiscard]] RealVolume estimate_fieldmap(std::span<const ComplexVolume> echoes, std::span<const double> tes_ms);

// ---------------------------------------------------------------------------
// QSM

/// Voxels with magnitude >= fraction * max are 1. Requires 0 < fraction < 1.
[[nodiscard]] MaskVolume make_brain_mask(const RealVolume& magnitude, double threshold_fraction);

/// Masked dipole convolution A x = M * Re(ifft(D fft(x))) and its transpose.
class DipoleOperator {
public:
    DipoleOperator(const Dims& dims, const VoxelGeometry& geometry, MaskVolume mask);

    [[nodiscard]] RealVolume apply(const RealVolume& x) const;
    [[nodiscard]] RealVolume apply_transpose(const RealVolume& y) const;

private:
    [[nodiscard]] RealVolume convolve(const RealVolume& x) const;

    Dims dims_;
    RealVolume kernel_;
    MaskVolume mask_;
};

/// Forward differences divided by voxel size along each axis; zero at the last index.
struct Gradient3 {
    RealVolume gx, gy, gz;
};
[[nodiscard]] Gradient3 forward_gradient(const RealVolume& x, const VoxelGeometry& geometry);
[[nodiscard]] RealVolume forward_gradient_transpose(const Gradient3& g, const VoxelGeometry& geometry);

struct QsmOptions {
    double lambda = 1e-3;
    double tolerance = 1e-6;
    std::size_t max_iterations = 200;
};

struct QsmResult {
    RealVolume chi_ppm;
    /// Relative residual ||b - N x|| / ||b|| before the first and after every iteration.
    std::vector<double> residual_trace;
    std::size_t iterations = 0;
    bool converged = false;
};

/// argmin ||M(C chi - f / (gamma_bar B0))||^2 + lambda ||grad chi||^2, where C is the dipole
/// convolution. The normal equations are solved with conjugate residuals (the CG variant with a
/// monotone residual norm). Throws on an empty mask or negative lambda.
[[nodiscard]] QsmResult qsm_invert(const RealVolume& fieldmap_hz, const MaskVolume& brain_mask,
                                   const VoxelGeometry& geometry, double b0_t, const QsmOptions& options = {});

// ---------------------------------------------------------------------------

struct ParametricMaps {
    RealVolume pdw;
    RealVolume t1w;
    RealVolume t2star_ms;
    RealVolume fieldmap_hz;
    RealVolume chi_ppm;
    MaskVolume brain_mask;
};

inline const char* const kMapNames[] = {"pdw", "t1w", "t2star_ms", "fieldmap_hz", "chi_ppm"};

struct MapOptions {
    T2StarOptions t2star;
    QsmOptions qsm;
    double mask_threshold_fraction = 0.1;
};

/// Full parametric pipeline.
/// `magnitudes_by_fa[f][e]`: coil-combined magnitude of echo e at flip angle f.
/// `phase_echoes`: complex echo train used for field mapping (FA2, reference coil).
/// T2* is fitted on the FA2 magnitudes; the brain mask is thresholded from PDW.
[[nodiscard]] ParametricMaps compute_parametric_maps(const std::vector<std::vector<RealVolume>>& magnitudes_by_fa,
                                                     std::span<const ComplexVolume> phase_echoes,
                                                     std::span<const double> tes_ms, const VoxelGeometry& geometry,
                                                     double b0_t, const MapOptions& options = {});

[[nodiscard]] const RealVolume& map_by_name(const ParametricMaps& maps, const std::string& name);

}  // namespace mplex
