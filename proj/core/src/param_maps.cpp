#include "mplex/param_maps.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mplex/fft.hpp"
#include "mplex/phantom.hpp"

namespace mplex {

namespace {

void require_same_dims(std::span<const RealVolume> vols, const char* what) {
    if (vols.empty()) throw std::invalid_argument(std::string(what) + ": empty echo list");
    for (const auto& v : vols)
        if (v.dims() != vols.front().dims()) throw std::invalid_argument(std::string(what) + ": echo dims differ");
}

void require_tes(std::span<const double> tes_ms, std::size_t n_echoes, const char* what) {
    if (n_echoes < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 echoes");
    if (tes_ms.size() != n_echoes)
        throw std::invalid_argument(std::string(what) + ": " + std::to_string(n_echoes) + " echoes but " +
                                    std::to_string(tes_ms.size()) + " TEs");
    for (std::size_t i = 1; i < tes_ms.size(); ++i)
        if (!(tes_ms[i] > tes_ms[i - 1]))
            throw std::invalid_argument(std::string(what) + ": TEs must be strictly increasing");
}

double dot(const RealVolume& a, const RealVolume& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Weighted straight-line fit y = a + b t; returns {a, b}. Degenerate systems give b = 0.
std::pair<double, double> weighted_line(std::span<const double> t, std::span<const double> y,
                                        std::span<const double> w) {
    double sw = 0.0, st = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sw += w[i];
        st += w[i] * t[i];
        sy += w[i] * y[i];
    }
    if (!(sw > 0.0)) return {0.0, 0.0};
    const double tm = st / sw;
    const double ym = sy / sw;
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        stt += w[i] * (t[i] - tm) * (t[i] - tm);
        sty += w[i] * (t[i] - tm) * (y[i] - ym);
    }
    const double b = stt > 0.0 ? sty / stt : 0.0;
    return {ym - b * tm, b};
}

}  // namespace

RealVolume composite_average(std::span<const RealVolume> echoes) {
    require_same_dims(echoes, "composite_average");
    RealVolume out(echoes.front().dims());
    for (const auto& e : echoes)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += e[i];
    const double inv = 1.0 / static_cast<double>(echoes.size());
    for (auto& v : out.data()) v *= inv;
    return out;
}

RealVolume composite_average(const std::vector<std::vector<RealVolume>>& echoes_by_fa, FaGroup group) {
    const std::size_t f = group == FaGroup::fa1 ? 0 : 1;
    if (f >= echoes_by_fa.size() || echoes_by_fa[f].empty())
        throw std::invalid_argument(std::string("composite_average: flip-angle group ") +
                                    (f == 0 ? "FA1" : "FA2") + " is empty");
    return composite_average(echoes_by_fa[f]);
}

std::string to_string(T2StarMethod m) { return m == T2StarMethod::loglinear ? "loglinear" : "nlls"; }

T2StarMethod t2star_method_from_string(const std::string& s) {
    if (s == "loglinear") return T2StarMethod::loglinear;
    if (s == "nlls") return T2StarMethod::nlls;
    throw std::invalid_argument("unknown T2* method '" + s + "' (expected loglinear|nlls)");
}

double t2_objective(std::span<const double> signal, std::span<const double> tes_ms, double m0, double r2star) {
    double f = 0.0;
    for (std::size_t i = 0; i < signal.size(); ++i) {
        const double r = signal[i] - m0 * std::exp(-r2star * tes_ms[i]);
        f += r * r;
    }
    return f;
}

VoxelT2Fit fit_voxel_loglinear(std::span<const double> signal, std::span<const double> tes_ms) {
    const std::size_t n = signal.size();
    std::vector<double> y(n, 0.0), w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (signal[i] > 0.0) {
            y[i] = std::log(signal[i]);
            w[i] = signal[i] * signal[i];
        }
    const auto [a, b] = weighted_line(tes_ms, y, w);
    VoxelT2Fit fit;
    fit.m0 = std::exp(a);
    fit.r2star = -b;
    fit.objective = t2_objective(signal, tes_ms, fit.m0, fit.r2star);
    return fit;
}

VoxelT2Fit fit_voxel_nlls(std::span<const double> signal, std::span<const double> tes_ms, const VoxelT2Fit& start,
                          int max_iterations) {
    VoxelT2Fit cur = start;
    cur.objective = t2_objective(signal, tes_ms, cur.m0, cur.r2star);
    cur.iterations = 0;
    for (int it = 0; it < max_iterations; ++it) {
        // Normal equations of the linearised residual r_i = S_i - m0 e^{-R t_i}.
        double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0, g0 = 0.0, g1 = 0.0;
        for (std::size_t i = 0; i < signal.size(); ++i) {
            const double e = std::exp(-cur.r2star * tes_ms[i]);
            const double r = signal[i] - cur.m0 * e;
            const double j0 = -e;
            const double j1 = cur.m0 * tes_ms[i] * e;
            jtj00 += j0 * j0;
            jtj01 += j0 * j1;
            jtj11 += j1 * j1;
            g0 += j0 * r;
            g1 += j1 * r;
        }
        const double det = jtj00 * jtj11 - jtj01 * jtj01;
        if (!(std::abs(det) > 0.0) || !std::isfinite(det)) break;
        const double d0 = -(jtj11 * g0 - jtj01 * g1) / det;
        const double d1 = -(jtj00 * g1 - jtj01 * g0) / det;

        bool improved = false;
        double step = 1.0;
        for (int h = 0; h < 30; ++h, step *= 0.5) {
            const double m0 = cur.m0 + step * d0;
            const double r2 = cur.r2star + step * d1;
            const double obj = t2_objective(signal, tes_ms, m0, r2);
            if (std::isfinite(obj) && obj < cur.objective) {
                const double rel = (cur.objective - obj) / std::max(cur.objective, 1e-300);
                cur.m0 = m0;
                cur.r2star = r2;
                cur.objective = obj;
                improved = rel > 1e-15;
                break;
            }
        }
        cur.iterations = it + 1;
        if (!improved) break;
    }
    return cur;
}

T2StarMap fit_t2star(std::span<const RealVolume> echoes, std::span<const double> tes_ms, const T2StarOptions& options) {
    require_same_dims(echoes, "fit_t2star");
    require_tes(tes_ms, echoes.size(), "fit_t2star");
    if (!(options.t2_min_ms > 0.0 && options.t2_max_ms > options.t2_min_ms))
        throw std::invalid_argument("fit_t2star: need 0 < t2_min < t2_max");

    const Dims& dims = echoes.front().dims();
    double global_max = 0.0;
    for (const auto& e : echoes)
        for (double v : e.data()) global_max = std::max(global_max, std::abs(v));
    const double threshold = options.threshold_fraction * global_max;

    T2StarMap out{RealVolume(dims), RealVolume(dims), MaskVolume(dims)};
    std::vector<double> s(echoes.size());
    for (std::size_t i = 0; i < dims.voxels(); ++i) {
        double peak = 0.0;
        for (std::size_t e = 0; e < echoes.size(); ++e) {
            s[e] = std::abs(echoes[e][i]);
            peak = std::max(peak, s[e]);
        }
        if (!(peak > threshold) || peak == 0.0) {
            out.flags[i] = static_cast<std::uint8_t>(T2StarFlag::below_threshold);
            continue;
        }
        VoxelT2Fit fit = fit_voxel_loglinear(s, tes_ms);
        if (options.method == T2StarMethod::nlls) fit = fit_voxel_nlls(s, tes_ms, fit, options.max_iterations);

        const double r_min = 1.0 / options.t2_max_ms;
        if (!(fit.r2star > r_min)) {
            out.t2star_ms[i] = options.t2_max_ms;
            out.flags[i] = static_cast<std::uint8_t>(T2StarFlag::non_decaying);
        } else {
            out.t2star_ms[i] = std::clamp(1.0 / fit.r2star, options.t2_min_ms, options.t2_max_ms);
        }
        out.m0[i] = fit.m0;
    }
    return out;
}

double wrap_phase(double a) noexcept {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::remainder(a, two_pi);  // [-pi, pi]
    if (w <= -std::numbers::pi) w += two_pi;
    return w;
}

double fit_voxel_frequency(std::span<const cplx> echoes, std::span<const double> tes_ms) {
    const std::size_t n = echoes.size();
    std::vector<double> t(n), psi(n), w(n);
    // Phase relative to the first echo, so equal phases give an exactly zero slope.
    psi[0] = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
        t[e] = tes_ms[e] * 1e-3;
        w[e] = std::norm(echoes[e]);
        if (e > 0) psi[e] = psi[e - 1] + wrap_phase(std::arg(echoes[e]) - std::arg(echoes[e - 1]));
    }
    return weighted_line(t, psi, w).second / (2.0 * std::numbers::pi);
}

RealVolume estimate_fieldmap(std::span<const ComplexVolume> echoes, std::span<const double> tes_ms) {
    if (echoes.size() < 2) throw std::invalid_argument("estimate_fieldmap: need at least 2 echoes");
    require_tes(tes_ms, echoes.size(), "estimate_fieldmap");
    const Dims& dims = echoes.front().dims();
    for (const auto& e : echoes)
        if (e.dims() != dims) throw std::invalid_argument("estimate_fieldmap: echo dims differ");
    RealVolume out(dims);
    std::vector<cplx> train(echoes.size());
    for (std::size_t i = 0; i < dims.voxels(); ++i) {
        for (std::size_t e = 0; e < echoes.size(); ++e) train[e] = echoes[e][i];
        out[i] = fit_voxel_frequency(train, tes_ms);
    }
    return out;
}

MaskVolume make_brain_mask(const RealVolume& magnitude, double threshold_fraction) {
    if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
        throw std::invalid_argument("make_brain_mask: threshold fraction must lie in (0, 1)");
    double peak = 0.0;
    for (double v : magnitude.data()) peak = std::max(peak, v);
    const double cut = threshold_fraction * peak;
    MaskVolume m(magnitude.dims());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = (peak > 0.0 && magnitude[i] >= cut) ? 1 : 0;
    return m;
}

DipoleOperator::DipoleOperator(const Dims& dims, const VoxelGeometry& geometry, MaskVolume mask)
    : dims_(dims), kernel_(dipole_kernel(dims, geometry)), mask_(std::move(mask)) {
    if (mask_.dims() != dims) throw std::invalid_argument("DipoleOperator: mask dims differ");
}

RealVolume DipoleOperator::convolve(const RealVolume& x) const {
    std::vector<cplx> buf(x.values().begin(), x.values().end());
    fft3_centered_inplace(buf, dims_, false);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= kernel_[i];
    fft3_centered_inplace(buf, dims_, true);
    RealVolume out(dims_);
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real();
    return out;
}

// The kernel is real, so Re(F^H D F) is symmetric and A^T = C M.
RealVolume DipoleOperator::apply(const RealVolume& x) const {
    RealVolume y = convolve(x);
    for (std::size_t i = 0; i < y.size(); ++i)
        if (!mask_[i]) y[i] = 0.0;
    return y;
}

RealVolume DipoleOperator::apply_transpose(const RealVolume& y) const {
    RealVolume masked = y;
    for (std::size_t i = 0; i < masked.size(); ++i)
        if (!mask_[i]) masked[i] = 0.0;
    return convolve(masked);
}

Gradient3 forward_gradient(const RealVolume& x, const VoxelGeometry& geometry) {
    const Dims& d = x.dims();
    Gradient3 g{RealVolume(d), RealVolume(d), RealVolume(d)};
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t i = 0; i < d.nx; ++i) {
                const double v = x(i, y, z);
                if (i + 1 < d.nx) g.gx(i, y, z) = (x(i + 1, y, z) - v) / geometry.dx;
                if (y + 1 < d.ny) g.gy(i, y, z) = (x(i, y + 1, z) - v) / geometry.dy;
                if (z + 1 < d.nz) g.gz(i, y, z) = (x(i, y, z + 1) - v) / geometry.dz;
            }
    return g;
}

RealVolume forward_gradient_transpose(const Gradient3& g, const VoxelGeometry& geometry) {
    const Dims& d = g.gx.dims();
    RealVolume out(d);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t i = 0; i < d.nx; ++i) {
                if (i + 1 < d.nx) {
                    const double v = g.gx(i, y, z) / geometry.dx;
                    out(i + 1, y, z) += v;
                    out(i, y, z) -= v;
                }
                if (y + 1 < d.ny) {
                    const double v = g.gy(i, y, z) / geometry.dy;
                    out(i, y + 1, z) += v;
                    out(i, y, z) -= v;
                }
                if (z + 1 < d.nz) {
                    const double v = g.gz(i, y, z) / geometry.dz;
                    out(i, y, z + 1) += v;
                    out(i, y, z) -= v;
                }
            }
    return out;
}

QsmResult qsm_invert(const RealVolume& fieldmap_hz, const MaskVolume& brain_mask, const VoxelGeometry& geometry,
                     double b0_t, const QsmOptions& options) {
    if (!(options.lambda >= 0.0)) throw std::invalid_argument("qsm_invert: lambda must be >= 0");
    if (!(b0_t > 0.0)) throw std::invalid_argument("qsm_invert: B0 must be positive");
    if (brain_mask.dims() != fieldmap_hz.dims()) throw std::invalid_argument("qsm_invert: mask dims differ from field");
    if (std::none_of(brain_mask.data().begin(), brain_mask.data().end(), [](std::uint8_t v) { return v != 0; }))
        throw std::invalid_argument("qsm_invert: empty brain mask");
    geometry.validate();

    const Dims& dims = fieldmap_hz.dims();
    const DipoleOperator a(dims, geometry, brain_mask);
    auto normal = [&](const RealVolume& x) {
        RealVolume y = a.apply_transpose(a.apply(x));
        if (options.lambda > 0.0) {
            const RealVolume r = forward_gradient_transpose(forward_gradient(x, geometry), geometry);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += options.lambda * r[i];
        }
        return y;
    };

    RealVolume f_norm = fieldmap_hz;
    const double scale = 1.0 / (kGammaBarHzPerT * b0_t * 1e-6);
    for (auto& v : f_norm.data()) v *= scale;
    const RealVolume b = a.apply_transpose(f_norm);

    QsmResult res;
    res.chi_ppm = RealVolume(dims);
    const double b_norm = std::sqrt(dot(b, b));
    if (b_norm == 0.0) {
        res.residual_trace.push_back(0.0);
        res.converged = true;
        return res;
    }

    // Conjugate residuals: the Krylov method for symmetric systems whose residual norm is
    // non-increasing by construction.
    RealVolume& x = res.chi_ppm;
    RealVolume r = b;
    RealVolume p = r;
    RealVolume ar = normal(r);
    RealVolume ap = ar;
    double r_ar = dot(r, ar);
    res.residual_trace.push_back(1.0);
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        const double ap_ap = dot(ap, ap);
        if (!(ap_ap > 0.0) || !(r_ar > 0.0)) break;
        const double alpha = r_ar / ap_ap;
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res.iterations = it + 1;
        const double rel = std::sqrt(dot(r, r)) / b_norm;
        res.residual_trace.push_back(rel);
        if (rel < options.tolerance) {
            res.converged = true;
            break;
        }
        ar = normal(r);
        const double r_ar_new = dot(r, ar);
        const double beta = r_ar_new / r_ar;
        r_ar = r_ar_new;
        for (std::size_t i = 0; i < x.size(); ++i) {
            p[i] = r[i] + beta * p[i];
            ap[i] = ar[i] + beta * ap[i];
        }
    }
    return res;
}

ParametricMaps compute_parametric_maps(const std::vector<std::vector<RealVolume>>& magnitudes_by_fa,
                                       std::span<const ComplexVolume> phase_echoes, std::span<const double> tes_ms,
                                       const VoxelGeometry& geometry, double b0_t, const MapOptions& options) {
    if (magnitudes_by_fa.size() < 2) throw std::invalid_argument("parametric maps: need two flip-angle groups");
    ParametricMaps m;
    m.pdw = composite_average(magnitudes_by_fa, FaGroup::fa1);
    m.t1w = composite_average(magnitudes_by_fa, FaGroup::fa2);
    m.t2star_ms = fit_t2star(magnitudes_by_fa[1], tes_ms, options.t2star).t2star_ms;
    m.fieldmap_hz = estimate_fieldmap(phase_echoes, tes_ms);
    m.brain_mask = make_brain_mask(m.pdw, options.mask_threshold_fraction);
    m.chi_ppm = qsm_invert(m.fieldmap_hz, m.brain_mask, geometry, b0_t, options.qsm).chi_ppm;
    return m;
}

const RealVolume& map_by_name(const ParametricMaps& maps, const std::string& name) {
    if (name == "pdw") return maps.pdw;
    if (name == "t1w") return maps.t1w;
    if (name == "t2star_ms") return maps.t2star_ms;
    if (name == "fieldmap_hz") return maps.fieldmap_hz;
    if (name == "chi_ppm") return maps.chi_ppm;
    throw std::invalid_argument("unknown parametric map '" + name + "'");
}

}  // namespace mplex
