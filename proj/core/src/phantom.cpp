#include "mplex/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mplex/fft.hpp"
#include "mplex/parallel.hpp"

namespace mplex {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Ranges {
    double lo, hi;
};
constexpr Ranges kM0{0.5, 1.0};
constexpr Ranges kT1{300.0, 2000.0};
constexpr Ranges kT2s{10.0, 100.0};
constexpr Ranges kChi{-0.2, 0.2};
constexpr Ranges kPhi0{-0.5, 0.5};

TissueParams random_params(std::mt19937_64& rng) {
    auto draw = [&](Ranges r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };
    TissueParams p;
    p.m0 = draw(kM0);
    p.t1_ms = draw(kT1);
    p.t2star_ms = draw(kT2s);
    p.chi_ppm = draw(kChi);
    p.phi0_rad = draw(kPhi0);
    return p;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ c);
}

std::string to_string(PhantomKind kind) { return kind == PhantomKind::ellipsoids ? "ellipsoids" : "blocks"; }

PhantomKind phantom_kind_from_string(const std::string& s) {
    if (s == "ellipsoids") return PhantomKind::ellipsoids;
    if (s == "blocks") return PhantomKind::blocks;
    throw std::invalid_argument("unknown phantom kind '" + s + "' (expected ellipsoids|blocks)");
}

bool TissueRegion::contains(double x, double y, double z) const noexcept {
    const double p[3] = {x, y, z};
    if (shape == Shape::box) {
        for (int a = 0; a < 3; ++a)
            if (std::abs(p[a] - center[a]) > half_extent[a]) return false;
        return true;
    }
    double s = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double t = (p[a] - center[a]) / half_extent[a];
        s += t * t;
    }
    return s <= 1.0;
}

TissueMaps make_phantom(PhantomKind kind, const Dims& dims, const VoxelGeometry& geometry, std::uint64_t seed) {
    if (dims.nx < 8 || dims.ny < 8 || dims.nz < 8)
        throw std::invalid_argument("make_phantom: every dimension must be >= 8");
    geometry.validate();

    std::mt19937_64 rng(derive_seed(seed, 0x9a4709));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto shape = kind == PhantomKind::ellipsoids ? TissueRegion::Shape::ellipsoid : TissueRegion::Shape::box;
    const double n[3] = {static_cast<double>(dims.nx), static_cast<double>(dims.ny), static_cast<double>(dims.nz)};

    TissueMaps t;
    t.dims = dims;
    t.geometry = geometry;

    TissueRegion head;
    head.shape = shape;
    for (int a = 0; a < 3; ++a) {
        head.center[a] = 0.5 * (n[a] - 1.0);
        head.half_extent[a] = (kind == PhantomKind::ellipsoids ? 0.42 : 0.36) * n[a];
    }
    head.params = {0.8, 900.0, 50.0, 0.0, 0.1};
    t.regions.push_back(head);

    const int inner = 4 + static_cast<int>(rng() % 3);
    for (int i = 0; i < inner; ++i) {
        TissueRegion r;
        r.shape = shape;
        for (int a = 0; a < 3; ++a) {
            r.half_extent[a] = std::max(1.5, (0.10 + 0.12 * unit(rng)) * n[a]);
            const double room = std::max(0.0, head.half_extent[a] * 0.8 - r.half_extent[a]);
            r.center[a] = head.center[a] + (2.0 * unit(rng) - 1.0) * room;
        }
        r.params = random_params(rng);
        t.regions.push_back(r);
    }

    t.m0 = RealVolume(dims);
    t.t1_ms = RealVolume(dims);
    t.t2star_ms = RealVolume(dims);
    t.chi_ppm = RealVolume(dims);
    t.phi0_rad = RealVolume(dims);
    for (std::size_t z = 0; z < dims.nz; ++z)
        for (std::size_t y = 0; y < dims.ny; ++y)
            for (std::size_t x = 0; x < dims.nx; ++x) {
                const TissueParams* p = nullptr;
                for (const auto& r : t.regions)
                    if (r.contains(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z))) p = &r.params;
                if (!p) continue;
                const std::size_t i = dims.index(x, y, z);
                t.m0[i] = p->m0;
                t.t1_ms[i] = p->t1_ms;
                t.t2star_ms[i] = p->t2star_ms;
                t.chi_ppm[i] = p->chi_ppm;
                t.phi0_rad[i] = p->phi0_rad;
            }
    return t;
}

Protocol Protocol::desk_default() {
    Protocol p;
    p.fas_deg = {4.0, 16.0};
    constexpr int kEchoes = 7;
    for (int e = 0; e < kEchoes; ++e) p.tes_ms.push_back(2.1 + (20.8 - 2.1) * e / (kEchoes - 1));
    p.tr_ms = 34.9;
    p.b0_t = 3.0;
    p.n_coils = 4;
    return p;
}

void Protocol::validate() const {
    if (fas_deg.empty()) throw std::invalid_argument("protocol: no flip angles");
    if (tes_ms.empty()) throw std::invalid_argument("protocol: no echo times");
    for (double fa : fas_deg)
        if (!(fa > 0.0 && fa < 90.0)) throw std::invalid_argument("protocol: flip angles must lie in (0, 90) degrees");
    for (std::size_t i = 1; i < tes_ms.size(); ++i)
        if (!(tes_ms[i] > tes_ms[i - 1])) throw std::invalid_argument("protocol: echo times must be strictly increasing");
    if (!(tes_ms.front() >= 0.0)) throw std::invalid_argument("protocol: echo times must be non-negative");
    if (!(tr_ms > tes_ms.back())) throw std::invalid_argument("protocol: TR must exceed the last TE");
    if (!(b0_t > 0.0)) throw std::invalid_argument("protocol: B0 must be positive");
    if (n_coils == 0) throw std::invalid_argument("protocol: need at least one coil");
}

cplx spgr_signal(double m0, double t1_ms, double t2star_ms, double phi0_rad, double delta_f_hz, double fa_deg,
                 double tr_ms, double te_ms) {
    if (!(t1_ms > 0.0) || !(t2star_ms > 0.0)) throw std::invalid_argument("spgr_signal: T1 and T2* must be positive");
    const double fa = fa_deg * std::numbers::pi / 180.0;
    const double e1 = std::exp(-tr_ms / t1_ms);
    const double mag = m0 * std::sin(fa) * (1.0 - e1) / (1.0 - std::cos(fa) * e1) * std::exp(-te_ms / t2star_ms);
    const double ph = phi0_rad + 2.0 * std::numbers::pi * delta_f_hz * te_ms * 1e-3;
    return std::polar(mag, ph);
}

std::vector<ComplexVolume> coil_sensitivities(std::size_t n_coils, const Dims& dims) {
    if (n_coils == 0) throw std::invalid_argument("coil_sensitivities: need at least one coil");
    validate_dims(dims);
    std::vector<ComplexVolume> maps;
    maps.reserve(n_coils);
    if (n_coils == 1) {
        ComplexVolume one(dims, Domain::image);
        std::fill(one.data().begin(), one.data().end(), cplx{1.0, 0.0});
        maps.push_back(std::move(one));
        return maps;
    }

    const double nx = static_cast<double>(dims.nx);
    const double ny = static_cast<double>(dims.ny);
    const double cx = 0.5 * (nx - 1.0);
    const double cy = 0.5 * (ny - 1.0);
    const double radius = 0.45 * std::min(nx, ny);
    const double sigma = 0.45 * std::max(nx, ny);
    for (std::size_t c = 0; c < n_coils; ++c) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(n_coils);
        const double px = cx + radius * std::cos(theta);
        const double py = cy + radius * std::sin(theta);
        ComplexVolume m(dims, Domain::image);
        for (std::size_t y = 0; y < dims.ny; ++y)
            for (std::size_t x = 0; x < dims.nx; ++x) {
                const double dx = static_cast<double>(x) - px;
                const double dy = static_cast<double>(y) - py;
                const double mag = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                const double ramp = 0.3 * std::numbers::pi *
                                    ((static_cast<double>(x) - cx) * std::cos(theta) / nx +
                                     (static_cast<double>(y) - cy) * std::sin(theta) / ny);
                const cplx v = std::polar(mag, theta + ramp);
                for (std::size_t z = 0; z < dims.nz; ++z) m(x, y, z) = v;
            }
        maps.push_back(std::move(m));
    }
    return maps;
}

RealVolume dipole_kernel(const Dims& dims, const VoxelGeometry& geometry) {
    validate_dims(dims);
    geometry.validate();
    RealVolume d(dims);
    auto freq = [](std::size_t i, std::size_t n, double h) {
        return (static_cast<double>(i) - static_cast<double>(n / 2)) / (static_cast<double>(n) * h);
    };
    for (std::size_t z = 0; z < dims.nz; ++z) {
        const double kz = freq(z, dims.nz, geometry.dz);
        for (std::size_t y = 0; y < dims.ny; ++y) {
            const double ky = freq(y, dims.ny, geometry.dy);
            for (std::size_t x = 0; x < dims.nx; ++x) {
                const double kx = freq(x, dims.nx, geometry.dx);
                const double k2 = kx * kx + ky * ky + kz * kz;
                d(x, y, z) = k2 > 0.0 ? 1.0 / 3.0 - kz * kz / k2 : 0.0;
            }
        }
    }
    return d;
}

RealVolume field_from_susceptibility(const RealVolume& chi_ppm, const VoxelGeometry& geometry, double b0_t) {
    if (!all_finite(chi_ppm)) throw std::invalid_argument("field_from_susceptibility: non-finite susceptibility");
    const Dims& dims = chi_ppm.dims();
    const RealVolume kernel = dipole_kernel(dims, geometry);
    std::vector<cplx> buf(chi_ppm.values().begin(), chi_ppm.values().end());
    fft3_centered_inplace(buf, dims, false);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= kernel[i];
    fft3_centered_inplace(buf, dims, true);
    const double scale = kGammaBarHzPerT * b0_t * 1e-6;
    RealVolume out(dims);
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = scale * buf[i].real();
    return out;
}

std::string echo_key_name(const EchoKey& key) {
    return "fa" + std::to_string(key.fa) + "_echo" + std::to_string(key.echo) + "_coil" + std::to_string(key.coil);
}

EchoKey ScanDataset::key(std::size_t index) const noexcept {
    EchoKey k;
    k.coil = index % protocol.n_coils;
    index /= protocol.n_coils;
    k.echo = index % protocol.tes_ms.size();
    k.fa = index / protocol.tes_ms.size();
    return k;
}

ScanDataset simulate_scan(const TissueMaps& tissue, const Protocol& protocol, double noise_sigma, std::uint64_t seed,
                          const std::optional<SamplingMask>& mask, std::size_t workers) {
    protocol.validate();
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("simulate_scan: noise_sigma must be >= 0");
    const Dims& dims = tissue.dims;
    for (const RealVolume* v : {&tissue.m0, &tissue.t1_ms, &tissue.t2star_ms, &tissue.chi_ppm, &tissue.phi0_rad})
        if (v->dims() != dims) throw std::invalid_argument("simulate_scan: tissue volumes disagree with tissue dims");
    if (mask && (mask->ny != dims.ny || mask->nz != dims.nz))
        throw std::invalid_argument("simulate_scan: mask dims do not match phase-encode/slice dims");

    ScanDataset ds;
    ds.protocol = protocol;
    ds.tissue = tissue;
    ds.noise_sigma = noise_sigma;
    ds.seed = seed;
    ds.mask = mask;

    const RealVolume field = field_from_susceptibility(tissue.chi_ppm, tissue.geometry, protocol.b0_t);
    const auto coils = coil_sensitivities(protocol.n_coils, dims);

    const std::size_t count = ds.volume_count();
    ds.kspace.resize(count);
    ds.images.resize(count);
    if (mask) ds.masked_kspace.resize(count);

    parallel_for(count, workers, [&](std::size_t idx) {
        const EchoKey key = ds.key(idx);
        const double fa = protocol.fas_deg[key.fa];
        const double te = protocol.tes_ms[key.echo];
        const ComplexVolume& coil = coils[key.coil];

        ComplexVolume img(dims, Domain::image);
        for (std::size_t i = 0; i < img.size(); ++i) {
            if (tissue.m0[i] <= 0.0) continue;
            img[i] = coil[i] * spgr_signal(tissue.m0[i], tissue.t1_ms[i], tissue.t2star_ms[i], tissue.phi0_rad[i],
                                           field[i], fa, protocol.tr_ms, te);
        }
        ComplexVolume k = fft3_centered(img);
        if (noise_sigma > 0.0) {
            std::mt19937_64 rng(derive_seed(seed, key.fa + 1, key.echo + 1, key.coil + 1));
            std::normal_distribution<double> noise(0.0, noise_sigma);
            for (auto& v : k.data()) {
                const double re = noise(rng);
                const double im = noise(rng);
                v += cplx{re, im};
            }
        }
        ds.images[idx] = ifft3_centered(k);
        if (mask) ds.masked_kspace[idx] = apply_mask(k, *mask);
        ds.kspace[idx] = std::move(k);
    });
    return ds;
}

}  // namespace mplex
