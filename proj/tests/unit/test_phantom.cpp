#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mplex/dataset.hpp"
#include "mplex/fft.hpp"
#include "mplex/phantom.hpp"
#include "test_support.hpp"

using namespace mplex;

namespace {

const VoxelGeometry kDesk{0.69, 0.69, 2.0};

bool inside_ellipsoid(const TissueRegion& r, double x, double y, double z) {
    const double u = (x - r.center[0]) / r.half_extent[0];
    const double v = (y - r.center[1]) / r.half_extent[1];
    const double w = (z - r.center[2]) / r.half_extent[2];
    return u * u + v * v + w * w <= 1.0;
}

}  // namespace

TEST_CASE("make_phantom is deterministic per seed and kind") {
    for (PhantomKind kind : {PhantomKind::blocks, PhantomKind::ellipsoids}) {
        const TissueMaps a = make_phantom(kind, {16, 12, 8}, kDesk, 5);
        const TissueMaps b = make_phantom(kind, {16, 12, 8}, kDesk, 5);
        CHECK(a.m0 == b.m0);
        CHECK(a.t1_ms == b.t1_ms);
        CHECK(a.t2star_ms == b.t2star_ms);
        CHECK(a.chi_ppm == b.chi_ppm);
        CHECK(a.phi0_rad == b.phi0_rad);
        CHECK_FALSE(make_phantom(kind, {16, 12, 8}, kDesk, 6).m0 == a.m0);
    }
    CHECK_THROWS_AS((void)make_phantom(PhantomKind::blocks, {16, 7, 8}, kDesk, 1), std::invalid_argument);
}

TEST_CASE("phantom invariants: background, parameter ranges, positivity") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const TissueMaps t = make_phantom(seed % 2 ? PhantomKind::blocks : PhantomKind::ellipsoids, {24, 20, 12},
                                          kDesk, seed);
        std::size_t tissue = 0;
        for (std::size_t i = 0; i < t.m0.size(); ++i) {
            if (t.m0[i] == 0.0) {
                CHECK(t.chi_ppm[i] == 0.0);
                continue;
            }
            ++tissue;
            CHECK(t.t1_ms[i] >= 300.0);
            CHECK(t.t1_ms[i] <= 2000.0);
            CHECK(t.t2star_ms[i] >= 10.0);
            CHECK(t.t2star_ms[i] <= 100.0);
            CHECK(std::abs(t.chi_ppm[i]) <= 0.2);
        }
        CHECK(tissue > 0);
        CHECK(tissue < t.m0.size());
        CHECK(t.m0[0] == 0.0);  // corner voxel is background
    }
}

TEST_CASE("ellipsoid phantom voxels carry the parameters of the last region containing them") {
    const TissueMaps t = make_phantom(PhantomKind::ellipsoids, {20, 18, 10}, kDesk, 31);
    REQUIRE(t.regions.size() >= 5);
    for (std::size_t z = 0; z < 10; ++z)
        for (std::size_t y = 0; y < 18; ++y)
            for (std::size_t x = 0; x < 20; ++x) {
                const TissueParams* expect = nullptr;
                for (const auto& r : t.regions)
                    if (inside_ellipsoid(r, double(x), double(y), double(z))) expect = &r.params;
                const std::size_t i = t.dims.index(x, y, z);
                if (!expect) {
                    CHECK(t.m0[i] == 0.0);
                    continue;
                }
                CHECK(t.m0[i] == expect->m0);
                CHECK(t.t1_ms[i] == expect->t1_ms);
                CHECK(t.t2star_ms[i] == expect->t2star_ms);
                CHECK(t.chi_ppm[i] == expect->chi_ppm);
                CHECK(t.phi0_rad[i] == expect->phi0_rad);
            }
}

TEST_CASE("spgr_signal closed form") {
    CHECK(std::abs(spgr_signal(1.0, 1000.0, 50.0, 0.0, 0.0, 0.0, 34.9, 2.1)) == 0.0);
    CHECK(std::abs(spgr_signal(0.7, 1e-6, 50.0, 0.0, 0.0, 90.0, 1e6, 0.0)) == doctest::Approx(0.7).epsilon(1e-12));
    // Independent scripted evaluation of the steady-state formula.
    const cplx s = spgr_signal(1.0, 1000.0, 50.0, 0.0, 0.0, 16.0, 34.9, 2.1);
    CHECK(std::abs(s) == doctest::Approx(0.12641572269623078).epsilon(1e-13));
    CHECK(std::abs(s.imag()) < 1e-15);

    const cplx p = spgr_signal(1.0, 1000.0, 50.0, 0.2, 10.0, 16.0, 34.9, 5.0);
    CHECK(std::arg(p) == doctest::Approx(0.2 + 2.0 * std::numbers::pi * 10.0 * 5e-3).epsilon(1e-13));

    CHECK_THROWS_AS((void)spgr_signal(1.0, 0.0, 50.0, 0.0, 0.0, 16.0, 34.9, 2.1), std::invalid_argument);
    CHECK_THROWS_AS((void)spgr_signal(1.0, 900.0, -1.0, 0.0, 0.0, 16.0, 34.9, 2.1), std::invalid_argument);
}

TEST_CASE("coil sensitivities") {
    const Dims d{48, 48, 4};
    const auto one = coil_sensitivities(1, d);
    REQUIRE(one.size() == 1);
    for (const auto& v : one[0].data()) CHECK(v == cplx{1.0, 0.0});

    const auto maps = coil_sensitivities(4, d);
    REQUIRE(maps.size() == 4);
    CHECK(maps == coil_sensitivities(4, d));
    double worst = 0.0;
    for (const auto& m : maps)
        for (std::size_t z = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x) {
                    if (x + 1 < d.nx) worst = std::max(worst, std::abs(std::abs(m(x + 1, y, z)) - std::abs(m(x, y, z))));
                    if (y + 1 < d.ny) worst = std::max(worst, std::abs(std::abs(m(x, y + 1, z)) - std::abs(m(x, y, z))));
                    if (z + 1 < d.nz) worst = std::max(worst, std::abs(std::abs(m(x, y, z + 1)) - std::abs(m(x, y, z))));
                }
    CHECK(worst < 0.05);
    CHECK_THROWS_AS((void)coil_sensitivities(0, d), std::invalid_argument);
}

TEST_CASE("dipole kernel values on the axes") {
    const Dims d{8, 8, 8};
    const RealVolume k = dipole_kernel(d, {1.0, 1.0, 1.0});
    CHECK(k(4, 4, 4) == 0.0);
    CHECK(k(4, 4, 6) == doctest::Approx(-2.0 / 3.0));
    CHECK(k(6, 4, 4) == doctest::Approx(1.0 / 3.0));
    CHECK(k(4, 1, 4) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("uniform susceptibility produces no field") {
    RealVolume chi(Dims{8, 6, 4});
    std::fill(chi.data().begin(), chi.data().end(), 0.15);
    const RealVolume f = field_from_susceptibility(chi, kDesk, 3.0);
    for (double v : f.data()) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("sphere exterior field follows the analytic dipole") {
    const Dims d{48, 48, 48};
    const double r0 = 4.0, chi0 = 0.1, c = 24.0;
    RealVolume chi(d);
    std::size_t count = 0;
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x)
                if (std::hypot(double(x) - c, double(y) - c, double(z) - c) <= r0) {
                    chi(x, y, z) = chi0;
                    ++count;
                }
    // Radius of the continuous sphere with the voxelized volume.
    const double r_eff = std::cbrt(3.0 * static_cast<double>(count) / (4.0 * std::numbers::pi));
    const RealVolume f = field_from_susceptibility(chi, {1.0, 1.0, 1.0}, 3.0);
    const double scale = kGammaBarHzPerT * 3.0 * 1e-6;
    auto analytic = [&](double dx, double dy, double dz) {
        const double r = std::hypot(dx, dy, dz);
        const double cos2 = dz * dz / (r * r);
        return chi0 / 3.0 * std::pow(r_eff / r, 3) * (3.0 * cos2 - 1.0) * scale;
    };
    for (int dist = 8; dist <= 11; ++dist) {
        CAPTURE(dist);
        const auto sz = static_cast<std::size_t>(c + dist);
        const double along_z = f(24, 24, sz);
        const double along_x = f(sz, 24, 24);
        CHECK(std::abs(along_z - analytic(0, 0, dist)) <= 0.10 * std::abs(analytic(0, 0, dist)));
        CHECK(std::abs(along_x - analytic(dist, 0, 0)) <= 0.10 * std::abs(analytic(dist, 0, 0)));
    }
}

TEST_CASE("simulate_scan contracts") {
    const Dims d{12, 10, 8};
    const TissueMaps t = make_phantom(PhantomKind::ellipsoids, d, kDesk, 3);
    const Protocol p = Protocol::desk_default();
    CHECK(p.tes_ms.size() == 7);
    CHECK(p.tes_ms.front() == doctest::Approx(2.1));
    CHECK(p.tes_ms.back() == doctest::Approx(20.8));

    const ScanDataset clean = simulate_scan(t, p, 0.0, 9);
    CHECK(clean.volume_count() == 2 * 7 * 4);
    CHECK(clean.kspace.size() == 56);
    CHECK(clean.images.size() == 56);
    CHECK(clean.masked_kspace.empty());
    for (std::size_t i = 0; i < clean.kspace.size(); ++i) {
        CHECK(clean.kspace[i].domain() == Domain::kspace);
        CHECK(test::max_abs_diff(ifft3_centered(clean.kspace[i]), clean.images[i]) < 1e-12);
    }
    // Magnitude is non-increasing across echoes at fixed voxel, flip angle and coil.
    for (std::size_t fa = 0; fa < 2; ++fa)
        for (std::size_t coil = 0; coil < 4; ++coil)
            for (std::size_t e = 1; e < 7; ++e) {
                const auto& a = clean.images[clean.index({fa, e - 1, coil})];
                const auto& b = clean.images[clean.index({fa, e, coil})];
                for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(b[i]) <= std::abs(a[i]) + 1e-12);
            }

    const SamplingMask m = poisson_disk_mask(10, 8, 3.0, {2, 2}, 4);
    const ScanDataset noisy = simulate_scan(t, p, 0.01, 9, m, 1);
    CHECK(noisy.masked_kspace.size() == 56);
    for (std::size_t i = 0; i < 56; ++i) {
        CHECK(energy(noisy.masked_kspace[i]) <= energy(noisy.kspace[i]));
        CHECK(noisy.masked_kspace[i] == apply_mask(noisy.kspace[i], m));
    }
    // Worker count does not change any byte.
    const ScanDataset parallel = simulate_scan(t, p, 0.01, 9, m, 4);
    CHECK(parallel.kspace == noisy.kspace);
    CHECK(parallel.images == noisy.images);

    Protocol bad = p;
    bad.tr_ms = 10.0;
    CHECK_THROWS_AS((void)simulate_scan(t, bad, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS((void)simulate_scan(t, p, 0.0, 1, poisson_disk_mask(9, 8, 1.0, {0, 0}, 1)),
                    std::invalid_argument);
}

TEST_CASE("dataset directory round trip") {
    test::TempDir dir("ds");
    const TissueMaps t = make_phantom(PhantomKind::blocks, {8, 8, 8}, kDesk, 2);
    Protocol p = Protocol::desk_default();
    p.n_coils = 2;
    const SamplingMask m = poisson_disk_mask(8, 8, 3.0, {2, 2}, 1);
    ScanDataset ds = simulate_scan(t, p, 0.001, 4, m);
    ds.phantom_kind = PhantomKind::blocks;
    ds.phantom_seed = 2;
    write_dataset(dir.path(), ds);

    const ScanManifest man = read_manifest(dir.path());
    CHECK(man.dims == Dims{8, 8, 8});
    CHECK(man.geometry == kDesk);
    CHECK(man.protocol == p);
    CHECK(man.seed == 4);
    CHECK(man.phantom_kind == PhantomKind::blocks);
    CHECK(man.files.size() == 3 * 28 + 5 + 1);

    const DatasetReader reader(dir.path());
    const ComplexVolume k = reader.load_kspace({1, 3, 1});
    CHECK(k.domain() == Domain::kspace);
    const auto& orig = ds.kspace[ds.index({1, 3, 1})];
    for (std::size_t i = 0; i < k.size(); ++i)
        CHECK(std::abs(k[i] - orig[i]) <= 1e-6 * std::abs(orig[i]) + 1e-12);
    CHECK(reader.load_mask()->bits == m.bits);
    CHECK(reader.load_tissue().m0.dims() == Dims{8, 8, 8});

    const ScanDataset back = read_dataset(dir.path());
    CHECK(back.volume_count() == 28);
    CHECK(back.masked_kspace.size() == 28);
}
