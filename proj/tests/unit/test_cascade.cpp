#include <doctest.h>

#include <cmath>

#include "mplex/cascade.hpp"
#include "mplex/fft.hpp"
#include "mplex/train.hpp"
#include "test_support.hpp"

using namespace mplex;

namespace {

SamplingMask random_mask(std::size_t ny, std::size_t nz, std::uint64_t seed) {
    SamplingMask m = full_mask(ny, nz);
    std::mt19937_64 rng(seed);
    for (auto& b : m.bits) b = static_cast<std::uint8_t>(rng() % 3 == 0);
    m.bits[0] = 1;
    return m;
}

ComplexVolume masked_kspace(const Dims& d, const SamplingMask& m, std::uint64_t seed) {
    return apply_mask(test::random_complex(d, seed, Domain::kspace), m);
}

}  // namespace

TEST_CASE("model layout follows the config") {
    const CascadeModel m(CascadeConfig::desk());
    REQUIRE(m.layers().size() == 6);
    CHECK(m.layer(0, 0).in_channels == 2);
    CHECK(m.layer(0, 0).out_channels == 8);
    CHECK(m.layer(1, 2).out_channels == 2);
    CHECK(m.layer(1, 2).name == "block1.conv2");
    CHECK(m.parameter_count() == 2 * ((2 * 8 * 27 + 8) + (8 * 8 * 27 + 8) + (8 * 2 * 27 + 2)));
    CHECK(m.all_finite());

    const CascadeModel p = CascadeModel::initialize(CascadeConfig::large(), 1);
    CHECK(p.layers().size() == 25);
    CHECK(p.layer(4, 4).out_channels == 2);
    CHECK(p.layer(2, 1).in_channels == 48);

    CHECK_THROWS_AS(CascadeModel(CascadeConfig{2, 3, 8, {3, 2, 3}}), std::invalid_argument);
    CHECK_THROWS_AS(CascadeModel(CascadeConfig{0, 3, 8, {3, 3, 3}}), std::invalid_argument);
    CHECK(CascadeModel::initialize(CascadeConfig::desk(), 9) == CascadeModel::initialize(CascadeConfig::desk(), 9));
    CHECK_FALSE(CascadeModel::initialize(CascadeConfig::desk(), 9) == CascadeModel::initialize(CascadeConfig::desk(), 10));
}

TEST_CASE("dc_layer: full mask replaces, empty mask passes through") {
    const Dims d{4, 4, 4};
    const ComplexVolume x = test::random_complex(d, 1);
    const ComplexVolume k = test::random_complex(d, 2, Domain::kspace);

    const ComplexVolume full = dc_layer(x, k, full_mask(4, 4));
    CHECK(test::max_abs_diff(full, ifft3_centered(k)) < 1e-14);

    SamplingMask none = full_mask(4, 4);
    std::fill(none.bits.begin(), none.bits.end(), 0);
    CHECK(test::max_abs_diff(dc_layer(x, apply_mask(k, none), none), x) < 1e-14);
}

TEST_CASE("dc_layer on a random 4^3 case, checked bin by bin") {
    const Dims d{4, 4, 4};
    const SamplingMask m = random_mask(4, 4, 3);
    const ComplexVolume x = test::random_complex(d, 4);
    const ComplexVolume k = masked_kspace(d, m, 5);
    const ComplexVolume out_k = fft3_centered(dc_layer(x, k, m));
    const ComplexVolume x_k = fft3_centered(x);
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t xi = 0; xi < 4; ++xi) {
                const cplx expect = m.at(y, z) ? k(xi, y, z) : x_k(xi, y, z);
                CHECK(std::abs(out_k(xi, y, z) - expect) < 1e-13);
            }
    CHECK_THROWS_AS((void)dc_layer(x, test::random_complex({4, 4, 3}, 1, Domain::kspace), m), std::invalid_argument);
    CHECK_THROWS_AS((void)dc_layer(x, k, full_mask(4, 3)), std::invalid_argument);
}

TEST_CASE("dc_backward is the adjoint of the x_cnn path") {
    const Dims d{5, 4, 3};
    const SamplingMask m = random_mask(4, 3, 6);
    const ComplexVolume zero_k(d, Domain::kspace);
    const ComplexVolume u = test::random_complex(d, 7), v = test::random_complex(d, 8);
    // <dc(u) with k = 0, v> == <u, dc_backward(v)>
    const ComplexVolume fu = dc_layer(u, zero_k, m);
    const ComplexVolume bv = dc_backward(v, m);
    cplx lhs{}, rhs{};
    for (std::size_t i = 0; i < u.size(); ++i) {
        lhs += std::conj(v[i]) * fu[i];
        rhs += std::conj(bv[i]) * u[i];
    }
    CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("cascade: full mask returns ifft(k) for any weights") {
    const Dims d{6, 4, 4};
    const ComplexVolume k = test::random_complex(d, 1, Domain::kspace);
    const CascadeModel m = CascadeModel::initialize(CascadeConfig::desk(), 3);
    CHECK(test::max_abs_diff(cascade_forward(m, k, full_mask(4, 4)), ifft3_centered(k)) < 1e-12);
}

TEST_CASE("cascade: zero weights reproduce the zero-filled image exactly") {
    const Dims d{6, 5, 4};
    const SamplingMask mask = random_mask(5, 4, 2);
    const ComplexVolume k = masked_kspace(d, mask, 3);
    const CascadeModel zero(CascadeConfig::desk());
    const ComplexVolume zf = ifft3_centered(k);
    CHECK(test::max_abs_diff(cascade_forward(zero, k, mask), zf) <= 1e-13 * test::l2(zf));
}

TEST_CASE("property: sampled bins of the output equal the measurement for random weights") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Dims d{7, 6, 4};
        const SamplingMask mask = random_mask(6, 4, seed);
        const ComplexVolume k = masked_kspace(d, mask, seed + 10);
        CascadeModel model = CascadeModel::initialize(CascadeConfig::desk(), seed);
        // Inflate weights so the CNN path dominates the output.
        for (auto& l : model.layers())
            for (auto& w : l.weight) w *= 3.0;
        const ComplexVolume out_k = fft3_centered(cascade_forward(model, k, mask));
        double worst = 0.0;
        for (std::size_t z = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                if (mask.at(y, z))
                    for (std::size_t x = 0; x < d.nx; ++x)
                        worst = std::max(worst, std::abs(out_k(x, y, z) - k(x, y, z)) / std::max(std::abs(k(x, y, z)), 1e-300));
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("fully convolutional: any readout length runs with the same weights") {
    const CascadeModel model = CascadeModel::initialize(CascadeConfig::desk(), 4);
    const CascadeModel before = model;
    const SamplingMask mask = random_mask(6, 4, 5);
    for (std::size_t nx : {3u, 7u, 32u, 41u}) {
        const ComplexVolume out = cascade_forward(model, masked_kspace({nx, 6, 4}, mask, nx), mask);
        CHECK(out.dims().nx == nx);
        CHECK(all_finite(out));
    }
    CHECK(model == before);
}

TEST_CASE("large 5x5x48 model runs on a small volume") {
    const CascadeModel model = CascadeModel::initialize(CascadeConfig::large(), 1);
    const SamplingMask mask = random_mask(4, 4, 1);
    const ComplexVolume out = cascade_forward(model, masked_kspace({4, 4, 4}, mask, 2), mask);
    CHECK(all_finite(out));
}

TEST_CASE("cascade_reconstruct undoes the intensity normalization") {
    const Dims d{6, 5, 4};
    const SamplingMask mask = random_mask(5, 4, 8);
    const ComplexVolume k = masked_kspace(d, mask, 9);
    const CascadeModel model = CascadeModel::initialize(CascadeConfig::desk(), 2);

    // The network sees the same normalized input regardless of the measurement's scale.
    ComplexVolume k10 = k;
    for (auto& v : k10.data()) v *= 10.0;
    const ComplexVolume a = cascade_reconstruct(model, k, mask);
    const ComplexVolume b = cascade_reconstruct(model, k10, mask);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(b[i] - 10.0 * a[i]) < 1e-11 * (1.0 + std::abs(b[i])));

    CHECK(normalization_scale(ComplexVolume(d, Domain::kspace)) == 1.0);
    const ComplexVolume zero_out = cascade_reconstruct(CascadeModel(CascadeConfig::desk()), k, mask);
    CHECK(test::max_abs_diff(zero_out, ifft3_centered(k)) < 1e-12 * test::l2(k));
}

TEST_CASE("cnet round trip is bit exact and rejects corrupt files") {
    test::TempDir dir("cnet");
    const CascadeModel model = CascadeModel::initialize(CascadeConfig{1, 2, 4, {3, 1, 5}}, 11);
    write_cascade(dir.path() / "m.cnet", model);
    CHECK(read_cascade(dir.path() / "m.cnet") == model);

    const auto size = std::filesystem::file_size(dir.path() / "m.cnet");
    CHECK(size == 6 + 4 + 6 * 8 + model.parameter_count() * 8);

    std::filesystem::resize_file(dir.path() / "m.cnet", size - 8);
    CHECK_THROWS((void)read_cascade(dir.path() / "m.cnet"));
    CHECK_THROWS((void)read_cascade(dir.path() / "missing.cnet"));
}

TEST_CASE("grad_check: desk model on a 6x5x4 sample") {
    const Dims d{6, 5, 4};
    const SamplingMask mask = random_mask(5, 4, 12);
    const ComplexVolume target = test::random_complex(d, 13);
    const GradCheckSample sample{apply_mask(fft3_centered(target), mask), mask, target};

    const GradCheckReport r = grad_check(CascadeModel::initialize(CascadeConfig::desk(), 14), sample, 1e-5);
    CHECK(r.checked == CascadeModel(CascadeConfig::desk()).parameter_count());
    CHECK(r.per_layer.size() == 6);
    CHECK(r.max_rel_error < 1e-4);

    const GradCheckReport z = grad_check(CascadeModel(CascadeConfig::desk()), sample, 1e-5);
    CHECK(std::isfinite(z.max_rel_error));
    CHECK(z.max_rel_error < 1e-4);
}

TEST_CASE("grad_check names the layer where gradients disagree") {
    const Dims d{4, 4, 4};
    const SamplingMask mask = random_mask(4, 4, 1);
    const ComplexVolume target = test::random_complex(d, 2);
    const GradCheckSample sample{apply_mask(fft3_centered(target), mask), mask, target};
    // A huge step makes the central difference of a non-quadratic loss wrong.
    const GradCheckReport r = grad_check(CascadeModel::initialize(CascadeConfig{1, 2, 2, {3, 3, 3}}, 3), sample, 5.0);
    CHECK(r.max_rel_error > 1e-4);
    bool known = false;
    for (const auto& [name, err] : r.per_layer) known = known || (name == r.worst_layer && err == r.max_rel_error);
    CHECK(known);
    CHECK(r.worst_layer.rfind("block0.conv", 0) == 0);
}
