#include <benchmark/benchmark.h>

#include <random>

#include "mplex/cascade.hpp"
#include "mplex/fft.hpp"
#include "mplex/nn.hpp"
#include "mplex/param_maps.hpp"
#include "mplex/phantom.hpp"
#include "mplex/sampling.hpp"

using namespace mplex;

namespace {

ComplexVolume noise_volume(const Dims& d) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    ComplexVolume v(d, Domain::image);
    for (auto& x : v.data()) x = {n(rng), n(rng)};
    return v;
}

// Args: nx, ny, nz. Includes power-of-two, mixed-radix and prime lengths.
void BM_Fft3(benchmark::State& state) {
    const Dims d{std::size_t(state.range(0)), std::size_t(state.range(1)), std::size_t(state.range(2))};
    const ComplexVolume x = noise_volume(d);
    for (auto _ : state) benchmark::DoNotOptimize(fft3_centered(x));
    state.SetItemsProcessed(state.iterations() * std::int64_t(d.voxels()));
}
BENCHMARK(BM_Fft3)->Args({48, 48, 16})->Args({64, 64, 64})->Args({96, 90, 30})->Args({37, 41, 13})->Unit(benchmark::kMicrosecond);

void BM_Conv3dForward(benchmark::State& state) {
    const std::size_t f = std::size_t(state.range(0));
    nn::Conv3d conv("c", f, f);
    std::mt19937_64 rng(2);
    conv.init_he(rng);
    nn::Tensor in(f, {32, 48, 16});
    for (auto& v : in.data) v = 0.5;
    for (auto _ : state) benchmark::DoNotOptimize(nn::conv3d_forward(conv, in));
}
BENCHMARK(BM_Conv3dForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_PoissonMask(benchmark::State& state) {
    const double accel = double(state.range(0));
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(poisson_disk_mask(48, 16, accel, {8, 4}, ++seed));
}
BENCHMARK(BM_PoissonMask)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_CascadeReconstruct(benchmark::State& state) {
    const Dims d{48, 48, 16};
    const SamplingMask mask = poisson_disk_mask(48, 16, 3.0, {8, 4}, 1);
    const ComplexVolume k = apply_mask(fft3_centered(noise_volume(d)), mask);
    const CascadeModel model = CascadeModel::initialize(CascadeConfig::desk(), 3);
    for (auto _ : state) benchmark::DoNotOptimize(cascade_reconstruct(model, k, mask));
}
BENCHMARK(BM_CascadeReconstruct)->Unit(benchmark::kMillisecond);

void BM_Qsm(benchmark::State& state) {
    const Dims d{48, 48, 16};
    const VoxelGeometry g{0.69, 0.69, 2.0};
    const TissueMaps t = make_phantom(PhantomKind::ellipsoids, d, g, 4);
    const RealVolume field = field_from_susceptibility(t.chi_ppm, g, 3.0);
    const MaskVolume mask = make_brain_mask(t.m0, 0.1);
    for (auto _ : state) benchmark::DoNotOptimize(qsm_invert(field, mask, g, 3.0));
}
BENCHMARK(BM_Qsm)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
