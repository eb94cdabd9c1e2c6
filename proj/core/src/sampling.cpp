#include "mplex/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace mplex {

namespace {

constexpr int kCandidatesPerPoint = 30;

std::pair<std::size_t, std::size_t> calib_start(std::size_t ny, std::size_t nz, CalibRegion c) {
    return {ny / 2 - c.cy / 2, nz / 2 - c.cz / 2};
}

bool inside_calib(std::size_t ny, std::size_t nz, CalibRegion c, std::size_t y, std::size_t z) {
    if (c.cy == 0 || c.cz == 0) return false;
    const auto [y0, z0] = calib_start(ny, nz, c);
    return y >= y0 && y < y0 + c.cy && z >= z0 && z < z0 + c.cz;
}

/// Continuous Bridson Poisson-disk points over [0, ny) x [0, nz), radius r.
std::vector<std::pair<double, double>> bridson_points(std::size_t ny, std::size_t nz, double r, std::mt19937_64& rng) {
    const double cell = r / std::numbers::sqrt2;  // at most one point per background cell
    const auto gy = static_cast<std::size_t>(std::ceil(static_cast<double>(ny) / cell)) + 1;
    const auto gz = static_cast<std::size_t>(std::ceil(static_cast<double>(nz) / cell)) + 1;
    std::vector<int> grid(gy * gz, -1);
    std::vector<std::pair<double, double>> pts;
    std::vector<std::size_t> active;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double r2 = r * r;

    auto fits = [&](double y, double z) {
        const auto cy = static_cast<long>(y / cell);
        const auto cz = static_cast<long>(z / cell);
        for (long dz = -2; dz <= 2; ++dz)
            for (long dy = -2; dy <= 2; ++dy) {
                const long a = cy + dy;
                const long b = cz + dz;
                if (a < 0 || b < 0 || a >= static_cast<long>(gy) || b >= static_cast<long>(gz)) continue;
                const int id = grid[static_cast<std::size_t>(a) + gy * static_cast<std::size_t>(b)];
                if (id < 0) continue;
                const double ey = pts[static_cast<std::size_t>(id)].first - y;
                const double ez = pts[static_cast<std::size_t>(id)].second - z;
                if (ey * ey + ez * ez < r2) return false;
            }
        return true;
    };
    auto add = [&](double y, double z) {
        grid[static_cast<std::size_t>(y / cell) + gy * static_cast<std::size_t>(z / cell)] = static_cast<int>(pts.size());
        active.push_back(pts.size());
        pts.emplace_back(y, z);
    };

    add(unit(rng) * static_cast<double>(ny), unit(rng) * static_cast<double>(nz));
    while (!active.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
        const std::size_t slot = pick(rng);
        const auto [py, pz] = pts[active[slot]];
        bool placed = false;
        for (int attempt = 0; attempt < kCandidatesPerPoint; ++attempt) {
            const double rad = r * (1.0 + unit(rng));
            const double ang = 2.0 * std::numbers::pi * unit(rng);
            const double y = py + rad * std::cos(ang);
            const double z = pz + rad * std::sin(ang);
            if (y < 0.0 || z < 0.0 || y >= static_cast<double>(ny) || z >= static_cast<double>(nz)) continue;
            if (!fits(y, z)) continue;
            add(y, z);
            placed = true;
            break;
        }
        if (!placed) {
            active[slot] = active.back();
            active.pop_back();
        }
    }
    return pts;
}

/// Snap continuous points to lattice cells in generation order, keeping a cell only if it is
/// outside the calibration block and at lattice distance >= r from every kept cell.
std::vector<std::uint8_t> snap_to_lattice(std::size_t ny, std::size_t nz, CalibRegion calib, double r,
                                          const std::vector<std::pair<double, double>>& pts) {
    std::vector<std::uint8_t> bits(ny * nz, 0);
    std::vector<std::uint8_t> disk(ny * nz, 0);
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            if (inside_calib(ny, nz, calib, y, z)) bits[y + ny * z] = 1;

    const auto reach = static_cast<long>(std::ceil(r));
    const double r2 = r * r;
    for (const auto& [fy, fz] : pts) {
        const auto y = static_cast<long>(fy);
        const auto z = static_cast<long>(fz);
        const std::size_t idx = static_cast<std::size_t>(y) + ny * static_cast<std::size_t>(z);
        if (bits[idx]) continue;
        bool ok = true;
        for (long dz = -reach; dz <= reach && ok; ++dz)
            for (long dy = -reach; dy <= reach; ++dy) {
                const long a = y + dy;
                const long b = z + dz;
                if (a < 0 || b < 0 || a >= static_cast<long>(ny) || b >= static_cast<long>(nz)) continue;
                if (!disk[static_cast<std::size_t>(a) + ny * static_cast<std::size_t>(b)]) continue;
                if (static_cast<double>(dy * dy + dz * dz) < r2) {
                    ok = false;
                    break;
                }
            }
        if (!ok) continue;
        bits[idx] = 1;
        disk[idx] = 1;
    }
    return bits;
}

}  // namespace

std::size_t SamplingMask::popcount() const noexcept {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

bool SamplingMask::in_calibration(std::size_t y, std::size_t z) const noexcept {
    return inside_calib(ny, nz, calib, y, z);
}

SamplingMask full_mask(std::size_t ny, std::size_t nz) {
    if (ny == 0 || nz == 0) throw std::invalid_argument("mask dims must be positive");
    SamplingMask m;
    m.ny = ny;
    m.nz = nz;
    m.target_accel = 1.0;
    m.bits.assign(ny * nz, 1);
    return m;
}

SamplingMask poisson_disk_mask(std::size_t ny, std::size_t nz, double target_accel, CalibRegion calib,
                               std::uint64_t seed) {
    if (ny == 0 || nz == 0) throw std::invalid_argument("poisson_disk_mask: dims must be positive");
    if (!(target_accel >= 1.0)) throw std::invalid_argument("poisson_disk_mask: target acceleration must be >= 1");
    if (calib.cy > ny || calib.cz > nz) throw std::invalid_argument("poisson_disk_mask: calibration region exceeds dims");

    const double total = static_cast<double>(ny * nz);
    const double lo_ok = target_accel * (1.0 - kAccelTolerance);
    const double hi_ok = target_accel * (1.0 + kAccelTolerance);

    if (lo_ok <= 1.0) {
        SamplingMask m = full_mask(ny, nz);
        m.target_accel = target_accel;
        m.calib = calib;
        m.seed = seed;
        return m;
    }

    const double calib_count = static_cast<double>(calib.cy * calib.cz);
    if (calib_count > 0 && total / calib_count < lo_ok) {
        std::ostringstream os;
        os << "poisson_disk_mask: calibration region " << calib.cy << "x" << calib.cz << " alone limits acceleration to "
           << total / calib_count << ", below target " << target_accel;
        throw std::runtime_error(os.str());
    }

    SamplingMask m;
    m.ny = ny;
    m.nz = nz;
    m.target_accel = target_accel;
    m.calib = calib;
    m.seed = seed;

    // accel(r) grows with r but jumps where r crosses a lattice distance; bisect, and remember
    // the densest-side trial closest to the target in case the tolerance band sits in a jump.
    double r_lo = 0.5;
    double r_hi = static_cast<double>(std::max(ny, nz)) * 2.0;
    double best_err = std::numeric_limits<double>::infinity();
    std::vector<std::uint8_t> dense_bits;
    double dense_r = 0.0;
    double dense_accel = 0.0;
    for (int it = 0; it < kMaxRadiusBisections; ++it) {
        const double r = 0.5 * (r_lo + r_hi);
        std::mt19937_64 rng(seed);
        auto bits = snap_to_lattice(ny, nz, calib, r, bridson_points(ny, nz, r, rng));
        const auto count = static_cast<double>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
        const double accel = count > 0 ? total / count : std::numeric_limits<double>::infinity();
        if (accel >= lo_ok && accel <= hi_ok) {
            m.bits = std::move(bits);
            m.min_distance = r;
            return m;
        }
        best_err = std::min(best_err, std::abs(accel - target_accel));
        if (accel < target_accel) {
            if (accel > dense_accel) {
                dense_accel = accel;
                dense_r = r;
                dense_bits = bits;
            }
            r_lo = r;
        } else {
            r_hi = r;
        }
    }

    // Thin the over-dense set at random down to the sample budget. Removing samples cannot
    // shorten any pairwise distance, so the radius guarantee carries over.
    if (!dense_bits.empty()) {
        const auto budget = std::max(static_cast<std::size_t>(std::llround(total / target_accel)),
                                     static_cast<std::size_t>(calib_count));
        std::vector<std::size_t> free_cells;
        for (std::size_t z = 0; z < nz; ++z)
            for (std::size_t y = 0; y < ny; ++y)
                if (dense_bits[y + ny * z] && !inside_calib(ny, nz, calib, y, z)) free_cells.push_back(y + ny * z);
        const std::size_t count = free_cells.size() + static_cast<std::size_t>(calib_count);
        if (count > budget) {
            std::mt19937_64 rng(seed ^ 0x7417a11e5ULL);
            std::shuffle(free_cells.begin(), free_cells.end(), rng);
            for (std::size_t i = 0; i < count - budget && i < free_cells.size(); ++i) dense_bits[free_cells[i]] = 0;
        }
        const auto kept = static_cast<double>(std::count(dense_bits.begin(), dense_bits.end(), std::uint8_t{1}));
        const double accel = total / kept;
        if (accel >= lo_ok && accel <= hi_ok) {
            m.bits = std::move(dense_bits);
            m.min_distance = dense_r;
            return m;
        }
        best_err = std::min(best_err, std::abs(accel - target_accel));
    }
    std::ostringstream os;
    os << "poisson_disk_mask: could not reach acceleration " << target_accel << " within 5% on " << ny << "x" << nz
       << " (closest error " << best_err << ")";
    throw std::runtime_error(os.str());
}

ComplexVolume apply_mask(const ComplexVolume& kspace, const SamplingMask& mask) {
    const Dims& d = kspace.dims();
    if (d.ny != mask.ny || d.nz != mask.nz || mask.bits.size() != mask.ny * mask.nz)
        throw std::invalid_argument("apply_mask: mask dims do not match k-space (ny, nz)");
    ComplexVolume out = kspace;
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y) {
            if (mask.at(y, z)) continue;
            for (std::size_t x = 0; x < d.nx; ++x) out(x, y, z) = {};
        }
    return out;
}

double mask_acceleration(const SamplingMask& mask) {
    if (mask.bits.empty()) throw std::invalid_argument("mask_acceleration: empty mask");
    const std::size_t n = mask.popcount();
    if (n == 0) throw std::invalid_argument("mask_acceleration: mask has no samples");
    return static_cast<double>(mask.ny * mask.nz) / static_cast<double>(n);
}

namespace {
constexpr char kMaskMagic[] = "MASK1";
}

void write_mask(const std::filesystem::path& path, const SamplingMask& mask) {
    detail::BinaryWriter w(path);
    w.magic({kMaskMagic, sizeof kMaskMagic});
    w.put<std::uint64_t>(mask.ny);
    w.put<std::uint64_t>(mask.nz);
    w.put<double>(mask.target_accel);
    w.put<std::uint64_t>(mask.seed);
    std::vector<std::uint8_t> b(mask.bits.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = mask.bits[i] ? 1 : 0;
    w.bytes(b.data(), b.size());
}

SamplingMask read_mask(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    r.expect_magic({kMaskMagic, sizeof kMaskMagic});
    SamplingMask m;
    m.ny = r.get<std::uint64_t>();
    m.nz = r.get<std::uint64_t>();
    m.target_accel = r.get<double>();
    m.seed = r.get<std::uint64_t>();
    if (m.ny == 0 || m.nz == 0) throw std::runtime_error(path.string() + ": zero mask dims");
    m.bits.resize(m.ny * m.nz);
    r.bytes(m.bits.data(), m.bits.size());
    r.expect_eof();
    for (auto b : m.bits)
        if (b > 1) throw std::runtime_error(path.string() + ": mask bytes must be 0 or 1");
    return m;
}

}  // namespace mplex
