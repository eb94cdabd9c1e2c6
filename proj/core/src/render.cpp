#include "mplex/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mplex {

SliceAxis slice_axis_from_string(const std::string& s) {
    if (s == "x") return SliceAxis::x;
    if (s == "y") return SliceAxis::y;
    if (s == "z") return SliceAxis::z;
    throw std::invalid_argument("unknown slice axis '" + s + "' (expected x|y|z)");
}

Slice2d extract_slice(const RealVolume& vol, SliceAxis axis, std::size_t index) {
    const Dims& d = vol.dims();
    const std::size_t extent = axis == SliceAxis::x ? d.nx : axis == SliceAxis::y ? d.ny : d.nz;
    if (index >= extent)
        throw std::out_of_range("slice index " + std::to_string(index) + " out of range [0, " + std::to_string(extent) +
                                ")");
    Slice2d s;
    switch (axis) {
        case SliceAxis::z:
            s.width = d.nx;
            s.height = d.ny;
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x) s.values.push_back(vol(x, y, index));
            break;
        case SliceAxis::y:
            s.width = d.nx;
            s.height = d.nz;
            for (std::size_t z = 0; z < d.nz; ++z)
                for (std::size_t x = 0; x < d.nx; ++x) s.values.push_back(vol(x, index, z));
            break;
        case SliceAxis::x:
            s.width = d.ny;
            s.height = d.nz;
            for (std::size_t z = 0; z < d.nz; ++z)
                for (std::size_t y = 0; y < d.ny; ++y) s.values.push_back(vol(index, y, z));
            break;
    }
    return s;
}

namespace {
std::uint8_t to_byte(double unit) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}
}  // namespace

Gray8 window_minmax(const Slice2d& slice) {
    Gray8 g{slice.width, slice.height, std::vector<std::uint8_t>(slice.values.size(), 128)};
    if (slice.values.empty()) return g;
    const auto [lo, hi] = std::minmax_element(slice.values.begin(), slice.values.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return g;
    for (std::size_t i = 0; i < slice.values.size(); ++i) g.pixels[i] = to_byte((slice.values[i] - *lo) / range);
    return g;
}

Gray8 error_image(const Slice2d& a, const Slice2d& b, double scale, double full_scale) {
    if (a.width != b.width || a.height != b.height) throw std::invalid_argument("error_image: slice shapes differ");
    if (!(full_scale > 0.0)) throw std::invalid_argument("error_image: full scale must be positive");
    Gray8 g{a.width, a.height, std::vector<std::uint8_t>(a.values.size())};
    for (std::size_t i = 0; i < a.values.size(); ++i)
        g.pixels[i] = to_byte(std::abs(a.values[i] - b.values[i]) * scale / full_scale);
    return g;
}

double dynamic_range(const RealVolume& vol) {
    if (vol.size() == 0) return 1.0;
    const auto [lo, hi] = std::minmax_element(vol.data().begin(), vol.data().end());
    const double r = *hi - *lo;
    return r > 0.0 ? r : 1.0;
}

}  // namespace mplex
