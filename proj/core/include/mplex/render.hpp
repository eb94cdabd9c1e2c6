#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mplex/volume.hpp"

namespace mplex {

enum class SliceAxis { x, y, z };

[[nodiscard]] SliceAxis slice_axis_from_string(const std::string& s);

/// Row-major 2D slice. Axis z gives an axial (x, y) plane with width nx and height ny.
struct Slice2d {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;
};

/// Throws std::out_of_range for an index beyond the axis extent.
[[nodiscard]] Slice2d extract_slice(const RealVolume& vol, SliceAxis axis, std::size_t index);

struct Gray8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

/// Min-max windowing to [0, 255]. A constant slice maps to uniform gray 128.
[[nodiscard]] Gray8 window_minmax(const Slice2d& slice);

/// |a - b| * scale / full_scale clamped to [0, 1], then mapped to [0, 255]. `full_scale` is the
/// reference dynamic range; identical inputs give a black image.
[[nodiscard]] Gray8 error_image(const Slice2d& a, const Slice2d& b, double scale, double full_scale);

/// max - min of a volume, or 1 for a constant volume.
[[nodiscard]] double dynamic_range(const RealVolume& vol);

}  // namespace mplex
