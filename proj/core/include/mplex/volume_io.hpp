#pragma once

#include <filesystem>

#include "mplex/volume.hpp"

namespace mplex {

// .cvol: "CVOL1\0", u32 ndim (3), u64 nx, ny, nz, then float32 (re, im) pairs, x fastest.
// .rvol: "RVOL1\0", same header, one float32 per voxel.
// Samples are narrowed to float32 on write.

void write_cvol(const std::filesystem::path& path, const ComplexVolume& vol);
[[nodiscard]] ComplexVolume read_cvol(const std::filesystem::path& path, Domain domain = Domain::image);

void write_rvol(const std::filesystem::path& path, const RealVolume& vol);
[[nodiscard]] RealVolume read_rvol(const std::filesystem::path& path);

}  // namespace mplex
