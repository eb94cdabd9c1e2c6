#pragma once

#include <filesystem>

#include "mplex/render.hpp"

namespace mplex::cli {

/// 8-bit grayscale PNG.
void write_png(const std::filesystem::path& path, const Gray8& image);
[[nodiscard]] Gray8 read_png(const std::filesystem::path& path);

}  // namespace mplex::cli
