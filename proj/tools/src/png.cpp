#include "mplex/cli/png.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace mplex::cli {

namespace {

struct File {
    std::FILE* f;
    ~File() {
        if (f) std::fclose(f);
    }
};

}  // namespace

void write_png(const std::filesystem::path& path, const Gray8& image) {
    if (image.pixels.size() != image.width * image.height || image.width == 0)
        throw std::invalid_argument("write_png: pixel buffer does not match the image size");
    File file{std::fopen(path.c_str(), "wb")};
    if (!file.f) throw std::runtime_error("cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng failed writing " + path.string());
    }
    png_init_io(png, file.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < image.height; ++r)
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + r * image.width));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Gray8 read_png(const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw std::runtime_error("cannot read PNG " + path.string() + ": " + img.message);
    img.format = PNG_FORMAT_GRAY;
    Gray8 out{img.width, img.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(img))};
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw std::runtime_error("cannot decode PNG " + path.string() + ": " + img.message);
    }
    return out;
}

}  // namespace mplex::cli
