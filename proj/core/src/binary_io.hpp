#pragma once

// Little-endian binary helpers shared by the on-disk formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mplex::detail {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

inline constexpr std::size_t kMagicSize = 6;

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    }

    void magic(std::string_view m) { bytes(m.data(), kMagicSize); }

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(&value, sizeof(T));
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw std::runtime_error("write failed: " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open " + path.string());
    }

    void expect_magic(std::string_view m) {
        std::array<char, kMagicSize> buf{};
        bytes(buf.data(), kMagicSize);
        if (std::memcmp(buf.data(), m.data(), kMagicSize) != 0)
            throw std::runtime_error(path_.string() + ": bad magic, expected " + std::string(m.substr(0, 5)));
    }

    template <typename T>
    T get() {
        T value{};
        bytes(&value, sizeof(T));
        return value;
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) throw std::runtime_error(path_.string() + ": truncated file");
    }

    void expect_eof() {
        if (in_.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path_.string() + ": trailing bytes");
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
};

}  // namespace mplex::detail
