#include "mplex/volume_io.hpp"

#include <vector>

#include "binary_io.hpp"

namespace mplex {

namespace {

constexpr char kCvolMagic[] = "CVOL1";  // trailing NUL completes the 6-byte magic
constexpr char kRvolMagic[] = "RVOL1";

void write_header(detail::BinaryWriter& w, std::string_view magic, const Dims& d) {
    w.magic(std::string_view(magic.data(), detail::kMagicSize));
    w.put<std::uint32_t>(3);
    w.put<std::uint64_t>(d.nx);
    w.put<std::uint64_t>(d.ny);
    w.put<std::uint64_t>(d.nz);
}

Dims read_header(detail::BinaryReader& r, std::string_view magic) {
    r.expect_magic(std::string_view(magic.data(), detail::kMagicSize));
    const auto ndim = r.get<std::uint32_t>();
    if (ndim != 3) throw std::runtime_error(r.path().string() + ": expected ndim 3, got " + std::to_string(ndim));
    Dims d;
    d.nx = r.get<std::uint64_t>();
    d.ny = r.get<std::uint64_t>();
    d.nz = r.get<std::uint64_t>();
    validate_dims(d);
    return d;
}

}  // namespace

void write_cvol(const std::filesystem::path& path, const ComplexVolume& vol) {
    detail::BinaryWriter w(path);
    write_header(w, {kCvolMagic, sizeof kCvolMagic}, vol.dims());
    std::vector<float> buf(2 * vol.size());
    for (std::size_t i = 0; i < vol.size(); ++i) {
        buf[2 * i] = static_cast<float>(vol[i].real());
        buf[2 * i + 1] = static_cast<float>(vol[i].imag());
    }
    w.bytes(buf.data(), buf.size() * sizeof(float));
}

ComplexVolume read_cvol(const std::filesystem::path& path, Domain domain) {
    detail::BinaryReader r(path);
    const Dims d = read_header(r, {kCvolMagic, sizeof kCvolMagic});
    std::vector<float> buf(2 * d.voxels());
    r.bytes(buf.data(), buf.size() * sizeof(float));
    r.expect_eof();
    std::vector<cplx> data(d.voxels());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = {buf[2 * i], buf[2 * i + 1]};
    return {d, domain, std::move(data)};
}

void write_rvol(const std::filesystem::path& path, const RealVolume& vol) {
    detail::BinaryWriter w(path);
    write_header(w, {kRvolMagic, sizeof kRvolMagic}, vol.dims());
    std::vector<float> buf(vol.size());
    for (std::size_t i = 0; i < vol.size(); ++i) buf[i] = static_cast<float>(vol[i]);
    w.bytes(buf.data(), buf.size() * sizeof(float));
}

RealVolume read_rvol(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    const Dims d = read_header(r, {kRvolMagic, sizeof kRvolMagic});
    std::vector<float> buf(d.voxels());
    r.bytes(buf.data(), buf.size() * sizeof(float));
    r.expect_eof();
    return {d, std::vector<double>(buf.begin(), buf.end())};
}

}  // namespace mplex
