#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "mplex/phantom.hpp"

namespace mplex {

/// Parsed manifest.json of a scan directory.
///
/// Schema: {dims, voxel_size_mm, fas_deg[], tes_ms[], tr_ms, b0_t, n_coils, noise_sigma, seed,
/// phantom{kind, seed}, files{role -> relative path}}. Roles are "kspace/<key>", "image/<key>",
/// "masked_kspace/<key>", "tissue/<name>" and "mask".
struct ScanManifest {
    Dims dims;
    VoxelGeometry geometry;
    Protocol protocol;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    PhantomKind phantom_kind = PhantomKind::ellipsoids;
    std::uint64_t phantom_seed = 0;
    std::map<std::string, std::string> files;

    [[nodiscard]] std::size_t volume_count() const noexcept {
        return protocol.fas_deg.size() * protocol.tes_ms.size() * protocol.n_coils;
    }
    [[nodiscard]] std::size_t index(const EchoKey& k) const noexcept {
        return (k.fa * protocol.tes_ms.size() + k.echo) * protocol.n_coils + k.coil;
    }
    [[nodiscard]] EchoKey key(std::size_t index) const noexcept;
};

inline constexpr const char* kManifestName = "manifest.json";
inline const char* const kTissueNames[] = {"m0", "t1_ms", "t2star_ms", "chi_ppm", "phi0_rad"};

/// Writes manifest.json plus one .cvol per volume and one .rvol per tissue map into `dir`
/// (created if missing).
void write_dataset(const std::filesystem::path& dir, const ScanDataset& ds);

[[nodiscard]] ScanManifest read_manifest(const std::filesystem::path& dir);

/// Lazy access to a scan directory; volumes are read on demand.
class DatasetReader {
public:
    explicit DatasetReader(std::filesystem::path dir);

    [[nodiscard]] const ScanManifest& manifest() const noexcept { return manifest_; }
    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }
    [[nodiscard]] std::filesystem::path file(const std::string& role) const;
    [[nodiscard]] bool has(const std::string& role) const { return manifest_.files.count(role) != 0; }

    [[nodiscard]] ComplexVolume load_kspace(const EchoKey& key) const;
    [[nodiscard]] ComplexVolume load_image(const EchoKey& key) const;
    [[nodiscard]] TissueMaps load_tissue() const;
    [[nodiscard]] std::optional<SamplingMask> load_mask() const;

private:
    std::filesystem::path dir_;
    ScanManifest manifest_;
};

/// Loads everything (k-space, images, tissue, mask) into memory.
[[nodiscard]] ScanDataset read_dataset(const std::filesystem::path& dir);

}  // namespace mplex
