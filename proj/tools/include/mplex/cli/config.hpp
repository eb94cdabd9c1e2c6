#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mplex/cascade.hpp"
#include "mplex/metrics.hpp"
#include "mplex/param_maps.hpp"
#include "mplex/phantom.hpp"
#include "mplex/train.hpp"

namespace mplex::cli {

struct PhantomSection {
    PhantomKind kind = PhantomKind::ellipsoids;
    Dims dims{48, 48, 16};
    VoxelGeometry voxel{0.69, 0.69, 2.0};
    double noise_sigma = 0.001;
    std::size_t n_train = 8;
    std::size_t n_test = 2;
};

struct MaskSection {
    double accel = 3.0;
    CalibRegion calib{8, 4};
};

/// Every tunable of the pipeline. Stage seeds are derived from `seed`.
struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    PhantomSection phantom;
    Protocol protocol = Protocol::desk_default();
    MaskSection mask;
    CascadeConfig cascade = CascadeConfig::desk();
    TrainConfig train = default_train();
    MapOptions maps;
    SsimOptions ssim;
    double error_scale = 50.0;

    void validate() const;

    [[nodiscard]] static TrainConfig default_train() {
        TrainConfig t;
        t.steps_per_epoch = 300;
        return t;
    }
};

/// Parses a config document on top of the defaults. Unknown keys anywhere are rejected with
/// their JSON path.
[[nodiscard]] RunConfig parse_config(const nlohmann::json& j);
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);
[[nodiscard]] nlohmann::json to_json(const RunConfig& c);

// Stage seeds.
[[nodiscard]] std::uint64_t phantom_seed(const RunConfig& c, std::size_t scan_index);
[[nodiscard]] std::uint64_t noise_seed(const RunConfig& c, std::size_t scan_index);
[[nodiscard]] std::uint64_t mask_seed(const RunConfig& c, double accel);
[[nodiscard]] std::uint64_t train_seed(const RunConfig& c);

}  // namespace mplex::cli
