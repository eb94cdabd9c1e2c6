#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mplex/cli/config.hpp"
#include "mplex/render.hpp"

namespace mplex::cli {

struct Context {
    RunConfig config;
    bool force = false;
    std::ostream* out = nullptr;
};

enum class ReconMode { zerofill, cascade };
[[nodiscard]] std::string to_string(ReconMode m);
[[nodiscard]] ReconMode recon_mode_from_string(const std::string& s);

// Each stage writes into its own output directory and finishes with stage.json.

/// <out>/{train,test}/scanNNN dataset directories plus splits.json.
void cmd_phantom(const Context& ctx, const std::filesystem::path& out);

/// <out>/mask.mask for config.mask.accel on the configured phase-encode plane.
void cmd_mask(const Context& ctx, const std::filesystem::path& out);

/// <out>/model.cnet and train_log.csv, trained on the given split of a phantom stage.
void cmd_train(const Context& ctx, const std::filesystem::path& data, const std::filesystem::path& mask_dir,
               const std::filesystem::path& out, const std::string& split = "train");

/// <out>/<scan>/<fa*_echo*_coil*>.cvol, one job per volume on a pool of config.workers threads.
/// Without a mask the data are treated as fully sampled.
void cmd_recon(const Context& ctx, ReconMode mode, const std::filesystem::path& data,
               const std::optional<std::filesystem::path>& mask_dir,
               const std::optional<std::filesystem::path>& model_dir, const std::filesystem::path& out,
               const std::string& split = "test");

/// <out>/<scan>/<map>.rvol and maps-manifest.json from a recon stage or a phantom stage split.
void cmd_maps(const Context& ctx, const std::filesystem::path& input, const std::filesystem::path& out,
              const std::string& split = "test");

/// <out>/{metrics.csv, summary.csv, metrics.json}. `ref` is a phantom stage (ground truth of
/// `split`) or a recon stage; `test` is a recon stage of the same dataset. Map RMSE rows are added
/// when both map stages are given.
void cmd_eval(const Context& ctx, const std::filesystem::path& ref, const std::filesystem::path& test,
              const std::optional<std::filesystem::path>& ref_maps,
              const std::optional<std::filesystem::path>& test_maps, const std::filesystem::path& out,
              const std::string& split = "test");

struct RenderRequest {
    std::filesystem::path volume;
    std::optional<std::filesystem::path> against;
    SliceAxis axis = SliceAxis::z;
    std::optional<std::size_t> slice;  // middle of the axis when unset
    double error_scale = 50.0;
    std::filesystem::path out;
};

/// Grayscale PNG of one slice (min-max windowed), or of |volume - against| * error_scale
/// relative to the dynamic range of `against`.
void cmd_render(const Context& ctx, const RenderRequest& req);

/// Parses argv-style arguments (without the program name) and runs one subcommand. Returns the
/// process exit code; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mplex::cli
