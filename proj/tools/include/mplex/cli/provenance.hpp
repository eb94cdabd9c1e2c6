#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace mplex::cli {

inline constexpr const char* kStageManifestName = "stage.json";

[[nodiscard]] std::string sha256_hex(std::string_view bytes);
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

/// Record written next to every stage's artifacts.
///
/// Layout: {stage, params, seeds, inputs{name -> {path, digest}}, outputs{relpath -> sha256},
/// digest, wall_time_s, info}. `digest` hashes the sorted output list and identifies the
/// artifact set; consumers record it as their input hash. Wall time is the only field that
/// differs between otherwise identical runs.
struct StageManifest {
    std::string stage;
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json info = nlohmann::json::object();
    std::map<std::string, std::string> outputs;
    std::string digest;
    double wall_time_s = 0.0;
};

/// Hashes every regular file under `dir` (except the manifest itself), fills `outputs` and
/// `digest`, and writes dir/stage.json.
void write_stage_manifest(const std::filesystem::path& dir, StageManifest& m);

/// A stage directory whose files were checked against its manifest.
struct VerifiedStage {
    std::filesystem::path dir;
    StageManifest manifest;
};

/// Reads dir/stage.json and re-hashes every listed output. Throws with the offending path on a
/// missing manifest, a missing file, a hash mismatch, or a stage name other than `expect_stage`
/// (when non-empty).
[[nodiscard]] VerifiedStage verify_stage(const std::filesystem::path& dir, const std::string& expect_stage = {});

/// Input entry for a consumer's manifest.
[[nodiscard]] nlohmann::json input_ref(const VerifiedStage& s);

/// Creates `dir`. An existing non-empty directory is an error unless `force`, in which case it
/// is emptied first.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

}  // namespace mplex::cli
