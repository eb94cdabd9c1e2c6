#include "mplex/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace mplex::cli {

using nlohmann::json;

namespace {

void expect_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
}

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    expect_object(j, where);
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!ok.count(key)) throw std::invalid_argument("config: unknown key '" + where + "." + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument("config: bad value for '" + where + "." + key + "'");
    }
}

template <class T, std::size_t N>
void read_array(const json& j, const char* key, std::array<T, N>& out, const std::string& where) {
    if (!j.contains(key)) return;
    const json& a = j.at(key);
    if (!a.is_array() || a.size() != N)
        throw std::invalid_argument("config: '" + where + "." + key + "' must be an array of " + std::to_string(N));
    for (std::size_t i = 0; i < N; ++i) out[i] = a[i].get<T>();
}

}  // namespace

void RunConfig::validate() const {
    validate_dims(phantom.dims);
    phantom.voxel.validate();
    if (!(phantom.noise_sigma >= 0.0)) throw std::invalid_argument("config: phantom.noise_sigma must be >= 0");
    if (phantom.n_train + phantom.n_test == 0) throw std::invalid_argument("config: no scans requested");
    protocol.validate();
    if (!(mask.accel >= 1.0)) throw std::invalid_argument("config: mask.accel must be >= 1");
    if (mask.calib.cy > phantom.dims.ny || mask.calib.cz > phantom.dims.nz)
        throw std::invalid_argument("config: mask.calib exceeds the phase-encode plane");
    cascade.validate();
    train.validate();
    if (maps.qsm.lambda < 0.0) throw std::invalid_argument("config: maps.lambda must be >= 0");
    if (!(maps.mask_threshold_fraction > 0.0 && maps.mask_threshold_fraction < 1.0))
        throw std::invalid_argument("config: maps.mask_threshold_fraction must lie in (0, 1)");
    if (ssim.window % 2 == 0 || ssim.window == 0) throw std::invalid_argument("config: metrics.ssim_window must be odd");
    if (!(error_scale > 0.0)) throw std::invalid_argument("config: render.error_scale must be > 0");
}

RunConfig parse_config(const json& j) {
    RunConfig c;
    reject_unknown(j, "$", {"seed", "workers", "phantom", "protocol", "mask", "cascade", "train", "maps", "metrics",
                            "render"});
    read(j, "seed", c.seed, "$");
    read(j, "workers", c.workers, "$");

    if (j.contains("phantom")) {
        const json& p = j["phantom"];
        reject_unknown(p, "phantom", {"kind", "dims", "voxel_size_mm", "noise_sigma", "n_train", "n_test"});
        if (p.contains("kind")) c.phantom.kind = phantom_kind_from_string(p["kind"].get<std::string>());
        std::array<std::size_t, 3> d{c.phantom.dims.nx, c.phantom.dims.ny, c.phantom.dims.nz};
        read_array(p, "dims", d, "phantom");
        c.phantom.dims = {d[0], d[1], d[2]};
        std::array<double, 3> v{c.phantom.voxel.dx, c.phantom.voxel.dy, c.phantom.voxel.dz};
        read_array(p, "voxel_size_mm", v, "phantom");
        c.phantom.voxel = {v[0], v[1], v[2]};
        read(p, "noise_sigma", c.phantom.noise_sigma, "phantom");
        read(p, "n_train", c.phantom.n_train, "phantom");
        read(p, "n_test", c.phantom.n_test, "phantom");
    }
    if (j.contains("protocol")) {
        const json& p = j["protocol"];
        reject_unknown(p, "protocol", {"fas_deg", "tes_ms", "tr_ms", "b0_t", "n_coils"});
        read(p, "fas_deg", c.protocol.fas_deg, "protocol");
        read(p, "tes_ms", c.protocol.tes_ms, "protocol");
        read(p, "tr_ms", c.protocol.tr_ms, "protocol");
        read(p, "b0_t", c.protocol.b0_t, "protocol");
        read(p, "n_coils", c.protocol.n_coils, "protocol");
    }
    if (j.contains("mask")) {
        const json& m = j["mask"];
        reject_unknown(m, "mask", {"accel", "calib"});
        read(m, "accel", c.mask.accel, "mask");
        std::array<std::size_t, 2> cal{c.mask.calib.cy, c.mask.calib.cz};
        read_array(m, "calib", cal, "mask");
        c.mask.calib = {cal[0], cal[1]};
    }
    if (j.contains("cascade")) {
        const json& m = j["cascade"];
        reject_unknown(m, "cascade", {"n_blocks", "convs_per_block", "features", "kernel"});
        read(m, "n_blocks", c.cascade.n_blocks, "cascade");
        read(m, "convs_per_block", c.cascade.convs_per_block, "cascade");
        read(m, "features", c.cascade.features, "cascade");
        read_array(m, "kernel", c.cascade.kernel, "cascade");
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown(t, "train", {"learning_rate", "beta1", "beta2", "epsilon", "epochs", "steps_per_epoch",
                                    "batch_size", "crop_length"});
        read(t, "learning_rate", c.train.learning_rate, "train");
        read(t, "beta1", c.train.beta1, "train");
        read(t, "beta2", c.train.beta2, "train");
        read(t, "epsilon", c.train.epsilon, "train");
        read(t, "epochs", c.train.epochs, "train");
        read(t, "steps_per_epoch", c.train.steps_per_epoch, "train");
        read(t, "batch_size", c.train.batch_size, "train");
        read(t, "crop_length", c.train.crop_length, "train");
    }
    if (j.contains("maps")) {
        const json& m = j["maps"];
        reject_unknown(m, "maps", {"t2star_method", "t2star_threshold_fraction", "t2_min_ms", "t2_max_ms",
                                   "t2star_max_iterations", "lambda", "cg_tolerance", "cg_max_iterations",
                                   "mask_threshold_fraction"});
        if (m.contains("t2star_method"))
            c.maps.t2star.method = t2star_method_from_string(m["t2star_method"].get<std::string>());
        read(m, "t2star_threshold_fraction", c.maps.t2star.threshold_fraction, "maps");
        read(m, "t2_min_ms", c.maps.t2star.t2_min_ms, "maps");
        read(m, "t2_max_ms", c.maps.t2star.t2_max_ms, "maps");
        read(m, "t2star_max_iterations", c.maps.t2star.max_iterations, "maps");
        read(m, "lambda", c.maps.qsm.lambda, "maps");
        read(m, "cg_tolerance", c.maps.qsm.tolerance, "maps");
        read(m, "cg_max_iterations", c.maps.qsm.max_iterations, "maps");
        read(m, "mask_threshold_fraction", c.maps.mask_threshold_fraction, "maps");
    }
    if (j.contains("metrics")) {
        const json& m = j["metrics"];
        reject_unknown(m, "metrics", {"ssim_window", "ssim_sigma", "ssim_k1", "ssim_k2"});
        read(m, "ssim_window", c.ssim.window, "metrics");
        read(m, "ssim_sigma", c.ssim.sigma, "metrics");
        read(m, "ssim_k1", c.ssim.k1, "metrics");
        read(m, "ssim_k2", c.ssim.k2, "metrics");
    }
    if (j.contains("render")) {
        const json& r = j["render"];
        reject_unknown(r, "render", {"error_scale"});
        read(r, "error_scale", c.error_scale, "render");
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

json to_json(const RunConfig& c) {
    const auto& p = c.phantom;
    return {
        {"seed", c.seed},
        {"workers", c.workers},
        {"phantom",
         {{"kind", to_string(p.kind)},
          {"dims", {p.dims.nx, p.dims.ny, p.dims.nz}},
          {"voxel_size_mm", {p.voxel.dx, p.voxel.dy, p.voxel.dz}},
          {"noise_sigma", p.noise_sigma},
          {"n_train", p.n_train},
          {"n_test", p.n_test}}},
        {"protocol",
         {{"fas_deg", c.protocol.fas_deg},
          {"tes_ms", c.protocol.tes_ms},
          {"tr_ms", c.protocol.tr_ms},
          {"b0_t", c.protocol.b0_t},
          {"n_coils", c.protocol.n_coils}}},
        {"mask", {{"accel", c.mask.accel}, {"calib", {c.mask.calib.cy, c.mask.calib.cz}}}},
        {"cascade",
         {{"n_blocks", c.cascade.n_blocks},
          {"convs_per_block", c.cascade.convs_per_block},
          {"features", c.cascade.features},
          {"kernel", c.cascade.kernel}}},
        {"train",
         {{"learning_rate", c.train.learning_rate},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"epsilon", c.train.epsilon},
          {"epochs", c.train.epochs},
          {"steps_per_epoch", c.train.steps_per_epoch},
          {"batch_size", c.train.batch_size},
          {"crop_length", c.train.crop_length}}},
        {"maps",
         {{"t2star_method", to_string(c.maps.t2star.method)},
          {"t2star_threshold_fraction", c.maps.t2star.threshold_fraction},
          {"t2_min_ms", c.maps.t2star.t2_min_ms},
          {"t2_max_ms", c.maps.t2star.t2_max_ms},
          {"t2star_max_iterations", c.maps.t2star.max_iterations},
          {"lambda", c.maps.qsm.lambda},
          {"cg_tolerance", c.maps.qsm.tolerance},
          {"cg_max_iterations", c.maps.qsm.max_iterations},
          {"mask_threshold_fraction", c.maps.mask_threshold_fraction}}},
        {"metrics",
         {{"ssim_window", c.ssim.window},
          {"ssim_sigma", c.ssim.sigma},
          {"ssim_k1", c.ssim.k1},
          {"ssim_k2", c.ssim.k2}}},
        {"render", {{"error_scale", c.error_scale}}},
    };
}

std::uint64_t phantom_seed(const RunConfig& c, std::size_t scan_index) { return derive_seed(c.seed, 1, scan_index); }
std::uint64_t noise_seed(const RunConfig& c, std::size_t scan_index) { return derive_seed(c.seed, 2, scan_index); }
std::uint64_t mask_seed(const RunConfig& c, double accel) {
    return derive_seed(c.seed, 3, static_cast<std::uint64_t>(std::llround(accel * 1000.0)));
}
std::uint64_t train_seed(const RunConfig& c) { return derive_seed(c.seed, 4); }

}  // namespace mplex::cli
