#include "mplex/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <stdexcept>

#include "mplex/cli/png.hpp"
#include "mplex/cli/provenance.hpp"
#include "mplex/dataset.hpp"
#include "mplex/fft.hpp"
#include "mplex/parallel.hpp"
#include "mplex/volume_io.hpp"

namespace mplex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::ostream& log(const Context& ctx) {
    static std::ofstream null;
    return ctx.out ? *ctx.out : null;
}

std::string scan_name(std::size_t i) {
    std::ostringstream os;
    os << "scan" << std::setw(3) << std::setfill('0') << i;
    return os.str();
}

json protocol_json(const ScanManifest& m) {
    return {{"dims", {m.dims.nx, m.dims.ny, m.dims.nz}},
            {"voxel_size_mm", {m.geometry.dx, m.geometry.dy, m.geometry.dz}},
            {"fas_deg", m.protocol.fas_deg},
            {"tes_ms", m.protocol.tes_ms},
            {"tr_ms", m.protocol.tr_ms},
            {"b0_t", m.protocol.b0_t},
            {"n_coils", m.protocol.n_coils}};
}

struct ScanGeometry {
    Dims dims;
    VoxelGeometry geometry;
    Protocol protocol;

    static ScanGeometry from_json(const json& j) {
        ScanGeometry g;
        const auto d = j.at("dims").get<std::array<std::size_t, 3>>();
        const auto v = j.at("voxel_size_mm").get<std::array<double, 3>>();
        g.dims = {d[0], d[1], d[2]};
        g.geometry = {v[0], v[1], v[2]};
        g.protocol.fas_deg = j.at("fas_deg").get<std::vector<double>>();
        g.protocol.tes_ms = j.at("tes_ms").get<std::vector<double>>();
        g.protocol.tr_ms = j.at("tr_ms").get<double>();
        g.protocol.b0_t = j.at("b0_t").get<double>();
        g.protocol.n_coils = j.at("n_coils").get<std::size_t>();
        return g;
    }
    [[nodiscard]] std::size_t volume_count() const {
        return protocol.fas_deg.size() * protocol.tes_ms.size() * protocol.n_coils;
    }
    [[nodiscard]] EchoKey key(std::size_t i) const {
        EchoKey k;
        k.coil = i % protocol.n_coils;
        i /= protocol.n_coils;
        k.echo = i % protocol.tes_ms.size();
        k.fa = i / protocol.tes_ms.size();
        return k;
    }
};

std::vector<std::string> split_scans(const VerifiedStage& phantom, const std::string& split) {
    std::ifstream in(phantom.dir / "splits.json");
    if (!in) throw std::runtime_error("missing " + (phantom.dir / "splits.json").string());
    const json j = json::parse(in);
    if (!j.contains(split)) throw std::invalid_argument("unknown split '" + split + "' in " + phantom.dir.string());
    auto scans = j.at(split).get<std::vector<std::string>>();
    if (scans.empty()) throw std::invalid_argument("split '" + split + "' of " + phantom.dir.string() + " is empty");
    return scans;
}

/// Complex echo images of a set of scans: ground truth from a phantom stage, or a recon stage.
struct EchoSource {
    VerifiedStage stage;
    std::string lineage;  // digest of the phantom stage the images derive from
    std::string method;
    double accel = 1.0;
    ScanGeometry geom;
    std::vector<std::string> scans;
    std::function<ComplexVolume(std::size_t scan, const EchoKey&)> load;
};

EchoSource open_source(const fs::path& dir, const std::string& split) {
    EchoSource s{verify_stage(dir), {}, {}, 1.0, {}, {}, {}};
    if (s.stage.manifest.stage == "phantom") {
        s.lineage = s.stage.manifest.digest;
        s.method = "reference";
        s.scans = split_scans(s.stage, split);
        auto readers = std::make_shared<std::vector<DatasetReader>>();
        for (const auto& name : s.scans) readers->emplace_back(dir / name);
        s.geom = ScanGeometry::from_json(protocol_json(readers->front().manifest()));
        s.load = [readers](std::size_t scan, const EchoKey& k) { return (*readers)[scan].load_image(k); };
    } else if (s.stage.manifest.stage == "recon") {
        const json& info = s.stage.manifest.info;
        s.lineage = s.stage.manifest.inputs.at("data").at("digest").get<std::string>();
        s.method = s.stage.manifest.params.at("mode").get<std::string>();
        s.accel = info.at("target_accel").get<double>();
        s.geom = ScanGeometry::from_json(info.at("protocol"));
        s.scans = info.at("scans").get<std::vector<std::string>>();
        const std::vector<std::string> scans = s.scans;
        s.load = [dir, scans](std::size_t scan, const EchoKey& k) {
            return read_cvol(dir / scans[scan] / (echo_key_name(k) + ".cvol"));
        };
    } else {
        throw std::invalid_argument(dir.string() + " is a '" + s.stage.manifest.stage +
                                    "' stage; expected a phantom or recon stage");
    }
    return s;
}

std::vector<ComplexVolume> coil_images(const EchoSource& src, std::size_t scan, std::size_t fa, std::size_t echo) {
    std::vector<ComplexVolume> coils;
    for (std::size_t c = 0; c < src.geom.protocol.n_coils; ++c) coils.push_back(src.load(scan, {fa, echo, c}));
    return coils;
}

}  // namespace

std::string to_string(ReconMode m) { return m == ReconMode::zerofill ? "zerofill" : "cascade"; }

ReconMode recon_mode_from_string(const std::string& s) {
    if (s == "zerofill") return ReconMode::zerofill;
    if (s == "cascade") return ReconMode::cascade;
    throw std::invalid_argument("unknown recon mode '" + s + "' (expected zerofill|cascade)");
}

void cmd_phantom(const Context& ctx, const fs::path& out) {
    const auto t0 = Clock::now();
    const RunConfig& c = ctx.config;
    prepare_output_dir(out, ctx.force);

    StageManifest m;
    m.stage = "phantom";
    m.params = to_json(c);
    json splits{{"train", json::array()}, {"test", json::array()}};
    const std::size_t total = c.phantom.n_train + c.phantom.n_test;
    for (std::size_t i = 0; i < total; ++i) {
        const bool is_train = i < c.phantom.n_train;
        const std::string rel =
            std::string(is_train ? "train/" : "test/") + scan_name(is_train ? i : i - c.phantom.n_train);
        const TissueMaps tissue = make_phantom(c.phantom.kind, c.phantom.dims, c.phantom.voxel, phantom_seed(c, i));
        const ScanDataset ds = simulate_scan(tissue, c.protocol, c.phantom.noise_sigma, noise_seed(c, i),
                                             std::nullopt, c.workers);
        write_dataset(out / rel, ds);
        splits[is_train ? "train" : "test"].push_back(rel);
        m.seeds[rel] = {{"phantom", phantom_seed(c, i)}, {"noise", noise_seed(c, i)}};
        log(ctx) << "phantom: " << rel << " (" << ds.volume_count() << " k-space volumes)\n";
    }
    {
        std::ofstream s(out / "splits.json");
        s << splits.dump(2) << '\n';
    }
    m.info = {{"n_scans", total}, {"volumes_per_scan", c.protocol.fas_deg.size() * c.protocol.tes_ms.size() * c.protocol.n_coils}};
    m.wall_time_s = seconds_since(t0);
    write_stage_manifest(out, m);
    const Dims& d = c.phantom.dims;
    log(ctx) << "phantom: wrote " << total << " scans (" << c.phantom.n_train << " train, " << c.phantom.n_test
             << " test), dims " << d.nx << "x" << d.ny << "x" << d.nz << ", " << c.protocol.fas_deg.size() << " FAs x "
             << c.protocol.tes_ms.size() << " echoes x " << c.protocol.n_coils << " coils, to " << out.string() << "\n";
}

void cmd_mask(const Context& ctx, const fs::path& out) {
    const auto t0 = Clock::now();
    const RunConfig& c = ctx.config;
    prepare_output_dir(out, ctx.force);
    const std::uint64_t seed = mask_seed(c, c.mask.accel);
    const SamplingMask mask = poisson_disk_mask(c.phantom.dims.ny, c.phantom.dims.nz, c.mask.accel, c.mask.calib, seed);
    write_mask(out / "mask.mask", mask);

    StageManifest m;
    m.stage = "mask";
    m.params = {{"accel", c.mask.accel}, {"calib", {c.mask.calib.cy, c.mask.calib.cz}},
                {"ny", mask.ny}, {"nz", mask.nz}};
    m.seeds = {{"mask", seed}};
    m.info = {{"achieved_accel", mask_acceleration(mask)}, {"popcount", mask.popcount()},
              {"min_distance", mask.min_distance}};
    m.wall_time_s = seconds_since(t0);
    write_stage_manifest(out, m);
    log(ctx) << "mask: target " << c.mask.accel << "X, achieved " << mask_acceleration(mask) << "X ("
             << mask.popcount() << " of " << mask.ny * mask.nz << " lines), min distance " << mask.min_distance << "\n";
}

void cmd_train(const Context& ctx, const fs::path& data, const fs::path& mask_dir, const fs::path& out,
               const std::string& split) {
    const auto t0 = Clock::now();
    const VerifiedStage phantom = verify_stage(data, "phantom");
    const VerifiedStage mask_stage = verify_stage(mask_dir, "mask");
    const SamplingMask mask = read_mask(mask_dir / "mask.mask");
    prepare_output_dir(out, ctx.force);

    std::vector<fs::path> dirs;
    for (const auto& s : split_scans(phantom, split)) dirs.push_back(data / s);
    const std::vector<TrainingSample> samples = training_samples(dirs, mask);

    TrainConfig tc = ctx.config.train;
    tc.seed = train_seed(ctx.config);
    std::ostream& os = log(ctx);
    const TrainResult r = train(samples, ctx.config.cascade, tc, [&](const TrainLogEntry& e) {
        if (e.step % 50 == 0) os << "train: step " << e.step << " loss " << e.loss << " (" << e.wall_ms / 1000.0 << " s)\n";
    });
    write_cascade(out / "model.cnet", r.model);
    write_train_log(out / "train_log.csv", r.log);

    StageManifest m;
    m.stage = "train";
    json cfg = to_json(ctx.config);
    m.params = {{"cascade", cfg["cascade"]}, {"train", cfg["train"]}, {"split", split}};
    m.seeds = {{"train", tc.seed}};
    m.inputs = {{"data", input_ref(phantom)}, {"mask", input_ref(mask_stage)}};
    m.info = {{"samples", samples.size()},
              {"steps", r.log.size()},
              {"final_loss", r.log.empty() ? 0.0 : r.log.back().loss},
              {"target_accel", mask.target_accel}};
    m.wall_time_s = seconds_since(t0);
    write_stage_manifest(out, m);
    os << "train: " << r.log.size() << " steps on " << samples.size() << " volumes in " << m.wall_time_s << " s\n";
}

void cmd_recon(const Context& ctx, ReconMode mode, const fs::path& data, const std::optional<fs::path>& mask_dir,
               const std::optional<fs::path>& model_dir, const fs::path& out, const std::string& split) {
    const auto t0 = Clock::now();
    const VerifiedStage phantom = verify_stage(data, "phantom");
    const std::vector<std::string> scans = split_scans(phantom, split);
    std::vector<DatasetReader> readers;
    for (const auto& s : scans) readers.emplace_back(data / s);
    const ScanManifest& first = readers.front().manifest();

    StageManifest m;
    m.stage = "recon";
    m.inputs["data"] = input_ref(phantom);

    SamplingMask mask = full_mask(first.dims.ny, first.dims.nz);
    if (mask_dir) {
        const VerifiedStage ms = verify_stage(*mask_dir, "mask");
        mask = read_mask(*mask_dir / "mask.mask");
        m.inputs["mask"] = input_ref(ms);
    }
    CascadeModel model;
    if (mode == ReconMode::cascade) {
        if (!model_dir) throw std::invalid_argument("recon: --model is required for cascade mode");
        const VerifiedStage ts = verify_stage(*model_dir, "train");
        model = read_cascade(*model_dir / "model.cnet");
        m.inputs["model"] = input_ref(ts);
    }
    for (const auto& r : readers)
        if (r.manifest().dims != first.dims || r.manifest().protocol != first.protocol)
            throw std::invalid_argument("recon: scans in split '" + split + "' do not share one protocol");
    if (mask.ny != first.dims.ny || mask.nz != first.dims.nz)
        throw std::invalid_argument("recon: mask plane " + std::to_string(mask.ny) + "x" + std::to_string(mask.nz) +
                                    " does not match the data");

    prepare_output_dir(out, ctx.force);
    for (const auto& s : scans) fs::create_directories(out / s);

    const std::size_t per_scan = first.volume_count();
    const std::size_t jobs = per_scan * scans.size();
    const auto tj = Clock::now();
    parallel_for(jobs, ctx.config.workers, [&](std::size_t j) {
        const std::size_t scan = j / per_scan;
        const EchoKey key = first.key(j % per_scan);
        const ComplexVolume k = apply_mask(readers[scan].load_kspace(key), mask);
        const ComplexVolume img =
            mode == ReconMode::cascade ? cascade_reconstruct(model, k, mask) : ifft3_centered(k);
        write_cvol(out / scans[scan] / (echo_key_name(key) + ".cvol"), img);
    });
    const double recon_s = seconds_since(tj);

    m.params = {{"mode", to_string(mode)}, {"split", split}, {"workers", ctx.config.workers}};
    m.info = {{"scans", scans},
              {"protocol", protocol_json(first)},
              {"target_accel", mask.target_accel},
              {"achieved_accel", mask_acceleration(mask)},
              {"volumes", jobs},
              {"recon_seconds", recon_s}};
    m.wall_time_s = seconds_since(t0);
    write_stage_manifest(out, m);
    log(ctx) << "recon: " << to_string(mode) << " of " << jobs << " volumes (" << scans.size() << " scans, "
             << mask_acceleration(mask) << "X) in " << recon_s << " s on " << ctx.config.workers << " worker(s)\n";
}

void cmd_maps(const Context& ctx, const fs::path& input, const fs::path& out, const std::string& split) {
    const auto t0 = Clock::now();
    const EchoSource src = open_source(input, split);
    const Protocol& p = src.geom.protocol;
    if (p.fas_deg.size() != 2) throw std::invalid_argument("maps: need exactly two flip angles");
    prepare_output_dir(out, ctx.force);

    const MapOptions& opt = ctx.config.maps;
    std::vector<json> qsm_info(src.scans.size());
    parallel_for(src.scans.size(), ctx.config.workers, [&](std::size_t s) {
        std::vector<std::vector<RealVolume>> mags(2);
        std::vector<ComplexVolume> phase;
        for (std::size_t fa = 0; fa < 2; ++fa)
            for (std::size_t e = 0; e < p.tes_ms.size(); ++e) {
                std::vector<ComplexVolume> coils = coil_images(src, s, fa, e);
                mags[fa].push_back(rss_combine(coils));
                if (fa == 1) phase.push_back(std::move(coils.front()));
            }
        const ParametricMaps maps =
            compute_parametric_maps(mags, phase, p.tes_ms, src.geom.geometry, p.b0_t, opt);
        const fs::path dir = out / src.scans[s];
        fs::create_directories(dir);
        for (const char* name : kMapNames) write_rvol(dir / (std::string(name) + ".rvol"), map_by_name(maps, name));
        RealVolume mask(maps.brain_mask.dims());
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = maps.brain_mask[i];
        write_rvol(dir / "brain_mask.rvol", mask);
    });

    const json cfg = to_json(ctx.config);
    const json params{{"source", src.method},
                      {"split", split},
                      {"maps", cfg["maps"]},
                      {"tes_ms", p.tes_ms},
                      {"t2star_fa_deg", p.fas_deg[1]},
                      {"phase_source", "FA2 echo train, coil 0"},
                      {"b0_t", p.b0_t}};
    {
        std::ofstream mm(out / "maps-manifest.json");
        mm << json{{"maps", kMapNames}, {"scans", src.scans}, {"params", params}}.dump(2) << '\n';
    }
    StageManifest m;
    m.stage = "maps";
    m.params = params;
    m.inputs = {{"source", input_ref(src.stage)}};
    m.info = {{"scans", src.scans}, {"lineage", src.lineage}, {"method", src.method}, {"accel", src.accel}};
    m.wall_time_s = seconds_since(t0);
    write_stage_manifest(out, m);
    log(ctx) << "maps: " << src.scans.size() << " scans from " << src.method << " images in " << m.wall_time_s << " s\n";
}

void cmd_eval(const Context& ctx, const fs::path& ref_dir, const fs::path& test_dir,
              const std::optional<fs::path>& ref_maps, const std::optional<fs::path>& test_maps, const fs::path& out,
              const std::string& split) {
    const auto t0 = Clock::now();
    const EchoSource ref = open_source(ref_dir, split);
    const EchoSource test = open_source(test_dir, split);
    if (ref.lineage != test.lineage)
        throw std::runtime_error("eval: mixed provenance, " + test_dir.string() + " derives from dataset " +
                                 test.lineage.substr(0, 12) + " but " + ref_dir.string() + " from " +
                                 ref.lineage.substr(0, 12));
    std::vector<std::size_t> ref_index;
    for (const auto& name : test.scans) {
        const auto it = std::find(ref.scans.begin(), ref.scans.end(), name);
        if (it == ref.scans.end())
            throw std::runtime_error("eval: scan " + name + " of " + test_dir.string() + " has no reference");
        ref_index.push_back(static_cast<std::size_t>(it - ref.scans.begin()));
    }
    if (ref.geom.dims != test.geom.dims || ref.geom.protocol != test.geom.protocol)
        throw std::runtime_error("eval: reference and test protocols differ");
    if (ref_maps.has_value() != test_maps.has_value())
        throw std::invalid_argument("eval: --ref-maps and --test-maps go together");

    StageManifest m;
    m.stage = "eval";
    m.inputs = {{"ref", input_ref(ref.stage)}, {"test", input_ref(test.stage)}};

    const Protocol& p = test.geom.protocol;
    const std::size_t n_fa = p.fas_deg.size(), n_echo = p.tes_ms.size();
    const std::size_t per_scan = n_fa * n_echo;
    std::vector<MetricRow> rows(test.scans.size() * per_scan);
    parallel_for(rows.size(), ctx.config.workers, [&](std::size_t j) {
        const std::size_t s = j / per_scan, fa = (j % per_scan) / n_echo, echo = j % n_echo;
        const RealVolume r = rss_combine(coil_images(ref, ref_index[s], fa, echo));
        const RealVolume t = rss_combine(coil_images(test, s, fa, echo));
        MetricRow& row = rows[j];
        row.dataset = test.scans[s];
        row.fa = fa;
        row.echo = echo;
        row.accel = test.accel;
        row.method = test.method;
        row.psnr_db = psnr(r, t);
        row.ssim = ssim(r, t, ctx.config.ssim);
        row.rmse = rmse(r, t);
    });
    MetricReport report;
    for (auto& row : rows) report.add(std::move(row));

    if (ref_maps) {
        const VerifiedStage rm = verify_stage(*ref_maps, "maps");
        const VerifiedStage tm = verify_stage(*test_maps, "maps");
        if (rm.manifest.inputs.at("source").at("digest") != ref.stage.manifest.digest)
            throw std::runtime_error("eval: mixed provenance, " + ref_maps->string() + " was not computed from " +
                                     ref_dir.string());
        if (tm.manifest.inputs.at("source").at("digest") != test.stage.manifest.digest)
            throw std::runtime_error("eval: mixed provenance, " + test_maps->string() + " was not computed from " +
                                     test_dir.string());
        for (const auto& scan : test.scans) {
            const RealVolume mask_r = read_rvol(*ref_maps / scan / "brain_mask.rvol");
            MaskVolume mask(mask_r.dims());
            for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask_r[i] != 0.0;
            for (const char* name : kMapNames) {
                const std::string file = std::string(name) + ".rvol";
                MetricRow row;
                row.dataset = scan;
                row.kind = name;
                row.accel = test.accel;
                row.method = test.method;
                row.rmse = rmse(read_rvol(*ref_maps / scan / file), read_rvol(*test_maps / scan / file), &mask);
                report.add(row);
            }
        }
        m.inputs["ref_maps"] = input_ref(rm);
        m.inputs["test_maps"] = input_ref(tm);
    }

    prepare_output_dir(out, ctx.force);
    report.write(out);
    const json cfg = to_json(ctx.config);
    m.params = {{"metrics", cfg["metrics"]}, {"split", split}};
    m.info = {{"rows", report.rows().size()}, {"method", test.method}, {"accel", test.accel}};
    m.wall_time_s = seconds_since(t0);
    write_stage_manifest(out, m);

    std::ostream& os = log(ctx);
    for (const MetricAggregate& a : report.aggregates()) {
        os << "eval: " << a.method << " " << a.kind << " " << a.accel << "X";
        if (a.psnr_db) os << "  PSNR " << format_metric(a.psnr_db->mean) << " (" << format_metric(a.psnr_db->std) << ")";
        if (a.ssim) os << "  SSIM " << format_metric(a.ssim->mean) << " (" << format_metric(a.ssim->std) << ")";
        if (a.rmse) os << "  RMSE " << format_metric(a.rmse->mean) << " (" << format_metric(a.rmse->std) << ")";
        os << "\n";
    }
}

void cmd_render(const Context& ctx, const RenderRequest& req) {
    auto load = [](const fs::path& path) {
        if (path.extension() == ".cvol") return magnitude(read_cvol(path));
        if (path.extension() == ".rvol") return read_rvol(path);
        throw std::invalid_argument("render: " + path.string() + " is neither .cvol nor .rvol");
    };
    const RealVolume vol = load(req.volume);
    const Dims& d = vol.dims();
    const std::size_t extent = req.axis == SliceAxis::x ? d.nx : req.axis == SliceAxis::y ? d.ny : d.nz;
    const std::size_t index = req.slice.value_or(extent / 2);
    if (index >= extent)
        throw std::out_of_range("render: slice " + std::to_string(index) + " out of range [0, " +
                                std::to_string(extent) + ")");
    const Slice2d a = extract_slice(vol, req.axis, index);

    Gray8 image;
    if (req.against) {
        const RealVolume ref = load(*req.against);
        if (ref.dims() != d) throw std::invalid_argument("render: volumes differ in size");
        image = error_image(a, extract_slice(ref, req.axis, index), req.error_scale, dynamic_range(ref));
    } else {
        image = window_minmax(a);
    }
    if (req.out.has_parent_path()) fs::create_directories(req.out.parent_path());
    write_png(req.out, image);
    log(ctx) << "render: " << req.out.string() << " (" << image.width << "x" << image.height << ")\n";
}

}  // namespace mplex::cli
