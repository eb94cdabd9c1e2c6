// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//
//   mplex_acceptance [--work-dir DIR] [--keep] [N ...]
//
// With no numbers every criterion runs. Criteria 6 and 8 drive the full command-line pipeline.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mplex/cli/commands.hpp"
#include "mplex/cli/provenance.hpp"
#include "mplex/fft.hpp"
#include "mplex/metrics.hpp"
#include "mplex/param_maps.hpp"
#include "mplex/phantom.hpp"
#include "mplex/sampling.hpp"
#include "mplex/train.hpp"

namespace fs = std::filesystem;
using namespace mplex;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ComplexVolume random_image(const Dims& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    ComplexVolume v(d, Domain::image);
    for (auto& x : v.data()) x = {n(rng), n(rng)};
    return v;
}

RealVolume random_real(const Dims& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RealVolume v(d);
    for (auto& x : v.data()) x = u(rng);
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity(const fs::path&) {
    const Dims d{6, 6, 6};
    SamplingMask mask = full_mask(6, 6);
    std::mt19937_64 rng(101);
    for (auto& b : mask.bits) b = static_cast<std::uint8_t>(rng() % 3 == 0);
    mask.bits[6 * 3 + 3] = 1;
    const ComplexVolume target = random_image(d, 102);
    const GradCheckSample sample{apply_mask(fft3_centered(target), mask), mask, target};
    const GradCheckReport r = grad_check(CascadeModel::initialize(CascadeConfig::desk(), 103), sample, 1e-5);
    return {r.max_rel_error < 1e-4 && r.checked > 0,
            fmt("max_rel_error=%.3g", r.max_rel_error) + " over " + std::to_string(r.checked) +
                " parameters (worst " + r.worst_layer + ")"};
}

Outcome dc_exactness(const fs::path&) {
    const Dims d{16, 16, 16};
    const SamplingMask mask = poisson_disk_mask(16, 16, 3.0, {4, 4}, 201);
    const ComplexVolume k = apply_mask(fft3_centered(random_image(d, 202)), mask);
    double worst = 0.0;
    for (std::uint64_t seed : {203, 204, 205}) {
        const ComplexVolume out = fft3_centered(cascade_forward(CascadeModel::initialize(CascadeConfig::desk(), seed), k, mask));
        for (std::size_t z = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y) {
                if (!mask.at(y, z)) continue;
                for (std::size_t x = 0; x < d.nx; ++x) {
                    const std::size_t i = d.index(x, y, z);
                    worst = std::max(worst, std::abs(out[i] - k[i]) / std::max(std::abs(k[i]), 1e-300));
                }
            }
    }
    return {worst <= 1e-10, fmt("worst relative bin error=%.3g", worst) + fmt(" at accel %.3f", mask_acceleration(mask))};
}

Outcome fft_core(const fs::path&) {
    double worst_rt = 0.0, worst_parseval = 0.0;
    for (const Dims d : {Dims{12, 10, 6}, Dims{7, 9, 5}, Dims{48, 48, 16}, Dims{11, 13, 17}}) {
        const ComplexVolume x = random_image(d, d.voxels());
        const ComplexVolume k = fft3_centered(x);
        const ComplexVolume back = ifft3_centered(k);
        double diff = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) diff += std::norm(back[i] - x[i]);
        worst_rt = std::max(worst_rt, std::sqrt(diff / energy(x)));
        worst_parseval = std::max(worst_parseval, std::abs(energy(k) - energy(x)) / energy(x));
    }
    return {worst_rt < 1e-6 && worst_parseval < 1e-6,
            fmt("round trip=%.3g", worst_rt) + fmt(", Parseval=%.3g", worst_parseval)};
}

// Smallest distance between two sampled cells outside the calibration block.
double brute_min_distance(const SamplingMask& m) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t z = 0; z < m.nz; ++z)
        for (std::size_t y = 0; y < m.ny; ++y)
            if (m.at(y, z) && !m.in_calibration(y, z)) pts.emplace_back(double(y), double(z));
    double best = INFINITY;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            best = std::min(best, std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second));
    return best;
}

Outcome poisson_masks(const fs::path& work) {
    struct Plane {
        std::size_t ny, nz;
        CalibRegion calib;
    };
    double worst_accel = 0.0;
    bool distance_ok = true, deterministic = true;
    std::size_t n = 0;
    for (const Plane p : {Plane{48, 16, {8, 4}}, Plane{64, 64, {16, 12}}, Plane{96, 48, {24, 16}}})
        for (double target : {3.0, 5.0})
            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                const SamplingMask m = poisson_disk_mask(p.ny, p.nz, target, p.calib, seed);
                worst_accel = std::max(worst_accel, std::abs(mask_acceleration(m) - target) / target);
                distance_ok = distance_ok && m.min_distance > 0.0 && brute_min_distance(m) >= m.min_distance;
                const fs::path a = work / "a.mask", b = work / "b.mask";
                write_mask(a, m);
                write_mask(b, poisson_disk_mask(p.ny, p.nz, target, p.calib, seed));
                deterministic = deterministic && slurp(a) == slurp(b);
                ++n;
            }
    return {worst_accel <= 0.05 && distance_ok && deterministic,
            std::to_string(n) + " masks, worst accel deviation " + fmt("%.2f%%", 100.0 * worst_accel) +
                ", min-distance " + (distance_ok ? "ok" : "VIOLATED") + ", determinism " +
                (deterministic ? "byte-exact" : "BROKEN")};
}

Outcome parametric_oracles(const fs::path&) {
    const VoxelGeometry geom{0.69, 0.69, 2.0};
    const Dims d{48, 48, 16};
    const TissueMaps tissue = make_phantom(PhantomKind::ellipsoids, d, geom, 301);
    Protocol protocol = Protocol::desk_default();
    protocol.n_coils = 1;
    const ScanDataset scan = simulate_scan(tissue, protocol, 0.0, 302);
    const std::size_t ne = protocol.tes_ms.size();

    std::vector<std::vector<RealVolume>> mags(2);
    for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t e = 0; e < ne; ++e) mags[f].push_back(magnitude(scan.images[f * ne + e]));

    double t2_worst = 0.0;
    for (T2StarMethod method : {T2StarMethod::loglinear, T2StarMethod::nlls}) {
        T2StarOptions opt;
        opt.method = method;
        const T2StarMap m = fit_t2star(mags[1], protocol.tes_ms, opt);
        for (std::size_t i = 0; i < m.t2star_ms.size(); ++i)
            if (tissue.m0[i] > 0.0)
                t2_worst = std::max(t2_worst, std::abs(m.t2star_ms[i] - tissue.t2star_ms[i]) / tissue.t2star_ms[i]);
    }

    std::vector<ComplexVolume> fa2(scan.images.begin() + ne, scan.images.begin() + 2 * ne);
    const RealVolume field = estimate_fieldmap(fa2, protocol.tes_ms);
    const RealVolume field_true = field_from_susceptibility(tissue.chi_ppm, geom, protocol.b0_t);
    double field_worst = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i)
        if (tissue.m0[i] > 0.0) field_worst = std::max(field_worst, std::abs(field[i] - field_true[i]));

    const Dims qd{32, 32, 32};
    const VoxelGeometry iso{1.0, 1.0, 1.0};
    RealVolume chi(qd);
    MaskVolume all(qd);
    for (auto& v : all.data()) v = 1;
    for (std::size_t z = 0; z < qd.nz; ++z)
        for (std::size_t y = 0; y < qd.ny; ++y)
            for (std::size_t x = 0; x < qd.nx; ++x)
                if (std::hypot(double(x) - 16.0, double(y) - 16.0, double(z) - 16.0) <= 5.0) chi(x, y, z) = 0.1;
    const QsmResult q = qsm_invert(field_from_susceptibility(chi, iso, 3.0), all, iso, 3.0);
    double sum = 0.0;
    std::size_t inside = 0;
    for (std::size_t i = 0; i < chi.size(); ++i)
        if (chi[i] > 0.0) {
            sum += q.chi_ppm[i];
            ++inside;
        }
    const double qsm_err = std::abs(sum / double(inside) - 0.1) / 0.1;

    double composite_worst = 0.0;
    for (auto [group, f] : {std::pair{FaGroup::fa1, std::size_t{0}}, std::pair{FaGroup::fa2, std::size_t{1}}}) {
        const RealVolume c = composite_average(mags, group);
        for (std::size_t i = 0; i < c.size(); ++i) {
            double s = 0.0;
            for (std::size_t e = 0; e < ne; ++e) s += mags[f][e][i];
            composite_worst = std::max(composite_worst, std::abs(c[i] - s / double(ne)));
        }
    }

    return {t2_worst < 0.01 && field_worst < 0.1 && qsm_err <= 0.15 && composite_worst <= 1e-12,
            fmt("T2* worst=%.3g%%", 100.0 * t2_worst) + fmt(", field map worst=%.3g Hz", field_worst) +
                fmt(", QSM sphere mean error=%.2f%%", 100.0 * qsm_err) + fmt(", composite worst=%.3g", composite_worst)};
}

Outcome metric_sanity(const fs::path&) {
    const Dims d{32, 32, 6};
    const RealVolume a = random_real(d, 701);
    const double s = ssim(a, a), r = rmse(a, a);

    std::mt19937_64 rng(702);
    std::normal_distribution<double> n(0.0, 1.0);
    RealVolume unit(d);
    for (auto& v : unit.data()) v = n(rng);
    bool monotone = true;
    double prev = INFINITY;
    for (double sigma : {0.001, 0.01, 0.03, 0.1, 0.3}) {
        RealVolume noisy = a;
        for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += sigma * unit[i];
        const double p = psnr(a, noisy);
        monotone = monotone && p < prev;
        prev = p;
    }

    double rmse_worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const RealVolume b = random_real(d, 710 + seed);
        long double acc = 0.0L;
        for (std::size_t i = 0; i < a.size(); ++i) acc += (long double)(a[i] - b[i]) * (a[i] - b[i]);
        const double oracle = std::sqrt(double(acc / a.size()));
        rmse_worst = std::max(rmse_worst, std::abs(rmse(a, b) - oracle) / oracle);
    }
    return {s == 1.0 && r == 0.0 && monotone && rmse_worst <= 1e-12,
            fmt("SSIM(a,a)=%.17g", s) + fmt(", RMSE(a,a)=%g", r) + ", PSNR monotone " + (monotone ? "yes" : "NO") +
                fmt(", RMSE oracle worst=%.3g", rmse_worst)};
}

// ---------------------------------------------------------------------------
// Pipeline criteria

void mplex(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    if (cli::run(args, out, err) != 0) {
        std::string cmd = "mplex";
        for (const auto& a : args) cmd += " " + a;
        throw std::runtime_error(cmd + " failed: " + err.str());
    }
}

fs::path write_config(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream(path) << j.dump(2);
    return path;
}

// Mean echo-image PSNR of one eval stage.
double echo_psnr(const fs::path& eval_dir) {
    const json j = json::parse(slurp(eval_dir / "metrics.json"));
    for (const auto& a : j["aggregates"])
        if (a["kind"] == "echo") return a["psnr_db"]["mean"].get<double>();
    throw std::runtime_error("no echo aggregate in " + eval_dir.string());
}

Outcome learning_benefit(const fs::path& work) {
    // Desk configuration: 48x48x16, 8 train + 2 test scans, 4 coils, desk cascade.
    const std::string cfg = write_config(work / "config.json", json{{"seed", 2024}, {"workers", 4}}).string();
    auto p = [&](const std::string& s) { return (work / s).string(); };
    mplex({"--config", cfg, "phantom", "--out", p("phantom")});
    std::map<std::string, double> psnr_db;
    for (const std::string accel : {"3", "5"}) {
        const std::string m = "mask" + accel, model = "model" + accel;
        mplex({"--config", cfg, "mask", "--accel", accel, "--out", p(m)});
        mplex({"--config", cfg, "train", "--data", p("phantom"), "--mask", p(m), "--out", p(model)});
        for (const std::string mode : {"zerofill", "cascade"}) {
            const std::string tag = mode + accel;
            std::vector<std::string> recon{"--config", cfg, "recon", "--mode", mode, "--data", p("phantom"), "--mask", p(m), "--out",
                                           p("recon_" + tag)};
            if (mode == "cascade") recon.insert(recon.end(), {"--model", p(model)});
            mplex(recon);
            mplex({"--config", cfg, "eval", "--ref", p("phantom"), "--test", p("recon_" + tag), "--out", p("eval_" + tag)});
            psnr_db[tag] = echo_psnr(work / ("eval_" + tag));
        }
    }
    const double gain3 = psnr_db["cascade3"] - psnr_db["zerofill3"];
    const double gain5 = psnr_db["cascade5"] - psnr_db["zerofill5"];
    return {gain3 >= 2.0 && psnr_db["cascade5"] < psnr_db["cascade3"],
            fmt("3X cascade %.2f dB", psnr_db["cascade3"]) + fmt(" vs zero-filled %.2f dB", psnr_db["zerofill3"]) +
                fmt(" (gain %+.2f dB)", gain3) + fmt("; 5X cascade %.2f dB", psnr_db["cascade5"]) +
                fmt(" vs zero-filled %.2f dB", psnr_db["zerofill5"]) + fmt(" (gain %+.2f dB)", gain5)};
}

// The training log minus its wall-clock column.
std::string without_wall_time(const fs::path& log) {
    std::istringstream in(slurp(log));
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

Outcome determinism(const fs::path& work) {
    const json base{{"seed", 99},
                    {"phantom", {{"dims", {24, 24, 8}}, {"n_train", 2}, {"n_test", 2}}},
                    {"mask", {{"calib", {6, 2}}}},
                    {"train", {{"steps_per_epoch", 20}, {"crop_length", 12}}}};
    auto pipeline = [&](const std::string& workers) {
        const fs::path root = work / ("w" + workers);
        const std::string cfg = write_config(root / "config.json", base).string();
        auto p = [&](const char* s) { return (root / s).string(); };
        const std::vector<std::string> g{"--config", cfg, "--workers", workers};
        auto run = [&](std::vector<std::string> args) {
            args.insert(args.begin(), g.begin(), g.end());
            mplex(args);
        };
        run({"phantom", "--out", p("phantom")});
        run({"mask", "--out", p("mask")});
        run({"train", "--data", p("phantom"), "--mask", p("mask"), "--out", p("model")});
        run({"recon", "--mode", "cascade", "--data", p("phantom"), "--mask", p("mask"), "--model", p("model"), "--out",
             p("recon")});
        run({"maps", "--input", p("phantom"), "--out", p("maps_ref")});
        run({"maps", "--input", p("recon"), "--out", p("maps_recon")});
        run({"eval", "--ref", p("phantom"), "--test", p("recon"), "--ref-maps", p("maps_ref"), "--test-maps",
             p("maps_recon"), "--out", p("eval")});
        return root;
    };
    const fs::path a = pipeline("1"), b = pipeline("4");

    std::size_t compared = 0, differing = 0;
    for (const char* stage : {"recon", "eval", "model", "maps_recon"})
        for (const auto& e : fs::recursive_directory_iterator(a / stage)) {
            if (!e.is_regular_file() || e.path().filename() == cli::kStageManifestName) continue;
            const fs::path rel = fs::relative(e.path(), a);
            ++compared;
            if (!fs::exists(b / rel)) ++differing;
            else if (e.path().filename() == "train_log.csv") differing += without_wall_time(e.path()) != without_wall_time(b / rel);
            else differing += slurp(e.path()) != slurp(b / rel);
        }
    const bool csv_present = fs::exists(a / "eval" / "metrics.csv") && fs::exists(a / "eval" / "summary.csv");
    return {differing == 0 && compared > 0 && csv_present,
            std::to_string(compared) + " files compared between 1 and 4 workers, " + std::to_string(differing) +
                " differ"};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "mplex_acceptance";
    bool keep = false;
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work-dir" && i + 1 < argc) work = argv[++i];
        else if (a == "--keep") keep = true;
        else only.insert(std::stoi(a));
    }

    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome(const fs::path&)> check;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient fidelity", gradient_fidelity}, {2, "hard DC exactness", dc_exactness},
        {3, "FFT core", fft_core},                   {4, "Poisson-disk masks", poisson_masks},
        {5, "parametric oracles", parametric_oracles}, {6, "end-to-end learning benefit", learning_benefit},
        {7, "metric sanity", metric_sanity},         {8, "determinism", determinism},
    };

    fs::remove_all(work);
    int failures = 0;
    for (const Criterion& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const fs::path dir = work / ("criterion" + std::to_string(c.id));
        fs::create_directories(dir);
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check(dir);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail
                  << fmt(" [%.1f s]", secs) << std::endl;
    }
    if (!keep) fs::remove_all(work);
    return failures == 0 ? 0 : 1;
}
