#include <doctest.h>

#include <fstream>
#include <sstream>

#include "mplex/cli/commands.hpp"
#include "mplex/cli/png.hpp"
#include "mplex/cli/provenance.hpp"
#include "mplex/dataset.hpp"
#include "mplex/volume_io.hpp"
#include "test_support.hpp"

using namespace mplex;
using namespace mplex::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result mplex_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Small but complete pipeline configuration.
fs::path write_small_config(const fs::path& dir, std::uint64_t seed = 1) {
    const json j{{"seed", seed},
                 {"phantom", {{"dims", {12, 12, 8}}, {"n_train", 2}, {"n_test", 1}}},
                 {"protocol", {{"n_coils", 2}}},
                 {"mask", {{"calib", {4, 2}}}},
                 {"train", {{"steps_per_epoch", 4}, {"crop_length", 6}}}};
    const fs::path p = dir / ("cfg" + std::to_string(seed) + ".json");
    std::ofstream(p) << j.dump();
    return p;
}

// Every file under `a` except stage manifests has an identical twin under `b`.
void check_same_files(const fs::path& a, const fs::path& b) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file() || e.path().filename() == kStageManifestName) continue;
        const fs::path rel = fs::relative(e.path(), a);
        CAPTURE(rel.string());
        REQUIRE(fs::exists(b / rel));
        CHECK(slurp(e.path()) == slurp(b / rel));
        ++n;
    }
    CHECK(n > 0);
}

RealVolume volume_of(const Dims& d, double v) {
    RealVolume r(d);
    for (auto& x : r.data()) x = v;
    return r;
}

}  // namespace

TEST_CASE("config: desk defaults") {
    const RunConfig c = parse_config(json::object());
    CHECK(c.phantom.dims == Dims{48, 48, 16});
    CHECK(c.mask.calib.cy == 8);
    CHECK(c.mask.calib.cz == 4);
    CHECK(c.phantom.noise_sigma == doctest::Approx(0.001));
    CHECK(c.cascade == CascadeConfig::desk());
    CHECK(c.protocol == Protocol::desk_default());
    CHECK(c.error_scale == 50.0);
}

TEST_CASE("config: unknown keys are rejected with their path") {
    for (const char* doc : {R"({"sed": 1})", R"({"phantom": {"dimz": [1, 2, 3]}})", R"({"maps": {"lambd": 0.1}})",
                            R"({"train": {"lr": 0.1}})"}) {
        CAPTURE(doc);
        CHECK_THROWS_AS((void)parse_config(json::parse(doc)), std::invalid_argument);
    }
    try {
        (void)parse_config(json::parse(R"({"cascade": {"blocks": 3}})"));
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("cascade.blocks") != std::string::npos);
    }
    CHECK_THROWS((void)parse_config(json::parse(R"({"phantom": {"dims": [4, 4]}})")));
    CHECK_THROWS((void)parse_config(json::parse(R"({"train": {"learning_rate": -1}})")));
}

TEST_CASE("config: serialization round trip") {
    RunConfig c;
    c.seed = 77;
    c.phantom.dims = {20, 18, 10};
    c.maps.qsm.lambda = 0.02;
    c.train.crop_length = 16;
    const RunConfig back = parse_config(to_json(c));
    CHECK(to_json(back) == to_json(c));
}

TEST_CASE("sha256 matches a known vector") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("png round trip") {
    test::TempDir dir("png");
    const Gray8 g{3, 2, {0, 10, 20, 30, 40, 255}};
    write_png(dir.path() / "a.png", g);
    const Gray8 back = read_png(dir.path() / "a.png");
    CHECK(back.width == 3);
    CHECK(back.height == 2);
    CHECK(back.pixels == g.pixels);
}

TEST_CASE("phantom: 56 k-space volumes per scan and --dims reaches the manifest") {
    test::TempDir dir("cli_phantom");
    const Result r = mplex_run({"phantom", "--out", (dir.path() / "ph").string(), "--dims", "48", "48", "16",
                                "--n-train", "1", "--n-test", "0"});
    REQUIRE(r.code == 0);
    const ScanManifest m = read_manifest(dir.path() / "ph" / "train" / "scan000");
    CHECK(m.dims == Dims{48, 48, 16});
    std::size_t kspace = 0;
    for (const auto& e : fs::directory_iterator(dir.path() / "ph" / "train" / "scan000" / "kspace"))
        kspace += e.path().extension() == ".cvol";
    CHECK(kspace == 2 * 7 * 4);
    CHECK(r.out.find("2 FAs x 7 echoes x 4 coils") != std::string::npos);
}

TEST_CASE("phantom: same seed gives identical files; different seed does not; refuses to overwrite") {
    test::TempDir dir("cli_det");
    const std::string cfg = write_small_config(dir.path()).string();
    REQUIRE(mplex_run({"--config", cfg, "phantom", "--out", (dir.path() / "a").string()}).code == 0);
    REQUIRE(mplex_run({"--config", cfg, "phantom", "--out", (dir.path() / "b").string()}).code == 0);
    check_same_files(dir.path() / "a", dir.path() / "b");
    CHECK(verify_stage(dir.path() / "a").manifest.digest == verify_stage(dir.path() / "b").manifest.digest);

    REQUIRE(mplex_run({"--config", cfg, "--seed", "2", "phantom", "--out", (dir.path() / "c").string()}).code == 0);
    CHECK(verify_stage(dir.path() / "a").manifest.digest != verify_stage(dir.path() / "c").manifest.digest);

    const Result again = mplex_run({"--config", cfg, "phantom", "--out", (dir.path() / "a").string()});
    CHECK(again.code != 0);
    CHECK(again.err.find("--force") != std::string::npos);
    CHECK(mplex_run({"--config", cfg, "phantom", "--out", (dir.path() / "a").string(), "--force"}).code == 0);
}

TEST_CASE("pipeline contracts on a small configuration") {
    test::TempDir dir("cli_pipe");
    const fs::path d = dir.path();
    const std::string cfg = write_small_config(d).string();
    auto p = [&](const char* name) { return (d / name).string(); };
    REQUIRE(mplex_run({"--config", cfg, "phantom", "--out", p("ph")}).code == 0);
    REQUIRE(mplex_run({"--config", cfg, "mask", "--out", p("m3")}).code == 0);
    REQUIRE(mplex_run({"--config", cfg, "train", "--data", p("ph"), "--mask", p("m3"), "--out", p("model")}).code == 0);

    SUBCASE("zero-filled recon of fully sampled data equals the ground truth") {
        REQUIRE(mplex_run({"--config", cfg, "recon", "--mode", "zerofill", "--data", p("ph"), "--out", p("full")}).code == 0);
        const DatasetReader truth(d / "ph" / "test" / "scan000");
        for (std::size_t i = 0; i < truth.manifest().volume_count(); ++i) {
            const EchoKey k = truth.manifest().key(i);
            const ComplexVolume gt = truth.load_image(k);
            const ComplexVolume rc = read_cvol(d / "full" / "test" / "scan000" / (echo_key_name(k) + ".cvol"));
            double peak = 0.0;
            for (const auto& v : gt.data()) peak = std::max(peak, std::abs(v));
            CHECK(test::max_abs_diff(gt, rc) <= 1e-6 * peak);
        }
    }

    SUBCASE("cascade recon is byte-identical for 1 and 4 workers") {
        for (const char* w : {"1", "4"})
            REQUIRE(mplex_run({"--config", cfg, "--workers", w, "recon", "--mode", "cascade", "--data", p("ph"), "--mask",
                               p("m3"), "--model", p("model"), "--out", (d / (std::string("rc") + w)).string()})
                        .code == 0);
        check_same_files(d / "rc1", d / "rc4");
        CHECK(verify_stage(d / "rc1").manifest.digest == verify_stage(d / "rc4").manifest.digest);
        const Result missing = mplex_run({"--config", cfg, "recon", "--mode", "cascade", "--data", p("ph"), "--out", p("x")});
        CHECK(missing.code != 0);
        CHECK(missing.err.find("--model") != std::string::npos);
    }

    SUBCASE("eval of ground truth against itself") {
        REQUIRE(mplex_run({"--config", cfg, "maps", "--input", p("ph"), "--out", p("maps")}).code == 0);
        REQUIRE(mplex_run({"--config", cfg, "eval", "--ref", p("ph"), "--test", p("ph"), "--ref-maps", p("maps"),
                           "--test-maps", p("maps"), "--out", p("ev")})
                    .code == 0);
        const json j = json::parse(slurp(d / "ev" / "metrics.json"));
        std::size_t echo_rows = 0, map_rows = 0;
        for (const auto& row : j["rows"]) {
            if (row["kind"] == "echo") {
                ++echo_rows;
                CHECK(row["psnr_db"] == "inf");
                CHECK(row["ssim"] == 1.0);
                CHECK(row["rmse"] == 0.0);
            } else {
                ++map_rows;
                CHECK(row["rmse"] == 0.0);
            }
        }
        CHECK(echo_rows == 14);
        CHECK(map_rows == 5);
        const json mm = json::parse(slurp(d / "maps" / "maps-manifest.json"));
        CHECK(mm["params"]["maps"]["lambda"] == 1e-3);
        CHECK(mm["params"]["tes_ms"].size() == 7);
        CHECK(fs::exists(d / "maps" / "test" / "scan000" / "chi_ppm.rvol"));
    }

    SUBCASE("eval refuses mixed provenance") {
        const std::string cfg2 = write_small_config(d, 9).string();
        REQUIRE(mplex_run({"--config", cfg2, "phantom", "--out", p("other")}).code == 0);
        REQUIRE(mplex_run({"--config", cfg, "recon", "--mode", "zerofill", "--data", p("ph"), "--mask", p("m3"), "--out",
                           p("zf")})
                    .code == 0);
        const Result r = mplex_run({"--config", cfg, "eval", "--ref", p("other"), "--test", p("zf"), "--out", p("ev")});
        CHECK(r.code != 0);
        CHECK(r.err.find("mixed provenance") != std::string::npos);

        REQUIRE(mplex_run({"--config", cfg, "maps", "--input", p("ph"), "--out", p("maps_gt")}).code == 0);
        const Result r2 = mplex_run({"--config", cfg, "eval", "--ref", p("ph"), "--test", p("zf"), "--ref-maps",
                                     p("maps_gt"), "--test-maps", p("maps_gt"), "--out", p("ev2")});
        CHECK(r2.code != 0);
        CHECK(r2.err.find("mixed provenance") != std::string::npos);
    }

    SUBCASE("tampered or missing inputs abort with the file name") {
        const fs::path victim = d / "ph" / "test" / "scan000" / "kspace" / "fa0_echo0_coil0.cvol";
        {
            std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
            f.seekp(40);
            f.put('\x7f');
        }
        const Result r = mplex_run({"--config", cfg, "recon", "--mode", "zerofill", "--data", p("ph"), "--out", p("t")});
        CHECK(r.code != 0);
        CHECK(r.err.find("hash mismatch") != std::string::npos);
        CHECK(r.err.find("fa0_echo0_coil0.cvol") != std::string::npos);

        fs::remove(victim);
        const Result r2 = mplex_run({"--config", cfg, "recon", "--mode", "zerofill", "--data", p("ph"), "--out", p("t")});
        CHECK(r2.code != 0);
        CHECK(r2.err.find("missing input file") != std::string::npos);

        const Result r3 = mplex_run({"--config", cfg, "train", "--data", p("m3"), "--mask", p("m3"), "--out", p("t")});
        CHECK(r3.code != 0);
        CHECK(r3.err.find("expected 'phantom'") != std::string::npos);
    }
}

TEST_CASE("render examples") {
    test::TempDir dir("cli_render");
    const fs::path d = dir.path();
    const Dims dims{6, 5, 4};
    write_rvol(d / "const.rvol", volume_of(dims, 3.0));
    RealVolume ramp(dims);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = double(i % 6) / 5.0;  // range exactly 1
    RealVolume shifted = ramp;
    for (auto& v : shifted.data()) v += 0.01;
    write_rvol(d / "ramp.rvol", ramp);
    write_rvol(d / "shifted.rvol", shifted);

    REQUIRE(mplex_run({"render", "--volume", (d / "const.rvol").string(), "--out", (d / "c.png").string()}).code == 0);
    for (auto px : read_png(d / "c.png").pixels) CHECK(px == 128);

    REQUIRE(mplex_run({"render", "--volume", (d / "ramp.rvol").string(), "--against", (d / "ramp.rvol").string(),
                       "--out", (d / "zero.png").string()})
                .code == 0);
    for (auto px : read_png(d / "zero.png").pixels) CHECK(px == 0);

    // The shift survives float32 storage only approximately, so allow one grey level.
    REQUIRE(mplex_run({"render", "--volume", (d / "shifted.rvol").string(), "--against", (d / "ramp.rvol").string(),
                       "--error-scale", "50", "--axis", "z", "--slice", "1", "--out", (d / "half.png").string()})
                .code == 0);
    const Gray8 half = read_png(d / "half.png");
    CHECK(half.width == 6);
    CHECK(half.height == 5);
    for (auto px : half.pixels) CHECK(std::abs(int(px) - 128) <= 1);

    CHECK(mplex_run({"render", "--volume", (d / "ramp.rvol").string(), "--slice", "4", "--out", (d / "x.png").string()})
              .code != 0);
    CHECK(mplex_run({"render", "--volume", (d / "ramp.rvol").string(), "--axis", "w", "--out", (d / "x.png").string()})
              .code != 0);
}

TEST_CASE("usage errors return non-zero") {
    CHECK(mplex_run({}).code != 0);
    CHECK(mplex_run({"bogus"}).code != 0);
    CHECK(mplex_run({"mask"}).code != 0);
    CHECK(mplex_run({"--help"}).code == 0);
}
