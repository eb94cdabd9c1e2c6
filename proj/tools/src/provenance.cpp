#include "mplex/cli/provenance.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace mplex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256: OpenSSL digest init failed");
    }
    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("sha256: update failed");
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw std::runtime_error("sha256: final failed");
        static const char* digits = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 15]);
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string outputs_digest(const std::map<std::string, std::string>& outputs) {
    Sha256 h;
    for (const auto& [rel, sha] : outputs) {
        h.update(rel.data(), rel.size());
        h.update("\0", 1);
        h.update(sha.data(), sha.size());
        h.update("\n", 1);
    }
    return h.hex();
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Sha256 h;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

void write_stage_manifest(const fs::path& dir, StageManifest& m) {
    m.outputs.clear();
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), dir).generic_string();
        if (rel == kStageManifestName) continue;
        m.outputs[rel] = sha256_file(entry.path());
    }
    m.digest = outputs_digest(m.outputs);
    const json j{{"stage", m.stage},     {"params", m.params},   {"seeds", m.seeds},
                 {"inputs", m.inputs},   {"info", m.info},       {"outputs", m.outputs},
                 {"digest", m.digest},   {"wall_time_s", m.wall_time_s}};
    std::ofstream out(dir / kStageManifestName);
    if (!out) throw std::runtime_error("cannot write " + (dir / kStageManifestName).string());
    out << j.dump(2) << '\n';
}

VerifiedStage verify_stage(const fs::path& dir, const std::string& expect_stage) {
    const fs::path path = dir / kStageManifestName;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing stage manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt stage manifest " + path.string() + ": " + e.what());
    }
    VerifiedStage v{dir, {}};
    StageManifest& m = v.manifest;
    m.stage = j.value("stage", "");
    if (!expect_stage.empty() && m.stage != expect_stage)
        throw std::runtime_error(dir.string() + " holds a '" + m.stage + "' stage, expected '" + expect_stage + "'");
    m.params = j.value("params", json::object());
    m.seeds = j.value("seeds", json::object());
    m.inputs = j.value("inputs", json::object());
    m.info = j.value("info", json::object());
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.digest = j.at("digest").get<std::string>();
    m.wall_time_s = j.value("wall_time_s", 0.0);

    for (const auto& [rel, sha] : m.outputs) {
        const fs::path f = dir / rel;
        if (!fs::exists(f)) throw std::runtime_error("missing input file " + f.string() + " (listed in " + path.string() + ")");
        const std::string got = sha256_file(f);
        if (got != sha)
            throw std::runtime_error("hash mismatch for " + f.string() + ": manifest " + sha + ", file " + got);
    }
    if (outputs_digest(m.outputs) != m.digest) throw std::runtime_error("digest mismatch in " + path.string());
    return v;
}

json input_ref(const VerifiedStage& s) {
    return {{"path", fs::absolute(s.dir).lexically_normal().string()}, {"stage", s.manifest.stage},
            {"digest", s.manifest.digest}};
}

void prepare_output_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir)) {
            if (!force) throw std::runtime_error("output directory " + dir.string() + " is not empty (use --force)");
            for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
        }
    }
    fs::create_directories(dir);
}

}  // namespace mplex::cli
