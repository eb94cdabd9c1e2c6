#include "mplex/dataset.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "mplex/volume_io.hpp"

namespace mplex {

namespace fs = std::filesystem;
using nlohmann::json;

EchoKey ScanManifest::key(std::size_t index) const noexcept {
    EchoKey k;
    k.coil = index % protocol.n_coils;
    index /= protocol.n_coils;
    k.echo = index % protocol.tes_ms.size();
    k.fa = index / protocol.tes_ms.size();
    return k;
}

void write_dataset(const fs::path& dir, const ScanDataset& ds) {
    fs::create_directories(dir / "kspace");
    fs::create_directories(dir / "image");
    fs::create_directories(dir / "tissue");

    json files = json::object();
    for (std::size_t i = 0; i < ds.volume_count(); ++i) {
        const std::string name = echo_key_name(ds.key(i));
        const std::string k_rel = "kspace/" + name + ".cvol";
        const std::string i_rel = "image/" + name + ".cvol";
        write_cvol(dir / k_rel, ds.kspace[i]);
        write_cvol(dir / i_rel, ds.images[i]);
        files["kspace/" + name] = k_rel;
        files["image/" + name] = i_rel;
        if (ds.mask) {
            fs::create_directories(dir / "masked_kspace");
            const std::string m_rel = "masked_kspace/" + name + ".cvol";
            write_cvol(dir / m_rel, ds.masked_kspace[i]);
            files["masked_kspace/" + name] = m_rel;
        }
    }
    const RealVolume* tissue[] = {&ds.tissue.m0, &ds.tissue.t1_ms, &ds.tissue.t2star_ms, &ds.tissue.chi_ppm,
                                  &ds.tissue.phi0_rad};
    for (std::size_t t = 0; t < std::size(kTissueNames); ++t) {
        const std::string rel = std::string("tissue/") + kTissueNames[t] + ".rvol";
        write_rvol(dir / rel, *tissue[t]);
        files[std::string("tissue/") + kTissueNames[t]] = rel;
    }
    if (ds.mask) {
        write_mask(dir / "mask.mask", *ds.mask);
        files["mask"] = "mask.mask";
    }

    const Dims& d = ds.tissue.dims;
    const VoxelGeometry& g = ds.tissue.geometry;
    json m;
    m["dims"] = {d.nx, d.ny, d.nz};
    m["voxel_size_mm"] = {g.dx, g.dy, g.dz};
    m["fas_deg"] = ds.protocol.fas_deg;
    m["tes_ms"] = ds.protocol.tes_ms;
    m["tr_ms"] = ds.protocol.tr_ms;
    m["b0_t"] = ds.protocol.b0_t;
    m["n_coils"] = ds.protocol.n_coils;
    m["noise_sigma"] = ds.noise_sigma;
    m["seed"] = ds.seed;
    m["phantom"] = {{"kind", to_string(ds.phantom_kind)}, {"seed", ds.phantom_seed}};
    m["files"] = files;
    std::ofstream out(dir / kManifestName);
    if (!out) throw std::runtime_error("cannot write " + (dir / kManifestName).string());
    out << m.dump(2) << '\n';
}

ScanManifest read_manifest(const fs::path& dir) {
    const fs::path path = dir / kManifestName;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing dataset manifest: " + path.string());
    ScanManifest sm;
    try {
        const json m = json::parse(in);
        const auto dims = m.at("dims").get<std::vector<std::size_t>>();
        const auto vox = m.at("voxel_size_mm").get<std::vector<double>>();
        if (dims.size() != 3 || vox.size() != 3) throw std::runtime_error("dims and voxel_size_mm need 3 entries");
        sm.dims = {dims[0], dims[1], dims[2]};
        sm.geometry = {vox[0], vox[1], vox[2]};
        sm.protocol.fas_deg = m.at("fas_deg").get<std::vector<double>>();
        sm.protocol.tes_ms = m.at("tes_ms").get<std::vector<double>>();
        sm.protocol.tr_ms = m.at("tr_ms").get<double>();
        sm.protocol.b0_t = m.at("b0_t").get<double>();
        sm.protocol.n_coils = m.at("n_coils").get<std::size_t>();
        sm.noise_sigma = m.at("noise_sigma").get<double>();
        sm.seed = m.at("seed").get<std::uint64_t>();
        if (m.contains("phantom")) {
            sm.phantom_kind = phantom_kind_from_string(m["phantom"].at("kind").get<std::string>());
            sm.phantom_seed = m["phantom"].at("seed").get<std::uint64_t>();
        }
        sm.files = m.at("files").get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    validate_dims(sm.dims);
    sm.geometry.validate();
    sm.protocol.validate();
    return sm;
}

DatasetReader::DatasetReader(fs::path dir) : dir_(std::move(dir)), manifest_(read_manifest(dir_)) {}

fs::path DatasetReader::file(const std::string& role) const {
    auto it = manifest_.files.find(role);
    if (it == manifest_.files.end()) throw std::runtime_error(dir_.string() + ": manifest has no file for '" + role + "'");
    return dir_ / it->second;
}

ComplexVolume DatasetReader::load_kspace(const EchoKey& key) const {
    auto v = read_cvol(file("kspace/" + echo_key_name(key)), Domain::kspace);
    if (v.dims() != manifest_.dims) throw std::runtime_error("k-space volume dims disagree with manifest");
    return v;
}

ComplexVolume DatasetReader::load_image(const EchoKey& key) const {
    auto v = read_cvol(file("image/" + echo_key_name(key)), Domain::image);
    if (v.dims() != manifest_.dims) throw std::runtime_error("image volume dims disagree with manifest");
    return v;
}

TissueMaps DatasetReader::load_tissue() const {
    TissueMaps t;
    t.dims = manifest_.dims;
    t.geometry = manifest_.geometry;
    RealVolume* dst[] = {&t.m0, &t.t1_ms, &t.t2star_ms, &t.chi_ppm, &t.phi0_rad};
    for (std::size_t i = 0; i < std::size(kTissueNames); ++i) {
        *dst[i] = read_rvol(file(std::string("tissue/") + kTissueNames[i]));
        if (dst[i]->dims() != t.dims) throw std::runtime_error("tissue map dims disagree with manifest");
    }
    return t;
}

std::optional<SamplingMask> DatasetReader::load_mask() const {
    if (!has("mask")) return std::nullopt;
    return read_mask(file("mask"));
}

ScanDataset read_dataset(const fs::path& dir) {
    const DatasetReader r(dir);
    const ScanManifest& m = r.manifest();
    ScanDataset ds;
    ds.protocol = m.protocol;
    ds.tissue = r.load_tissue();
    ds.noise_sigma = m.noise_sigma;
    ds.seed = m.seed;
    ds.phantom_kind = m.phantom_kind;
    ds.phantom_seed = m.phantom_seed;
    ds.mask = r.load_mask();
    for (std::size_t i = 0; i < m.volume_count(); ++i) {
        const EchoKey k = m.key(i);
        ds.kspace.push_back(r.load_kspace(k));
        ds.images.push_back(r.load_image(k));
        if (ds.mask) ds.masked_kspace.push_back(read_cvol(r.file("masked_kspace/" + echo_key_name(k)), Domain::kspace));
    }
    return ds;
}

}  // namespace mplex
