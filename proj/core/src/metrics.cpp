#include "mplex/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

namespace mplex {

namespace {

void require_same_dims(const RealVolume& a, const RealVolume& b, const char* what) {
    if (a.dims() != b.dims()) throw std::invalid_argument(std::string(what) + ": volume dims differ");
}

std::vector<double> gaussian_window(std::size_t n, double sigma) {
    std::vector<double> w(n);
    const double c = static_cast<double>(n - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - c;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

/// Separable valid-mode filtering of an nx-by-ny plane; output is (nx-n+1) by (ny-n+1).
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t nx, std::size_t ny,
                                 const std::vector<double>& w) {
    const std::size_t n = w.size();
    const std::size_t ox = nx - n + 1, oy = ny - n + 1;
    std::vector<double> rows(ox * ny, 0.0);
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < ox; ++x) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += w[k] * plane[y * nx + x + k];
            rows[y * ox + x] = s;
        }
    std::vector<double> out(ox * oy, 0.0);
    for (std::size_t y = 0; y < oy; ++y)
        for (std::size_t x = 0; x < ox; ++x) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += w[k] * rows[(y + k) * ox + x];
            out[y * ox + x] = s;
        }
    return out;
}

}  // namespace

double psnr(const RealVolume& ref, const RealVolume& test) {
    require_same_dims(ref, test, "psnr");
    double peak = -std::numeric_limits<double>::infinity();
    bool nonzero = false;
    for (double v : ref.data()) {
        peak = std::max(peak, v);
        nonzero = nonzero || v != 0.0;
    }
    if (!nonzero) throw std::invalid_argument("psnr: reference is identically zero");
    double se = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = test[i] - ref[i];
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(ref.size());
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const RealVolume& ref, const RealVolume& test, const SsimOptions& options) {
    require_same_dims(ref, test, "ssim");
    const Dims& d = ref.dims();
    const std::size_t n = options.window;
    if (n == 0 || n > d.nx || n > d.ny)
        throw std::invalid_argument("ssim: window " + std::to_string(n) + " larger than slice " + std::to_string(d.nx) +
                                    "x" + std::to_string(d.ny));
    if (!(options.sigma > 0.0)) throw std::invalid_argument("ssim: sigma must be positive");

    const auto [lo, hi] = std::minmax_element(ref.data().begin(), ref.data().end());
    double range = *hi - *lo;
    if (range == 0.0) range = std::max(std::abs(*hi), std::abs(*lo));
    if (range == 0.0) range = 1.0;
    const double c1 = (options.k1 * range) * (options.k1 * range);
    const double c2 = (options.k2 * range) * (options.k2 * range);

    const auto w = gaussian_window(n, options.sigma);
    const std::size_t plane = d.nx * d.ny;
    std::vector<double> a(plane), b(plane), aa(plane), bb(plane), ab(plane);
    double total = 0.0;
    for (std::size_t z = 0; z < d.nz; ++z) {
        for (std::size_t i = 0; i < plane; ++i) {
            a[i] = ref[z * plane + i];
            b[i] = test[z * plane + i];
            aa[i] = a[i] * a[i];
            bb[i] = b[i] * b[i];
            ab[i] = a[i] * b[i];
        }
        const auto mu_a = filter_valid(a, d.nx, d.ny, w);
        const auto mu_b = filter_valid(b, d.nx, d.ny, w);
        const auto s_aa = filter_valid(aa, d.nx, d.ny, w);
        const auto s_bb = filter_valid(bb, d.nx, d.ny, w);
        const auto s_ab = filter_valid(ab, d.nx, d.ny, w);
        double slice = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = s_aa[i] - ma * ma;
            const double vb = s_bb[i] - mb * mb;
            const double cov = s_ab[i] - ma * mb;
            slice += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += slice / static_cast<double>(mu_a.size());
    }
    return total / static_cast<double>(d.nz);
}

double rmse(const RealVolume& ref, const RealVolume& test, const MaskVolume* mask) {
    require_same_dims(ref, test, "rmse");
    if (mask && mask->dims() != ref.dims()) throw std::invalid_argument("rmse: mask dims differ");
    double se = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double diff = test[i] - ref[i];
        se += diff * diff;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("rmse: empty mask");
    return std::sqrt(se / static_cast<double>(count));
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd r;
    r.count = values.size();
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (std::isinf(r.mean)) {
        r.std = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

std::vector<MetricAggregate> MetricReport::aggregates() const {
    using Key = std::tuple<std::string, std::string, double>;
    std::vector<Key> order;
    for (const auto& r : rows_) {
        Key k{r.method, r.kind, r.accel};
        if (std::find(order.begin(), order.end(), k) == order.end()) order.push_back(k);
    }
    std::vector<MetricAggregate> out;
    for (const auto& k : order) {
        std::vector<double> p, s, e;
        for (const auto& r : rows_) {
            if (Key{r.method, r.kind, r.accel} != k) continue;
            if (r.psnr_db) p.push_back(*r.psnr_db);
            if (r.ssim) s.push_back(*r.ssim);
            if (r.rmse) e.push_back(*r.rmse);
        }
        MetricAggregate a;
        std::tie(a.method, a.kind, a.accel) = k;
        if (!p.empty()) a.psnr_db = mean_std(p);
        if (!s.empty()) a.ssim = mean_std(s);
        if (!e.empty()) a.rmse = mean_std(e);
        out.push_back(std::move(a));
    }
    return out;
}

std::string format_metric(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

namespace {

std::string opt_field(const std::optional<double>& v) { return v ? format_metric(*v) : std::string(); }

nlohmann::json opt_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    if (!std::isfinite(*v)) return format_metric(*v);
    return std::stod(format_metric(*v));
}

nlohmann::json mean_std_json(const std::optional<MeanStd>& m) {
    if (!m) return nullptr;
    return {{"mean", opt_json(m->mean)}, {"std", opt_json(m->std)}, {"count", m->count}};
}

}  // namespace

std::string MetricReport::rows_csv() const {
    std::ostringstream os;
    os << "dataset,method,kind,fa,echo,accel,psnr_db,ssim,rmse\n";
    for (const auto& r : rows_)
        os << r.dataset << ',' << r.method << ',' << r.kind << ',' << r.fa << ',' << r.echo << ','
           << format_metric(r.accel) << ',' << opt_field(r.psnr_db) << ',' << opt_field(r.ssim) << ','
           << opt_field(r.rmse) << '\n';
    return os.str();
}

std::string MetricReport::aggregates_csv() const {
    std::ostringstream os;
    os << "method,kind,accel,count,psnr_mean,psnr_std,ssim_mean,ssim_std,rmse_mean,rmse_std\n";
    for (const auto& a : aggregates()) {
        std::size_t count = 0;
        for (const auto* m : {&a.psnr_db, &a.ssim, &a.rmse})
            if (*m) count = std::max(count, (*m)->count);
        os << a.method << ',' << a.kind << ',' << format_metric(a.accel) << ',' << count;
        for (const auto* m : {&a.psnr_db, &a.ssim, &a.rmse}) {
            if (*m)
                os << ',' << format_metric((*m)->mean) << ',' << format_metric((*m)->std);
            else
                os << ",,";
        }
        os << '\n';
    }
    return os.str();
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows_)
        j["rows"].push_back({{"dataset", r.dataset},
                             {"method", r.method},
                             {"kind", r.kind},
                             {"fa", r.fa},
                             {"echo", r.echo},
                             {"accel", r.accel},
                             {"psnr_db", opt_json(r.psnr_db)},
                             {"ssim", opt_json(r.ssim)},
                             {"rmse", opt_json(r.rmse)}});
    j["aggregates"] = nlohmann::json::array();
    for (const auto& a : aggregates())
        j["aggregates"].push_back({{"method", a.method},
                                   {"kind", a.kind},
                                   {"accel", a.accel},
                                   {"psnr_db", mean_std_json(a.psnr_db)},
                                   {"ssim", mean_std_json(a.ssim)},
                                   {"rmse", mean_std_json(a.rmse)}});
    return j.dump(2) + "\n";
}

void MetricReport::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto put = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << text;
    };
    put("metrics.csv", rows_csv());
    put("summary.csv", aggregates_csv());
    put("metrics.json", to_json());
}

}  // namespace mplex
