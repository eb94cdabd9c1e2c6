#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mplex/volume.hpp"

namespace mplex {

/// 10 log10(max(ref)^2 / MSE). Identical volumes give +infinity. Throws on dims mismatch or a
/// reference that is identically zero.
[[nodiscard]] double psnr(const RealVolume& ref, const RealVolume& test);

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean local SSIM over axial (xy) slices, Gaussian window, valid positions only; the volume
/// score is the mean over slices. Dynamic range L = max(ref) - min(ref), or max|ref| (1 if
/// zero) for a constant reference. Throws if the window exceeds a slice.
[[nodiscard]] double ssim(const RealVolume& ref, const RealVolume& test, const SsimOptions& options = {});

/// Root mean squared difference over all voxels, or over mask != 0. Throws on an empty mask.
[[nodiscard]] double rmse(const RealVolume& ref, const RealVolume& test, const MaskVolume* mask = nullptr);

struct MetricRow {
    std::string dataset;
    /// "echo" for echo images, otherwise the parametric map name.
    std::string kind = "echo";
    std::size_t fa = 0;
    std::size_t echo = 0;
    double accel = 1.0;
    std::string method;
    std::optional<double> psnr_db;
    std::optional<double> ssim;
    std::optional<double> rmse;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
    std::size_t count = 0;
};

/// Mean and sample std. Any +inf entry makes the mean +inf and the std NaN.
[[nodiscard]] MeanStd mean_std(const std::vector<double>& values);

struct MetricAggregate {
    std::string method;
    std::string kind;
    double accel = 1.0;
    std::optional<MeanStd> psnr_db;
    std::optional<MeanStd> ssim;
    std::optional<MeanStd> rmse;
};

class MetricReport {
public:
    void add(MetricRow row) { rows_.push_back(std::move(row)); }
    [[nodiscard]] const std::vector<MetricRow>& rows() const noexcept { return rows_; }

    /// Groups by (method, kind, accel) in first-seen order.
    [[nodiscard]] std::vector<MetricAggregate> aggregates() const;

    /// Per-row CSV. Missing values are empty fields; non-finite values are "inf" / "nan".
    [[nodiscard]] std::string rows_csv() const;
    [[nodiscard]] std::string aggregates_csv() const;
    /// {"rows": [...], "aggregates": [...]}; non-finite values are the strings "inf" / "nan", missing values null.
    [[nodiscard]] std::string to_json() const;

    void write(const std::filesystem::path& dir) const;

private:
    std::vector<MetricRow> rows_;
};

/// Fixed-precision formatting shared by the CSV and JSON writers.
[[nodiscard]] std::string format_metric(double v);

}  // namespace mplex
