#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mplex/cascade.hpp"

namespace mplex {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t epochs = 1;
    /// 0 means one pass over the samples per epoch (ceil(samples / batch_size) steps).
    std::size_t steps_per_epoch = 0;
    std::size_t batch_size = 1;
    /// Readout crop used for every training patch; 0 trains on the full readout.
    std::size_t crop_length = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

/// First and second moment estimates for one parameter tensor.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
};

/// One bias-corrected Adam update at step t (t >= 1). Throws std::invalid_argument on a
/// non-finite gradient, naming its index.
void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state, std::size_t t,
               const TrainConfig& cfg);

/// Adam over every tensor of a cascade model.
class ModelOptimizer {
public:
    explicit ModelOptimizer(const CascadeModel& model);
    void step(CascadeModel& model, const ModelGrads& grads, const TrainConfig& cfg);
    [[nodiscard]] std::size_t steps() const noexcept { return t_; }

private:
    std::vector<AdamState> weight_state_;
    std::vector<AdamState> bias_state_;
    std::size_t t_ = 0;
};

/// One ground-truth (fa, echo, coil) image volume and the mask used to undersample it.
struct TrainingSample {
    std::string id;
    std::function<ComplexVolume()> load_image;
    std::shared_ptr<const SamplingMask> mask;
};

struct TrainLogEntry {
    std::size_t step = 0;
    double loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    CascadeModel model;
    std::vector<TrainLogEntry> log;
};

/// Loss and gradient of one training patch. Both k-space and target are scaled by
/// normalization_scale before the forward pass.
struct PatchLoss {
    double loss = 0.0;
};
PatchLoss patch_loss_and_grad(const CascadeModel& model, const ComplexVolume& target_image, const SamplingMask& mask,
                              ModelGrads* grads);

/// Trains a cascade from scratch. Per step: draw a sample, draw a readout crop, regenerate
/// masked k-space from the cropped ground truth, run the cascade, take the MSE against the
/// cropped ground truth and apply Adam. Deterministic for a fixed seed.
[[nodiscard]] TrainResult train(const std::vector<TrainingSample>& samples, const CascadeConfig& cascade,
                                const TrainConfig& cfg,
                                const std::function<void(const TrainLogEntry&)>& on_step = {});

/// Builds one sample per (fa, echo, coil) image of every scan directory. The mask comes from
/// `mask` when given, otherwise from each scan's own mask file.
[[nodiscard]] std::vector<TrainingSample> training_samples(const std::vector<std::filesystem::path>& dataset_dirs,
                                                           const std::optional<SamplingMask>& mask);

/// CSV with header "step,loss,wall_ms".
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogEntry>& log);

/// Input for a finite-difference gradient check.
struct GradCheckSample {
    ComplexVolume k_meas;  // already masked
    SamplingMask mask;
    ComplexVolume target;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_layer;
    std::size_t worst_index = 0;
    bool worst_is_bias = false;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::vector<std::pair<std::string, double>> per_layer;
    std::size_t checked = 0;
};

/// MSE between cascade_forward(k_meas) and target.
[[nodiscard]] double grad_check_loss(const CascadeModel& model, const GradCheckSample& sample);

/// Compares every analytic parameter gradient with a central difference of step `eps`.
/// The relative error of one parameter is |a - n| / max(|a|, |n|, floor) where floor is
/// 1e-6 of the largest analytic gradient magnitude. The loss difference is accumulated per
/// voxel rather than as the difference of two rounded losses.
[[nodiscard]] GradCheckReport grad_check(const CascadeModel& model, const GradCheckSample& sample, double eps);

}  // namespace mplex
