#include "mplex/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mplex/dataset.hpp"
#include "mplex/fft.hpp"
#include "mplex/phantom.hpp"
#include "mplex/volume_io.hpp"

namespace mplex {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train: Adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("train: epsilon must be > 0");
    if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
}

void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state, std::size_t t,
               const TrainConfig& cfg) {
    if (weights.size() != grads.size()) throw std::invalid_argument("adam_step: weight/gradient size mismatch");
    if (t == 0) throw std::invalid_argument("adam_step: step counter starts at 1");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i])) {
            std::ostringstream os;
            os << "adam_step: non-finite gradient " << grads[i] << " at index " << i << " (step " << t << ")";
            throw std::invalid_argument(os.str());
        }
    if (state.m.empty()) {
        state.m.assign(weights.size(), 0.0);
        state.v.assign(weights.size(), 0.0);
    }
    if (state.m.size() != weights.size()) throw std::invalid_argument("adam_step: state size mismatch");

    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < weights.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double mh = state.m[i] / c1;
        const double vh = state.v[i] / c2;
        weights[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    }
}

ModelOptimizer::ModelOptimizer(const CascadeModel& model)
    : weight_state_(model.layers().size()), bias_state_(model.layers().size()) {}

void ModelOptimizer::step(CascadeModel& model, const ModelGrads& grads, const TrainConfig& cfg) {
    ++t_;
    auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        try {
            adam_step(layers[l].weight, grads.layers[l].weight, weight_state_[l], t_, cfg);
            adam_step(layers[l].bias, grads.layers[l].bias, bias_state_[l], t_, cfg);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("layer " + layers[l].name + ": " + e.what());
        }
    }
}

PatchLoss patch_loss_and_grad(const CascadeModel& model, const ComplexVolume& target_image, const SamplingMask& mask,
                              ModelGrads* grads) {
    ComplexVolume k = apply_mask(fft3_centered(target_image), mask);
    const double s = normalization_scale(k);
    for (auto& v : k.data()) v *= s;
    ComplexVolume target = target_image;
    for (auto& v : target.data()) v *= s;

    CascadeTape tape;
    const ComplexVolume out = cascade_forward(model, k, mask, grads ? &tape : nullptr);
    const nn::Tensor pred = nn::to_channels(out);
    const nn::Tensor ref = nn::to_channels(target);
    PatchLoss r{nn::mse_loss(pred, ref)};
    if (grads) cascade_backward(model, tape, nn::from_channels(nn::mse_grad(pred, ref)), mask, *grads);
    return r;
}

TrainResult train(const std::vector<TrainingSample>& samples, const CascadeConfig& cascade, const TrainConfig& cfg,
                  const std::function<void(const TrainLogEntry&)>& on_step) {
    cfg.validate();
    cascade.validate();
    if (samples.empty()) throw std::invalid_argument("train: empty dataset");

    TrainResult result{CascadeModel::initialize(cascade, derive_seed(cfg.seed, 0xc0ffee)), {}};
    CascadeModel& model = result.model;
    ModelOptimizer opt(model);
    ModelGrads grads(model);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5a3b1e));

    const std::size_t steps_per_epoch =
        cfg.steps_per_epoch ? cfg.steps_per_epoch : (samples.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = cfg.epochs * steps_per_epoch;
    const auto t0 = std::chrono::steady_clock::now();

    for (std::size_t step = 0; step < total; ++step) {
        grads.zero();
        double loss = 0.0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, samples.size() - 1)(rng);
            const TrainingSample& s = samples[pick];
            ComplexVolume image = s.load_image();
            const std::size_t nx = image.dims().nx;
            const std::size_t crop = cfg.crop_length == 0 ? nx : cfg.crop_length;
            if (crop > nx)
                throw std::invalid_argument("train: crop length " + std::to_string(crop) + " exceeds readout " +
                                            std::to_string(nx) + " of sample " + s.id);
            // Always draw the offset so that crop == nx consumes the same stream as no crop.
            const std::size_t start = std::uniform_int_distribution<std::size_t>(0, nx - crop)(rng);
            if (crop != nx) image = crop_readout(image, start, crop);

            const PatchLoss pl = patch_loss_and_grad(model, image, *s.mask, &grads);
            if (!std::isfinite(pl.loss)) {
                std::ostringstream os;
                os << "train: non-finite loss at step " << step << " on sample " << s.id << " (crop start " << start
                   << ")";
                throw std::runtime_error(os.str());
            }
            loss += pl.loss;
        }
        if (cfg.batch_size > 1) grads.scale(1.0 / static_cast<double>(cfg.batch_size));
        loss /= static_cast<double>(cfg.batch_size);
        opt.step(model, grads, cfg);

        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back({step, loss, ms});
        if (on_step) on_step(result.log.back());
    }
    return result;
}

std::vector<TrainingSample> training_samples(const std::vector<std::filesystem::path>& dataset_dirs,
                                             const std::optional<SamplingMask>& mask) {
    std::vector<TrainingSample> out;
    std::shared_ptr<const SamplingMask> shared;
    if (mask) shared = std::make_shared<const SamplingMask>(*mask);
    for (const auto& dir : dataset_dirs) {
        auto reader = std::make_shared<const DatasetReader>(dir);
        auto m = shared;
        if (!m) {
            auto own = reader->load_mask();
            if (!own) throw std::invalid_argument("train: dataset " + dir.string() + " has no mask and none was given");
            m = std::make_shared<const SamplingMask>(std::move(*own));
        }
        if (m->ny != reader->manifest().dims.ny || m->nz != reader->manifest().dims.nz)
            throw std::invalid_argument("train: mask dims do not match dataset " + dir.string());
        for (std::size_t i = 0; i < reader->manifest().volume_count(); ++i) {
            const EchoKey key = reader->manifest().key(i);
            out.push_back({dir.string() + ":" + echo_key_name(key), [reader, key] { return reader->load_image(key); }, m});
        }
    }
    return out;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogEntry>& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "step,loss,wall_ms\n";
    out.precision(17);
    for (const auto& e : log) out << e.step << ',' << e.loss << ',' << e.wall_ms << '\n';
}

double grad_check_loss(const CascadeModel& model, const GradCheckSample& sample) {
    const ComplexVolume out = cascade_forward(model, sample.k_meas, sample.mask);
    return nn::mse_loss(nn::to_channels(out), nn::to_channels(sample.target));
}

namespace {

// mse(up) - mse(down) summed per voxel as Re[(u - d) conj(u + d - 2t)]. Subtracting two
// rounded losses instead leaves about one ulp of the loss, which swamps zero gradients.
double loss_difference(const ComplexVolume& up, const ComplexVolume& down, const ComplexVolume& target) {
    double s = 0.0;
    for (std::size_t i = 0; i < up.size(); ++i) s += std::real((up[i] - down[i]) * std::conj(up[i] + down[i] - 2.0 * target[i]));
    return s / (2.0 * static_cast<double>(up.size()));
}

}  // namespace

GradCheckReport grad_check(const CascadeModel& model, const GradCheckSample& sample, double eps) {
    ModelGrads grads(model);
    CascadeTape tape;
    const ComplexVolume out = cascade_forward(model, sample.k_meas, sample.mask, &tape);
    const nn::Tensor pred = nn::to_channels(out);
    const nn::Tensor ref = nn::to_channels(sample.target);
    cascade_backward(model, tape, nn::from_channels(nn::mse_grad(pred, ref)), sample.mask, grads);

    double scale = 0.0;
    for (const auto& g : grads.layers) {
        for (double v : g.weight) scale = std::max(scale, std::abs(v));
        for (double v : g.bias) scale = std::max(scale, std::abs(v));
    }
    const double floor = std::max(1e-6 * scale, 1e-300);

    GradCheckReport report;
    CascadeModel probe = model;
    for (std::size_t l = 0; l < probe.layers().size(); ++l) {
        auto& layer = probe.layers()[l];
        double layer_max = 0.0;
        auto check = [&](std::vector<double>& params, const std::vector<double>& analytic, bool is_bias) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double saved = params[i];
                params[i] = saved + eps;
                const ComplexVolume up = cascade_forward(probe, sample.k_meas, sample.mask);
                params[i] = saved - eps;
                const ComplexVolume down = cascade_forward(probe, sample.k_meas, sample.mask);
                params[i] = saved;
                const double numeric = loss_difference(up, down, sample.target) / (2.0 * eps);
                const double a = analytic[i];
                const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
                ++report.checked;
                layer_max = std::max(layer_max, rel);
                if (report.worst_layer.empty() || rel > report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_layer = layer.name;
                    report.worst_index = i;
                    report.worst_is_bias = is_bias;
                    report.worst_analytic = a;
                    report.worst_numeric = numeric;
                }
            }
        };
        check(layer.weight, grads.layers[l].weight, false);
        check(layer.bias, grads.layers[l].bias, true);
        report.per_layer.emplace_back(layer.name, layer_max);
    }
    return report;
}

}  // namespace mplex
