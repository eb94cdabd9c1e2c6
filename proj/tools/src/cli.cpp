#include <CLI11.hpp>

#include "mplex/cli/commands.hpp"

namespace mplex::cli {

namespace fs = std::filesystem;

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"mplex: synthetic multi-echo GRE reconstruction pipeline", "mplex"};
    app.require_subcommand(1);

    std::optional<fs::path> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    bool force = false;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Master seed (overrides the config)");
    app.add_option("--workers", workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
    app.add_flag("--force", force, "Overwrite a non-empty output directory");

    fs::path out_dir;
    std::string split;

    auto* phantom = app.add_subcommand("phantom", "Simulate train/test scans");
    std::vector<std::size_t> dims;
    std::optional<std::size_t> n_train, n_test;
    phantom->add_option("--out", out_dir, "Output directory")->required();
    phantom->add_option("--dims", dims, "Matrix nx ny nz")->expected(3);
    phantom->add_option("--n-train", n_train, "Training scans");
    phantom->add_option("--n-test", n_test, "Test scans");

    auto* mask = app.add_subcommand("mask", "Generate a Poisson-disk undersampling mask");
    std::optional<double> accel;
    mask->add_option("--out", out_dir, "Output directory")->required();
    mask->add_option("--accel", accel, "Target acceleration");

    auto* train = app.add_subcommand("train", "Train the cascade on a phantom split");
    fs::path data, mask_dir;
    std::optional<std::size_t> steps;
    train->add_option("--data", data, "Phantom stage directory")->required();
    train->add_option("--mask", mask_dir, "Mask stage directory")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--split", split, "Split to train on")->default_val("train");
    train->add_option("--steps", steps, "Steps per epoch (overrides the config)");

    auto* recon = app.add_subcommand("recon", "Reconstruct every (fa, echo, coil) volume of a split");
    std::string mode;
    std::optional<fs::path> recon_mask, model;
    recon->add_option("--mode", mode, "zerofill | cascade")->required()->check(CLI::IsMember({"zerofill", "cascade"}));
    recon->add_option("--data", data, "Phantom stage directory")->required();
    recon->add_option("--mask", recon_mask, "Mask stage directory (default: fully sampled)");
    recon->add_option("--model", model, "Train stage directory (cascade mode)");
    recon->add_option("--out", out_dir, "Output directory")->required();
    recon->add_option("--split", split, "Split to reconstruct")->default_val("test");

    auto* maps = app.add_subcommand("maps", "Parametric maps from a recon stage or phantom split");
    fs::path input;
    maps->add_option("--input", input, "Recon or phantom stage directory")->required();
    maps->add_option("--out", out_dir, "Output directory")->required();
    maps->add_option("--split", split, "Split (phantom input only)")->default_val("test");

    auto* eval = app.add_subcommand("eval", "PSNR/SSIM on echo images and RMSE on maps");
    fs::path ref, test;
    std::optional<fs::path> ref_maps, test_maps;
    eval->add_option("--ref", ref, "Phantom stage (ground truth) or recon stage")->required();
    eval->add_option("--test", test, "Recon stage")->required();
    eval->add_option("--ref-maps", ref_maps, "Maps stage of the reference");
    eval->add_option("--test-maps", test_maps, "Maps stage of the test recon");
    eval->add_option("--out", out_dir, "Output directory")->required();
    eval->add_option("--split", split, "Split (phantom reference only)")->default_val("test");

    auto* render = app.add_subcommand("render", "PNG of one slice or of an error image");
    RenderRequest rr;
    std::string axis = "z";
    std::optional<double> error_scale;
    render->add_option("--volume", rr.volume, "Volume (.cvol magnitude or .rvol)")->required()->check(CLI::ExistingFile);
    render->add_option("--against", rr.against, "Reference volume; renders |volume - against| * scale");
    render->add_option("--axis", axis, "x | y | z")->check(CLI::IsMember({"x", "y", "z"}));
    render->add_option("--slice", rr.slice, "Slice index (default: middle)");
    render->add_option("--error-scale", error_scale, "Error magnification (default from config, 50)");
    render->add_option("--out", rr.out, "PNG path")->required();

    for (auto* sub : {phantom, mask, train, recon, maps, eval, render}) sub->fallthrough();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        Context ctx;
        ctx.out = &out;
        ctx.force = force;
        RunConfig& cfg = ctx.config;
        if (config_path) cfg = load_config(*config_path);
        if (seed) cfg.seed = *seed;
        if (workers) cfg.workers = *workers;
        if (!dims.empty()) cfg.phantom.dims = {dims[0], dims[1], dims[2]};
        if (n_train) cfg.phantom.n_train = *n_train;
        if (n_test) cfg.phantom.n_test = *n_test;
        if (accel) cfg.mask.accel = *accel;
        if (steps) cfg.train.steps_per_epoch = *steps;
        cfg.validate();

        if (*phantom) cmd_phantom(ctx, out_dir);
        else if (*mask) cmd_mask(ctx, out_dir);
        else if (*train) cmd_train(ctx, data, mask_dir, out_dir, split);
        else if (*recon) cmd_recon(ctx, recon_mode_from_string(mode), data, recon_mask, model, out_dir, split);
        else if (*maps) cmd_maps(ctx, input, out_dir, split);
        else if (*eval) cmd_eval(ctx, ref, test, ref_maps, test_maps, out_dir, split);
        else if (*render) {
            rr.axis = slice_axis_from_string(axis);
            rr.error_scale = error_scale.value_or(cfg.error_scale);
            cmd_render(ctx, rr);
        }
    } catch (const std::exception& e) {
        err << "mplex: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace mplex::cli
