#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gliomakit/nifti.hpp"
#include "gliomakit/pipeline.hpp"

namespace gk = gliomakit;

namespace {

struct Overrides {
    std::string config_path;
    std::optional<std::size_t> et_min_volume;
    std::optional<double> staple_tol;
    std::optional<int> staple_max_iter;
    std::optional<std::string> method;
    std::optional<int> connectivity;
    std::optional<int> parallel;
    bool strict = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--et-min-volume", o.et_min_volume, "remove ET components with at most this many voxels");
    cmd->add_option("--staple-tol", o.staple_tol, "STAPLE convergence tolerance");
    cmd->add_option("--staple-max-iter", o.staple_max_iter, "STAPLE iteration cap");
    cmd->add_option("--method", o.method, "fusion method")->check(CLI::IsMember({"staple", "majority"}));
    cmd->add_option("--connectivity", o.connectivity, "foreground connectivity for ET filtering")
        ->check(CLI::IsMember({6, 18, 26}));
    cmd->add_option("--parallel", o.parallel, "cases processed concurrently")->check(CLI::PositiveNumber);
}

gk::PipelineConfig resolve(const Overrides& o) {
    gk::PipelineConfig c = o.config_path.empty() ? gk::PipelineConfig{} : gk::load_config(o.config_path);
    if (o.et_min_volume) c.postprocess.et_min_volume = *o.et_min_volume;
    if (o.staple_tol) c.staple.tolerance = *o.staple_tol;
    if (o.staple_max_iter) c.staple.max_iterations = *o.staple_max_iter;
    if (o.method) c.fusion_method = *o.method == "majority" ? gk::FusionMethod::Majority : gk::FusionMethod::Staple;
    if (o.connectivity) c.postprocess.foreground_connectivity = gk::connectivity_from_int(*o.connectivity);
    if (o.parallel) c.parallel_cases = *o.parallel;
    if (o.strict) c.strict = true;
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Glioma segmentation toolkit: normalization, ensemble fusion, post-processing and evaluation"};
    app.require_subcommand(1);

    Overrides o;
    std::string input, output, pred, truth, report;
    std::vector<std::string> members;
    std::string arch = "vnet";
    std::size_t size = 32;
    std::uint64_t seed = 0;

    auto* normalize = app.add_subcommand("normalize", "z-score and percentile-rescale every modality of every case");
    add_common(normalize, o);
    normalize->add_option("--input", input, "case directory root")->required();
    normalize->add_option("--output", output, "output directory root")->required();

    auto* fuse = app.add_subcommand("fuse", "fuse member predictions case by case");
    add_common(fuse, o);
    fuse->add_option("--member", members, "prediction directory of one ensemble member (repeatable)");
    fuse->add_option("--output", output, "fused output directory");
    fuse->add_flag("--strict", o.strict, "fail cases missing from a member instead of skipping them");

    auto* post = app.add_subcommand("postprocess", "remove small ET islands and fill TC holes");
    add_common(post, o);
    post->add_option("--input", input, "label directory root")->required();
    post->add_option("--output", output, "output directory root")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Dice and HD95 per case and region, written as JSON");
    add_common(evaluate, o);
    evaluate->add_option("--pred", pred, "prediction directory root")->required();
    evaluate->add_option("--truth", truth, "ground-truth directory root")->required();
    evaluate->add_option("--report", report, "JSON report path")->required();

    auto* demo = app.add_subcommand("demo-net", "build a network, run a seeded forward pass, print its layer table");
    add_common(demo, o);
    demo->add_option("--arch", arch, "unet3d, vnet or msavnet")->check(CLI::IsMember({"unet3d", "vnet", "msavnet"}));
    demo->add_option("--size", size, "cubic input edge length");
    demo->add_option("--seed", seed, "weight and input seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? gk::kExitOk : gk::kExitUsage;
    }

    try {
        gk::PipelineConfig config = resolve(o);
        if (*normalize) return gk::cmd_normalize(config, input, output);
        if (*fuse) {
            if (!members.empty()) config.prediction_dirs.assign(members.begin(), members.end());
            if (!output.empty()) config.output_dir = output;
            return gk::cmd_fuse(config);
        }
        if (*post) return gk::cmd_postprocess(config, input, output);
        if (*evaluate) return gk::cmd_evaluate(config, pred, truth, report);
        if (*demo) return gk::cmd_demo_net(gk::architecture_from_name(arch), size, seed, std::cout);
    } catch (const gk::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return gk::kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return gk::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return gk::kExitCaseFailure;
    }
    return gk::kExitUsage;
}
