#pragma once

// Case-level orchestration behind the command-line subcommands.
//
// Layout convention: every case is a directory named after the case id,
// holding files "<case><suffix>", e.g. cases/BraTS-SSA-00002-000/
// BraTS-SSA-00002-000-seg.nii.gz. Outputs mirror the same layout.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gliomakit/metrics.hpp"
#include "gliomakit/postprocess.hpp"
#include "gliomakit/preprocess.hpp"
#include "gliomakit/staple.hpp"

namespace gliomakit {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitCaseFailure = 1, kExitUsage = 2 };

/// Bad configuration or usage; the CLI maps it to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct PipelineConfig {
    std::map<std::string, std::string> modality_suffixes{
        {"t1", "-t1n.nii.gz"}, {"t1gd", "-t1c.nii.gz"}, {"t2", "-t2w.nii.gz"}, {"flair", "-t2f.nii.gz"}};
    std::string label_suffix = "-seg.nii.gz";
    std::vector<fs::path> prediction_dirs;
    fs::path output_dir;

    PreprocessConfig preprocess;
    StapleConfig staple;
    FusionMethod fusion_method = FusionMethod::Staple;
    /// fuse: a case absent from any member directory is a failure instead of a skip.
    bool strict = false;
    PostprocessConfig postprocess;
    MetricConfig metrics;
    int parallel_cases = 1;

    /// Throws ConfigError.
    void validate() const;
};

/// Overlays the keys present in `doc` onto `config`. Unknown keys are errors.
void apply_config_json(PipelineConfig& config, const nlohmann::json& doc);
PipelineConfig load_config(const fs::path& path);
nlohmann::json config_to_json(const PipelineConfig& config);

/// Sorted ids of the case directories under `dir` that contain "<id><suffix>".
std::vector<CaseId> list_cases(const fs::path& dir, const std::string& suffix);
fs::path case_file(const fs::path& dir, const CaseId& id, const std::string& suffix);

/// Runs fn(i) for i in [0, count) on up to `parallel` threads.
void for_each_case(std::size_t count, int parallel, const std::function<void(std::size_t)>& fn);

/// Thread-safe line logger writing to standard error.
void log_line(const std::string& message);

int cmd_normalize(const PipelineConfig& config, const fs::path& input_dir, const fs::path& output_dir);
int cmd_fuse(const PipelineConfig& config);
int cmd_postprocess(const PipelineConfig& config, const fs::path& input_dir, const fs::path& output_dir);
int cmd_evaluate(const PipelineConfig& config, const fs::path& pred_dir, const fs::path& truth_dir,
                 const fs::path& report_path);

enum class Architecture { UNet3D, VNet, MsaVNet };
Architecture architecture_from_name(const std::string& name);

/// Builds the graph, runs a seeded forward pass on a 1x4xN^3 input and
/// prints the layer table to `out`. Invalid sizes throw ConfigError.
int cmd_demo_net(Architecture arch, std::size_t input_size, std::uint64_t seed, std::ostream& out);

/// The evaluation report document:
/// { "cases": [...], "summary": {...}, "missing": [...], "failed": [...], "config": {...} }
nlohmann::json evaluation_report(const std::vector<CaseReport>& reports, const std::vector<std::string>& missing,
                                 const std::vector<std::string>& failed, const PipelineConfig& config);

}  // namespace gliomakit
