#include "gliomakit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "gliomakit/netkit.hpp"
#include "gliomakit/nifti.hpp"

namespace gliomakit {

using nlohmann::json;

namespace {

std::mutex g_log_mutex;

template <typename T>
T get_as(const json& value, const std::string& key) {
    try {
        return value.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

template <typename Fn>
void for_each_key(const json& obj, const std::string& section, Fn&& fn) {
    if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!fn(it.key(), it.value())) throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
    }
}

std::string method_name(FusionMethod m) { return m == FusionMethod::Staple ? "staple" : "majority"; }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text_atomically(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write " + path.string());
        out << text;
        if (!out) throw Error("write failed for " + path.string());
    }
    fs::rename(tmp, path);
}

json summary_json(const MetricSummary& s) { return json{{"mean", s.mean}, {"std", s.std}, {"median", s.median}}; }

}  // namespace

void PipelineConfig::validate() const {
    try {
        for (const auto& [key, suffix] : modality_suffixes) {
            if (suffix.empty()) throw ConfigError("modality suffix for '" + key + "' is empty");
        }
        if (label_suffix.empty()) throw ConfigError("label suffix is empty");
        if (parallel_cases < 1) throw ConfigError("parallel_cases must be >= 1");
        preprocess.policy.validate();
        preprocess.rescale.validate();
        staple.validate();
        postprocess.validate();
        metrics.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

void apply_config_json(PipelineConfig& c, const json& doc) {
    for_each_key(doc, "config", [&](const std::string& key, const json& v) {
        if (key == "modality_suffixes") {
            for_each_key(v, key, [&](const std::string& m, const json& s) {
                if (!c.modality_suffixes.contains(m)) return false;
                c.modality_suffixes[m] = get_as<std::string>(s, key + "." + m);
                return true;
            });
        } else if (key == "label_suffix") {
            c.label_suffix = get_as<std::string>(v, key);
        } else if (key == "prediction_dirs") {
            c.prediction_dirs.clear();
            for (const auto& d : get_as<std::vector<std::string>>(v, key)) c.prediction_dirs.emplace_back(d);
        } else if (key == "output_dir") {
            c.output_dir = get_as<std::string>(v, key);
        } else if (key == "normalization") {
            for_each_key(v, key, [&](const std::string& k, const json& x) {
                if (k == "include_background") c.preprocess.policy.include_background = get_as<bool>(x, k);
                else if (k == "epsilon") c.preprocess.policy.epsilon = get_as<double>(x, k);
                else if (k == "zscore_first") c.preprocess.zscore_first = get_as<bool>(x, k);
                else return false;
                return true;
            });
        } else if (key == "rescale") {
            for_each_key(v, key, [&](const std::string& k, const json& x) {
                if (k == "lo_percentile") c.preprocess.rescale.lo_percentile = get_as<double>(x, k);
                else if (k == "hi_percentile") c.preprocess.rescale.hi_percentile = get_as<double>(x, k);
                else if (k == "out_min") c.preprocess.rescale.out_min = get_as<double>(x, k);
                else if (k == "out_max") c.preprocess.rescale.out_max = get_as<double>(x, k);
                else return false;
                return true;
            });
        } else if (key == "staple") {
            for_each_key(v, key, [&](const std::string& k, const json& x) {
                if (k == "prior") {
                    if (x.is_null() || (x.is_string() && x.get<std::string>() == "auto")) c.staple.prior.reset();
                    else c.staple.prior = get_as<double>(x, k);
                } else if (k == "tolerance") c.staple.tolerance = get_as<double>(x, k);
                else if (k == "max_iterations") c.staple.max_iterations = get_as<int>(x, k);
                else if (k == "decision_threshold") c.staple.decision_threshold = get_as<double>(x, k);
                else if (k == "initial_sensitivity") c.staple.initial_sensitivity = get_as<double>(x, k);
                else if (k == "initial_specificity") c.staple.initial_specificity = get_as<double>(x, k);
                else if (k == "method") {
                    const auto m = get_as<std::string>(x, k);
                    if (m == "staple") c.fusion_method = FusionMethod::Staple;
                    else if (m == "majority") c.fusion_method = FusionMethod::Majority;
                    else throw ConfigError("staple.method must be 'staple' or 'majority'");
                } else if (k == "strict") c.strict = get_as<bool>(x, k);
                else return false;
                return true;
            });
        } else if (key == "postprocess") {
            for_each_key(v, key, [&](const std::string& k, const json& x) {
                try {
                    if (k == "et_min_volume") c.postprocess.et_min_volume = get_as<std::size_t>(x, k);
                    else if (k == "foreground_connectivity")
                        c.postprocess.foreground_connectivity = connectivity_from_int(get_as<int>(x, k));
                    else if (k == "hole_connectivity") c.postprocess.hole_connectivity = connectivity_from_int(get_as<int>(x, k));
                    else if (k == "hole_fill_label") c.postprocess.hole_fill_label = get_as<std::uint8_t>(x, k);
                    else if (k == "fill_tc_holes") c.postprocess.fill_tc_holes = get_as<bool>(x, k);
                    else return false;
                } catch (const std::invalid_argument& e) {
                    throw ConfigError(e.what());
                }
                return true;
            });
        } else if (key == "metrics") {
            for_each_key(v, key, [&](const std::string& k, const json& x) {
                if (k == "empty_pred_penalty_mm") c.metrics.empty_pred_penalty_mm = get_as<double>(x, k);
                else if (k == "empty_empty_dice") c.metrics.empty_empty_dice = get_as<double>(x, k);
                else if (k == "empty_empty_hd95") c.metrics.empty_empty_hd95 = get_as<double>(x, k);
                else return false;
                return true;
            });
        } else if (key == "parallel_cases") {
            c.parallel_cases = get_as<int>(v, key);
        } else {
            return false;
        }
        return true;
    });
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    PipelineConfig c;
    apply_config_json(c, doc);
    return c;
}

json config_to_json(const PipelineConfig& c) {
    json dirs = json::array();
    for (const auto& d : c.prediction_dirs) dirs.push_back(d.string());
    return json{
        {"modality_suffixes", c.modality_suffixes},
        {"label_suffix", c.label_suffix},
        {"prediction_dirs", dirs},
        {"output_dir", c.output_dir.string()},
        {"normalization",
         {{"include_background", c.preprocess.policy.include_background},
          {"epsilon", c.preprocess.policy.epsilon},
          {"zscore_first", c.preprocess.zscore_first}}},
        {"rescale",
         {{"lo_percentile", c.preprocess.rescale.lo_percentile},
          {"hi_percentile", c.preprocess.rescale.hi_percentile},
          {"out_min", c.preprocess.rescale.out_min},
          {"out_max", c.preprocess.rescale.out_max}}},
        {"staple",
         {{"prior", c.staple.prior ? json(*c.staple.prior) : json("auto")},
          {"tolerance", c.staple.tolerance},
          {"max_iterations", c.staple.max_iterations},
          {"decision_threshold", c.staple.decision_threshold},
          {"initial_sensitivity", c.staple.initial_sensitivity},
          {"initial_specificity", c.staple.initial_specificity},
          {"method", method_name(c.fusion_method)},
          {"strict", c.strict}}},
        {"postprocess",
         {{"et_min_volume", c.postprocess.et_min_volume},
          {"foreground_connectivity", static_cast<int>(c.postprocess.foreground_connectivity)},
          {"hole_connectivity", static_cast<int>(c.postprocess.hole_connectivity)},
          {"hole_fill_label", c.postprocess.hole_fill_label},
          {"fill_tc_holes", c.postprocess.fill_tc_holes}}},
        {"metrics",
         {{"empty_pred_penalty_mm", c.metrics.empty_pred_penalty_mm},
          {"empty_empty_dice", c.metrics.empty_empty_dice},
          {"empty_empty_hd95", c.metrics.empty_empty_hd95}}},
        {"parallel_cases", c.parallel_cases},
    };
}

fs::path case_file(const fs::path& dir, const CaseId& id, const std::string& suffix) {
    return dir / id.str() / (id.str() + suffix);
}

std::vector<CaseId> list_cases(const fs::path& dir, const std::string& suffix) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw ConfigError("not a directory: " + dir.string());
    std::vector<CaseId> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.empty() || name.front() == '.') continue;
        CaseId id(name);
        if (fs::is_regular_file(case_file(dir, id, suffix), ec)) out.push_back(std::move(id));
    }
    std::sort(out.begin(), out.end());
    return out;
}

void for_each_case(std::size_t count, int parallel, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, parallel)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    }
}

void log_line(const std::string& message) {
    std::lock_guard lock(g_log_mutex);
    std::cerr << "[gliomakit] " << message << '\n';
}

int cmd_normalize(const PipelineConfig& config, const fs::path& input_dir, const fs::path& output_dir) {
    config.validate();
    if (config.modality_suffixes.empty()) throw ConfigError("no modalities configured");
    const std::string& first_suffix = config.modality_suffixes.begin()->second;
    const auto cases = list_cases(input_dir, first_suffix);
    std::vector<char> failed(cases.size(), 0);

    for_each_case(cases.size(), config.parallel_cases, [&](std::size_t i) {
        const CaseId& id = cases[i];
        try {
            std::vector<std::pair<fs::path, ScalarVolume>> outputs;
            for (const auto& [modality, suffix] : config.modality_suffixes) {
                try {
                    const ScalarVolume raw = nifti::read_scalar_volume(case_file(input_dir, id, suffix));
                    outputs.emplace_back(case_file(output_dir, id, suffix), preprocess_modality(raw, config.preprocess));
                } catch (const std::exception& e) {
                    throw Error(modality + ": " + e.what());
                }
            }
            ensure_dir(output_dir / id.str());
            for (const auto& [path, volume] : outputs) nifti::write_scalar_volume(volume, path);
            log_line("normalize " + id.str() + ": ok (" + std::to_string(outputs.size()) + " modalities)");
        } catch (const std::exception& e) {
            failed[i] = 1;
            log_line("normalize " + id.str() + ": FAILED: " + e.what());
        }
    });
    return std::count(failed.begin(), failed.end(), 1) > 0 ? kExitCaseFailure : kExitOk;
}

int cmd_fuse(const PipelineConfig& config) {
    config.validate();
    if (config.prediction_dirs.empty()) throw ConfigError("fuse needs at least one prediction directory");
    if (config.output_dir.empty()) throw ConfigError("fuse needs an output directory");

    std::vector<std::vector<CaseId>> per_member;
    for (const auto& dir : config.prediction_dirs) per_member.push_back(list_cases(dir, config.label_suffix));
    std::vector<CaseId> all;
    for (const auto& m : per_member) all.insert(all.end(), m.begin(), m.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    bool any_failure = false;
    std::vector<CaseId> cases;
    for (const auto& id : all) {
        const bool everywhere = std::all_of(per_member.begin(), per_member.end(), [&](const auto& m) {
            return std::binary_search(m.begin(), m.end(), id);
        });
        if (everywhere) {
            cases.push_back(id);
        } else if (config.strict) {
            any_failure = true;
            log_line("fuse " + id.str() + ": FAILED: missing from at least one member directory");
        } else {
            log_line("fuse " + id.str() + ": skipped, missing from at least one member directory");
        }
    }

    std::vector<char> failed(cases.size(), 0);
    for_each_case(cases.size(), config.parallel_cases, [&](std::size_t i) {
        const CaseId& id = cases[i];
        try {
            std::vector<LabelVolume> members;
            for (const auto& dir : config.prediction_dirs)
                members.push_back(nifti::read_label_volume(case_file(dir, id, config.label_suffix)));
            const LabelVolume fused = fuse_labels(members, config.staple, config.fusion_method);
            ensure_dir(config.output_dir / id.str());
            nifti::write_label_volume(fused, case_file(config.output_dir, id, config.label_suffix));
            log_line("fuse " + id.str() + ": ok (" + std::to_string(members.size()) + " members, " +
                     method_name(config.fusion_method) + ")");
        } catch (const std::exception& e) {
            failed[i] = 1;
            log_line("fuse " + id.str() + ": FAILED: " + e.what());
        }
    });
    any_failure = any_failure || std::count(failed.begin(), failed.end(), 1) > 0;
    return any_failure ? kExitCaseFailure : kExitOk;
}

int cmd_postprocess(const PipelineConfig& config, const fs::path& input_dir, const fs::path& output_dir) {
    config.validate();
    const auto cases = list_cases(input_dir, config.label_suffix);
    std::vector<char> failed(cases.size(), 0);
    for_each_case(cases.size(), config.parallel_cases, [&](std::size_t i) {
        const CaseId& id = cases[i];
        try {
            const LabelVolume labels = nifti::read_label_volume(case_file(input_dir, id, config.label_suffix));
            PostprocessReport report;
            const LabelVolume cleaned = postprocess_case(labels, config.postprocess, &report);
            ensure_dir(output_dir / id.str());
            nifti::write_label_volume(cleaned, case_file(output_dir, id, config.label_suffix));
            log_line("postprocess " + id.str() + ": removed " + std::to_string(report.removed_et_components) +
                     " ET component(s) / " + std::to_string(report.removed_et_voxels) + " voxels; TC holes " +
                     std::to_string(report.tc_holes.components) + ", filled " + std::to_string(report.filled_voxels) +
                     " voxels");
        } catch (const std::exception& e) {
            failed[i] = 1;
            log_line("postprocess " + id.str() + ": FAILED: " + e.what());
        }
    });
    return std::count(failed.begin(), failed.end(), 1) > 0 ? kExitCaseFailure : kExitOk;
}

json evaluation_report(const std::vector<CaseReport>& reports, const std::vector<std::string>& missing,
                       const std::vector<std::string>& failed, const PipelineConfig& config) {
    json cases = json::array();
    for (const auto& r : reports) {
        json regions = json::object();
        for (const auto& s : r.scores) {
            regions[std::string(region_name(s.region))] = {{"dice", s.dice}, {"hd95_mm", s.hd95_mm}};
        }
        cases.push_back({{"case", r.case_id.str()}, {"regions", regions}});
    }
    json summary = json::object();
    if (!reports.empty()) {
        const CohortSummary cohort = aggregate(reports);
        for (const auto& rs : cohort.regions) {
            summary[std::string(region_name(rs.region))] = {{"dice", summary_json(rs.dice)},
                                                            {"hd95_mm", summary_json(rs.hd95_mm)}};
        }
    }
    return json{{"cases", cases}, {"summary", summary}, {"missing", missing}, {"failed", failed},
                {"config", config_to_json(config)}};
}

int cmd_evaluate(const PipelineConfig& config, const fs::path& pred_dir, const fs::path& truth_dir,
                 const fs::path& report_path) {
    config.validate();
    const auto truth_cases = list_cases(truth_dir, config.label_suffix);

    std::vector<std::optional<CaseReport>> results(truth_cases.size());
    std::vector<char> missing_flag(truth_cases.size(), 0), failed_flag(truth_cases.size(), 0);
    for_each_case(truth_cases.size(), config.parallel_cases, [&](std::size_t i) {
        const CaseId& id = truth_cases[i];
        const fs::path pred_path = case_file(pred_dir, id, config.label_suffix);
        std::error_code ec;
        if (!fs::is_regular_file(pred_path, ec)) {
            missing_flag[i] = 1;
            log_line("evaluate " + id.str() + ": no prediction");
            return;
        }
        try {
            const LabelVolume pred = nifti::read_label_volume(pred_path);
            const LabelVolume truth = nifti::read_label_volume(case_file(truth_dir, id, config.label_suffix));
            results[i] = evaluate_case(id, pred, truth, config.metrics);
            const auto& s = results[i]->scores;
            log_line("evaluate " + id.str() + ": dice ET/TC/WT " + std::to_string(s[0].dice) + " / " +
                     std::to_string(s[1].dice) + " / " + std::to_string(s[2].dice));
        } catch (const std::exception& e) {
            failed_flag[i] = 1;
            log_line("evaluate " + id.str() + ": FAILED: " + e.what());
        }
    });

    std::vector<CaseReport> reports;
    std::vector<std::string> missing, failed;
    for (std::size_t i = 0; i < truth_cases.size(); ++i) {
        if (results[i]) reports.push_back(*results[i]);
        if (missing_flag[i]) missing.push_back(truth_cases[i].str());
        if (failed_flag[i]) failed.push_back(truth_cases[i].str());
    }
    if (report_path.has_parent_path()) ensure_dir(report_path.parent_path());
    write_text_atomically(report_path, evaluation_report(reports, missing, failed, config).dump(2) + "\n");
    log_line("evaluate: " + std::to_string(reports.size()) + " case(s) scored, " + std::to_string(missing.size()) +
             " missing, " + std::to_string(failed.size()) + " failed; report " + report_path.string());
    return (missing.empty() && failed.empty()) ? kExitOk : kExitCaseFailure;
}

Architecture architecture_from_name(const std::string& name) {
    if (name == "unet3d") return Architecture::UNet3D;
    if (name == "vnet") return Architecture::VNet;
    if (name == "msavnet") return Architecture::MsaVNet;
    throw ConfigError("unknown architecture '" + name + "' (expected unet3d, vnet or msavnet)");
}

int cmd_demo_net(Architecture arch, std::size_t input_size, std::uint64_t seed, std::ostream& out) {
    net::NetworkGraph graph;
    switch (arch) {
        case Architecture::UNet3D: {
            net::UNetOptions o;
            o.seed = seed;
            graph = net::build_unet3d(o);
            break;
        }
        case Architecture::VNet: {
            net::VNetOptions o;
            o.seed = seed;
            graph = net::build_vnet(o);
            break;
        }
        case Architecture::MsaVNet: {
            net::MsaVNetOptions o;
            o.seed = seed;
            graph = net::build_msavnet(o);
            break;
        }
    }
    const std::size_t div = graph.required_divisor();
    if (input_size == 0 || input_size % div != 0)
        throw ConfigError(graph.architecture + " needs an input size divisible by " + std::to_string(div) + " (got " +
                          std::to_string(input_size) + ")");

    const net::Tensor5 input =
        net::Tensor5::random_uniform({1, graph.in_channels, input_size, input_size, input_size}, seed);
    net::ForwardTrace trace;
    const net::Tensor5 output = net::forward(graph, input, &trace);
    out << net::summary_table(graph, trace);

    const net::Shape5 expected{1, graph.num_classes, input_size, input_size, input_size};
    if (output.shape() != expected || !output.all_finite()) {
        out << "output shape " << net::shape_str(output.shape()) << " does not match " << net::shape_str(expected)
            << '\n';
        return kExitCaseFailure;
    }
    out << "output shape: " << net::shape_str(output.shape()) << '\n';
    return kExitOk;
}

}  // namespace gliomakit
