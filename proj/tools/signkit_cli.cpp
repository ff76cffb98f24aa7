// signkit: command-line pipeline over the signkit library.
//
//   signkit ingest   --root voc/ --out run/
//   signkit aras     --manifest run/manifest.csv --out run/
//   signkit ore      --manifest run/manifest.csv --images voc/ --out run/corpus
//   signkit coverage --manifest run/manifest.csv --anchor-spec run/anchor_spec.json --out run/
//   signkit eval     --gt run/manifest.csv --predictions preds.csv --out run/
//
// Exit codes: 0 success (possibly with warnings), 1 input or validation
// error, 2 internal error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "signkit/signkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_input = 1;
constexpr int exit_internal = 2;

/// Effective parameters of one command, fingerprinted into every output.
class RunRecord {
public:
    explicit RunRecord(std::string command) : command_(std::move(command)) {}

    void param(const std::string& key, const std::string& value) { params_[key] = value; }
    void param(const std::string& key, double value) {
        params_[key] = signkit::detail::format_number(value);
    }
    void input_file(const std::string& key, const fs::path& path) {
        params_[key + ".fnv1a"] = signkit::detail::hex64(
            signkit::detail::fnv1a(signkit::read_file_bytes(path)));
    }
    void seed(std::uint64_t s) { seed_ = s; }

    json to_json() const {
        std::string canonical = command_ + '\n';
        for (const auto& [k, v] : params_) {
            canonical += k + '=' + v + '\n';
        }
        json j = {
            {"tool", "signkit"},
            {"version", signkit::version},
            {"command", command_},
            {"config_hash", signkit::detail::hex64(signkit::detail::fnv1a(canonical))},
            {"params", params_},
        };
        if (seed_) {
            j["seed"] = *seed_;
        }
        return j;
    }

private:
    std::string command_;
    std::map<std::string, std::string> params_;
    std::optional<std::uint64_t> seed_;
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw signkit::io_error("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw signkit::io_error("failed writing " + path.string());
    }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

signkit::AnnotationTable load_manifest(const fs::path& path, signkit::FrameSize frame) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw signkit::io_error("cannot open manifest " + path.string());
    }
    return signkit::read_csv(in, frame);
}

/// Applies a flat key=value file to options not given on the command line.
void apply_config_file(const fs::path& path, CLI::App& sub, CLI::App& root) {
    std::ifstream in(path);
    if (!in) {
        throw signkit::io_error("cannot open config file " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = signkit::detail::trim(line);
        if (text.empty() || text.front() == '#' || text.front() == ';') {
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string_view::npos) {
            throw signkit::parse_error(path.string() + ":" + std::to_string(line_no) +
                                           ": expected key=value",
                                       line_no);
        }
        const std::string key(signkit::detail::trim(text.substr(0, eq)));
        std::string value(signkit::detail::trim(text.substr(eq + 1)));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        CLI::Option* opt = sub.get_option_no_throw("--" + key);
        if (opt == nullptr) {
            opt = root.get_option_no_throw("--" + key);
        }
        if (opt == nullptr) {
            // keys for other commands are allowed in a shared file
            continue;
        }
        if (opt->count() == 0) {
            opt->add_result(value);
            opt->run_callback();
        }
    }
}

struct Common {
    fs::path out;
    int frame_width = signkit::canonical_frame.width;
    int frame_height = signkit::canonical_frame.height;

    signkit::FrameSize frame() const { return {frame_width, frame_height}; }
};

void add_out(CLI::App& sub, Common& c) {
    sub.add_option("--out", c.out, "Output directory (env SIGNKIT_OUT overrides the default)")
        ->envname("SIGNKIT_OUT");
}

void add_frame(CLI::App& sub, Common& c) {
    sub.add_option("--frame-width", c.frame_width, "Canonical frame width")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub.add_option("--frame-height", c.frame_height, "Canonical frame height")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"signkit: anchor optimisation, patch mining and detection evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", signkit::version);
    unsigned jobs = 1;
    std::string config_path;
    app.add_option("--jobs", jobs, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
    app.add_option("--config", config_path, "Flat key=value config file (flags take precedence)");

    Common common;

    // ingest
    fs::path ingest_root;
    auto* ingest = app.add_subcommand("ingest", "Parse a Pascal VOC directory into a manifest CSV");
    ingest->add_option("--root", ingest_root, "Directory of VOC XML files")->required();
    add_out(*ingest, common);
    add_frame(*ingest, common);

    // aras
    fs::path manifest_path;
    std::size_t k = 3;
    std::uint64_t seed = 0;
    auto* aras_cmd = app.add_subcommand("aras", "Derive anchor ratios and scales from a manifest");
    aras_cmd->add_option("--manifest", manifest_path, "Manifest CSV")->required();
    aras_cmd->add_option("--k", k, "Cluster count")->capture_default_str()->check(CLI::Range(1, 64));
    aras_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    add_out(*aras_cmd, common);
    add_frame(*aras_cmd, common);

    // ore
    fs::path image_root;
    std::size_t total = 20000;
    signkit::OreOptions ore_options;
    auto* ore_cmd = app.add_subcommand("ore", "Mine signboard / non-signboard 224x224 patches");
    ore_cmd->add_option("--manifest", manifest_path, "Manifest CSV")->required();
    ore_cmd->add_option("--images", image_root, "Directory image paths are relative to")->required();
    ore_cmd->add_option("--total", total, "Corpus size")->capture_default_str();
    ore_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    ore_cmd->add_option("--window", ore_options.window, "Sliding window side")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    ore_cmd->add_option("--stride", ore_options.stride, "Sliding window stride (1 = every position)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    ore_cmd->add_option("--margin", ore_options.margin, "Box expansion in pixels")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    add_out(*ore_cmd, common);
    add_frame(*ore_cmd, common);

    // coverage
    fs::path spec_path;
    bool default_anchors = false;
    int anchor_stride = signkit::default_anchor_stride;
    std::string mode_name;
    double iou_threshold = 0.7;
    auto* coverage_cmd = app.add_subcommand("coverage", "Score how well an anchor grid covers ground truth");
    coverage_cmd->add_option("--manifest", manifest_path, "Manifest CSV")->required();
    auto* spec_opt = coverage_cmd->add_option("--anchor-spec", spec_path, "Anchor spec JSON");
    coverage_cmd->add_flag("--default-anchors", default_anchors,
                           "Use scales 128/256/512 with ratios 1:1, 1:2, 2:1")
        ->excludes(spec_opt);
    coverage_cmd->add_option("--stride", anchor_stride, "Anchor lattice stride")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    coverage_cmd->add_option("--mode", mode_name, "height-scale or area (default depends on anchors)")
        ->check(CLI::IsMember({"height-scale", "area"}));
    coverage_cmd->add_option("--iou", iou_threshold, "IoU threshold")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    add_out(*coverage_cmd, common);
    add_frame(*coverage_cmd, common);

    // eval
    fs::path predictions_path;
    std::string ap_mode_name = "allpoint";
    bool apply_nms = false;
    double nms_iou = 0.7;
    std::size_t nms_max = 300;
    auto* eval_cmd = app.add_subcommand("eval", "Compute per-class AP and mAP for predictions");
    eval_cmd->add_option("--gt", manifest_path, "Ground-truth manifest CSV")->required();
    eval_cmd->add_option("--predictions", predictions_path, "Prediction CSV")->required();
    eval_cmd->add_option("--iou", iou_threshold, "True-positive IoU threshold")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_option("--ap-mode", ap_mode_name, "allpoint or 11point")
        ->capture_default_str()
        ->check(CLI::IsMember({"allpoint", "11point"}));
    eval_cmd->add_flag("--nms", apply_nms, "Run NMS per image and class before matching");
    eval_cmd->add_option("--nms-iou", nms_iou, "NMS IoU threshold")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_option("--nms-max", nms_max, "NMS maximum kept boxes")->capture_default_str();
    add_out(*eval_cmd, common);
    add_frame(*eval_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_input;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        if (!config_path.empty()) {
            apply_config_file(config_path, *active, app);
        }
        if (common.out.empty()) {
            throw signkit::validation_error("--out is required (or set SIGNKIT_OUT)");
        }

        if (active == ingest) {
            RunRecord run("ingest");
            run.param("frame", std::to_string(common.frame_width) + "x" +
                                   std::to_string(common.frame_height));
            signkit::IngestOptions options;
            options.frame = common.frame();
            options.jobs = jobs;
            options.log = &std::cerr;
            const auto result = signkit::ingest_dataset(ingest_root, options);
            std::ostringstream csv;
            signkit::write_csv(csv, result.table);
            write_text(common.out / "manifest.csv", csv.str());
            const auto& r = result.report;
            write_json(common.out / "ingest_summary.json",
                       {{"run", run.to_json()},
                        {"files_seen", r.files_seen},
                        {"files_parsed", r.files_parsed},
                        {"files_rejected", r.files_rejected},
                        {"rejected_files", r.rejected_files},
                        {"boxes_accepted", r.boxes_accepted},
                        {"boxes_rejected", r.boxes_rejected},
                        {"images", result.table.rows.size()},
                        {"classes", result.table.class_names}});
            if (r.files_seen == 0) {
                std::cerr << "warning: no VOC XML files found under " << ingest_root << '\n';
            }
            if (r.files_rejected > 0 || r.boxes_rejected > 0) {
                std::cerr << "warning: skipped " << r.files_rejected << " file(s) and "
                          << r.boxes_rejected << " box(es)\n";
            }
            std::cout << "ingest: " << r.files_parsed << " image(s), " << r.boxes_accepted
                      << " box(es) -> " << (common.out / "manifest.csv").string() << '\n';
        } else if (active == aras_cmd) {
            RunRecord run("aras");
            run.input_file("manifest", manifest_path);
            run.param("k", std::to_string(k));
            run.seed(seed);
            const auto table = load_manifest(manifest_path, common.frame());
            const auto spec = signkit::aras(table, k, seed);
            auto j = signkit::to_json(spec);
            j["run"] = run.to_json();
            j["n_boxes"] = table.box_count();
            write_json(common.out / "anchor_spec.json", j);
            if (spec.degenerate()) {
                std::cerr << "warning: fewer than " << k
                          << " distinct widths or heights; duplicate anchor pairs emitted\n";
            }
            std::cout << signkit::summarize(spec) << '\n';
        } else if (active == ore_cmd) {
            RunRecord run("ore");
            run.input_file("manifest", manifest_path);
            run.param("total", std::to_string(total));
            run.param("window", std::to_string(ore_options.window));
            run.param("stride", std::to_string(ore_options.stride));
            run.param("margin", ore_options.margin);
            run.seed(seed);
            const auto table = load_manifest(manifest_path, common.frame());
            signkit::CorpusOptions options;
            options.total = total;
            options.seed = seed;
            options.ore = ore_options;
            options.jobs = jobs;
            options.log = &std::cerr;
            const auto manifest = signkit::build_corpus(table, image_root, common.out, options);
            std::ostringstream csv;
            signkit::write_patch_manifest_csv(csv, manifest);
            write_text(common.out / "patch_manifest.csv", csv.str());
            auto j = signkit::to_json(manifest);
            j["run"] = run.to_json();
            write_json(common.out / "patch_manifest.json", j);
            std::cout << "ore: " << manifest.positives << " signboard + " << manifest.negatives
                      << " non-signboard patches\n";
        } else if (active == coverage_cmd) {
            if (spec_path.empty() && !default_anchors) {
                throw signkit::validation_error("coverage needs --anchor-spec or --default-anchors");
            }
            RunRecord run("coverage");
            run.input_file("manifest", manifest_path);
            const auto table = load_manifest(manifest_path, common.frame());
            signkit::AnchorGrid grid;
            std::string mode = mode_name;
            if (default_anchors) {
                if (mode.empty()) {
                    mode = "area";
                }
                run.param("anchors", "default");
            } else {
                if (mode.empty()) {
                    mode = "height-scale";
                }
                run.input_file("anchor_spec", spec_path);
            }
            const auto anchor_mode =
                mode == "area" ? signkit::AnchorMode::area : signkit::AnchorMode::height_scale;
            if (default_anchors) {
                grid = signkit::generate_anchors(signkit::default_anchor_shapes(), common.frame(),
                                                 anchor_stride, anchor_mode);
            } else {
                std::ifstream in(spec_path);
                if (!in) {
                    throw signkit::io_error("cannot open anchor spec " + spec_path.string());
                }
                json j;
                try {
                    j = json::parse(in);
                } catch (const json::parse_error& e) {
                    throw signkit::parse_error(std::string("anchor spec: ") + e.what(), e.byte);
                }
                grid = signkit::generate_anchors(signkit::anchor_spec_from_json(j), common.frame(),
                                                 anchor_stride, anchor_mode);
            }
            run.param("mode", mode);
            run.param("stride", std::to_string(anchor_stride));
            run.param("iou", iou_threshold);
            const auto report = signkit::coverage_recall(grid, table, iou_threshold, jobs);
            auto j = signkit::to_json(report);
            j["run"] = run.to_json();
            write_json(common.out / "coverage.json", j);
            std::cout << "coverage: recall@" << iou_threshold << " = " << report.recall_at_iou
                      << ", mean best IoU = " << report.mean_best_iou << '\n';
        } else if (active == eval_cmd) {
            RunRecord run("eval");
            run.input_file("gt", manifest_path);
            run.input_file("predictions", predictions_path);
            run.param("iou", iou_threshold);
            run.param("ap_mode", ap_mode_name);
            if (apply_nms) {
                run.param("nms_iou", nms_iou);
                run.param("nms_max", std::to_string(nms_max));
            }
            const auto table = load_manifest(manifest_path, common.frame());
            std::ifstream in(predictions_path, std::ios::binary);
            if (!in) {
                throw signkit::io_error("cannot open predictions " + predictions_path.string());
            }
            auto preds = signkit::read_predictions_csv(in);
            if (apply_nms) {
                std::map<std::pair<std::string, std::string>, std::vector<signkit::DetectionRecord>>
                    groups;
                for (auto& p : preds) {
                    groups[{p.image_id, p.class_name}].push_back(std::move(p));
                }
                preds.clear();
                for (const auto& [key, dets] : groups) {
                    for (auto& kept : signkit::nms(dets, nms_iou, nms_max)) {
                        preds.push_back(std::move(kept));
                    }
                }
            }
            signkit::EvalOptions options;
            options.iou_threshold = iou_threshold;
            options.ap_mode =
                ap_mode_name == "11point" ? signkit::ApMode::eleven_point : signkit::ApMode::all_point;
            const auto report = signkit::evaluate(preds, table, options);
            auto j = signkit::to_json(report);
            j["run"] = run.to_json();
            write_json(common.out / "eval_report.json", j);
            std::cout << "eval: mAP = " << report.map << '\n';
        }
        return exit_ok;
    } catch (const signkit::error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
}
