// Command-line driver: synth, train, eval, froc, gradcheck, bench, convert.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>

#include "vuld/config/config.hpp"
#include "vuld/io/binary.hpp"
#include "vuld/pipeline/diagnostics.hpp"
#include "vuld/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vuld;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct ConfigArgs {
    std::string file;
    std::vector<std::string> overrides;

    void add(CLI::App* cmd) {
        cmd->add_option("-c,--config", file, "key = value config file")->check(CLI::ExistingFile);
        cmd->add_option("-s,--set", overrides, "override as key=value (repeatable)");
    }
    RunConfig load() const {
        RunConfig c;
        if (!file.empty()) c.apply_file(file);
        for (const auto& o : overrides) c.set_assignment(o);
        return c;
    }
};

Split split_arg(const std::string& s) {
    try {
        return parse_split(s);
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
}

void print_froc(const EvalReport& r) {
    std::cout << format_froc_csv(r.froc);
    std::cout << format_size_csv(r.sizes);
    std::printf("true positives at %zu, mean IoU %.4f\n", r.tp_ious.size(), r.mean_tp_iou);
}

void write_report(const EvalReport& r, const fs::path& out, bool with_detections) {
    fs::create_directories(out);
    if (with_detections) io::write_file(out / "detections.txt", r.detections_text);
    io::write_file(out / "froc.csv", format_froc_csv(r.froc));
    io::write_file(out / "sizes.csv", format_size_csv(r.sizes));
}

int cmd_synth(const ConfigArgs& cfg, std::int64_t count, const std::string& out) {
    const auto rc = cfg.load();
    const auto sc = SynthConfig::from_config(rc);
    const auto ds = write_dataset(sc, count, out);
    io::write_file(fs::path(out) / "synth_config.txt", rc.to_text("synth."));
    std::int64_t lesions = 0, negatives = 0;
    for (const auto& e : ds.entries)
        for (const auto& b : e.boxes) (b.hard_negative ? negatives : lesions) += 1;
    std::printf("wrote %zu volumes to %s: train %zu, val %zu, test %zu; %lld lesions, %lld hard negatives\n",
                ds.entries.size(), out.c_str(), ds.split(Split::Train).size(), ds.split(Split::Val).size(),
                ds.split(Split::Test).size(), static_cast<long long>(lesions), static_cast<long long>(negatives));
    return 0;
}

int cmd_train(const ConfigArgs& cfg, const std::string& data, const std::string& out, const std::string& init) {
    const auto rc = cfg.load();
    const auto tc = TrainConfig::from_config(rc);
    auto det = init.empty() ? Detector<float>(BackboneConfig::from_config(rc))
                            : Detector<float>::from_checkpoint(read_checkpoint(init));
    const auto ds = load_dataset(data);
    fs::create_directories(out);
    io::write_file(fs::path(out) / "run_config.txt", rc.to_text());
    std::printf("model %s/%s, %lld parameters\n", p3dc::to_string(det.config().p3dc_variant).c_str(),
                to_string(det.config().head).c_str(), static_cast<long long>(det.parameter_count()));
    const auto result = train_detector(det, ds, tc, out, [](const std::string& line) {
        std::puts(line.c_str());
        std::fflush(stdout);
    });
    std::printf("trained %lld steps in %.1f s, best validation loss %.6f\n", static_cast<long long>(result.steps),
                result.seconds, result.best_validation);
    return 0;
}

int cmd_eval(const ConfigArgs& cfg, const std::string& checkpoint, const std::string& data, const std::string& out,
             const std::string& split) {
    const auto rc = cfg.load();
    const auto det = Detector<float>::from_checkpoint(read_checkpoint(checkpoint));
    const auto report = evaluate(det, load_dataset(data), split_arg(split), EvalSettings::from_config(rc));
    write_report(report, out, true);
    print_froc(report);
    return 0;
}

int cmd_froc(const ConfigArgs& cfg, const std::string& detections, const std::string& data, const std::string& out,
             const std::string& split) {
    const auto rc = cfg.load();
    const auto dets = parse_detections(io::read_file(detections));
    const auto report = score_detections(dets, load_dataset(data), split_arg(split), EvalSettings::from_config(rc));
    write_report(report, out, false);
    print_froc(report);
    return 0;
}

int cmd_gradcheck(std::int64_t trials, const std::vector<std::string>& suites, double tolerance) {
    for (const auto& name : suites) {
        const auto& known = gradient_suite_names();
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            throw ConfigError("unknown gradient suite '" + name + "'");
        }
    }
    bool ok = true;
    for (const auto& name : suites.empty() ? gradient_suite_names() : suites) {
        const auto r = run_gradient_suite(name, trials, tolerance);
        std::printf("%-10s %s  trials %lld  failures %lld  max relative error %.3e (seed %lld)  kink redraws %lld\n",
                    name.c_str(), r.passed() ? "PASS" : "FAIL", static_cast<long long>(r.trials),
                    static_cast<long long>(r.failures), r.max_relative_error, static_cast<long long>(r.worst_seed),
                    static_cast<long long>(r.redrawn));
        ok = ok && r.passed();
    }
    return ok ? 0 : kExitRuntime;
}

int cmd_bench(const ConfigArgs& cfg) {
    const auto rc = cfg.load();
    const auto input = rc.get_ints("bench.input");
    if (input.size() != 3) throw ConfigError("bench.input needs three values");
    const Index3 in{input[0], input[1], input[2]};
    const auto bc = BackboneConfig::from_config(rc);
    std::cout << format_bench(bench_variants(bc, in, rc.get_int("bench.repeats")), in);

    // Per-layer view of block 3: one 2D layer converted to every variant.
    p3dc::Conv2DWeights<float> w{Tensor<float>::zeros({bc.growth_rate, bc.growth_rate * 4, 3, 3}),
                                 Tensor<float>::zeros({bc.growth_rate}), 1};
    const Shape grid{bc.growth_rate * 4, in[0] / (2 * bc.stride_axial), in[1] / (4 * bc.stride_inplane),
                     in[2] / (4 * bc.stride_inplane)};
    std::printf("\nlayer report (c_i %lld -> c_o %lld, 3x3):\n", static_cast<long long>(grid[0]),
                static_cast<long long>(bc.growth_rate));
    const auto base = p3dc::count_params_flops(p3dc::slicewise_lift(w), grid);
    for (auto v : {p3dc::Variant::Slicewise, p3dc::Variant::I3D, p3dc::Variant::ST3D, p3dc::Variant::ACS3D}) {
        p3dc::ConvertOptions o;
        o.acs_ratio = bc.acs_ratio;
        o.i3d_depth = bc.i3d_depth;
        const auto cost = p3dc::count_params_flops(p3dc::convert(w, v, o), grid);
        std::printf("block3.conv %-9s params %lld -> %lld  flops %lld\n", p3dc::to_string(v).c_str(),
                    static_cast<long long>(base.params), static_cast<long long>(cost.params),
                    static_cast<long long>(cost.flops));
    }
    return 0;
}

int cmd_convert(const std::string& checkpoint, const std::string& variant, const std::string& out) {
    auto det = Detector<float>::from_checkpoint(read_checkpoint(checkpoint));
    p3dc::Variant v;
    try {
        v = p3dc::parse_variant(variant);
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    const auto before = det.parameter_count();
    det.convert_block3(v);
    write_checkpoint(out, det.to_checkpoint());
    std::printf("converted block 3 to %s: %lld parameters before, %lld after\n", variant.c_str(),
                static_cast<long long>(before), static_cast<long long>(det.parameter_count()));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volumetric lesion detector: synthetic data, training and FROC evaluation"};
    app.require_subcommand(1);

    ConfigArgs synth_cfg, train_cfg, eval_cfg, froc_cfg, bench_cfg;
    std::int64_t count = 10;
    std::string out, data, checkpoint, init, detections, split = "test", variant;
    std::int64_t trials = 100;
    double tolerance = 1e-4;
    std::vector<std::string> suites;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cfg.add(synth);
    synth->add_option("--count", count, "number of volumes")->check(CLI::NonNegativeNumber);
    synth->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a detector");
    train_cfg.add(train);
    train->add_option("--data", data, "dataset directory")->required();
    train->add_option("--out", out, "output directory")->required();
    train->add_option("--init", init, "start from this checkpoint");

    auto* eval = app.add_subcommand("eval", "decode a split and score it");
    eval_cfg.add(eval);
    eval->add_option("--checkpoint", checkpoint, "P3DW checkpoint")->required();
    eval->add_option("--data", data, "dataset directory")->required();
    eval->add_option("--out", out, "output directory")->required();
    eval->add_option("--split", split, "train, val or test");

    auto* froc_cmd = app.add_subcommand("froc", "re-score a detection file");
    froc_cfg.add(froc_cmd);
    froc_cmd->add_option("--detections", detections, "detection file")->required();
    froc_cmd->add_option("--data", data, "dataset directory")->required();
    froc_cmd->add_option("--out", out, "output directory")->required();
    froc_cmd->add_option("--split", split, "train, val or test");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of the losses");
    gradcheck->add_option("--trials", trials, "random instances per suite")->check(CLI::PositiveNumber);
    gradcheck->add_option("--suite", suites, "focal, point_box, triplet, joint (default: all)");
    gradcheck->add_option("--tolerance", tolerance, "maximum relative error");

    auto* bench = app.add_subcommand("bench", "parameters, FLOPs and timing per block-3 variant");
    bench_cfg.add(bench);

    auto* convert = app.add_subcommand("convert", "rewrite block 3 of a checkpoint (slicewise <-> acs3d)");
    convert->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
    convert->add_option("--variant", variant, "target variant")->required();
    convert->add_option("--out", out, "output checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(synth_cfg, count, out);
        if (*train) return cmd_train(train_cfg, data, out, init);
        if (*eval) return cmd_eval(eval_cfg, checkpoint, data, out, split);
        if (*froc_cmd) return cmd_froc(froc_cfg, detections, data, out, split);
        if (*gradcheck) return cmd_gradcheck(trials, suites, tolerance);
        if (*bench) return cmd_bench(bench_cfg);
        if (*convert) return cmd_convert(checkpoint, variant, out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
