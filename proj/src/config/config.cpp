#include "vuld/config/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "vuld/io/binary.hpp"

namespace vuld {

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"model.variant", "acs3d", "block-3 convolution: slicewise, i3d, st3d, acs3d"},
        {"model.head", "spr", "box head: spr (surface points) or direct (face distances)"},
        {"model.in_channels", "1", "input phases"},
        {"model.stem_channels", "16", "channels after the stem convolution"},
        {"model.growth_rate", "8", "dense-block growth rate"},
        {"model.block_layers", "2,2,4", "layers per dense block"},
        {"model.bottleneck", "0", "1x1 bottleneck width as a multiple of growth (0 = none)"},
        {"model.compression", "0.5", "transition channel compression"},
        {"model.acs_ratio", "8,1,1", "axial:coronal:sagittal channel ratio"},
        {"model.i3d_depth", "3", "depth of inflated kernels"},
        {"model.fpn_channels", "32", "fused feature channels"},
        {"model.head_channels", "32", "head trunk channels"},
        {"model.n_points", "16", "surface points per lesion"},
        {"model.embed_channels", "16", "point embedding channels"},
        {"model.stride_axial", "2", "output stride along z"},
        {"model.stride_inplane", "4", "output stride along x and y"},
        {"model.seed", "0", "weight initialisation seed"},

        {"synth.dims", "64,64,64", "volume size D,H,W"},
        {"synth.spacing", "2.5,1.5,1.5", "voxel spacing z,y,x in mm"},
        {"synth.channels", "1", "phases per volume"},
        {"synth.phase_gain", "1.0,0.7,1.3", "lesion contrast multiplier per phase"},
        {"synth.lesions", "1,3", "lesions per volume (min,max)"},
        {"synth.confusers", "0,2", "confuser blobs per volume (min,max)"},
        {"synth.radius_axial", "2,5", "ellipsoid radius range along z (voxels)"},
        {"synth.radius_inplane", "3,10", "ellipsoid radius range along x,y (voxels)"},
        {"synth.lesion_intensity", "1.0", "lesion mean intensity"},
        {"synth.confuser_intensity", "0.5", "confuser mean intensity"},
        {"synth.background_intensity", "0.0", "background mean intensity"},
        {"synth.background_amplitude", "0.2", "amplitude of the smooth background field"},
        {"synth.noise", "0.25", "Gaussian noise sigma"},
        {"synth.split", "384,92,98", "train:val:test proportions"},
        {"synth.seed", "1", "dataset seed"},

        {"train.lr", "0.0001", "Adam base learning rate"},
        {"train.steps", "2000", "optimizer steps"},
        {"train.batch_size", "2", "crops per optimizer step"},
        {"train.crop", "64,64,64", "training crop D,H,W"},
        {"train.random_crop_prob", "0.5", "probability of a random-location crop"},
        {"train.eval_every", "100", "steps between validation passes"},
        {"train.val_volumes", "8", "validation volumes per pass (0 = all)"},
        {"train.patience", "5", "validation passes without improvement before an lr drop"},
        {"train.plateau_delta", "0.0001", "minimum validation improvement"},
        {"train.lr_drop", "0.1", "lr multiplier on plateau"},
        {"train.log_every", "10", "steps between log lines"},
        {"train.time_limit", "0", "wall-clock limit in seconds (0 = none)"},
        {"train.seed", "0", "sampling seed"},
        {"train.flip", "1", "random flips along x, y and z"},
        {"train.grad_clip", "10", "global gradient-norm clip (0 = off)"},

        {"loss.aux_weight", "0.1", "weight of the point and triplet losses"},
        {"loss.alpha", "2", "focal exponent on the prediction"},
        {"loss.beta", "4", "focal exponent on the target"},
        {"loss.eps", "0.0001", "probability clamp"},
        {"loss.triplet_norm", "lesions", "triplet normalisation: lesions or lesions_points"},

        {"decode.top_k", "50", "peaks kept per volume"},
        {"decode.score_min", "0.05", "minimum peak score"},

        {"eval.iou_threshold", "0.3", "IoU above which a detection hits"},
        {"eval.duplicates", "fp", "second hit on a matched lesion: fp or ignore"},
        {"eval.fp_points", "0.25,0.5,0.75,1,1.25,1.5,1.75,2", "FROC operating points"},
        {"eval.size_cutoffs", "20,50", "size buckets in mm"},
        {"eval.size_fp", "1", "FP/volume at which size buckets are scored"},

        {"bench.input", "32,64,64", "bench input D,H,W"},
        {"bench.repeats", "10", "timed forward passes"},
    };
    return keys;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
    N v{};
    const auto* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    return v;
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::apply_text(const std::string& text, const std::string& source) {
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    apply_text(text, path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const { return parse_number<std::int64_t>(key, get(key)); }

double RunConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::int64_t> RunConfig::get_ints(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& s : split_list(get(key))) out.push_back(parse_number<std::int64_t>(key, s));
    return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : split_list(get(key))) out.push_back(parse_number<double>(key, s));
    return out;
}

std::string RunConfig::to_text(const std::string& prefix) const {
    std::string out;
    for (const auto& k : config_keys()) {
        if (k.key.rfind(prefix, 0) != 0) continue;
        out += k.key + " = " + values_.at(k.key) + "\n";
    }
    return out;
}

}  // namespace vuld
