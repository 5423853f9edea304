#include "vuld/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

namespace vuld {

std::string to_string(HeadMode mode) { return mode == HeadMode::SPR ? "spr" : "direct"; }

HeadMode parse_head_mode(const std::string& name) {
    if (name == "spr") return HeadMode::SPR;
    if (name == "direct") return HeadMode::Direct;
    throw ConfigError("unknown head '" + name + "' (expected spr or direct)");
}

BackboneConfig BackboneConfig::toy() {
    BackboneConfig c;
    c.stem_channels = 16;
    c.growth_rate = 8;
    c.block_layers = {2, 2, 4};
    c.bottleneck = 0;
    c.fpn_channels = 32;
    c.head_channels = 32;
    c.embed_channels = 16;
    return c;
}

BackboneConfig BackboneConfig::from_config(const RunConfig& config) {
    BackboneConfig c;
    try {
        c.p3dc_variant = p3dc::parse_variant(config.get("model.variant"));
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    c.head = parse_head_mode(config.get("model.head"));
    c.in_channels = config.get_int("model.in_channels");
    c.stem_channels = config.get_int("model.stem_channels");
    c.growth_rate = config.get_int("model.growth_rate");
    const auto blocks = config.get_ints("model.block_layers");
    if (blocks.size() != 3) throw ConfigError("model.block_layers needs three values");
    c.block_layers = {blocks[0], blocks[1], blocks[2]};
    c.bottleneck = config.get_int("model.bottleneck");
    c.compression = config.get_double("model.compression");
    const auto ratio = config.get_ints("model.acs_ratio");
    if (ratio.size() != 3) throw ConfigError("model.acs_ratio needs three values");
    c.acs_ratio = {static_cast<int>(ratio[0]), static_cast<int>(ratio[1]), static_cast<int>(ratio[2])};
    c.i3d_depth = config.get_int("model.i3d_depth");
    c.fpn_channels = config.get_int("model.fpn_channels");
    c.head_channels = config.get_int("model.head_channels");
    c.n_points = config.get_int("model.n_points");
    c.embed_channels = config.get_int("model.embed_channels");
    c.stride_axial = config.get_int("model.stride_axial");
    c.stride_inplane = config.get_int("model.stride_inplane");
    c.seed = static_cast<std::uint64_t>(config.get_int("model.seed"));
    c.validate();
    return c;
}

void BackboneConfig::store(RunConfig& config) const {
    auto list = [](const auto& a) {
        return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]);
    };
    config.set("model.variant", p3dc::to_string(p3dc_variant));
    config.set("model.head", to_string(head));
    config.set("model.in_channels", std::to_string(in_channels));
    config.set("model.stem_channels", std::to_string(stem_channels));
    config.set("model.growth_rate", std::to_string(growth_rate));
    config.set("model.block_layers", list(block_layers));
    config.set("model.bottleneck", std::to_string(bottleneck));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", compression);
    config.set("model.compression", buf);
    config.set("model.acs_ratio", list(acs_ratio));
    config.set("model.i3d_depth", std::to_string(i3d_depth));
    config.set("model.fpn_channels", std::to_string(fpn_channels));
    config.set("model.head_channels", std::to_string(head_channels));
    config.set("model.n_points", std::to_string(n_points));
    config.set("model.embed_channels", std::to_string(embed_channels));
    config.set("model.stride_axial", std::to_string(stride_axial));
    config.set("model.stride_inplane", std::to_string(stride_inplane));
    config.set("model.seed", std::to_string(seed));
}

void BackboneConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("model config: " + what);
    };
    require(in_channels >= 1, "in_channels must be >= 1");
    require(stem_channels >= 1, "stem_channels must be >= 1");
    require(growth_rate >= 3, "growth_rate must be >= 3");
    require(block_layers[0] >= 1 && block_layers[1] >= 1 && block_layers[2] >= 1, "every block needs >= 1 layer");
    require(bottleneck >= 0, "bottleneck must be >= 0");
    require(compression > 0 && compression <= 1, "compression must lie in (0, 1]");
    require(i3d_depth >= 1 && i3d_depth % 2 == 1, "i3d_depth must be odd and positive");
    require(fpn_channels > 0, "fpn_channels must be > 0");
    require(head_channels >= 3, "head_channels must be >= 3");
    require(n_points >= 4, "n_points must be >= 4");
    require(embed_channels >= 1, "embed_channels must be >= 1");
    require(stride_axial >= 1 && stride_inplane >= 1, "strides must be >= 1");
}

namespace {

constexpr float kCenterPriorBias = -2.19f;  // sigmoid(-2.19) ~= 0.1

std::vector<double> sphere_directions(std::int64_t n) {
    // Fibonacci lattice on the unit sphere, (x, y, z) per point.
    std::vector<double> out;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::int64_t k = 0; k < n; ++k) {
        const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * static_cast<double>(k);
        out.push_back(r * std::cos(phi));
        out.push_back(r * std::sin(phi));
        out.push_back(z);
    }
    return out;
}

}  // namespace

template <typename T>
typename Detector<T>::Conv Detector<T>::make_conv(const std::string& name, std::int64_t in, std::int64_t out,
                                                  std::int64_t size, p3dc::Variant variant, double init_std) {
    std::seed_seq seq{static_cast<std::uint64_t>(config_.seed), rng_state_++};
    std::mt19937_64 rng(seq);
    const double fan_in = static_cast<double>(in * size * size);
    const double std_dev = init_std > 0 ? init_std : std::sqrt(2.0 / fan_in);
    std::normal_distribution<double> normal(0.0, std_dev);
    std::vector<T> k(static_cast<std::size_t>(out * in * size * size));
    for (auto& v : k) v = static_cast<T>(normal(rng));
    p3dc::Conv2DWeights<T> w{Tensor<T>::from({out, in, size, size}, std::move(k)), Tensor<T>::zeros({out}), 1};
    p3dc::ConvertOptions options;
    options.i3d_depth = config_.i3d_depth;
    options.acs_ratio = config_.acs_ratio;
    options.seed = rng();
    Conv c{name, p3dc::convert(w, size == 1 ? p3dc::Variant::Slicewise : variant, options)};
    for (auto& b : c.layer.kernels) {
        b.kernel.set_requires_grad(true);
        if (b.bias.defined()) b.bias.set_requires_grad(true);
    }
    return c;
}

template <typename T>
Detector<T>::Detector(BackboneConfig config) : config_(std::move(config)) {
    config_.validate();
    using p3dc::Variant;
    const auto& c = config_;

    // Stem: 2D weights for one phase, widened to the configured phase count.
    stem_ = make_conv("stem", 1, c.stem_channels, 3, Variant::Slicewise, -1);
    if (c.in_channels > 1) {
        auto w2 = p3dc::collapse_to_2d(stem_.layer);
        stem_.layer = p3dc::slicewise_lift(p3dc::inflate_input_channels(w2, c.in_channels));
        for (auto& b : stem_.layer.kernels) {
            b.kernel.set_requires_grad(true);
            b.bias.set_requires_grad(true);
        }
    }

    std::int64_t channels = c.stem_channels;
    std::array<std::int64_t, 3> block_out{};
    for (int b = 0; b < 3; ++b) {
        const Variant variant = b == 2 ? c.p3dc_variant : Variant::Slicewise;
        for (std::int64_t l = 0; l < c.block_layers[b]; ++l) {
            const std::string base = "block" + std::to_string(b + 1) + ".layer" + std::to_string(l);
            DenseLayer layer;
            std::int64_t in = channels;
            if (c.bottleneck > 0) {
                layer.bottleneck = make_conv(base + ".bottleneck", in, c.bottleneck * c.growth_rate, 1,
                                             Variant::Slicewise, -1);
                in = c.bottleneck * c.growth_rate;
            }
            layer.conv = make_conv(base + ".conv", in, c.growth_rate, 3, variant, -1);
            if (variant == Variant::ST3D) {
                layer.projection = make_conv(base + ".project", 2 * c.growth_rate, c.growth_rate, 1,
                                             Variant::Slicewise, -1);
            }
            blocks_[b].push_back(std::move(layer));
            channels += c.growth_rate;
        }
        block_out[b] = channels;
        if (b < 2) {
            const auto reduced = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                                                 std::floor(static_cast<double>(channels) * c.compression)));
            transitions_[b] = make_conv("transition" + std::to_string(b + 1), channels, reduced, 1,
                                        Variant::Slicewise, -1);
            channels = reduced;
        }
    }
    for (int b = 0; b < 3; ++b) {
        laterals_[b] = make_conv("fpn.lateral" + std::to_string(b + 1), block_out[b], c.fpn_channels, 1,
                                 Variant::Slicewise, std::sqrt(1.0 / static_cast<double>(block_out[b])));
    }

    center_trunk_ = make_conv("center.trunk", c.fpn_channels, c.head_channels, 3, Variant::ACS3D, -1);
    center_out_ = make_conv("center.out", c.head_channels, 1, 1, Variant::Slicewise, 0.01);
    center_out_.layer.kernels[0].bias.mutable_data()[0] = static_cast<T>(kCenterPriorBias);

    const double proj_std = std::sqrt(1.0 / static_cast<double>(c.head_channels));
    if (c.head == HeadMode::SPR) {
        spr_trunk_ = make_conv("spr.trunk", c.fpn_channels, c.head_channels, 3, Variant::ACS3D, -1);
        point_out_ = make_conv("spr.points", c.head_channels, 3 * c.n_points, 1, Variant::Slicewise, 0.01);
        // Points start on a unit sphere around the center so every axis
        // has distinct extreme points from the first step.
        const auto dirs = sphere_directions(c.n_points);
        auto bias = point_out_.layer.kernels[0].bias.mutable_data();
        for (std::size_t i = 0; i < dirs.size(); ++i) bias[i] = static_cast<T>(dirs[i]);
        refine_out_ = make_conv("spr.refine", c.head_channels, 3, 1, Variant::Slicewise, 0.001);
        embed_out_ = make_conv("spr.embed", c.head_channels, c.embed_channels, 1, Variant::Slicewise, proj_std);
    } else {
        direct_trunk_ = make_conv("direct.trunk", c.fpn_channels, c.head_channels, 3, Variant::ACS3D, -1);
        direct_out_ = make_conv("direct.out", c.head_channels, 6, 1, Variant::Slicewise, 0.01);
        for (auto& v : direct_out_.layer.kernels[0].bias.mutable_data()) v = T(1);
    }
}

template <typename T>
Tensor<T> Detector<T>::apply(const Conv& c, const Tensor<T>& x, bool activate) const {
    auto y = c.layer.forward(x);
    return activate ? relu(y) : y;
}

template <typename T>
std::vector<Tensor<T>> Detector<T>::backbone(const Tensor<T>& volume) const {
    const auto& c = config_;
    if (volume.rank() != 5 || volume.dim(0) != 1 || volume.dim(1) != c.in_channels) {
        throw DimensionError("detector: expected input [1, " + std::to_string(c.in_channels) + ", D, H, W], got " +
                             shape_string(volume.shape()));
    }
    const auto m = c.size_multiple();
    for (int a = 0; a < 3; ++a) {
        if (volume.dim(2 + a) % m[a] != 0) {
            throw GeometryError("detector: input " + shape_string(volume.shape()) + " not divisible by (" +
                                std::to_string(m[0]) + ", " + std::to_string(m[1]) + ", " + std::to_string(m[2]) +
                                ")");
        }
    }
    auto x = avgpool3d(apply(stem_, volume, true), {c.stride_axial, c.stride_inplane, c.stride_inplane});
    std::vector<Tensor<T>> features;
    for (int b = 0; b < 3; ++b) {
        for (const auto& layer : blocks_[b]) {
            auto y = x;
            if (layer.bottleneck) y = apply(*layer.bottleneck, y, true);
            y = apply(layer.conv, y, true);
            if (layer.projection) y = apply(*layer.projection, y, true);
            x = concat_channels<T>({x, y});
        }
        features.push_back(x);
        if (b < 2) {
            x = apply(transitions_[b], x, true);
            x = avgpool3d(x, b == 0 ? Index3{1, 2, 2} : Index3{2, 2, 2});
        }
    }
    return features;
}

template <typename T>
Tensor<T> Detector<T>::fpn_fuse(const std::vector<Tensor<T>>& features) const {
    if (features.empty() || features.size() > 3) throw ArgumentError("fpn_fuse: expected 1 to 3 feature maps");
    Tensor<T> fused;
    Shape finest;
    for (std::size_t b = 0; b < features.size(); ++b) {
        auto p = apply(laterals_[b], features[b], false);
        if (b == 0) {
            finest = p.shape();
            fused = p;
            continue;
        }
        Index3 factors{};
        for (int a = 0; a < 3; ++a) {
            if (finest[2 + a] % p.dim(2 + a) != 0) {
                throw GeometryError("fpn_fuse: " + shape_string(p.shape()) + " does not tile " + shape_string(finest));
            }
            factors[a] = finest[2 + a] / p.dim(2 + a);
        }
        fused = add(fused, upsample_nearest(p, factors));
    }
    return fused;
}

template <typename T>
Tensor<T> Detector<T>::center_head(const Tensor<T>& deep) const {
    return apply(center_out_, apply(center_trunk_, deep, true), false);
}

template <typename T>
void Detector<T>::spr_head(const Tensor<T>& deep, DetectorOutputs<T>& out) const {
    if (config_.head != HeadMode::SPR) throw ArgumentError("spr_head: detector was built with the direct head");
    auto trunk = apply(spr_trunk_, deep, true);
    out.point_offsets = apply(point_out_, trunk, false);
    out.refine_field = apply(refine_out_, trunk, false);
    out.embeddings = apply(embed_out_, trunk, false);
}

template <typename T>
Tensor<T> Detector<T>::direct_head(const Tensor<T>& deep) const {
    if (config_.head != HeadMode::Direct) throw ArgumentError("direct_head: detector was built with the SPR head");
    return apply(direct_out_, apply(direct_trunk_, deep, true), false);
}

template <typename T>
DetectorOutputs<T> Detector<T>::forward(const Tensor<T>& volume) const {
    auto deep = fpn_fuse(backbone(volume));
    DetectorOutputs<T> out;
    out.heatmap = center_head(deep);
    if (config_.head == HeadMode::SPR) {
        spr_head(deep, out);
    } else {
        out.direct_box = direct_head(deep);
    }
    return out;
}

template <typename T>
std::vector<const typename Detector<T>::Conv*> Detector<T>::convs() const {
    std::vector<const Conv*> out{&stem_};
    for (int b = 0; b < 3; ++b) {
        for (const auto& layer : blocks_[b]) {
            if (layer.bottleneck) out.push_back(&*layer.bottleneck);
            out.push_back(&layer.conv);
            if (layer.projection) out.push_back(&*layer.projection);
        }
        if (b < 2) out.push_back(&transitions_[b]);
    }
    for (const auto& l : laterals_) out.push_back(&l);
    out.push_back(&center_trunk_);
    out.push_back(&center_out_);
    if (config_.head == HeadMode::SPR) {
        for (const auto* c : {&spr_trunk_, &point_out_, &refine_out_, &embed_out_}) out.push_back(c);
    } else {
        out.push_back(&direct_trunk_);
        out.push_back(&direct_out_);
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> Detector<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto* c : convs()) {
        for (const auto& b : c->layer.kernels) {
            out.push_back(b.kernel);
            if (b.bias.defined()) out.push_back(b.bias);
        }
    }
    return out;
}

template <typename T>
std::vector<std::string> Detector<T>::parameter_names() const {
    std::vector<std::string> out;
    for (const auto* c : convs()) {
        for (std::size_t i = 0; i < c->layer.kernels.size(); ++i) {
            out.push_back(c->name + ".k" + std::to_string(i));
            if (c->layer.kernels[i].bias.defined()) out.push_back(c->name + ".b" + std::to_string(i));
        }
    }
    return out;
}

template <typename T>
std::int64_t Detector<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

template <typename T>
std::int64_t Detector<T>::block_parameter_count(int block) const {
    std::int64_t n = 0;
    for (const auto& layer : blocks_.at(static_cast<std::size_t>(block))) {
        if (layer.bottleneck) n += layer.bottleneck->layer.param_count();
        n += layer.conv.layer.param_count();
        if (layer.projection) n += layer.projection->layer.param_count();
    }
    return n;
}

template <typename T>
std::int64_t Detector<T>::flops(Index3 input) const {
    const auto& c = config_;
    auto cost = [](const Conv& conv, std::int64_t channels, Index3 grid) {
        return p3dc::count_params_flops(conv.layer, {channels, grid[0], grid[1], grid[2]}).flops;
    };
    std::int64_t total = cost(stem_, c.in_channels, input);
    Index3 grid{input[0] / c.stride_axial, input[1] / c.stride_inplane, input[2] / c.stride_inplane};
    std::array<Index3, 3> grids{};
    std::int64_t channels = c.stem_channels;
    std::array<std::int64_t, 3> block_out{};
    for (int b = 0; b < 3; ++b) {
        for (const auto& layer : blocks_[b]) {
            std::int64_t in = channels;
            if (layer.bottleneck) {
                total += cost(*layer.bottleneck, in, grid);
                in = layer.bottleneck->layer.out_channels();
            }
            total += cost(layer.conv, in, grid);
            if (layer.projection) total += cost(*layer.projection, layer.conv.layer.out_channels(), grid);
            channels += c.growth_rate;
        }
        grids[b] = grid;
        block_out[b] = channels;
        if (b < 2) {
            total += cost(transitions_[b], channels, grid);
            channels = transitions_[b].layer.out_channels();
            grid = b == 0 ? Index3{grid[0], grid[1] / 2, grid[2] / 2} : Index3{grid[0] / 2, grid[1] / 2, grid[2] / 2};
        }
    }
    for (int b = 0; b < 3; ++b) total += cost(laterals_[b], block_out[b], grids[b]);
    const auto fine = grids[0];
    total += cost(center_trunk_, c.fpn_channels, fine) + cost(center_out_, c.head_channels, fine);
    if (c.head == HeadMode::SPR) {
        total += cost(spr_trunk_, c.fpn_channels, fine);
        for (const auto* p : {&point_out_, &refine_out_, &embed_out_}) total += cost(*p, c.head_channels, fine);
    } else {
        total += cost(direct_trunk_, c.fpn_channels, fine) + cost(direct_out_, c.head_channels, fine);
    }
    return total;
}

template <typename T>
std::vector<CheckpointEntry> Detector<T>::to_checkpoint() const {
    std::vector<CheckpointEntry> entries;
    const auto names = parameter_names();
    const auto params = parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        CheckpointEntry e{names[i], params[i].shape(), {}};
        e.values.reserve(static_cast<std::size_t>(params[i].numel()));
        for (T v : params[i].data()) e.values.push_back(static_cast<float>(v));
        entries.push_back(std::move(e));
    }
    RunConfig rc;
    config_.store(rc);
    entries.push_back(text_entry("__config__", rc.to_text("model.")));
    return entries;
}

template <typename T>
void Detector<T>::load_parameters(const std::vector<CheckpointEntry>& entries) {
    std::unordered_map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    const auto names = parameter_names();
    auto params = parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto it = by_name.find(names[i]);
        if (it == by_name.end()) throw CheckpointError("checkpoint: missing tensor '" + names[i] + "'");
        if (it->second->shape != params[i].shape()) {
            throw CheckpointError("checkpoint: tensor '" + names[i] + "' has shape " +
                                  shape_string(it->second->shape) + ", model expects " +
                                  shape_string(params[i].shape()));
        }
        auto dst = params[i].mutable_data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(it->second->values[j]);
    }
}

template <typename T>
Detector<T> Detector<T>::from_checkpoint(const std::vector<CheckpointEntry>& entries) {
    const CheckpointEntry* cfg = nullptr;
    for (const auto& e : entries) {
        if (e.name == "__config__") cfg = &e;
    }
    if (cfg == nullptr) throw CheckpointError("checkpoint: no __config__ entry");
    RunConfig rc;
    rc.apply_text(entry_text(*cfg), "checkpoint config");
    Detector det(BackboneConfig::from_config(rc));
    det.load_parameters(entries);
    return det;
}

template <typename T>
void Detector<T>::convert_block3(p3dc::Variant variant) {
    using p3dc::Variant;
    auto preserving = [](Variant v) { return v == Variant::Slicewise || v == Variant::ACS3D; };
    if (!preserving(variant) || !preserving(config_.p3dc_variant)) {
        throw ArgumentError("convert: only slicewise <-> acs3d conversions preserve the weights (have " +
                            p3dc::to_string(config_.p3dc_variant) + ", want " + p3dc::to_string(variant) + ")");
    }
    p3dc::ConvertOptions options;
    options.acs_ratio = config_.acs_ratio;
    for (auto& layer : blocks_[2]) {
        auto w = p3dc::collapse_to_2d(layer.conv.layer);
        layer.conv.layer = p3dc::convert(w, variant, options);
        for (auto& b : layer.conv.layer.kernels) {
            b.kernel.set_requires_grad(true);
            if (b.bias.defined()) b.bias.set_requires_grad(true);
        }
    }
    config_.p3dc_variant = variant;
}

template <typename T>
PointSet<T> gather_point_set(const DetectorOutputs<T>& outputs, Index3 center, const std::optional<GridBox>& corner_box,
                             bool with_embeddings) {
    const auto& offsets = outputs.point_offsets;
    if (!offsets.defined()) throw ArgumentError("gather_point_set: outputs carry no point offsets");
    const auto D = offsets.dim(2), H = offsets.dim(3), W = offsets.dim(4);
    const auto [z, y, x] = center;
    if (z < 0 || z >= D || y < 0 || y >= H || x < 0 || x >= W) {
        throw ArgumentError("gather_point_set: center (" + std::to_string(z) + ", " + std::to_string(y) + ", " +
                            std::to_string(x) + ") outside grid " + shape_string(offsets.shape()));
    }
    const auto n = offsets.dim(1) / 3;
    PointSet<T> ps;
    auto raw = reshape(gather_cell(offsets, z, y, x), {n, 3});
    ps.points = affine_columns(raw, {T(1), T(1), T(1)}, {static_cast<T>(x), static_cast<T>(y), static_cast<T>(z)});
    ps.refined = add(ps.points, trilinear_sample(outputs.refine_field, ps.points));
    if (!with_embeddings) return ps;

    const auto E = outputs.embeddings.dim(1);
    ps.point_embeddings = trilinear_sample(outputs.embeddings, ps.refined);
    auto c = Tensor<T>::from({1, 3}, {static_cast<T>(x), static_cast<T>(y), static_cast<T>(z)});
    ps.center_embedding = reshape(trilinear_sample(outputs.embeddings, c), {E});

    GridBox box;
    if (corner_box) {
        box = *corner_box;
    } else {
        const auto r = ps.refined.data();
        for (int a = 0; a < 3; ++a) {
            box.lo[a] = box.hi[a] = static_cast<double>(r[static_cast<std::size_t>(a)]);
            for (std::int64_t k = 1; k < n; ++k) {
                const double v = static_cast<double>(r[static_cast<std::size_t>(k * 3 + a)]);
                box.lo[a] = std::min(box.lo[a], v);
                box.hi[a] = std::max(box.hi[a], v);
            }
        }
    }
    std::vector<T> corners;
    for (int j = 0; j < 8; ++j) {
        corners.push_back(static_cast<T>((j & 1) ? box.hi[0] : box.lo[0]));
        corners.push_back(static_cast<T>((j & 2) ? box.hi[1] : box.lo[1]));
        corners.push_back(static_cast<T>((j & 4) ? box.hi[2] : box.lo[2]));
    }
    ps.corner_embeddings = trilinear_sample(outputs.embeddings, Tensor<T>::from({8, 3}, std::move(corners)));
    return ps;
}

template class Detector<float>;
template class Detector<double>;
template PointSet<float> gather_point_set(const DetectorOutputs<float>&, Index3, const std::optional<GridBox>&, bool);
template PointSet<double> gather_point_set(const DetectorOutputs<double>&, Index3, const std::optional<GridBox>&,
                                           bool);

}  // namespace vuld
