#include "vuld/synth/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "vuld/io/binary.hpp"

namespace vuld {

namespace {

Range range_of(const RunConfig& c, const std::string& key) {
    const auto v = c.get_doubles(key);
    if (v.size() != 2) throw ConfigError(key + " needs two values");
    return {v[0], v[1]};
}

template <std::size_t N, typename U>
std::array<U, N> fixed(const std::vector<U>& v, const std::string& key) {
    if (v.size() != N) throw ConfigError(key + " needs " + std::to_string(N) + " values");
    std::array<U, N> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

}  // namespace

SynthConfig SynthConfig::from_config(const RunConfig& c) {
    SynthConfig s;
    s.dims = fixed<3>(c.get_ints("synth.dims"), "synth.dims");
    s.spacing = fixed<3>(c.get_doubles("synth.spacing"), "synth.spacing");
    s.channels = c.get_int("synth.channels");
    s.phase_gain = c.get_doubles("synth.phase_gain");
    s.lesions = fixed<2>(c.get_ints("synth.lesions"), "synth.lesions");
    s.confusers = fixed<2>(c.get_ints("synth.confusers"), "synth.confusers");
    s.radius_axial = range_of(c, "synth.radius_axial");
    s.radius_inplane = range_of(c, "synth.radius_inplane");
    s.lesion_intensity = c.get_double("synth.lesion_intensity");
    s.confuser_intensity = c.get_double("synth.confuser_intensity");
    s.background_intensity = c.get_double("synth.background_intensity");
    s.background_amplitude = c.get_double("synth.background_amplitude");
    s.noise = c.get_double("synth.noise");
    s.split = fixed<3>(c.get_doubles("synth.split"), "synth.split");
    s.seed = static_cast<std::uint64_t>(c.get_int("synth.seed"));
    s.validate();
    return s;
}

void SynthConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("synth config: " + what);
    };
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, "dims must be positive");
    require(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0, "spacing must be positive");
    require(channels >= 1 && channels <= 255, "channels must lie in [1, 255]");
    require(!phase_gain.empty(), "phase_gain needs at least one value");
    require(lesions[0] >= 0 && lesions[1] >= lesions[0], "lesions range is invalid");
    require(confusers[0] >= 0 && confusers[1] >= confusers[0], "confusers range is invalid");
    require(radius_axial.lo >= 2 && radius_axial.hi >= radius_axial.lo, "axial radius range must start at >= 2");
    require(radius_inplane.lo >= 2 && radius_inplane.hi >= radius_inplane.lo,
            "in-plane radius range must start at >= 2");
    require(noise >= 0 && background_amplitude >= 0, "noise and amplitude must be non-negative");
    const double contrast = std::abs(lesion_intensity - background_intensity);
    require(contrast > 0 && (noise == 0 || contrast / noise >= 1.0), "lesion contrast must be >= the noise sigma");
    require(split[0] >= 0 && split[1] >= 0 && split[2] >= 0 && split[0] + split[1] + split[2] > 0,
            "split ratio must be non-negative with a positive sum");
}

Box3D Ellipsoid::box() const {
    Box3D b;
    for (int a = 0; a < 3; ++a) {
        b.lo[a] = center[a] - radius[a];
        b.hi[a] = center[a] + radius[a];
    }
    return b;
}

std::string volume_id(std::int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "vol_%05lld", static_cast<long long>(index));
    return buf;
}

namespace {

bool overlaps(const Box3D& a, const Box3D& b, double margin) {
    for (int i = 0; i < 3; ++i) {
        if (a.hi[i] + margin <= b.lo[i] || b.hi[i] + margin <= a.lo[i]) return false;
    }
    return true;
}

// Coverage in [0, 1] with a linear falloff one voxel wide centred on the
// surface, measured along the ray from the center.
double coverage(const Ellipsoid& e, double x, double y, double z) {
    const double dx = x - e.center[0], dy = y - e.center[1], dz = z - e.center[2];
    const double q = dx * dx / (e.radius[0] * e.radius[0]) + dy * dy / (e.radius[1] * e.radius[1]) +
                     dz * dz / (e.radius[2] * e.radius[2]);
    const double rho = std::sqrt(q);
    if (rho == 0.0) return 1.0;
    const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double outside = (rho - 1.0) * dist / rho;  // voxels beyond the surface
    return std::clamp(0.5 - outside, 0.0, 1.0);
}

}  // namespace

SyntheticCase generate_volume(const SynthConfig& cfg, std::int64_t index) {
    cfg.validate();
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(index), std::uint64_t{0x5f3759df}};
    std::mt19937_64 rng(seq);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto count = [&](const std::array<std::int64_t, 2>& r) {
        return std::uniform_int_distribution<std::int64_t>(r[0], r[1])(rng);
    };
    const auto [D, H, W] = cfg.dims;
    const std::array<double, 3> extent{static_cast<double>(W - 1), static_cast<double>(H - 1),
                                       static_cast<double>(D - 1)};

    SyntheticCase out;
    out.id = volume_id(index);
    const auto n_lesions = count(cfg.lesions);
    const auto n_confusers = count(cfg.confusers);
    for (std::int64_t i = 0; i < n_lesions + n_confusers; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            Ellipsoid e;
            e.confuser = i >= n_lesions;
            e.radius = {uniform(cfg.radius_inplane.lo, cfg.radius_inplane.hi),
                        uniform(cfg.radius_inplane.lo, cfg.radius_inplane.hi),
                        uniform(cfg.radius_axial.lo, cfg.radius_axial.hi)};
            bool fits = true;
            for (int a = 0; a < 3; ++a) {
                if (2.0 * e.radius[a] > extent[a]) fits = false;
            }
            if (!fits) continue;
            for (int a = 0; a < 3; ++a) e.center[a] = uniform(e.radius[a], extent[a] - e.radius[a]);
            const auto box = e.box();
            placed = std::none_of(out.blobs.begin(), out.blobs.end(),
                                  [&](const Ellipsoid& o) { return overlaps(box, o.box(), 2.0); });
            if (placed) out.blobs.push_back(e);
        }
        if (!placed) {
            throw GenerationError("synthgen: cannot place blob " + std::to_string(i) + " in volume " + out.id +
                                  " after 100 tries");
        }
    }
    for (const auto& e : out.blobs) out.boxes.push_back({e.box(), e.confuser});

    // Smooth background: a few random low-frequency plane waves.
    struct Wave {
        std::array<double, 3> k;
        double phase;
    };
    std::vector<Wave> waves;
    for (int w = 0; w < 4; ++w) {
        Wave wave{};
        for (int a = 0; a < 3; ++a) wave.k[a] = uniform(-1.5, 1.5) * 2.0 * std::numbers::pi / (extent[a] + 1.0);
        wave.phase = uniform(0.0, 2.0 * std::numbers::pi);
        waves.push_back(wave);
    }

    const auto C = cfg.channels;
    std::vector<float> vox(static_cast<std::size_t>(C * D * H * W));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> base(static_cast<std::size_t>(D * H * W));
    std::vector<double> lesion_cov(base.size(), 0.0), confuser_cov(base.size(), 0.0);
    for (std::int64_t z = 0; z < D; ++z)
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x) {
                const auto i = static_cast<std::size_t>((z * H + y) * W + x);
                double b = 0.0;
                for (const auto& w : waves) {
                    b += std::cos(w.k[0] * static_cast<double>(x) + w.k[1] * static_cast<double>(y) +
                                  w.k[2] * static_cast<double>(z) + w.phase);
                }
                base[i] = cfg.background_intensity + cfg.background_amplitude * b / static_cast<double>(waves.size());
            }
    for (const auto& e : out.blobs) {
        auto& cov = e.confuser ? confuser_cov : lesion_cov;
        const auto b = e.box();
        const auto z0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(b.lo[2] - 1)));
        const auto z1 = std::min<std::int64_t>(D - 1, static_cast<std::int64_t>(std::ceil(b.hi[2] + 1)));
        const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(b.lo[1] - 1)));
        const auto y1 = std::min<std::int64_t>(H - 1, static_cast<std::int64_t>(std::ceil(b.hi[1] + 1)));
        const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(b.lo[0] - 1)));
        const auto x1 = std::min<std::int64_t>(W - 1, static_cast<std::int64_t>(std::ceil(b.hi[0] + 1)));
        for (auto z = z0; z <= z1; ++z)
            for (auto y = y0; y <= y1; ++y)
                for (auto x = x0; x <= x1; ++x) {
                    const auto i = static_cast<std::size_t>((z * H + y) * W + x);
                    cov[i] = std::max(cov[i], coverage(e, static_cast<double>(x), static_cast<double>(y),
                                                       static_cast<double>(z)));
                }
    }
    for (std::int64_t c = 0; c < C; ++c) {
        const double gain = cfg.phase_gain[static_cast<std::size_t>(c) % cfg.phase_gain.size()];
        for (std::size_t i = 0; i < base.size(); ++i) {
            const double v = base[i] + gain * (lesion_cov[i] * (cfg.lesion_intensity - cfg.background_intensity) +
                                               confuser_cov[i] * (cfg.confuser_intensity - cfg.background_intensity));
            vox[static_cast<std::size_t>(c) * base.size() + i] = static_cast<float>(v + cfg.noise * noise(rng));
        }
    }
    out.volume.data = Tensor<float>::from({C, D, H, W}, std::move(vox));
    out.volume.spacing = cfg.spacing;
    return out;
}

std::string encode_volume(const Volume& volume) {
    const auto& t = volume.data;
    if (t.rank() != 4) throw DimensionError("P3DV: expected [C, D, H, W], got " + shape_string(t.shape()));
    if (t.dim(0) < 1 || t.dim(0) > 255) throw DimensionError("P3DV: channel count must lie in [1, 255]");
    io::ByteWriter w;
    w.bytes("P3DV", 4);
    w.put<std::uint32_t>(1);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dim(0)));
    for (int a = 1; a < 4; ++a) w.put<std::uint32_t>(static_cast<std::uint32_t>(t.dim(static_cast<std::size_t>(a))));
    for (double s : volume.spacing) w.put<float>(static_cast<float>(s));
    for (float v : t.data()) w.put<float>(v);
    return w.take();
}

Volume decode_volume(const std::string& bytes, const std::string& context) {
    io::ByteReader r(bytes, context);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != "P3DV") throw std::runtime_error(context + ": bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != 1) throw std::runtime_error(context + ": unsupported version " + std::to_string(version));
    const std::int64_t C = r.get<std::uint8_t>();
    Shape shape{C};
    for (int a = 0; a < 3; ++a) shape.push_back(r.get<std::uint32_t>());
    Volume v;
    for (auto& s : v.spacing) s = r.get<float>();
    std::vector<float> vox(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : vox) x = r.get<float>();
    if (!r.done()) throw std::runtime_error(context + ": trailing bytes");
    v.data = Tensor<float>::from(std::move(shape), std::move(vox));
    return v;
}

void write_volume(const std::filesystem::path& path, const Volume& volume) {
    io::write_file(path, encode_volume(volume));
}

Volume read_volume(const std::filesystem::path& path) { return decode_volume(io::read_file(path), path.string()); }

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw ArgumentError("unknown split '" + name + "'");
}

std::vector<const ManifestEntry*> Dataset::split(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
        if (e.split == s) out.push_back(&e);
    }
    return out;
}

Volume Dataset::load(const ManifestEntry& entry) const { return read_volume(dir / entry.file); }

std::array<std::int64_t, 3> split_counts(const std::array<double, 3>& ratio, std::int64_t count) {
    const double total = ratio[0] + ratio[1] + ratio[2];
    const auto train = static_cast<std::int64_t>(std::floor(static_cast<double>(count) * ratio[0] / total + 1e-9));
    const auto val = static_cast<std::int64_t>(std::floor(static_cast<double>(count) * ratio[1] / total + 1e-9));
    return {train, val, count - train - val};
}

std::string format_annotations(const std::vector<ManifestEntry>& entries) {
    std::string out;
    char buf[256];
    for (const auto& e : entries) {
        for (const auto& g : e.boxes) {
            const auto& b = g.box;
            const int n = std::snprintf(buf, sizeof buf, "%s %s %.6f %.6f %.6f %.6f %.6f %.6f\n", e.id.c_str(),
                                        g.hard_negative ? "hneg" : "pos", b.lo[0], b.lo[1], b.lo[2], b.hi[0],
                                        b.hi[1], b.hi[2]);
            out.append(buf, static_cast<std::size_t>(n));
        }
    }
    return out;
}

Dataset write_dataset(const SynthConfig& cfg, std::int64_t count, const std::filesystem::path& out_dir) {
    if (count < 0) throw ArgumentError("write_dataset: negative count");
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "volumes", ec);
    if (ec) throw std::runtime_error((out_dir / "volumes").string() + ": " + ec.message());
    const auto counts = split_counts(cfg.split, count);
    Dataset ds;
    ds.dir = out_dir;
    for (std::int64_t i = 0; i < count; ++i) {
        auto c = generate_volume(cfg, i);
        ManifestEntry e;
        e.id = c.id;
        e.split = i < counts[0] ? Split::Train : (i < counts[0] + counts[1] ? Split::Val : Split::Test);
        e.file = "volumes/" + c.id + ".p3dv";
        // Store boxes exactly as the annotation file will read back.
        e.boxes = c.boxes;
        write_volume(out_dir / e.file, c.volume);
        ds.entries.push_back(std::move(e));
    }
    const auto annotations = format_annotations(ds.entries);
    io::write_file(out_dir / "annotations.txt", annotations);
    std::string manifest = "# id split file\n";
    for (const auto& e : ds.entries) manifest += e.id + " " + to_string(e.split) + " " + e.file + "\n";
    io::write_file(out_dir / "manifest.txt", manifest);
    return load_dataset(out_dir);
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    ds.dir = dir;
    std::istringstream manifest(io::read_file(dir / "manifest.txt"));
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        ManifestEntry e;
        std::string split;
        if (!(ls >> e.id >> split >> e.file)) throw std::runtime_error((dir / "manifest.txt").string() + ": bad line '" + line + "'");
        e.split = parse_split(split);
        ds.entries.push_back(std::move(e));
    }
    std::istringstream ann(io::read_file(dir / "annotations.txt"));
    int lineno = 0;
    while (std::getline(ann, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, flag;
        GroundTruthBox g;
        if (!(ls >> id >> flag >> g.box.lo[0] >> g.box.lo[1] >> g.box.lo[2] >> g.box.hi[0] >> g.box.hi[1] >>
              g.box.hi[2]) ||
            (flag != "pos" && flag != "hneg")) {
            throw std::runtime_error((dir / "annotations.txt").string() + ":" + std::to_string(lineno) +
                                     ": malformed annotation");
        }
        g.hard_negative = flag == "hneg";
        auto it = std::find_if(ds.entries.begin(), ds.entries.end(), [&](const ManifestEntry& e) { return e.id == id; });
        if (it == ds.entries.end()) {
            throw std::runtime_error((dir / "annotations.txt").string() + ":" + std::to_string(lineno) +
                                     ": unknown volume '" + id + "'");
        }
        it->boxes.push_back(g);
    }
    return ds;
}

}  // namespace vuld
