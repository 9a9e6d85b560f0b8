#include "advent/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <torch/torch.h>

#include "advent/error.hpp"
#include "advent/kv.hpp"
#include "advent/random.hpp"

namespace fs = std::filesystem;

namespace advent {

namespace {

// Base colours per class (sky, building, road, sidewalk, then object classes).
constexpr std::array<std::array<double, 3>, 23> kPalette{{
    {0.55, 0.70, 0.90}, {0.45, 0.40, 0.38}, {0.30, 0.30, 0.32}, {0.60, 0.55, 0.45},
    {0.85, 0.15, 0.15}, {0.15, 0.35, 0.85}, {0.95, 0.80, 0.10}, {0.20, 0.75, 0.25},
    {0.80, 0.30, 0.80}, {0.10, 0.80, 0.80}, {0.95, 0.55, 0.15}, {0.50, 0.20, 0.10},
    {0.70, 0.90, 0.30}, {0.25, 0.15, 0.55}, {0.90, 0.60, 0.70}, {0.40, 0.60, 0.20},
    {0.05, 0.05, 0.40}, {0.75, 0.75, 0.20}, {0.35, 0.80, 0.60}, {0.60, 0.10, 0.35},
    {0.20, 0.50, 0.55}, {0.85, 0.85, 0.85}, {0.10, 0.10, 0.10},
}};

std::int64_t background_classes(std::int64_t num_classes) {
    return std::max<std::int64_t>(1, std::min<std::int64_t>(4, num_classes - 1));
}

bool covers(const ObjectTrack& obj, double cx, double cy, double px, double py) {
    const double dx = (px - cx) / obj.half_w;
    const double dy = (py - cy) / obj.half_h;
    if (obj.shape == ObjectShape::Rectangle) return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
    return dx * dx + dy * dy <= 1.0;
}

void check_intensity(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("weather intensity '") + name + "' outside [0, 1]");
}

}  // namespace

std::string Weather::describe() const {
    std::string s;
    auto add = [&](double v, const char* name) {
        if (v > 0.0) s += (s.empty() ? "" : "+") + std::string(name);
    };
    add(fog, "fog");
    add(rain, "rain");
    add(darkness, "darkness");
    add(noise, "noise");
    return s.empty() ? "clear" : s;
}

void SceneConfig::validate() const {
    if (height < 4 || width < 4) throw ConfigError("scene must be at least 4x4");
    if (num_classes < 2 || num_classes > 23) throw ConfigError("num_classes must lie in [2, 23]");
    if (length < 2) throw ConfigError("sequence length must be >= 2");
    if (n_objects < 0) throw ConfigError("n_objects must be >= 0");
    check_intensity(weather.fog, "fog");
    check_intensity(weather.rain, "rain");
    check_intensity(weather.darkness, "darkness");
    check_intensity(weather.noise, "noise");
}

torch::Tensor object_mask(const ObjectTrack& obj, std::int64_t t, std::int64_t height, std::int64_t width) {
    auto mask = torch::zeros({height, width}, torch::kBool);
    auto m = mask.accessor<bool, 2>();
    const double cx = obj.cx + obj.vx * static_cast<double>(t);
    const double cy = obj.cy + obj.vy * static_cast<double>(t);
    for (std::int64_t y = 0; y < height; ++y) {
        for (std::int64_t x = 0; x < width; ++x) {
            m[y][x] = covers(obj, cx, cy, static_cast<double>(x), static_cast<double>(y));
        }
    }
    return mask;
}

SceneRender render_scene(const SceneConfig& cfg) {
    cfg.validate();
    const auto h = cfg.height, w = cfg.width, length = cfg.length;
    const auto n_bg = background_classes(cfg.num_classes);
    Rng rng(derive_seed(cfg.seed, 0));

    // Horizontal bands for the static layout, top to bottom.
    std::vector<std::int64_t> band_end;
    for (std::int64_t b = 1; b <= n_bg; ++b) {
        const double base = static_cast<double>(b) / static_cast<double>(n_bg);
        const double jitter = b < n_bg ? rng.uniform(-0.08, 0.08) : 0.0;
        band_end.push_back(b < n_bg ? static_cast<std::int64_t>(std::lround((base + jitter) * h)) : h);
    }

    std::vector<std::array<double, 3>> colour(static_cast<std::size_t>(cfg.num_classes));
    for (std::size_t c = 0; c < colour.size(); ++c) {
        for (int k = 0; k < 3; ++k) {
            colour[c][static_cast<std::size_t>(k)] =
                std::clamp(kPalette[c][static_cast<std::size_t>(k)] + rng.uniform(-0.06, 0.06), 0.0, 1.0);
        }
    }

    // Static per-pixel texture on the background.
    std::vector<double> texture(static_cast<std::size_t>(h * w));
    for (auto& v : texture) v = rng.uniform(-0.04, 0.04);

    SceneRender out;
    const std::int64_t n_object_classes = cfg.num_classes - n_bg;
    for (std::int64_t i = 0; i < cfg.n_objects && n_object_classes > 0; ++i) {
        ObjectTrack obj;
        obj.class_index = n_bg + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n_object_classes)));
        obj.shape = rng.below(2) == 0 ? ObjectShape::Rectangle : ObjectShape::Ellipse;
        obj.half_w = rng.uniform(0.08, 0.18) * static_cast<double>(w);
        obj.half_h = rng.uniform(0.08, 0.18) * static_cast<double>(h);
        obj.vx = rng.uniform(-1.5, 1.5);
        obj.vy = rng.uniform(-0.6, 0.6);
        // Keep the whole trajectory inside the image.
        const double span = static_cast<double>(length - 1);
        const double lo_x = obj.half_w + std::max(0.0, -obj.vx * span);
        const double hi_x = static_cast<double>(w - 1) - obj.half_w - std::max(0.0, obj.vx * span);
        const double lo_y = obj.half_h + std::max(0.0, -obj.vy * span);
        const double hi_y = static_cast<double>(h - 1) - obj.half_h - std::max(0.0, obj.vy * span);
        obj.cx = hi_x > lo_x ? rng.uniform(lo_x, hi_x) : 0.5 * static_cast<double>(w - 1);
        obj.cy = hi_y > lo_y ? rng.uniform(lo_y, hi_y) : 0.5 * static_cast<double>(h - 1);
        if (hi_x <= lo_x) obj.vx = 0.0;
        if (hi_y <= lo_y) obj.vy = 0.0;
        out.objects.push_back(obj);
    }

    auto frames = torch::empty({length, 3, h, w}, torch::kFloat32);
    auto labels = torch::empty({length, h, w}, torch::kInt64);
    auto fa = frames.accessor<float, 4>();
    auto la = labels.accessor<std::int64_t, 3>();
    std::vector<double> img(static_cast<std::size_t>(3 * h * w));
    std::vector<std::int64_t> lab(static_cast<std::size_t>(h * w));

    for (std::int64_t t = 0; t < length; ++t) {
        for (std::int64_t y = 0; y < h; ++y) {
            std::int64_t band = 0;
            while (y >= band_end[static_cast<std::size_t>(band)]) ++band;
            for (std::int64_t x = 0; x < w; ++x) {
                const auto p = static_cast<std::size_t>(y * w + x);
                lab[p] = band;
                for (std::size_t k = 0; k < 3; ++k) {
                    img[k * static_cast<std::size_t>(h * w) + p] = colour[static_cast<std::size_t>(band)][k] + texture[p];
                }
            }
        }
        for (const auto& obj : out.objects) {
            const double cx = obj.cx + obj.vx * static_cast<double>(t);
            const double cy = obj.cy + obj.vy * static_cast<double>(t);
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    if (!covers(obj, cx, cy, static_cast<double>(x), static_cast<double>(y))) continue;
                    const auto p = static_cast<std::size_t>(y * w + x);
                    lab[p] = obj.class_index;
                    for (std::size_t k = 0; k < 3; ++k) {
                        img[k * static_cast<std::size_t>(h * w) + p] =
                            colour[static_cast<std::size_t>(obj.class_index)][k] + 0.5 * texture[p];
                    }
                }
            }
        }

        // Weather touches the frame only; labels are already fixed.
        const auto& wx = cfg.weather;
        if (wx.fog > 0.0) {
            for (std::int64_t y = 0; y < h; ++y) {
                const double depth = 1.0 - static_cast<double>(y) / static_cast<double>(h - 1);
                const double a = wx.fog * (0.35 + 0.65 * depth);
                for (std::size_t k = 0; k < 3; ++k) {
                    for (std::int64_t x = 0; x < w; ++x) {
                        auto& v = img[k * static_cast<std::size_t>(h * w) + static_cast<std::size_t>(y * w + x)];
                        v = v * (1.0 - a) + 0.72 * a;
                    }
                }
            }
        }
        if (wx.rain > 0.0) {
            Rng drops(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(t)));
            const auto count = static_cast<std::int64_t>(std::lround(wx.rain * static_cast<double>(h * w) / 30.0));
            for (std::int64_t s = 0; s < count; ++s) {
                const double x0 = drops.uniform(0.0, static_cast<double>(w));
                const double y0 = drops.uniform(0.0, static_cast<double>(h));
                const auto len = 3 + static_cast<std::int64_t>(drops.below(5));
                for (std::int64_t j = 0; j < len; ++j) {
                    const auto x = static_cast<std::int64_t>(x0 + 0.35 * static_cast<double>(j));
                    const auto y = static_cast<std::int64_t>(y0) + j;
                    if (x < 0 || x >= w || y < 0 || y >= h) continue;
                    for (std::size_t k = 0; k < 3; ++k) {
                        auto& v = img[k * static_cast<std::size_t>(h * w) + static_cast<std::size_t>(y * w + x)];
                        v = 0.5 * v + 0.5 * 0.88;
                    }
                }
            }
        }
        if (wx.darkness > 0.0) {
            const double gamma = 1.0 + 1.5 * wx.darkness;
            const double gain = 1.0 - 0.6 * wx.darkness;
            for (auto& v : img) v = gain * std::pow(std::clamp(v, 0.0, 1.0), gamma);
        }
        if (wx.noise > 0.0) {
            Rng grain(derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(t)));
            for (auto& v : img) v += 0.12 * wx.noise * grain.normal();
        }

        for (std::size_t k = 0; k < 3; ++k) {
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    const double v = std::clamp(img[k * static_cast<std::size_t>(h * w) + static_cast<std::size_t>(y * w + x)], 0.0, 1.0);
                    fa[t][static_cast<std::int64_t>(k)][y][x] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
                }
            }
        }
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) la[t][y][x] = lab[static_cast<std::size_t>(y * w + x)];
        }
    }

    out.sequence.sequence_id = "scene-" + std::to_string(cfg.seed);
    out.sequence.frames = frames;
    out.sequence.labels = labels;
    out.sequence.num_classes = cfg.num_classes;
    return out;
}

FrameSequence generate_sequence(const SceneConfig& config) { return render_scene(config).sequence; }

void BenchmarkProfile::validate() const {
    if (train_sequences < 1 || val_sequences < 1) throw ConfigError("profile needs train and val sequences");
    if (!(min_intensity >= 0.0 && max_intensity <= 1.0 && min_intensity <= max_intensity)) {
        throw ConfigError("profile intensity range must lie within [0, 1]");
    }
    SceneConfig probe;
    probe.height = height;
    probe.width = width;
    probe.num_classes = num_classes;
    probe.length = length;
    probe.n_objects = n_objects;
    probe.validate();
}

BenchmarkProfile BenchmarkProfile::from_file(const fs::path& path) {
    const auto r = kv::read_file(path);
    BenchmarkProfile p;
    for (const auto& [key, value] : r) {
        static const std::array<const char*, 10> known{"height", "width", "num_classes", "length", "n_objects",
                                                       "train_sequences", "val_sequences", "seed", "min_intensity",
                                                       "max_intensity"};
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
            throw ConfigError("profile " + path.string() + ": unknown key '" + key + "'");
        }
    }
    p.height = kv::get_int(r, "height", p.height);
    p.width = kv::get_int(r, "width", p.width);
    p.num_classes = kv::get_int(r, "num_classes", p.num_classes);
    p.length = kv::get_int(r, "length", p.length);
    p.n_objects = kv::get_int(r, "n_objects", p.n_objects);
    p.train_sequences = kv::get_int(r, "train_sequences", p.train_sequences);
    p.val_sequences = kv::get_int(r, "val_sequences", p.val_sequences);
    p.seed = kv::get_uint(r, "seed", p.seed);
    p.min_intensity = kv::get_double(r, "min_intensity", p.min_intensity);
    p.max_intensity = kv::get_double(r, "max_intensity", p.max_intensity);
    p.validate();
    return p;
}

std::vector<Weather> train_weather_cycle() {
    return {
        {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1},
        {1, 1, 0, 0}, {0, 1, 1, 0}, {0, 0, 1, 1},
    };
}

std::vector<Weather> val_weather_cycle() {
    return {
        {1, 0, 1, 1}, {1, 0, 0, 1}, {0, 1, 0, 0}, {0, 1, 1, 0},
    };
}

namespace {

std::string sequence_dir(const std::string& split, std::int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seq_%03lld", static_cast<long long>(i));
    return split + "/" + buf;
}

fs::path write_split(const fs::path& root, const std::string& split, std::int64_t count,
                     const std::vector<Weather>& cycle, std::uint64_t index_offset, const BenchmarkProfile& p,
                     std::ofstream& weather_log) {
    const auto manifest = root / (split + ".manifest");
    std::ofstream out(manifest);
    if (!out) throw IoError("cannot write manifest " + manifest.string());
    out << "# " << split << " split, " << count << " sequences\n";
    for (std::int64_t i = 0; i < count; ++i) {
        const auto seed = derive_seed(p.seed, index_offset + static_cast<std::uint64_t>(i));
        Rng rng(derive_seed(seed, 77));
        const auto& pattern = cycle[static_cast<std::size_t>(i) % cycle.size()];
        auto intensity = [&](double on) { return on > 0.0 ? rng.uniform(p.min_intensity, p.max_intensity) : 0.0; };
        SceneConfig cfg;
        cfg.height = p.height;
        cfg.width = p.width;
        cfg.num_classes = p.num_classes;
        cfg.length = p.length;
        cfg.n_objects = p.n_objects;
        cfg.seed = seed;
        cfg.weather.fog = intensity(pattern.fog);
        cfg.weather.rain = intensity(pattern.rain);
        cfg.weather.darkness = intensity(pattern.darkness);
        cfg.weather.noise = intensity(pattern.noise);
        auto seq = generate_sequence(cfg);
        seq.sequence_id = sequence_dir(split, i);
        write_sequence(seq, root / seq.sequence_id);
        out << seq.sequence_id << "\n";
        weather_log << "sequence=" << seq.sequence_id << " weather=" << cfg.weather.describe()
                    << " fog=" << cfg.weather.fog << " rain=" << cfg.weather.rain
                    << " darkness=" << cfg.weather.darkness << " noise=" << cfg.weather.noise << "\n";
    }
    if (!out) throw IoError("error writing manifest " + manifest.string());
    return manifest;
}

}  // namespace

BenchmarkManifests generate_benchmark(const fs::path& root, const BenchmarkProfile& profile) {
    profile.validate();
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());

    kv::write_file(root / "benchmark.profile",
                   {{"height", std::to_string(profile.height)},
                    {"width", std::to_string(profile.width)},
                    {"num_classes", std::to_string(profile.num_classes)},
                    {"length", std::to_string(profile.length)},
                    {"n_objects", std::to_string(profile.n_objects)},
                    {"train_sequences", std::to_string(profile.train_sequences)},
                    {"val_sequences", std::to_string(profile.val_sequences)},
                    {"seed", std::to_string(profile.seed)},
                    {"min_intensity", std::to_string(profile.min_intensity)},
                    {"max_intensity", std::to_string(profile.max_intensity)}},
                   "resolved benchmark profile");
    std::ofstream weather_log(root / "weather.log");
    if (!weather_log) throw IoError("cannot write " + (root / "weather.log").string());

    BenchmarkManifests m;
    m.train = write_split(root, "train", profile.train_sequences, train_weather_cycle(), 0, profile, weather_log);
    m.val = write_split(root, "val", profile.val_sequences, val_weather_cycle(), 100000, profile, weather_log);
    return m;
}

}  // namespace advent
