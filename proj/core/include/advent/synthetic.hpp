#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advent/sequence.hpp"

namespace advent {

/// Intensities in [0, 1]; zero disables a corruption.
struct Weather {
    double fog = 0.0;
    double rain = 0.0;
    double darkness = 0.0;
    double noise = 0.0;

    bool clear() const { return fog == 0.0 && rain == 0.0 && darkness == 0.0 && noise == 0.0; }
    /// e.g. "fog+rain", or "clear".
    std::string describe() const;
};

struct SceneConfig {
    std::int64_t height = 32;
    std::int64_t width = 32;
    std::int64_t num_classes = 8;
    std::int64_t n_objects = 3;
    Weather weather;
    std::int64_t length = 8;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

enum class ObjectShape { Rectangle, Ellipse };

/// A rigid object moving on a straight line; its centre at frame t is
/// (cx + vx * t, cy + vy * t).
struct ObjectTrack {
    std::int64_t class_index = 0;
    ObjectShape shape = ObjectShape::Rectangle;
    double cx = 0.0, cy = 0.0;
    double vx = 0.0, vy = 0.0;
    double half_w = 1.0, half_h = 1.0;
};

/// Boolean [H, W] coverage of one object at frame t, before occlusion.
torch::Tensor object_mask(const ObjectTrack& obj, std::int64_t t, std::int64_t height, std::int64_t width);

struct SceneRender {
    FrameSequence sequence;
    std::vector<ObjectTrack> objects;
};

/// Renders the clean scene, labels it, then composites weather onto the frames
/// only. Frames are quantized to multiples of 1/255 so they survive an 8-bit
/// lossless round trip unchanged.
SceneRender render_scene(const SceneConfig& config);

FrameSequence generate_sequence(const SceneConfig& config);

struct BenchmarkProfile {
    std::int64_t height = 32;
    std::int64_t width = 32;
    std::int64_t num_classes = 8;
    std::int64_t length = 8;
    std::int64_t n_objects = 3;
    std::int64_t train_sequences = 12;
    std::int64_t val_sequences = 4;
    std::uint64_t seed = 2024;
    double min_intensity = 0.3;
    double max_intensity = 0.8;

    void validate() const;
    static BenchmarkProfile from_file(const std::filesystem::path& path);
};

struct BenchmarkManifests {
    std::filesystem::path train;
    std::filesystem::path val;
};

/// The weather mixes cycled through by each split. The validation list
/// includes mixes never used for training.
std::vector<Weather> train_weather_cycle();
std::vector<Weather> val_weather_cycle();

/// Writes train/ and val/ sequence directories plus train.manifest and
/// val.manifest under root. Throws IoError with path context.
BenchmarkManifests generate_benchmark(const std::filesystem::path& root, const BenchmarkProfile& profile);

}  // namespace advent
