#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <torch/torch.h>

#include "advent/random.hpp"
#include "advent/sequence.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        advent::Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
        path_ = std::filesystem::temp_directory_path() / ("advent-" + tag + "-" + std::to_string(rng.next() % 1000000));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Random normalized distribution with entries bounded away from zero.
inline torch::Tensor random_distribution(advent::Rng& rng, std::int64_t n, double floor = 0.05) {
    auto p = torch::empty({n}, torch::kFloat64);
    auto a = p.accessor<double, 1>();
    for (std::int64_t i = 0; i < n; ++i) a[i] = rng.uniform(floor, 1.0);
    return p / p.sum();
}

inline torch::Tensor random_normal(advent::Rng& rng, std::vector<std::int64_t> shape, double scale = 1.0) {
    auto t = torch::empty(shape, torch::kFloat64);
    auto* d = t.data_ptr<double>();
    for (std::int64_t i = 0; i < t.numel(); ++i) d[i] = scale * rng.normal();
    return t;
}

/// Sequence with values drawn at multiples of 1/255 so it survives 8-bit I/O.
inline advent::FrameSequence random_sequence(advent::Rng& rng, std::int64_t length, std::int64_t channels,
                                             std::int64_t h, std::int64_t w, std::int64_t classes,
                                             const std::string& id = "seq") {
    advent::FrameSequence s;
    s.sequence_id = id;
    s.num_classes = classes;
    s.frames = torch::empty({length, channels, h, w});
    s.labels = torch::empty({length, h, w}, torch::kInt64);
    auto* f = s.frames.data_ptr<float>();
    for (std::int64_t i = 0; i < s.frames.numel(); ++i) f[i] = static_cast<float>(rng.below(256)) / 255.0f;
    auto* l = s.labels.data_ptr<std::int64_t>();
    for (std::int64_t i = 0; i < s.labels.numel(); ++i) l[i] = static_cast<std::int64_t>(rng.below(classes));
    return s;
}

/// |a - b| <= rel * |b|, or absolute when |b| is tiny.
inline bool close_rel(double a, double b, double rel, double tiny = 1e-8) {
    if (std::abs(b) < tiny) return std::abs(a - b) <= tiny;
    return std::abs(a - b) <= rel * std::abs(b);
}

}  // namespace testing
