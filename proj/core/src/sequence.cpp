#include "advent/sequence.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <torch/torch.h>

#include "advent/error.hpp"
#include "advent/image_io.hpp"
#include "advent/random.hpp"

namespace fs = std::filesystem;

namespace advent {

void FrameSequence::validate() const {
    const std::string where = "sequence '" + sequence_id + "'";
    if (!frames.defined() || !labels.defined()) {
        throw IngestionError(where + ": frames or labels missing");
    }
    if (frames.dim() != 4) throw IngestionError(where + ": frames must be [L, C, H, W]");
    if (labels.dim() != 3) throw IngestionError(where + ": labels must be [L, H, W]");
    if (frames.size(0) < 1) throw IngestionError(where + ": empty sequence");
    if (frames.size(0) != labels.size(0)) {
        throw IngestionError(where + ": " + std::to_string(frames.size(0)) + " frames but " +
                             std::to_string(labels.size(0)) + " labels");
    }
    if (frames.size(2) != labels.size(1) || frames.size(3) != labels.size(2)) {
        throw IngestionError(where + ": frame and label sizes differ");
    }
    if (num_classes < 2) throw IngestionError(where + ": num_classes must be >= 2");
    auto lab = labels.to(torch::kInt64);
    for (std::int64_t t = 0; t < lab.size(0); ++t) {
        auto frame_labels = lab[t];
        const auto lo = frame_labels.min().item<std::int64_t>();
        const auto hi = frame_labels.max().item<std::int64_t>();
        if (lo < 0 || hi >= num_classes) {
            throw IngestionError(where + ", frame " + std::to_string(t) + ": label value " +
                                 std::to_string(lo < 0 ? lo : hi) + " outside [0, " +
                                 std::to_string(num_classes) + ")");
        }
    }
    const auto fmin = frames.min().item<double>();
    const auto fmax = frames.max().item<double>();
    if (!(fmin >= 0.0 && fmax <= 1.0)) {
        throw IngestionError(where + ": frame values outside [0, 1]");
    }
}

std::vector<LsmWindow> build_windows(const FrameSequence& seq, std::int64_t depth) {
    if (depth < 1) {
        throw ConfigError("invalid depth " + std::to_string(depth) + ": must be >= 1");
    }
    const std::int64_t length = seq.length();
    if (length <= depth) {
        throw ContractError("sequence '" + seq.sequence_id + "' too short: length " +
                            std::to_string(length) + " cannot yield a window at depth " +
                            std::to_string(depth));
    }

    torch::NoGradGuard no_grad;
    // The history mean is taken in double so identical frames average back to
    // themselves bit-for-bit.
    const auto frames64 = seq.frames.to(torch::kFloat64);
    std::vector<LsmWindow> out;
    out.reserve(static_cast<std::size_t>(length - depth));
    for (std::int64_t t = depth; t < length; ++t) {
        LsmWindow w;
        w.sequence_id = seq.sequence_id;
        w.anchor_index = t;
        w.depth = depth;
        w.insu = seq.frames[t].clone();
        w.intu = frames64.slice(0, t - depth, t).mean(0).to(seq.frames.scalar_type());
        w.du = w.insu - w.intu;
        w.label = seq.labels[t].to(torch::kInt64).clone();
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<LsmWindow> build_windows(const std::vector<FrameSequence>& seqs, std::int64_t depth) {
    std::vector<LsmWindow> out;
    for (const auto& s : seqs) {
        auto w = build_windows(s, depth);
        std::move(w.begin(), w.end(), std::back_inserter(out));
    }
    return out;
}

ShufflePlan gsm_shuffle(std::int64_t n_windows, std::uint64_t base_seed, std::int64_t epoch,
                        std::int64_t batch_size) {
    if (n_windows < 1) throw ContractError("empty window pool: nothing to shuffle");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    ShufflePlan plan;
    plan.base_seed = base_seed;
    plan.epoch = epoch;
    plan.batch_size = batch_size;
    plan.order.resize(static_cast<std::size_t>(n_windows));
    for (std::int64_t i = 0; i < n_windows; ++i) plan.order[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(base_seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(plan.order);
    return plan;
}

ShufflePlan sequential_plan(std::int64_t n_windows, std::int64_t batch_size) {
    if (n_windows < 1) throw ContractError("empty window pool");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    ShufflePlan plan;
    plan.batch_size = batch_size;
    plan.order.resize(static_cast<std::size_t>(n_windows));
    for (std::int64_t i = 0; i < n_windows; ++i) plan.order[static_cast<std::size_t>(i)] = i;
    return plan;
}

std::vector<MiniBatch> make_batches(const ShufflePlan& plan, std::int64_t n_windows) {
    if (static_cast<std::int64_t>(plan.order.size()) != n_windows) {
        throw ContractError("shuffle plan covers " + std::to_string(plan.order.size()) +
                            " windows but " + std::to_string(n_windows) + " were supplied");
    }
    if (plan.batch_size < 1) throw ConfigError("batch size must be >= 1");
    std::vector<MiniBatch> out;
    const auto b = static_cast<std::size_t>(plan.batch_size);
    for (std::size_t start = 0; start < plan.order.size(); start += b) {
        const auto stop = std::min(plan.order.size(), start + b);
        MiniBatch mb;
        mb.indices.assign(plan.order.begin() + static_cast<std::ptrdiff_t>(start),
                          plan.order.begin() + static_cast<std::ptrdiff_t>(stop));
        for (auto idx : mb.indices) {
            if (idx < 0 || idx >= n_windows) {
                throw ContractError("shuffle plan index " + std::to_string(idx) + " out of range");
            }
        }
        out.push_back(std::move(mb));
    }
    return out;
}

WindowBatch stack_windows(const std::vector<LsmWindow>& windows,
                          const std::vector<std::int64_t>& indices) {
    if (indices.empty()) throw ContractError("empty mini-batch");
    std::vector<torch::Tensor> ins, integ, der, lab;
    for (auto i : indices) {
        const auto& w = windows.at(static_cast<std::size_t>(i));
        ins.push_back(w.insu);
        integ.push_back(w.intu);
        der.push_back(w.du);
        lab.push_back(w.label);
    }
    return {torch::stack(ins), torch::stack(integ), torch::stack(der), torch::stack(lab)};
}

std::vector<std::string> read_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IngestionError("cannot open manifest " + manifest.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        out.push_back(line.substr(b, e - b + 1));
    }
    return out;
}

namespace {

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::string frame_name(std::int64_t t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld.png", static_cast<long long>(t));
    return buf;
}

FrameSequence read_sequence(const fs::path& dir, const std::string& id, std::int64_t num_classes) {
    const auto frame_dir = dir / "frames";
    const auto label_dir = dir / "labels";
    if (!fs::is_directory(frame_dir) || !fs::is_directory(label_dir)) {
        throw IngestionError("sequence '" + id + "': missing frames/ or labels/ directory under " +
                             dir.string());
    }
    const auto frame_files = sorted_pngs(frame_dir);
    const auto label_files = sorted_pngs(label_dir);
    if (frame_files.size() != label_files.size()) {
        throw IngestionError("sequence '" + id + "': " + std::to_string(frame_files.size()) +
                             " frames but " + std::to_string(label_files.size()) + " labels");
    }
    if (frame_files.empty()) throw IngestionError("sequence '" + id + "': no frames");

    std::vector<torch::Tensor> frames, labels;
    int height = -1, width = -1, channels = -1;
    for (std::size_t t = 0; t < frame_files.size(); ++t) {
        if (frame_files[t].filename() != label_files[t].filename()) {
            throw IngestionError("sequence '" + id + "': frame " + frame_files[t].filename().string() +
                                 " has no matching label file");
        }
        const std::string where = "sequence '" + id + "', frame " + frame_files[t].filename().string();
        image_io::Image8 img, lab;
        try {
            img = image_io::read_png(frame_files[t]);
            lab = image_io::read_png(label_files[t]);
        } catch (const IoError& e) {
            throw IngestionError(where + ": " + e.what());
        }
        if (lab.channels != 1) throw IngestionError(where + ": label map must be single-channel");
        if (height < 0) {
            height = img.height;
            width = img.width;
            channels = img.channels;
        }
        if (img.height != height || img.width != width || img.channels != channels) {
            throw IngestionError(where + ": frame shape differs from the first frame");
        }
        if (lab.height != height || lab.width != width) {
            throw IngestionError(where + ": label shape differs from frame shape");
        }
        for (auto v : lab.pixels) {
            if (v >= num_classes) {
                throw IngestionError(where + ": label value " + std::to_string(v) + " outside [0, " +
                                     std::to_string(num_classes) + ")");
            }
        }
        auto f = torch::from_blob(img.pixels.data(), {height, width, channels}, torch::kUInt8)
                     .permute({2, 0, 1})
                     .to(torch::kFloat32)
                     .div(255.0f)
                     .contiguous();
        auto l = torch::from_blob(lab.pixels.data(), {height, width}, torch::kUInt8).to(torch::kInt64);
        frames.push_back(f);
        labels.push_back(l);
    }
    FrameSequence seq;
    seq.sequence_id = id;
    seq.frames = torch::stack(frames);
    seq.labels = torch::stack(labels);
    seq.num_classes = num_classes;
    seq.validate();
    return seq;
}

}  // namespace

std::vector<FrameSequence> ingest_dataset(const fs::path& root, const fs::path& manifest,
                                          std::int64_t num_classes) {
    if (num_classes < 2 || num_classes > 255) {
        throw ConfigError("num_classes must lie in [2, 255]");
    }
    const auto entries = read_manifest(manifest);
    if (entries.empty()) throw IngestionError("manifest " + manifest.string() + " lists no sequences");
    std::vector<FrameSequence> out;
    out.reserve(entries.size());
    for (const auto& rel : entries) {
        const auto dir = root / rel;
        if (!fs::is_directory(dir)) {
            throw IngestionError("sequence '" + rel + "': directory " + dir.string() + " not found");
        }
        out.push_back(read_sequence(dir, rel, num_classes));
    }
    return out;
}

void write_sequence(const FrameSequence& seq, const fs::path& dir) {
    seq.validate();
    std::error_code ec;
    fs::create_directories(dir / "frames", ec);
    if (!ec) fs::create_directories(dir / "labels", ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    const auto h = static_cast<int>(seq.height());
    const auto w = static_cast<int>(seq.width());
    const auto c = static_cast<int>(seq.channels());
    for (std::int64_t t = 0; t < seq.length(); ++t) {
        auto f = seq.frames[t].mul(255.0f).round().clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0}).contiguous();
        image_io::Image8 img{w, h, c, {}};
        img.pixels.assign(f.data_ptr<std::uint8_t>(), f.data_ptr<std::uint8_t>() + f.numel());
        image_io::write_png(dir / "frames" / frame_name(t), img);

        auto l = seq.labels[t].to(torch::kUInt8).contiguous();
        image_io::Image8 lab{w, h, 1, {}};
        lab.pixels.assign(l.data_ptr<std::uint8_t>(), l.data_ptr<std::uint8_t>() + l.numel());
        image_io::write_png(dir / "labels" / frame_name(t), lab);
    }
}

}  // namespace advent
