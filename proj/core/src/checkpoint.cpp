#include "advent/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>
#include <torch/torch.h>

#include "advent/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace advent {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'E', 'N', 'T', 'C', 'K'};

std::string dtype_name(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return "float32";
        case torch::kFloat64: return "float64";
        case torch::kInt64: return "int64";
        default: throw IoError(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
    }
}

torch::ScalarType dtype_from(const std::string& s) {
    if (s == "float32") return torch::kFloat32;
    if (s == "float64") return torch::kFloat64;
    if (s == "int64") return torch::kInt64;
    throw VersionError("checkpoint: unknown dtype '" + s + "'");
}

/// Trainable tensors with stable names, in optimizer order.
std::vector<std::pair<std::string, torch::Tensor>> named_trainables(const TrainState& s) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : s.net->named_parameters()) out.emplace_back("net/" + item.key(), item.value());
    if (s.unfold.layers() > 0) {
        out.emplace_back("unfold/alpha", s.unfold.alpha);
        out.emplace_back("unfold/gamma", s.unfold.gamma);
        out.emplace_back("unfold/eta", s.unfold.eta);
    }
    return out;
}

json spec_to_json(const NetworkSpec& n) {
    return {{"policy", to_string(*n.policy)},     {"num_classes", n.num_classes},
            {"backbone_width", n.backbone_width}, {"backbone_depth", n.backbone_depth},
            {"input_channels", n.input_channels}, {"backbone", n.backbone}};
}

NetworkSpec spec_from_json(const json& j) {
    NetworkSpec n;
    n.policy = parse_fusion_policy(j.at("policy").get<std::string>());
    n.num_classes = j.at("num_classes").get<std::int64_t>();
    n.backbone_width = j.at("backbone_width").get<std::int64_t>();
    n.backbone_depth = j.at("backbone_depth").get<std::int64_t>();
    n.input_channels = j.at("input_channels").get<std::int64_t>();
    n.backbone = j.at("backbone").get<std::string>();
    return n;
}

json loss_to_json(const LossConfig& l) {
    return {{"mode", to_string(l.mode)},
            {"layers", l.layers},
            {"alpha0", l.alpha0},
            {"gamma0", l.gamma0},
            {"eta0", l.eta0},
            {"temperature", l.reg.contrast.temperature},
            {"max_anchors", l.reg.contrast.max_anchors},
            {"max_positives", l.reg.contrast.max_positives},
            {"max_negatives", l.reg.contrast.max_negatives},
            {"epsilon", l.reg.epsilon}};
}

LossConfig loss_from_json(const json& j) {
    LossConfig l;
    l.mode = parse_loss_mode(j.at("mode").get<std::string>());
    l.layers = j.at("layers").get<std::int64_t>();
    l.alpha0 = j.at("alpha0").get<double>();
    l.gamma0 = j.at("gamma0").get<double>();
    l.eta0 = j.at("eta0").get<double>();
    l.reg.contrast.temperature = j.at("temperature").get<double>();
    l.reg.contrast.max_anchors = j.at("max_anchors").get<std::int64_t>();
    l.reg.contrast.max_positives = j.at("max_positives").get<std::int64_t>();
    l.reg.contrast.max_negatives = j.at("max_negatives").get<std::int64_t>();
    l.reg.epsilon = j.at("epsilon").get<double>();
    return l;
}

json optim_to_json(const OptimizerConfig& o) {
    return {{"learning_rate", o.learning_rate}, {"beta1", o.beta1},   {"beta2", o.beta2},
            {"weight_decay", o.weight_decay},   {"eps", o.eps}};
}

OptimizerConfig optim_from_json(const json& j) {
    OptimizerConfig o;
    o.learning_rate = j.at("learning_rate").get<double>();
    o.beta1 = j.at("beta1").get<double>();
    o.beta2 = j.at("beta2").get<double>();
    o.weight_decay = j.at("weight_decay").get<double>();
    o.eps = j.at("eps").get<double>();
    return o;
}

class PayloadWriter {
public:
    void add(const std::string& name, const torch::Tensor& t) {
        auto c = t.detach().to(torch::kCPU).contiguous();
        const auto bytes = static_cast<std::size_t>(c.numel()) * c.element_size();
        table_.push_back({{"name", name},
                          {"dtype", dtype_name(c.scalar_type())},
                          {"shape", c.sizes().vec()},
                          {"offset", payload_.size()},
                          {"bytes", bytes}});
        const auto* p = static_cast<const char*>(c.data_ptr());
        payload_.insert(payload_.end(), p, p + bytes);
    }
    const json& table() const { return table_; }
    const std::vector<char>& payload() const { return payload_; }

private:
    json table_ = json::array();
    std::vector<char> payload_;
};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state, const CheckpointMetadata& metadata) {
    PayloadWriter payload;
    json adam_steps = json::object();
    for (const auto& [name, tensor] : named_trainables(state)) {
        payload.add(name, tensor);
        const auto& st = state.optimizer->state();
        auto it = st.find(tensor.unsafeGetTensorImpl());
        if (it == st.end()) continue;
        const auto& adam = static_cast<const torch::optim::AdamParamState&>(*it->second);
        adam_steps[name] = adam.step();
        payload.add("adam/" + name + "/exp_avg", adam.exp_avg());
        payload.add("adam/" + name + "/exp_avg_sq", adam.exp_avg_sq());
    }
    for (const auto& item : state.net->named_buffers()) payload.add("buffer/" + item.key(), item.value());

    json manifest = {{"format", "advent-checkpoint"},
                     {"version", kCheckpointVersion},
                     {"network", spec_to_json(state.spec)},
                     {"loss", loss_to_json(state.loss)},
                     {"optimizer", optim_to_json(state.optim)},
                     {"unfold_layers", state.unfold.layers()},
                     {"seed", state.seed},
                     {"epoch", state.epoch},
                     {"step", state.step},
                     {"adam_steps", adam_steps},
                     {"metadata", metadata},
                     {"tensors", payload.table()}};
    const auto text = manifest.dump(1);

    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
        out.write(kMagic, sizeof kMagic);
        write_pod<std::uint32_t>(out, kCheckpointVersion);
        write_pod<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.write(payload.payload().data(), static_cast<std::streamsize>(payload.payload().size()));
        if (!out) throw IoError("error writing checkpoint " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

TrainState load_checkpoint(const fs::path& path, CheckpointMetadata* metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw VersionError(path.string() + " is not an advent checkpoint");
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw VersionError(path.string() + ": checkpoint format " + std::to_string(version) +
                           " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto manifest_len = read_pod<std::uint64_t>(in);
    std::string text(manifest_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(manifest_len));
    if (!in) throw IoError(path.string() + ": truncated checkpoint manifest");
    std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::exception& e) {
        throw VersionError(path.string() + ": unreadable manifest: " + e.what());
    }
    try {
        if (manifest.at("format") != "advent-checkpoint") throw VersionError(path.string() + ": wrong format tag");

        std::map<std::string, torch::Tensor> tensors;
        for (const auto& entry : manifest.at("tensors")) {
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto bytes = entry.at("bytes").get<std::size_t>();
            if (offset + bytes > payload.size()) throw IoError(path.string() + ": truncated tensor payload");
            auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(entry.at("dtype"))));
            if (static_cast<std::size_t>(t.numel()) * t.element_size() != bytes) {
                throw VersionError(path.string() + ": tensor '" + entry.at("name").get<std::string>() +
                                   "' size disagrees with its shape");
            }
            std::memcpy(t.data_ptr(), payload.data() + offset, bytes);
            tensors.emplace(entry.at("name").get<std::string>(), t);
        }

        auto state = TrainState::create(spec_from_json(manifest.at("network")), loss_from_json(manifest.at("loss")),
                                        optim_from_json(manifest.at("optimizer")),
                                        manifest.at("seed").get<std::uint64_t>());
        state.epoch = manifest.at("epoch").get<std::int64_t>();
        state.step = manifest.at("step").get<std::int64_t>();
        if (manifest.at("unfold_layers").get<std::int64_t>() != state.unfold.layers()) {
            throw VersionError(path.string() + ": unfold layer count disagrees with loss settings");
        }

        auto fetch = [&](const std::string& name, const torch::Tensor& like) {
            auto it = tensors.find(name);
            if (it == tensors.end()) throw VersionError(path.string() + ": missing tensor '" + name + "'");
            if (!it->second.sizes().equals(like.sizes()) || it->second.scalar_type() != like.scalar_type()) {
                throw VersionError(path.string() + ": tensor '" + name + "' does not match the network spec");
            }
            return it->second;
        };

        torch::NoGradGuard no_grad;
        const auto& steps = manifest.at("adam_steps");
        for (auto& [name, tensor] : named_trainables(state)) {
            tensor.copy_(fetch(name, tensor));
            if (!steps.contains(name)) continue;
            auto adam = std::make_unique<torch::optim::AdamParamState>();
            adam->step(steps.at(name).get<std::int64_t>());
            adam->exp_avg(fetch("adam/" + name + "/exp_avg", tensor).clone());
            adam->exp_avg_sq(fetch("adam/" + name + "/exp_avg_sq", tensor).clone());
            state.optimizer->state()[tensor.unsafeGetTensorImpl()] = std::move(adam);
        }
        for (auto& item : state.net->named_buffers()) item.value().copy_(fetch("buffer/" + item.key(), item.value()));

        if (metadata) *metadata = manifest.at("metadata").get<CheckpointMetadata>();
        return state;
    } catch (const json::exception& e) {
        throw VersionError(path.string() + ": malformed manifest: " + e.what());
    } catch (const ConfigError& e) {
        throw VersionError(path.string() + ": incompatible settings: " + e.what());
    }
}

}  // namespace advent
