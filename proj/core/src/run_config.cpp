#include "advent/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "advent/error.hpp"

namespace fs = std::filesystem;

namespace advent {

namespace kv {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

Record parse(const std::string& text, const std::string& origin) {
    Record r;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        r[key] = trim(line.substr(eq + 1));
    }
    return r;
}

Record read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void write_file(const fs::path& path, const Record& record, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    if (!header.empty()) out << "# " << header << "\n";
    for (const auto& [k, v] : record) out << k << " = " << v << "\n";
    if (!out) throw IoError("error writing " + path.string());
}

namespace {

template <typename T>
T parse_number(const Record& r, const std::string& key, T fallback) {
    auto it = r.find(key);
    if (it == r.end()) return fallback;
    const auto& s = it->second;
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("field '" + key + "': cannot parse '" + s + "' as a number");
    }
    return v;
}

}  // namespace

std::int64_t get_int(const Record& r, const std::string& key, std::int64_t fallback) {
    return parse_number<std::int64_t>(r, key, fallback);
}

std::uint64_t get_uint(const Record& r, const std::string& key, std::uint64_t fallback) {
    return parse_number<std::uint64_t>(r, key, fallback);
}

double get_double(const Record& r, const std::string& key, double fallback) {
    auto it = r.find(key);
    if (it == r.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("field '" + key + "': cannot parse '" + it->second + "' as a number");
    }
}

bool get_bool(const Record& r, const std::string& key, bool fallback) {
    auto it = r.find(key);
    if (it == r.end()) return fallback;
    const auto& s = it->second;
    if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
    if (s == "off" || s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("field '" + key + "': expected on/off, got '" + s + "'");
}

std::string get_string(const Record& r, const std::string& key, const std::string& fallback) {
    auto it = r.find(key);
    return it == r.end() ? fallback : it->second;
}

Record parse_line(const std::string& line) {
    Record r;
    std::istringstream in(line);
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        r[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return r;
}

}  // namespace kv

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = kv::trim(item);
        if (item.empty()) continue;
        out.push_back(kv::get_uint({{"seeds", item}}, "seeds", 0));
    }
    if (out.empty()) throw ConfigError("field 'seeds': at least one seed is required");
    return out;
}

std::string format_seed_list(const std::vector<std::uint64_t>& seeds) {
    std::string s;
    for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
    return s;
}

NetworkSpec RunConfig::network_spec() const {
    NetworkSpec spec;
    spec.policy = policy;
    spec.num_classes = num_classes;
    spec.backbone_width = backbone_width;
    spec.backbone_depth = backbone_depth;
    spec.input_channels = 3;
    return spec;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("field '" + field + "': " + why);
    };
    if (train_manifest.empty()) fail("train_manifest", "required");
    if (num_classes < 2 || num_classes > 255) fail("num_classes", "must lie in [2, 255]");
    if (depth < 1) fail("depth", "must be >= 1");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (epochs < 1) fail("epochs", "must be >= 1");
    if (seeds.empty()) fail("seeds", "at least one seed is required");
    if (loss.layers < 0) fail("K", "must be >= 0");
    if (!(loss.reg.contrast.temperature > 0.0)) fail("tau", "must be > 0");
    if (loss.reg.contrast.max_anchors < 0) fail("anchors", "must be >= 0");
    if (loss.reg.contrast.max_positives < 1) fail("positives", "must be >= 1");
    if (loss.reg.contrast.max_negatives < 1) fail("negatives", "must be >= 1");
    if (!(optim.learning_rate > 0.0)) fail("lr", "must be > 0");
    if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
    if (!(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
    if (!(optim.weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
    if (backbone_width < 1) fail("backbone_width", "must be >= 1");
    if (backbone_depth < 1 || backbone_depth > 6) fail("backbone_depth", "must lie in [1, 6]");
    if (output_dir.empty()) fail("output_dir", "required");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "train_manifest", "val_manifest", "num_classes", "depth", "policy", "gsm", "loss", "K",
        "alpha0", "gamma0", "eta0", "tau", "anchors", "positives", "negatives", "epsilon",
        "lr", "beta1", "beta2", "weight_decay", "adam_eps", "batch_size", "epochs", "seeds",
        "backbone_width", "backbone_depth", "output_dir"};
    return keys;
}

}  // namespace

kv::Record RunConfig::to_record() const {
    return {
        {"train_manifest", train_manifest.string()},
        {"val_manifest", val_manifest.string()},
        {"num_classes", std::to_string(num_classes)},
        {"depth", std::to_string(depth)},
        {"policy", to_string(policy)},
        {"gsm", gsm ? "on" : "off"},
        {"loss", to_string(loss.mode)},
        {"K", std::to_string(loss.layers)},
        {"alpha0", fmt_double(loss.alpha0)},
        {"gamma0", fmt_double(loss.gamma0)},
        {"eta0", fmt_double(loss.eta0)},
        {"tau", fmt_double(loss.reg.contrast.temperature)},
        {"anchors", std::to_string(loss.reg.contrast.max_anchors)},
        {"positives", std::to_string(loss.reg.contrast.max_positives)},
        {"negatives", std::to_string(loss.reg.contrast.max_negatives)},
        {"epsilon", fmt_double(loss.reg.epsilon)},
        {"lr", fmt_double(optim.learning_rate)},
        {"beta1", fmt_double(optim.beta1)},
        {"beta2", fmt_double(optim.beta2)},
        {"weight_decay", fmt_double(optim.weight_decay)},
        {"adam_eps", fmt_double(optim.eps)},
        {"batch_size", std::to_string(batch_size)},
        {"epochs", std::to_string(epochs)},
        {"seeds", format_seed_list(seeds)},
        {"backbone_width", std::to_string(backbone_width)},
        {"backbone_depth", std::to_string(backbone_depth)},
        {"output_dir", output_dir.string()},
    };
}

RunConfig RunConfig::with(const kv::Record& r) const {
    for (const auto& [key, value] : r) {
        if (!known_keys().count(key)) throw ConfigError("unknown config field '" + key + "'");
    }
    RunConfig c = *this;
    if (r.count("train_manifest")) c.train_manifest = r.at("train_manifest");
    if (r.count("val_manifest")) c.val_manifest = r.at("val_manifest");
    c.num_classes = kv::get_int(r, "num_classes", c.num_classes);
    c.depth = kv::get_int(r, "depth", c.depth);
    if (r.count("policy")) {
        try {
            c.policy = parse_fusion_policy(r.at("policy"));
        } catch (const ConfigError&) {
            throw ConfigError("field 'policy': expected CE or FI, got '" + r.at("policy") + "'");
        }
    }
    c.gsm = kv::get_bool(r, "gsm", c.gsm);
    if (r.count("loss")) {
        try {
            c.loss.mode = parse_loss_mode(r.at("loss"));
        } catch (const ConfigError&) {
            throw ConfigError("field 'loss': expected ce, vrs or urs, got '" + r.at("loss") + "'");
        }
    }
    c.loss.layers = kv::get_int(r, "K", c.loss.layers);
    c.loss.alpha0 = kv::get_double(r, "alpha0", c.loss.alpha0);
    c.loss.gamma0 = kv::get_double(r, "gamma0", c.loss.gamma0);
    c.loss.eta0 = kv::get_double(r, "eta0", c.loss.eta0);
    c.loss.reg.contrast.temperature = kv::get_double(r, "tau", c.loss.reg.contrast.temperature);
    c.loss.reg.contrast.max_anchors = kv::get_int(r, "anchors", c.loss.reg.contrast.max_anchors);
    c.loss.reg.contrast.max_positives = kv::get_int(r, "positives", c.loss.reg.contrast.max_positives);
    c.loss.reg.contrast.max_negatives = kv::get_int(r, "negatives", c.loss.reg.contrast.max_negatives);
    c.loss.reg.epsilon = kv::get_double(r, "epsilon", c.loss.reg.epsilon);
    c.optim.learning_rate = kv::get_double(r, "lr", c.optim.learning_rate);
    c.optim.beta1 = kv::get_double(r, "beta1", c.optim.beta1);
    c.optim.beta2 = kv::get_double(r, "beta2", c.optim.beta2);
    c.optim.weight_decay = kv::get_double(r, "weight_decay", c.optim.weight_decay);
    c.optim.eps = kv::get_double(r, "adam_eps", c.optim.eps);
    c.batch_size = kv::get_int(r, "batch_size", c.batch_size);
    c.epochs = kv::get_int(r, "epochs", c.epochs);
    if (r.count("seeds")) c.seeds = parse_seed_list(r.at("seeds"));
    c.backbone_width = kv::get_int(r, "backbone_width", c.backbone_width);
    c.backbone_depth = kv::get_int(r, "backbone_depth", c.backbone_depth);
    if (r.count("output_dir")) c.output_dir = r.at("output_dir");
    return c;
}

RunConfig RunConfig::from_record(const kv::Record& r) { return RunConfig{}.with(r); }

RunConfig RunConfig::from_file(const fs::path& path) {
    auto c = from_record(kv::read_file(path));
    // Manifest paths in a config file are relative to the file.
    const auto base = path.parent_path();
    if (!c.train_manifest.empty() && c.train_manifest.is_relative()) c.train_manifest = base / c.train_manifest;
    if (!c.val_manifest.empty() && c.val_manifest.is_relative()) c.val_manifest = base / c.val_manifest;
    return c;
}

}  // namespace advent
