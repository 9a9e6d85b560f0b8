#include "advent/unfold.hpp"

#include <sstream>

#include <torch/torch.h>

#include "advent/error.hpp"
#include "advent/random.hpp"

namespace advent {

void UnfoldParams::validate() const {
    const auto k = layers();
    for (const auto* t : {&alpha, &gamma, &eta}) {
        const auto n = t->defined() ? t->numel() : 0;
        if (n != k) throw ConfigError("unfold params: alpha, gamma and eta must all have length K");
        if (t->defined() && t->dim() != 1) throw ConfigError("unfold params must be 1-D");
    }
}

std::vector<torch::Tensor> UnfoldParams::tensors() const {
    if (layers() == 0) return {};
    return {alpha, gamma, eta};
}

UnfoldParams UnfoldParams::constant(std::int64_t layers, double alpha0, double gamma0, double eta0,
                                    torch::Dtype dtype) {
    if (layers < 0) throw ConfigError("number of unrolled layers must be >= 0");
    UnfoldParams p;
    if (layers == 0) return p;
    auto opts = torch::TensorOptions().dtype(dtype);
    p.alpha = torch::full({layers}, alpha0, opts).set_requires_grad(true);
    p.gamma = torch::full({layers}, gamma0, opts).set_requires_grad(true);
    p.eta = torch::full({layers}, eta0, opts).set_requires_grad(true);
    return p;
}

std::vector<PackedContrast> draw_batch_contrast(const torch::Tensor& labels, const ContrastConfig& cfg,
                                                std::uint64_t seed) {
    std::vector<PackedContrast> out;
    out.reserve(static_cast<std::size_t>(labels.size(0)));
    for (std::int64_t b = 0; b < labels.size(0); ++b) {
        out.push_back(pack(draw_contrast_indices(labels[b], cfg, derive_seed(seed, static_cast<std::uint64_t>(b)))));
    }
    return out;
}

torch::Tensor bd_direction(const torch::Tensor& logits, const torch::Tensor& labels, double epsilon) {
    const auto b = logits.size(0);
    const auto c = logits.size(1);
    const auto n = static_cast<double>(logits.size(2) * logits.size(3));
    auto px = (torch::softmax(logits, 1) / n).reshape({b, -1});
    auto py = (torch::one_hot(labels, c).permute({0, 3, 1, 2}).to(logits.scalar_type()) / n).reshape({b, -1});
    return bd_gradient(px, py, epsilon).reshape(logits.sizes());
}

torch::Tensor contrast_direction(const torch::Tensor& logits, const std::vector<PackedContrast>& sets,
                                 double temperature) {
    const auto c = logits.size(1);
    if (static_cast<std::int64_t>(sets.size()) != logits.size(0)) {
        throw ShapeError("contrast sets must be given for every image in the batch");
    }
    std::vector<torch::Tensor> per_image;
    per_image.reserve(sets.size());
    for (std::int64_t b = 0; b < logits.size(0); ++b) {
        auto emb = logits[b].reshape({c, -1}).t();
        auto g = contrast_gradient(emb, sets[static_cast<std::size_t>(b)], temperature);
        per_image.push_back(g.t().reshape({c, logits.size(2), logits.size(3)}));
    }
    return torch::stack(per_image);
}

torch::Tensor unroll(const torch::Tensor& x0, const torch::Tensor& labels, const UnfoldParams& params,
                     const std::vector<PackedContrast>& sets, const RegularizerConfig& cfg) {
    params.validate();
    if (x0.dim() != 4 || labels.dim() != 3 || x0.size(0) != labels.size(0) || x0.size(2) != labels.size(1) ||
        x0.size(3) != labels.size(2)) {
        throw ShapeError("unroll: logits [B, C, H, W] and labels [B, H, W] must align");
    }
    const auto k_layers = params.layers();
    if (k_layers == 0) return x0;

    auto alpha = params.alpha.to(x0.scalar_type());
    auto gamma = params.gamma.to(x0.scalar_type());
    auto eta = params.eta.to(x0.scalar_type());
    auto x = x0;
    for (std::int64_t k = 0; k < k_layers; ++k) {
        auto d_bd = bd_direction(x, labels, cfg.epsilon);
        auto d_con = contrast_direction(x, sets, cfg.contrast.temperature);
        x = x - eta[k] * (alpha[k] * d_bd + gamma[k] * d_con);
        if (!torch::isfinite(x).all().item<bool>()) {
            throw DivergenceError("unrolled layer " + std::to_string(k + 1) + " produced non-finite values",
                                  static_cast<int>(k + 1));
        }
    }
    return x;
}

torch::Tensor aggregate(const torch::Tensor& x0, const torch::Tensor& xk) {
    if (!x0.sizes().equals(xk.sizes())) throw ShapeError("aggregate: x0 and xK shapes differ");
    return x0 + xk;
}

torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels) {
    return torch::nn::functional::cross_entropy(logits, labels);
}

torch::Tensor vanilla_regularized_loss(const torch::Tensor& x0, const torch::Tensor& labels, double alpha,
                                       double gamma, const std::vector<PackedContrast>& sets,
                                       const RegularizerConfig& cfg) {
    auto loss = cross_entropy(x0, labels);
    const auto b = x0.size(0);
    const auto c = x0.size(1);
    if (alpha != 0.0) {
        const auto n = static_cast<double>(x0.size(2) * x0.size(3));
        auto px = (torch::softmax(x0, 1) / n).reshape({b, -1});
        auto py = (torch::one_hot(labels, c).permute({0, 3, 1, 2}).to(x0.scalar_type()) / n).reshape({b, -1});
        loss = loss + alpha * bd_distance(px, py, cfg.epsilon).mean();
    }
    if (gamma != 0.0) {
        if (static_cast<std::int64_t>(sets.size()) != b) {
            throw ShapeError("contrast sets must be given for every image in the batch");
        }
        auto con = torch::zeros({}, x0.options());
        for (std::int64_t i = 0; i < b; ++i) {
            con = con + contrast_loss(x0[i].reshape({c, -1}).t(), sets[static_cast<std::size_t>(i)],
                                      cfg.contrast.temperature);
        }
        loss = loss + gamma * con / static_cast<double>(b);
    }
    return loss;
}

std::string to_string(LossMode m) {
    switch (m) {
        case LossMode::CrossEntropy: return "ce";
        case LossMode::Vanilla: return "vrs";
        case LossMode::Unfolded: return "urs";
    }
    return "?";
}

LossMode parse_loss_mode(const std::string& s) {
    if (s == "ce" || s == "CE" || s == "ce-only") return LossMode::CrossEntropy;
    if (s == "vrs" || s == "VRs") return LossMode::Vanilla;
    if (s == "urs" || s == "URs") return LossMode::Unfolded;
    throw ConfigError("unknown loss mode '" + s + "' (expected ce, vrs or urs)");
}

void LossConfig::validate() const {
    if (layers < 0) throw ConfigError("K must be >= 0");
    if (!(reg.contrast.temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (reg.contrast.max_anchors < 0 || reg.contrast.max_positives < 1 || reg.contrast.max_negatives < 1) {
        throw ConfigError("contrast caps must be positive");
    }
    if (!(reg.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

TrainState TrainState::create(const NetworkSpec& spec, const LossConfig& loss, const OptimizerConfig& optim,
                              std::uint64_t seed) {
    spec.validate();
    loss.validate();
    torch::manual_seed(seed);
    TrainState s;
    s.spec = spec;
    s.loss = loss;
    s.optim = optim;
    s.seed = seed;
    s.net = SegmentationNet(spec);
    s.unfold = UnfoldParams::constant(loss.unrolled_layers(), loss.alpha0, loss.gamma0, loss.eta0);
    s.rebuild_optimizer();
    return s;
}

std::vector<torch::Tensor> TrainState::trainable() const {
    auto params = net->parameters();
    for (auto& t : unfold.tensors()) params.push_back(t);
    return params;
}

void TrainState::rebuild_optimizer() {
    optimizer = std::make_unique<torch::optim::Adam>(
        trainable(), torch::optim::AdamOptions(optim.learning_rate)
                         .betas({optim.beta1, optim.beta2})
                         .weight_decay(optim.weight_decay)
                         .eps(optim.eps));
}

namespace {

std::uint64_t step_seed(const TrainState& state) {
    return derive_seed(state.seed ^ 0x5bd1e995ULL, static_cast<std::uint64_t>(state.step));
}

}  // namespace

torch::Tensor training_loss(const WindowBatch& batch, TrainState& state, std::uint64_t sample_seed) {
    auto x0 = predict(state.net, batch, state.spec);
    const auto& cfg = state.loss;
    switch (cfg.mode) {
        case LossMode::CrossEntropy:
            return cross_entropy(x0, batch.labels);
        case LossMode::Vanilla: {
            auto sets = draw_batch_contrast(batch.labels, cfg.reg.contrast, sample_seed);
            return vanilla_regularized_loss(x0, batch.labels, cfg.alpha0, cfg.gamma0, sets, cfg.reg);
        }
        case LossMode::Unfolded: {
            // With no layers there is no unrolled branch to add.
            if (state.unfold.layers() == 0) return cross_entropy(x0, batch.labels);
            auto sets = draw_batch_contrast(batch.labels, cfg.reg.contrast, sample_seed);
            auto xk = unroll(x0, batch.labels, state.unfold, sets, cfg.reg);
            return cross_entropy(aggregate(x0, xk), batch.labels);
        }
    }
    throw ConfigError("unknown loss mode");
}

StepResult train_step(const WindowBatch& batch, TrainState& state) {
    if (batch.size() == 0) throw ContractError("train_step: empty batch");
    state.net->train();
    state.optimizer->zero_grad();
    auto loss = training_loss(batch, state, step_seed(state));
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "training diverged at step " << state.step << " (epoch " << state.epoch << "): loss=" << value;
        if (state.unfold.layers() > 0) {
            msg << " alpha=" << state.unfold.alpha << " gamma=" << state.unfold.gamma
                << " eta=" << state.unfold.eta;
        }
        throw DivergenceError(msg.str());
    }
    loss.backward();
    state.optimizer->step();
    ++state.step;
    return {value};
}

torch::Tensor infer(const WindowBatch& batch, TrainState& state, std::uint64_t sample_seed) {
    torch::NoGradGuard no_grad;
    state.net->eval();
    auto x0 = predict(state.net, batch, state.spec);
    if (state.loss.mode != LossMode::Unfolded || state.unfold.layers() == 0) return x0;
    auto pseudo = x0.argmax(1);
    auto sets = draw_batch_contrast(pseudo, state.loss.reg.contrast, sample_seed);
    return aggregate(x0, unroll(x0, pseudo, state.unfold, sets, state.loss.reg));
}

}  // namespace advent
