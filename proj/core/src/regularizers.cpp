#include "advent/regularizers.hpp"

#include <map>

#include <torch/torch.h>

#include "advent/error.hpp"
#include "advent/random.hpp"

namespace advent {

torch::Tensor ImageDistribution::clamped() const { return p.clamp_min(epsilon); }

ImageDistribution ImageDistribution::from_logits(const torch::Tensor& logits, std::int64_t class_dim,
                                                 double epsilon) {
    const auto n_pixels = logits.numel() / logits.size(class_dim);
    auto prob = torch::softmax(logits, class_dim).movedim(class_dim, -1).reshape({-1});
    return {prob / static_cast<double>(n_pixels), epsilon};
}

ImageDistribution ImageDistribution::from_labels(const torch::Tensor& labels, std::int64_t num_classes) {
    auto onehot = torch::one_hot(labels.reshape({-1}).to(torch::kInt64), num_classes).to(torch::kFloat64);
    return {(onehot / static_cast<double>(labels.numel())).reshape({-1}), kDefaultEpsilon};
}

torch::Tensor bd_distance(const torch::Tensor& px, const torch::Tensor& py, double epsilon) {
    if (!px.sizes().equals(py.sizes())) throw ShapeError("bd_distance: distribution sizes differ");
    // sqrt(px) * sqrt(py) rather than sqrt(px * py): the backward pass of the
    // latter is 0/0 wherever py is zero.
    auto coeff = (px.clamp_min(epsilon).sqrt() * py.sqrt()).sum(-1);
    return -coeff.log();
}

torch::Tensor bd_gradient(const torch::Tensor& px, const torch::Tensor& py, double epsilon) {
    if (!px.sizes().equals(py.sizes())) throw ShapeError("bd_gradient: distribution sizes differ");
    auto root_x = px.clamp_min(epsilon).sqrt();
    auto root_y = py.sqrt();
    auto coeff = (root_x * root_y).sum(-1, /*keepdim=*/true);
    return -0.5 / coeff * root_y / root_x;
}

double bd_loss(const ImageDistribution& px, const ImageDistribution& py) {
    if (px.p.numel() != py.p.numel()) {
        throw ShapeError("bd_loss: lengths " + std::to_string(px.p.numel()) + " and " +
                         std::to_string(py.p.numel()) + " differ");
    }
    auto a = px.p.reshape({-1}).to(torch::kFloat64);
    auto b = py.p.reshape({-1}).to(torch::kFloat64);
    return bd_distance(a, b, px.epsilon).item<double>();
}

torch::Tensor bd_grad(const ImageDistribution& px, const ImageDistribution& py) {
    if (px.p.numel() != py.p.numel()) throw ShapeError("bd_grad: distribution lengths differ");
    auto floor = px.clamped();
    // NaN entries survive clamp_min and would poison the normalizer.
    if (!(floor.min().item<double>() >= px.epsilon)) {
        throw ContractError("bd_grad: P_X has an entry below epsilon after clamping");
    }
    return bd_gradient(px.p.reshape({-1}), py.p.reshape({-1}).to(px.p.scalar_type()), px.epsilon);
}

namespace {

void check_sample(const ContrastSample& s) {
    if (!(s.temperature > 0.0)) throw ContractError("infonce: temperature must be > 0");
    if (!s.positives.defined() || s.positives.dim() != 2 || s.positives.size(0) < 1) {
        throw ContractError("infonce: anchor has no positives");
    }
    if (s.anchor.dim() != 1 || s.positives.size(1) != s.anchor.size(0)) {
        throw ShapeError("infonce: positive embeddings do not match anchor dimension");
    }
    if (s.negatives.defined() && s.negatives.numel() > 0 &&
        (s.negatives.dim() != 2 || s.negatives.size(1) != s.anchor.size(0))) {
        throw ShapeError("infonce: negative embeddings do not match anchor dimension");
    }
}

torch::Tensor all_embeddings(const ContrastSample& s) {
    if (!s.negatives.defined() || s.negatives.numel() == 0) return s.positives;
    return torch::cat({s.positives, s.negatives}, 0);
}

}  // namespace

double infonce_loss(const ContrastSample& s) {
    check_sample(s);
    auto pos = torch::mv(s.positives, s.anchor) / s.temperature;
    auto all = torch::mv(all_embeddings(s), s.anchor) / s.temperature;
    return (torch::logsumexp(all, 0) - torch::logsumexp(pos, 0)).item<double>();
}

torch::Tensor infonce_grad(const ContrastSample& s) {
    check_sample(s);
    auto emb = all_embeddings(s);
    auto w_pos = torch::softmax(torch::mv(s.positives, s.anchor) / s.temperature, 0);
    auto w_all = torch::softmax(torch::mv(emb, s.anchor) / s.temperature, 0);
    return (torch::mv(emb.t(), w_all) - torch::mv(s.positives.t(), w_pos)) / s.temperature;
}

ContrastIndices draw_contrast_indices(const torch::Tensor& labels, const ContrastConfig& cfg,
                                      std::uint64_t seed) {
    auto flat = labels.reshape({-1}).to(torch::kInt64).contiguous();
    const auto n = flat.numel();
    const auto* lab = flat.data_ptr<std::int64_t>();

    std::map<std::int64_t, std::vector<std::int64_t>> by_class;
    for (std::int64_t i = 0; i < n; ++i) by_class[lab[i]].push_back(i);

    std::vector<std::int64_t> candidates;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto count = static_cast<std::int64_t>(by_class[lab[i]].size());
        if (count >= 2 && n - count >= 1) candidates.push_back(i);
    }

    ContrastIndices out;
    if (candidates.empty() || cfg.max_anchors < 1) return out;

    Rng rng(seed);
    std::map<std::int64_t, std::vector<std::int64_t>> others;
    const auto picks = rng.sample_distinct(static_cast<std::int64_t>(candidates.size()), cfg.max_anchors);
    for (auto pick : picks) {
        const auto anchor = candidates[static_cast<std::size_t>(pick)];
        const auto cls = lab[anchor];
        const auto& same = by_class[cls];

        auto& diff = others[cls];
        if (diff.empty()) {
            for (std::int64_t i = 0; i < n; ++i) {
                if (lab[i] != cls) diff.push_back(i);
            }
        }

        // Position of the anchor inside its class list, so it can be skipped.
        const auto self = static_cast<std::int64_t>(
            std::lower_bound(same.begin(), same.end(), anchor) - same.begin());
        std::vector<std::int64_t> pos;
        for (auto j : rng.sample_distinct(static_cast<std::int64_t>(same.size()) - 1, cfg.max_positives)) {
            pos.push_back(same[static_cast<std::size_t>(j >= self ? j + 1 : j)]);
        }
        std::vector<std::int64_t> neg;
        for (auto j : rng.sample_distinct(static_cast<std::int64_t>(diff.size()), cfg.max_negatives)) {
            neg.push_back(diff[static_cast<std::size_t>(j)]);
        }
        if (pos.empty() || neg.empty()) continue;
        out.anchors.push_back(anchor);
        out.positives.push_back(std::move(pos));
        out.negatives.push_back(std::move(neg));
    }
    return out;
}

std::vector<ContrastSample> sample_contrast_sets(const torch::Tensor& prediction,
                                                 const torch::Tensor& labels,
                                                 const ContrastConfig& cfg, std::uint64_t seed) {
    if (prediction.dim() != 3 || labels.dim() != 2 || prediction.size(1) != labels.size(0) ||
        prediction.size(2) != labels.size(1)) {
        throw ShapeError("sample_contrast_sets: prediction [C, H, W] and labels [H, W] must align");
    }
    const auto idx = draw_contrast_indices(labels, cfg, seed);
    auto emb = prediction.reshape({prediction.size(0), -1}).t();
    std::vector<ContrastSample> out;
    out.reserve(idx.size());
    auto as_index = [](const std::vector<std::int64_t>& v) {
        return torch::tensor(v, torch::kInt64);
    };
    for (std::size_t a = 0; a < idx.size(); ++a) {
        out.push_back({emb[idx.anchors[a]], emb.index_select(0, as_index(idx.positives[a])),
                       emb.index_select(0, as_index(idx.negatives[a])), cfg.temperature});
    }
    return out;
}

PackedContrast pack(const ContrastIndices& idx) {
    PackedContrast out;
    const auto a = static_cast<std::int64_t>(idx.size());
    if (a == 0) return out;
    std::int64_t mp = 1, mn = 1;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        mp = std::max<std::int64_t>(mp, static_cast<std::int64_t>(idx.positives[i].size()));
        mn = std::max<std::int64_t>(mn, static_cast<std::int64_t>(idx.negatives[i].size()));
    }
    out.anchors = torch::tensor(idx.anchors, torch::kInt64);
    out.positives = torch::zeros({a, mp}, torch::kInt64);
    out.positive_mask = torch::zeros({a, mp}, torch::kBool);
    out.negatives = torch::zeros({a, mn}, torch::kInt64);
    out.negative_mask = torch::zeros({a, mn}, torch::kBool);
    auto pi = out.positives.accessor<std::int64_t, 2>();
    auto pm = out.positive_mask.accessor<bool, 2>();
    auto ni = out.negatives.accessor<std::int64_t, 2>();
    auto nm = out.negative_mask.accessor<bool, 2>();
    for (std::int64_t i = 0; i < a; ++i) {
        const auto& p = idx.positives[static_cast<std::size_t>(i)];
        const auto& q = idx.negatives[static_cast<std::size_t>(i)];
        if (p.empty()) throw ContractError("pack: anchor without positives");
        for (std::size_t j = 0; j < p.size(); ++j) {
            pi[i][static_cast<std::int64_t>(j)] = p[j];
            pm[i][static_cast<std::int64_t>(j)] = true;
        }
        for (std::size_t j = 0; j < q.size(); ++j) {
            ni[i][static_cast<std::int64_t>(j)] = q[j];
            nm[i][static_cast<std::int64_t>(j)] = true;
        }
    }
    return out;
}

namespace {

struct PackedScores {
    torch::Tensor positive;  // [A, Mp], masked entries -inf
    torch::Tensor all;       // [A, Mp + Mn]
    torch::Tensor members;   // [A, Mp + Mn, C]
    torch::Tensor pos_members;
};

PackedScores packed_scores(const torch::Tensor& embeddings, const PackedContrast& sets,
                           double temperature) {
    const auto c = embeddings.size(1);
    auto anchors = embeddings.index_select(0, sets.anchors);  // [A, C]
    auto gather = [&](const torch::Tensor& idx) {
        return embeddings.index_select(0, idx.reshape({-1})).reshape({idx.size(0), idx.size(1), c});
    };
    auto u = gather(sets.positives);
    auto v = gather(sets.negatives);
    const auto neg_inf = -std::numeric_limits<double>::infinity();
    auto su = torch::einsum("ac,amc->am", {anchors, u}).div(temperature).masked_fill(~sets.positive_mask, neg_inf);
    auto sv = torch::einsum("ac,anc->an", {anchors, v}).div(temperature).masked_fill(~sets.negative_mask, neg_inf);
    return {su, torch::cat({su, sv}, 1), torch::cat({u, v}, 1), u};
}

}  // namespace

torch::Tensor contrast_loss(const torch::Tensor& embeddings, const PackedContrast& sets,
                            double temperature) {
    if (sets.size() == 0) return torch::zeros({}, embeddings.options());
    auto s = packed_scores(embeddings, sets, temperature);
    auto per_anchor = torch::logsumexp(s.all, 1) - torch::logsumexp(s.positive, 1);
    return per_anchor.mean();
}

torch::Tensor contrast_gradient(const torch::Tensor& embeddings, const PackedContrast& sets,
                                double temperature) {
    auto out = torch::zeros_like(embeddings);
    if (sets.size() == 0) return out;
    auto s = packed_scores(embeddings, sets, temperature);
    auto w_all = torch::softmax(s.all, 1);
    auto w_pos = torch::softmax(s.positive, 1);
    auto grad = (torch::einsum("am,amc->ac", {w_all, s.members}) -
                 torch::einsum("am,amc->ac", {w_pos, s.pos_members})) /
                temperature;
    return out.index_add(0, sets.anchors, grad / static_cast<double>(sets.size()));
}

}  // namespace advent
