#include "advent/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "advent/error.hpp"
#include "advent/plot.hpp"

namespace fs = std::filesystem;

namespace advent {

std::string to_string(AblationSuite s) {
    switch (s) {
        case AblationSuite::Depth: return "depth";
        case AblationSuite::Fusion: return "fusion";
        case AblationSuite::Gsm: return "gsm";
        case AblationSuite::Regularizer: return "regularizer";
    }
    return "?";
}

AblationSuite parse_ablation_suite(const std::string& s) {
    if (s == "depth") return AblationSuite::Depth;
    if (s == "fusion") return AblationSuite::Fusion;
    if (s == "gsm") return AblationSuite::Gsm;
    if (s == "regularizer") return AblationSuite::Regularizer;
    throw ConfigError("unknown ablation suite '" + s + "' (expected depth, fusion, gsm or regularizer)");
}

std::vector<AblationArm> suite_arms(AblationSuite suite, const RunConfig& base) {
    std::vector<AblationArm> arms;
    switch (suite) {
        case AblationSuite::Depth:
            for (std::int64_t d = 1; d <= 4; ++d) {
                auto c = base;
                c.depth = d;
                arms.push_back({"Depth-" + std::to_string(d), "depth-" + std::to_string(d), c});
            }
            break;
        case AblationSuite::Fusion:
            for (auto p : {FusionPolicy::CE, FusionPolicy::FI}) {
                auto c = base;
                c.policy = p;
                arms.push_back({to_string(p), to_string(p) == "CE" ? "ce" : "fi", c});
            }
            break;
        case AblationSuite::Gsm:
            for (bool on : {true, false}) {
                auto c = base;
                c.gsm = on;
                arms.push_back({on ? "GSM on" : "GSM off", on ? "gsm-on" : "gsm-off", c});
            }
            break;
        case AblationSuite::Regularizer: {
            auto ce = base;
            ce.loss.mode = LossMode::CrossEntropy;
            auto vrs = base;
            vrs.loss.mode = LossMode::Vanilla;
            auto urs2 = base;
            urs2.loss.mode = LossMode::Unfolded;
            urs2.loss.layers = 2;
            auto urs5 = base;
            urs5.loss.mode = LossMode::Unfolded;
            urs5.loss.layers = 5;
            arms.push_back({"CE", "ce", ce});
            arms.push_back({"VRs", "vrs", vrs});
            arms.push_back({"URs (2)", "urs-2", urs2});
            arms.push_back({"URs (5)", "urs-5", urs5});
            break;
        }
    }
    return arms;
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd r;
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

ArmSummary summarize_arm(const std::string& name, const std::string& slug, const std::vector<RunResult>& runs) {
    if (runs.empty()) throw ContractError("arm '" + name + "' has no runs");
    auto pick = [](const EpochRecord& r) { return r.val ? *r.val : r.train; };
    std::vector<double> miou, mpre, mrec, mf1;
    std::size_t epochs = runs.front().history.size();
    for (const auto& run : runs) {
        if (run.history.empty()) throw ContractError("arm '" + name + "' has an empty run");
        const auto m = pick(run.history.back());
        miou.push_back(m.miou);
        mpre.push_back(m.mpre);
        mrec.push_back(m.mrec);
        mf1.push_back(m.mf1);
        epochs = std::min(epochs, run.history.size());
    }
    ArmSummary s{name, slug, mean_std(miou), mean_std(mpre), mean_std(mrec), mean_std(mf1), {}, {}};
    for (std::size_t e = 0; e < epochs; ++e) {
        double a = 0.0, b = 0.0;
        for (const auto& run : runs) {
            const auto m = pick(run.history[e]);
            a += m.miou;
            b += m.mf1;
        }
        s.miou_curve.push_back(a / static_cast<double>(runs.size()));
        s.mf1_curve.push_back(b / static_cast<double>(runs.size()));
    }
    return s;
}

namespace {

std::string pct(const MeanStd& m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * m.mean, 100.0 * m.std);
    return buf;
}

std::string label_for(AblationSuite s) {
    switch (s) {
        case AblationSuite::Depth: return "Depth";
        case AblationSuite::Fusion: return "Policy";
        case AblationSuite::Gsm: return "GSM";
        case AblationSuite::Regularizer: return "Loss";
    }
    return "Arm";
}

}  // namespace

std::string AblationReport::table() const {
    std::string out = "| " + label_for(suite) + " | mIoU | mPre | mRec | mF1 |\n|---|---|---|---|---|\n";
    for (const auto& a : arms) {
        out += "| " + a.name + " | " + pct(a.miou) + " | " + pct(a.mpre) + " | " + pct(a.mrec) + " | " + pct(a.mf1) +
               " |\n";
    }
    return out;
}

std::string AblationReport::csv() const {
    std::string out = "arm,mIoU_mean,mIoU_std,mPre_mean,mPre_std,mRec_mean,mRec_std,mF1_mean,mF1_std\n";
    for (const auto& a : arms) {
        char buf[512];
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", a.name.c_str(),
                      a.miou.mean, a.miou.std, a.mpre.mean, a.mpre.std, a.mrec.mean, a.mrec.std, a.mf1.mean,
                      a.mf1.std);
        out += buf;
    }
    return out;
}

const ArmSummary& AblationReport::arm(const std::string& name) const {
    for (const auto& a : arms) {
        if (a.name == name) return a;
    }
    throw ContractError("no arm named '" + name + "'");
}

AblationReport run_ablation(AblationSuite suite, const RunConfig& base, const fs::path& out_dir, std::ostream* log) {
    base.validate();
    const auto suite_dir = out_dir / to_string(suite);
    std::error_code ec;
    fs::create_directories(suite_dir, ec);
    if (ec) throw IoError("cannot create " + suite_dir.string() + ": " + ec.message());
    kv::write_file(suite_dir / "base_config.kv", base.to_record(), "ablation base configuration");

    // Windows depend only on depth, so arms sharing a depth reuse them.
    std::map<std::int64_t, Dataset> cache;
    AblationReport report{suite, {}};
    for (const auto& arm : suite_arms(suite, base)) {
        auto it = cache.find(arm.config.depth);
        if (it == cache.end()) it = cache.emplace(arm.config.depth, load_dataset(arm.config)).first;
        std::vector<RunResult> runs;
        for (auto seed : arm.config.seeds) {
            if (log) *log << "== " << to_string(suite) << " / " << arm.name << " / seed " << seed << "\n";
            runs.push_back(run_training(arm.config, seed, suite_dir / arm.slug / ("seed-" + std::to_string(seed)),
                                        &it->second, log));
        }
        report.arms.push_back(summarize_arm(arm.name, arm.slug, runs));
    }

    {
        std::ofstream md(suite_dir / "table.md");
        std::ofstream csv(suite_dir / "table.csv");
        if (!md || !csv) throw IoError("cannot write tables in " + suite_dir.string());
        md << report.table();
        csv << report.csv();
    }
    std::vector<PlotSeries> miou, mf1;
    for (const auto& a : report.arms) {
        miou.push_back({a.name, a.miou_curve});
        mf1.push_back({a.name, a.mf1_curve});
    }
    write_line_plot(suite_dir / "miou.svg", to_string(suite) + " ablation", "mIoU", miou);
    write_line_plot(suite_dir / "mf1.svg", to_string(suite) + " ablation", "mF1", mf1);
    return report;
}

}  // namespace advent
