#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "advent/run_config.hpp"
#include "advent/trainer.hpp"

namespace advent {

enum class AblationSuite { Depth, Fusion, Gsm, Regularizer };

std::string to_string(AblationSuite s);
AblationSuite parse_ablation_suite(const std::string& s);

struct AblationArm {
    std::string name;
    std::string slug;  // directory name
    RunConfig config;
};

/// depth: Depth-1..4; fusion: CE, FI; gsm: GSM on/off; regularizer: CE, VRs,
/// URs (2), URs (5). Every other setting comes from `base`.
std::vector<AblationArm> suite_arms(AblationSuite suite, const RunConfig& base);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single seed
};

MeanStd mean_std(const std::vector<double>& values);

struct ArmSummary {
    std::string name;
    std::string slug;
    MeanStd miou, mpre, mrec, mf1;
    std::vector<double> miou_curve;  // seed-mean val mIoU per epoch
    std::vector<double> mf1_curve;
};

struct AblationReport {
    AblationSuite suite;
    std::vector<ArmSummary> arms;

    /// Markdown table, values in percent as mean±std.
    std::string table() const;
    std::string csv() const;
    const ArmSummary& arm(const std::string& name) const;
};

/// Summarizes per-seed histories (final-epoch validation metrics, falling back
/// to training metrics when no validation split exists).
ArmSummary summarize_arm(const std::string& name, const std::string& slug, const std::vector<RunResult>& runs);

/// Runs every arm over config.seeds into out_dir/<suite>/<arm>/seed-<s>, then
/// writes table.md, table.csv and the mIoU/mF1 curves as SVG.
AblationReport run_ablation(AblationSuite suite, const RunConfig& base, const std::filesystem::path& out_dir,
                            std::ostream* log = nullptr);

}  // namespace advent
