#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace advent {

struct PlotSeries {
    std::string name;
    std::vector<double> values;  // y per epoch, epoch = index + 1
};

/// Writes a static SVG line chart (epoch on x). Throws IoError.
void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                     const std::vector<PlotSeries>& series);

/// Re-renders plots from a finished run directory (metrics.log) or ablation
/// suite directory (arm folders with per-seed metrics.log). Returns the files
/// written.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& dir);

}  // namespace advent
