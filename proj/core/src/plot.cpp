#include "advent/plot.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <limits>

#include "advent/error.hpp"
#include "advent/trainer.hpp"

namespace fs = std::filesystem;

namespace advent {

namespace {

constexpr std::array<const char*, 8> kColours{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_line_plot(const fs::path& path, const std::string& title, const std::string& y_label,
                     const std::vector<PlotSeries>& series) {
    constexpr double width = 640, height = 400, left = 60, right = 150, top = 40, bottom = 50;
    const double pw = width - left - right, ph = height - top - bottom;

    std::size_t epochs = 1;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : series) {
        epochs = std::max(epochs, s.values.size());
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-6) lo -= 0.05, hi += 0.05;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    auto x_of = [&](std::size_t i) {
        return left + (epochs > 1 ? pw * static_cast<double>(i) / static_cast<double>(epochs - 1) : pw / 2);
    };
    auto y_of = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write plot " + path.string());
    char buf[256];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
        << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3f</text>\n",
                      left, y_of(v), left + pw, y_of(v), left - 6, y_of(v) + 4, v);
        out << buf;
    }
    const std::size_t step = std::max<std::size_t>(1, epochs / 5);
    for (std::size_t i = 0; i < epochs; i += step) {
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%zu</text>\n", x_of(i),
                      top + ph + 18, i + 1);
        out << buf;
    }
    out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">epoch</text>\n";
    out << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto* colour = kColours[k % kColours.size()];
        const auto& s = series[k];
        out << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << colour << "\" points=\"";
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.1f,%.1f ", x_of(i), y_of(s.values[i]));
            out << buf;
        }
        out << "\"/>\n";
        const double ly = top + 14 + 18.0 * static_cast<double>(k);
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>",
                      left + pw + 12, ly - 4, left + pw + 32, ly - 4, colour);
        out << buf << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\">" << escape(s.name) << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("error writing plot " + path.string());
}

std::vector<fs::path> render_plots(const fs::path& dir) {
    std::vector<fs::path> written;
    auto curves = [](const std::vector<EpochRecord>& h, bool val, bool f1) {
        std::vector<double> v;
        for (const auto& r : h) {
            const auto& m = val && r.val ? *r.val : r.train;
            v.push_back(f1 ? m.mf1 : m.miou);
        }
        return v;
    };

    if (fs::exists(dir / "metrics.log")) {
        const auto h = read_metrics_log(dir / "metrics.log");
        const bool has_val = !h.empty() && h.front().val.has_value();
        for (bool f1 : {false, true}) {
            std::vector<PlotSeries> s{{"train", curves(h, false, f1)}};
            if (has_val) s.push_back({"val", curves(h, true, f1)});
            const auto out = dir / (f1 ? "mf1.svg" : "miou.svg");
            write_line_plot(out, dir.filename().string(), f1 ? "mF1" : "mIoU", s);
            written.push_back(out);
        }
        return written;
    }

    // Ablation suite: one sub-directory per arm, each with seed-* runs.
    std::vector<PlotSeries> miou, mf1;
    std::vector<fs::path> arms;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory()) arms.push_back(e.path());
    }
    std::sort(arms.begin(), arms.end());
    for (const auto& arm : arms) {
        std::vector<std::vector<EpochRecord>> runs;
        for (const auto& e : fs::directory_iterator(arm)) {
            if (fs::exists(e.path() / "metrics.log")) runs.push_back(read_metrics_log(e.path() / "metrics.log"));
        }
        if (runs.empty()) continue;
        std::size_t epochs = runs.front().size();
        for (const auto& r : runs) epochs = std::min(epochs, r.size());
        PlotSeries a{arm.filename().string(), {}}, b{arm.filename().string(), {}};
        for (std::size_t i = 0; i < epochs; ++i) {
            double sa = 0.0, sb = 0.0;
            for (const auto& r : runs) {
                const auto& m = r[i].val ? *r[i].val : r[i].train;
                sa += m.miou;
                sb += m.mf1;
            }
            a.values.push_back(sa / static_cast<double>(runs.size()));
            b.values.push_back(sb / static_cast<double>(runs.size()));
        }
        miou.push_back(std::move(a));
        mf1.push_back(std::move(b));
    }
    if (miou.empty()) throw IoError(dir.string() + " holds neither metrics.log nor ablation arms");
    write_line_plot(dir / "miou.svg", dir.filename().string(), "mIoU", miou);
    write_line_plot(dir / "mf1.svg", dir.filename().string(), "mF1", mf1);
    return {dir / "miou.svg", dir / "mf1.svg"};
}

}  // namespace advent
