#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace popdyn::util {

// Minimal deterministic error-bar chart writer.
struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> stddev;
};

inline std::string svg_errorbar_chart(const std::string& title, const std::string& x_label,
                                      const std::string& y_label,
                                      const std::vector<SvgSeries>& series) {
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    const double width = 860, height = 540;
    const double ml = 70, mr = 210, mt = 40, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
    bool first = true, all_positive = true;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double lo = s.mean[i] - s.stddev[i];
            const double hi = s.mean[i] + s.stddev[i];
            if (!(s.mean[i] == s.mean[i])) continue;  // skip NaN
            if (s.mean[i] - s.stddev[i] <= 0.0) all_positive = false;
            if (first) {
                x_lo = x_hi = s.x[i];
                y_lo = lo;
                y_hi = hi;
                first = false;
            } else {
                x_lo = std::min(x_lo, s.x[i]);
                x_hi = std::max(x_hi, s.x[i]);
                y_lo = std::min(y_lo, lo);
                y_hi = std::max(y_hi, hi);
            }
        }
    if (first) {  // empty chart
        x_lo = 0;
        x_hi = 1;
        y_lo = 0;
        y_hi = 1;
    }
    const bool log_y = all_positive && y_lo > 0.0 && y_hi / y_lo > 30.0;
    if (log_y) {
        y_lo = std::log10(y_lo);
        y_hi = std::log10(y_hi);
    }
    if (x_hi == x_lo) x_hi = x_lo + 1.0;
    if (y_hi == y_lo) y_hi = y_lo + 1.0;
    const double x_pad = 0.06 * (x_hi - x_lo), y_pad = 0.06 * (y_hi - y_lo);
    x_lo -= x_pad;
    x_hi += x_pad;
    y_lo -= y_pad;
    y_hi += y_pad;

    auto tx = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto ty = [&](double y) {
        const double v = log_y ? std::log10(y) : y;
        return mt + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph;
    };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
    out << "<text x=\"18\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " << mt + ph / 2
        << ")\">" << y_label << (log_y ? " (log scale)" : "") << "</text>\n";

    // y ticks
    for (int i = 0; i <= 5; ++i) {
        const double v = y_lo + (y_hi - y_lo) * i / 5.0;
        const double y = mt + (1.0 - static_cast<double>(i) / 5.0) * ph;
        const double shown = log_y ? std::pow(10.0, v) : v;
        out << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
            << "\" stroke=\"black\"/>\n";
        std::ostringstream lbl;
        lbl.precision(3);
        lbl << shown;
        out << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << lbl.str() << "</text>\n";
    }

    int color_idx = 0;
    double legend_y = mt + 10;
    for (const auto& s : series) {
        const char* color = palette[color_idx % 10];
        ++color_idx;
        std::ostringstream path;
        bool started = false;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!(s.mean[i] == s.mean[i])) continue;
            const double px = tx(s.x[i]);
            const double py = ty(s.mean[i]);
            path << (started ? " L" : "M") << px << " " << py;
            started = true;
            double lo = s.mean[i] - s.stddev[i];
            double hi = s.mean[i] + s.stddev[i];
            if (log_y) lo = std::max(lo, std::pow(10.0, y_lo));
            out << "<line x1=\"" << px << "\" y1=\"" << ty(lo) << "\" x2=\"" << px << "\" y2=\""
                << ty(hi) << "\" stroke=\"" << color << "\" stroke-width=\"1.2\"/>\n";
            out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\"" << color
                << "\"/>\n";
        }
        if (started)
            out << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.5\"/>\n";
        out << "<rect x=\"" << ml + pw + 14 << "\" y=\"" << legend_y - 9
            << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << ml + pw + 32 << "\" y=\"" << legend_y + 2 << "\" font-size=\"12\">"
            << s.label << "</text>\n";
        legend_y += 18;
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace popdyn::util
