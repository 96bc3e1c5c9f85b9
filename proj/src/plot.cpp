/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include "pilot/plot.hpp"

#include "pilot/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace pilot {

namespace {

constexpr double width = 720.0;
constexpr double height = 440.0;
constexpr double left = 70.0;
constexpr double right = 160.0;
constexpr double top = 40.0;
constexpr double bottom = 50.0;

const char* const palette[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e",
                               "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};

const char* colour(std::size_t i)
{
    return palette[i % std::size(palette)];
}

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

void header(std::ostringstream& svg, const std::string& title)
{
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << escape(title) << "</text>\n";
}

void axes(std::ostringstream& svg, const std::string& x_label, const std::string& y_label)
{
    const double x0 = left, y0 = height - bottom, x1 = width - right;
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << top << "\" x2=\"" << x0 << "\" y2=\"" << y0
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
    svg << "<text transform=\"translate(16," << (top + y0) / 2
        << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
}

void legend(std::ostringstream& svg, const std::vector<std::string>& names)
{
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double y = top + 10 + 18.0 * static_cast<double>(i);
        svg << "<rect x=\"" << width - right + 12 << "\" y=\"" << y - 9
            << "\" width=\"12\" height=\"12\" fill=\"" << colour(i) << "\"/>\n";
        svg << "<text x=\"" << width - right + 30 << "\" y=\"" << y + 1 << "\">"
            << escape(names[i]) << "</text>\n";
    }
}

} // namespace

std::string LinePlot::render_svg() const
{
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = 0.0, ymax = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            const auto [x, y] = s.points[i];
            const double e = i < s.errors.size() ? s.errors[i] : 0.0;
            xmin = std::min(xmin, log_x ? std::log2(x) : x);
            xmax = std::max(xmax, log_x ? std::log2(x) : x);
            ymin = std::min(ymin, y - e);
            ymax = std::max(ymax, y + e);
        }
    }
    if (!std::isfinite(xmin)) {
        xmin = 0.0;
        xmax = 1.0;
        ymax = 1.0;
    }
    if (xmax <= xmin)
        xmax = xmin + 1.0;
    if (ymax <= ymin)
        ymax = ymin + 1.0;
    ymax *= 1.05;

    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + ((log_x ? std::log2(x) : x) - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return height - bottom - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream svg;
    header(svg, title);
    axes(svg, x_label, y_label);
    for (int i = 0; i <= 4; ++i) {
        const double y = ymin + (ymax - ymin) * i / 4.0;
        const double x = xmin + (xmax - xmin) * i / 4.0;
        svg << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">"
            << num(y) << "</text>\n";
        svg << "<text x=\"" << left + (x - xmin) / (xmax - xmin) * pw << "\" y=\""
            << height - bottom + 16 << "\" text-anchor=\"middle\">"
            << num(log_x ? std::exp2(x) : x) << "</text>\n";
    }

    std::vector<std::string> names;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        names.push_back(s.name);
        if (s.scatter) {
            for (const auto& [x, y] : s.points)
                svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"1.5\" fill=\""
                    << colour(k) << "\"/>\n";
        } else if (!s.points.empty()) {
            svg << "<polyline fill=\"none\" stroke=\"" << colour(k) << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.points.size(); ++i) {
                if (s.step && i > 0)
                    svg << px(s.points[i].first) << ',' << py(s.points[i - 1].second) << ' ';
                svg << px(s.points[i].first) << ',' << py(s.points[i].second) << ' ';
            }
            svg << "\"/>\n";
        }
        for (std::size_t i = 0; i < s.errors.size() && i < s.points.size(); ++i) {
            const auto [x, y] = s.points[i];
            svg << "<line x1=\"" << px(x) << "\" y1=\"" << py(y - s.errors[i]) << "\" x2=\"" << px(x)
                << "\" y2=\"" << py(y + s.errors[i]) << "\" stroke=\"" << colour(k) << "\"/>\n";
        }
    }
    legend(svg, names);
    svg << "</svg>\n";
    return svg.str();
}

std::string StackedBarPlot::render_svg() const
{
    double ymax = 0.0;
    for (const auto& b : bars) {
        double sum = 0.0;
        for (double p : b.parts)
            sum += p;
        ymax = std::max(ymax, sum);
    }
    if (ymax <= 0.0)
        ymax = 1.0;

    const double pw = width - left - right, ph = height - top - bottom;
    const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
    std::ostringstream svg;
    header(svg, title);
    axes(svg, "", y_label);
    for (int i = 0; i <= 4; ++i) {
        const double y = ymax * i / 4.0;
        svg << "<text x=\"" << left - 6 << "\" y=\"" << height - bottom - y / ymax * ph + 4
            << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
    }
    for (std::size_t b = 0; b < bars.size(); ++b) {
        const double x = left + slot * static_cast<double>(b) + slot * 0.15;
        double base = 0.0;
        for (std::size_t p = 0; p < bars[b].parts.size(); ++p) {
            const double h = bars[b].parts[p] / ymax * ph;
            svg << "<rect x=\"" << x << "\" y=\"" << height - bottom - base - h << "\" width=\""
                << slot * 0.7 << "\" height=\"" << h << "\" fill=\"" << colour(p) << "\"/>\n";
            base += h;
        }
        svg << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << height - bottom + 16
            << "\" text-anchor=\"middle\">" << escape(bars[b].label) << "</text>\n";
    }
    legend(svg, part_names);
    svg << "</svg>\n";
    return svg.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << content;
    if (!out)
        throw Error("cannot write " + path.string());
}

} // namespace pilot
