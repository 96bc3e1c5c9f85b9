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

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace pilot {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
    /// Draw as a step function instead of straight segments.
    bool step = false;
    /// Dots only, no line.
    bool scatter = false;
    /// Optional symmetric error bars, one per point.
    std::vector<double> errors;
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    bool log_x = false;

    std::string render_svg() const;
};

struct StackedBar {
    std::string label;
    std::vector<double> parts;
};

struct StackedBarPlot {
    std::string title;
    std::string y_label;
    std::vector<std::string> part_names;
    std::vector<StackedBar> bars;

    std::string render_svg() const;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);

} // namespace pilot
