#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lab/linalg.hpp"

namespace lab::svg {

struct Line {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> lo;  // optional band, same length as x
    std::vector<double> hi;
    bool dashed = false;
};

/// Scatter layer. `value` (optional) picks a colour from a sequential ramp;
/// NaN values are drawn grey.
struct Points {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> value;
};

struct Panel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Line> lines;
    std::vector<Points> points;
    std::optional<std::pair<double, double>> band;  // shaded horizontal range
    std::optional<num::Matrix> heatmap;             // drawn instead of axes data
    std::vector<std::string> heatmap_labels;
};

/// Panels laid out row-major in a grid. Output depends only on the input.
std::string render(const std::vector<Panel>& panels, int columns = 2, int panel_width = 380, int panel_height = 290);

}  // namespace lab::svg
