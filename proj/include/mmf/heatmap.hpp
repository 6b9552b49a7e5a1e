#pragma once

// Plain SVG heatmaps of binary matrices. Every cell is one <rect class="cell">
// so the grid shape can be read back from the file. Filled cells of rows
// labelled with the first label value are drawn red, those of the second
// green; unlabelled rows use a single dark fill.

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mmf/counts.hpp"

namespace mmf {

struct HeatmapStyle {
    int cell = 12;
    int label_width = 110;
    std::string fill = "#303030";
    std::string first_label_fill = "#c0392b";
    std::string second_label_fill = "#27ae60";
    std::string empty_fill = "#ffffff";
};

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(ch);
        }
    }
    return out;
}

/// Draws M with rows in `row_order` (indices into M). `row_names` and
/// `row_labels` are indexed like M's rows; `row_labels` may be empty.
inline void write_heatmap_svg(std::ostream& out, const BinaryMatrix& M, const std::vector<int>& row_order,
                              const std::vector<std::string>& row_names, const std::vector<std::string>& row_labels,
                              const std::string& title, const HeatmapStyle& style = {}) {
    const int rows = static_cast<int>(row_order.size());
    const int cols = static_cast<int>(M.cols());
    std::map<std::string, std::string> label_fill;
    for (const auto& lab : row_labels) {
        if (label_fill.count(lab)) continue;
        if (label_fill.empty()) label_fill[lab] = style.first_label_fill;
        else if (label_fill.size() == 1) label_fill[lab] = style.second_label_fill;
        else label_fill[lab] = style.fill;
    }
    const int top = 30;
    const int width = style.label_width + cols * style.cell + 10;
    const int height = top + rows * style.cell + 10;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" data-rows=\"" << rows << "\" data-cols=\"" << cols << "\">\n";
    out << "<title>" << xml_escape(title) << "</title>\n";
    out << "<text x=\"4\" y=\"18\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(title) << "</text>\n";
    for (int k = 0; k < cols; ++k)
        out << "<text x=\"" << style.label_width + k * style.cell + style.cell / 2 << "\" y=\"" << top - 2
            << "\" font-family=\"sans-serif\" font-size=\"8\" text-anchor=\"middle\">" << k + 1 << "</text>\n";
    for (int r = 0; r < rows; ++r) {
        const int i = row_order[static_cast<std::size_t>(r)];
        const int y = top + r * style.cell;
        const std::string name = i < static_cast<int>(row_names.size()) ? row_names[static_cast<std::size_t>(i)] : "";
        out << "<text x=\"" << style.label_width - 4 << "\" y=\"" << y + style.cell - 2
            << "\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"end\">" << xml_escape(name) << "</text>\n";
        const std::string on = row_labels.empty() ? style.fill : label_fill[row_labels[static_cast<std::size_t>(i)]];
        for (int k = 0; k < cols; ++k)
            out << "<rect class=\"cell\" x=\"" << style.label_width + k * style.cell << "\" y=\"" << y << "\" width=\""
                << style.cell << "\" height=\"" << style.cell << "\" fill=\"" << (M(i, k) ? on : style.empty_fill)
                << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    }
    out << "</svg>\n";
}

}  // namespace mmf
