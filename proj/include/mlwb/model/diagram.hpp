#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mlwb/model/model_spec.hpp"

namespace mlwb {

enum class DiagramStyle { fcnn, lenet };

std::string_view to_string(DiagramStyle s);
DiagramStyle parse_diagram_style(std::string_view name);

struct DiagramColumn {
    std::optional<std::size_t> layer;  // nullopt for the input column
    std::string kind;                  // layer kind or "input"
    std::string label;
    Shape shape;                       // output shape of the column
    std::size_t units = 0;             // neurons (fcnn) or feature maps (lenet)
    std::size_t nodes = 0;             // drawn nodes, min(units, cap)
    bool ellipsis = false;             // units > cap
};

struct DiagramEdge {
    std::size_t from_column = 0;
    std::size_t from_node = 0;
    std::size_t to_column = 0;
    std::size_t to_node = 0;
};

/// Layout-free graph description. fcnn: one column for the input and for each
/// dense/conv2d layer, consecutive columns fully connected. lenet: one column per
/// layer labelled with filter counts and window sizes, chained in order.
struct Diagram {
    DiagramStyle style = DiagramStyle::fcnn;
    std::vector<DiagramColumn> columns;
    std::vector<DiagramEdge> edges;
};

/// Throws LayerShapeError if shape inference fails.
Diagram diagram(const ModelSpec& spec, DiagramStyle style, std::size_t node_cap = 16);

nlohmann::json to_json(const Diagram& d);

/// Minimal standalone SVG rendering used by the command-line tool.
std::string render_svg(const Diagram& d);

}  // namespace mlwb
