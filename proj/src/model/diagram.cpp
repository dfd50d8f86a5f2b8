#include "mlwb/model/diagram.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "mlwb/model/shape_inference.hpp"

namespace mlwb {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string window(std::int64_t h, std::int64_t w) { return std::to_string(h) + "×" + std::to_string(w); }

std::string lenet_label(const LayerSpec& layer, const Shape& out) {
    switch (layer.kind()) {
        case LayerKind::dense: {
            const auto& p = layer.as<DenseParams>();
            return "Dense " + std::to_string(p.units) + " (" + std::string(to_string(p.activation.name)) + ")";
        }
        case LayerKind::conv2d: {
            const auto& p = layer.as<Conv2dParams>();
            return std::to_string(p.filters) + " @ " + window(p.kernel_size[0], p.kernel_size[1]);
        }
        case LayerKind::max_pool2d: {
            const auto& p = layer.as<MaxPool2dParams>();
            return "max-pool " + window(p.pool_size[0], p.pool_size[1]);
        }
        case LayerKind::flatten:
            return "Flatten " + std::to_string(out[0]);
        case LayerKind::reshape:
            return "Reshape " + to_string(out);
        case LayerKind::dropout:
            return "Dropout " + fmt_double(layer.as<DropoutParams>().rate);
        case LayerKind::activation:
            return "Activation " + std::string(to_string(layer.as<ActivationParams>().activation.name));
        case LayerKind::batch_norm:
            return "BatchNorm";
        case LayerKind::gaussian_noise:
            return "GaussianNoise " + fmt_double(layer.as<GaussianNoiseParams>().stddev);
    }
    return {};
}

DiagramColumn make_column(std::optional<std::size_t> layer, std::string kind, std::string label, Shape shape,
                          std::size_t units, std::size_t cap) {
    DiagramColumn c;
    c.layer = layer;
    c.kind = std::move(kind);
    c.label = std::move(label);
    c.shape = std::move(shape);
    c.units = units;
    c.nodes = std::min(units, cap);
    c.ellipsis = units > cap;
    return c;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(DiagramStyle s) { return s == DiagramStyle::fcnn ? "fcnn" : "lenet"; }

DiagramStyle parse_diagram_style(std::string_view name) {
    if (name == "fcnn") {
        return DiagramStyle::fcnn;
    }
    if (name == "lenet") {
        return DiagramStyle::lenet;
    }
    throw ConfigError("unknown diagram style '" + std::string(name) + "'");
}

Diagram diagram(const ModelSpec& spec, DiagramStyle style, std::size_t node_cap) {
    const auto shapes = infer_shapes(spec);
    const Shape in = input_shape(spec.input);
    Diagram d;
    d.style = style;
    if (style == DiagramStyle::fcnn) {
        d.columns.push_back(make_column(std::nullopt, "input", "Input " + to_string(in), in, in.back(), node_cap));
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            const auto& l = spec.layers[i];
            if (l.kind() == LayerKind::dense) {
                const auto& p = l.as<DenseParams>();
                d.columns.push_back(make_column(i, "dense", lenet_label(l, shapes[i].output), shapes[i].output,
                                                static_cast<std::size_t>(p.units), node_cap));
            } else if (l.kind() == LayerKind::conv2d) {
                d.columns.push_back(make_column(i, "conv2d", "Conv2D " + lenet_label(l, shapes[i].output),
                                                shapes[i].output, shapes[i].output.back(), node_cap));
            }
        }
        for (std::size_t c = 0; c + 1 < d.columns.size(); ++c) {
            for (std::size_t a = 0; a < d.columns[c].nodes; ++a) {
                for (std::size_t b = 0; b < d.columns[c + 1].nodes; ++b) {
                    d.edges.push_back({c, a, c + 1, b});
                }
            }
        }
        return d;
    }
    const std::string in_label = in.size() == 3 ? std::to_string(in[2]) + " @ " + std::to_string(in[0]) + "×" +
                                                      std::to_string(in[1])
                                                : "Input " + to_string(in);
    const std::size_t in_units = in.size() == 3 ? in[2] : element_count(in);
    d.columns.push_back(make_column(std::nullopt, "input", in_label, in, in_units, node_cap));
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Shape& out = shapes[i].output;
        const std::size_t units = out.size() == 3 ? out[2] : element_count(out);
        d.columns.push_back(make_column(i, std::string(to_string(spec.layers[i].kind())),
                                        lenet_label(spec.layers[i], out), out, units, node_cap));
    }
    for (std::size_t c = 0; c + 1 < d.columns.size(); ++c) {
        d.edges.push_back({c, 0, c + 1, 0});
    }
    return d;
}

json to_json(const Diagram& d) {
    json columns = json::array();
    for (const auto& c : d.columns) {
        columns.push_back(json{{"layer", c.layer ? json(*c.layer) : json(nullptr)},
                               {"kind", c.kind},
                               {"label", c.label},
                               {"shape", c.shape},
                               {"units", c.units},
                               {"nodes", c.nodes},
                               {"ellipsis", c.ellipsis}});
    }
    json edges = json::array();
    for (const auto& e : d.edges) {
        edges.push_back(json::array({e.from_column, e.from_node, e.to_column, e.to_node}));
    }
    return json{{"format_version", 1}, {"style", to_string(d.style)}, {"columns", columns}, {"edges", edges}};
}

std::string render_svg(const Diagram& d) {
    const double col_w = 140.0, node_h = 28.0, top = 50.0;
    std::size_t max_nodes = 1;
    for (const auto& c : d.columns) {
        max_nodes = std::max(max_nodes, c.nodes + (c.ellipsis ? 1 : 0));
    }
    const double width = col_w * static_cast<double>(std::max<std::size_t>(d.columns.size(), 1)) + 40.0;
    const double height = top + node_h * static_cast<double>(max_nodes) + 40.0;
    auto node_y = [&](const DiagramColumn& c, std::size_t k) {
        const double span = node_h * static_cast<double>(c.nodes);
        return top + (node_h * static_cast<double>(max_nodes) - span) / 2.0 + node_h * (static_cast<double>(k) + 0.5);
    };
    auto col_x = [&](std::size_t c) { return 20.0 + col_w * (static_cast<double>(c) + 0.5); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    if (d.style == DiagramStyle::fcnn) {
        for (const auto& e : d.edges) {
            s << "<line x1=\"" << col_x(e.from_column) << "\" y1=\"" << node_y(d.columns[e.from_column], e.from_node)
              << "\" x2=\"" << col_x(e.to_column) << "\" y2=\"" << node_y(d.columns[e.to_column], e.to_node)
              << "\" stroke=\"#999\" stroke-width=\"0.5\"/>\n";
        }
    } else {
        for (const auto& e : d.edges) {
            const double y = top + node_h * static_cast<double>(max_nodes) / 2.0;
            s << "<line x1=\"" << col_x(e.from_column) + 30 << "\" y1=\"" << y << "\" x2=\"" << col_x(e.to_column) - 30
              << "\" y2=\"" << y << "\" stroke=\"#666\"/>\n";
        }
    }
    for (std::size_t c = 0; c < d.columns.size(); ++c) {
        const auto& col = d.columns[c];
        s << "<text x=\"" << col_x(c) << "\" y=\"20\" text-anchor=\"middle\">" << xml_escape(col.label) << "</text>\n";
        for (std::size_t k = 0; k < col.nodes; ++k) {
            if (d.style == DiagramStyle::fcnn) {
                s << "<circle cx=\"" << col_x(c) << "\" cy=\"" << node_y(col, k)
                  << "\" r=\"9\" fill=\"#fff\" stroke=\"#333\"/>\n";
            } else {
                s << "<rect x=\"" << col_x(c) - 25 + 3.0 * static_cast<double>(k) << "\" y=\""
                  << node_y(col, k) - 10 << "\" width=\"44\" height=\"20\" fill=\"#eef\" stroke=\"#333\"/>\n";
            }
        }
        if (col.ellipsis) {
            s << "<text x=\"" << col_x(c) << "\" y=\"" << node_y(col, col.nodes) + 4
              << "\" text-anchor=\"middle\">…</text>\n";
        }
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace mlwb
