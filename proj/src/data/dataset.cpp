#include "mlwb/data/dataset.hpp"

#include <algorithm>

#include "mlwb/model/model_file.hpp"
#include "mlwb/train/metrics.hpp"

namespace mlwb {

namespace {

Tensor row_of(const Tensor& t, std::size_t r) {
    const std::size_t stride = t.size() / t.dim(0);
    Shape s(t.shape().begin() + 1, t.shape().end());
    if (s.empty()) {
        s = {1};
    }
    const auto src = t.data().subspan(r * stride, stride);
    return Tensor(std::move(s), std::vector<float>(src.begin(), src.end()));
}

std::vector<std::string> strings(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) {
        return {};
    }
    try {
        return j.at(key).get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(std::string(key) + " must be a list of strings", 0, key);
    }
}

}  // namespace

std::string_view to_string(DataSource s) {
    switch (s) {
        case DataSource::csv:
            return "csv";
        case DataSource::images:
            return "images";
        case DataSource::literal:
            return "literal";
        case DataSource::builtin:
            return "builtin";
    }
    return "?";
}

DataSource parse_data_source(std::string_view name) {
    for (DataSource s : {DataSource::csv, DataSource::images, DataSource::literal, DataSource::builtin}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError("unknown data source '" + std::string(name) + "'");
}

Dataset make_dataset(Tensor x, Tensor y, DataSource source) {
    if (x.rank() == 0 || y.rank() == 0) {
        throw ShapeError("data set tensors need a leading sample axis");
    }
    if (x.dim(0) != y.dim(0)) {
        throw ShapeError("inputs have " + std::to_string(x.dim(0)) + " samples but targets have " +
                         std::to_string(y.dim(0)));
    }
    Dataset d;
    d.x = std::move(x);
    d.y = std::move(y);
    d.source = source;
    return d;
}

Dataset xor_dataset() {
    Dataset d = make_dataset(Tensor({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1}), Tensor({4, 1}, {0, 1, 1, 0}), DataSource::builtin);
    d.input_columns = {"x1", "x2"};
    d.target_columns = {"y"};
    return d;
}

TargetInfo target_info(const Dataset& d) {
    TargetInfo t;
    const std::size_t width = d.y.size() / d.y.dim(0);
    t.count = width;
    if (!d.category_labels.empty() || (width >= 2 && is_one_hot(d.y))) {
        t.kind = TargetInfo::Kind::categorical;
        return t;
    }
    t.kind = TargetInfo::Kind::regression;
    t.unit_range = std::all_of(d.y.values().begin(), d.y.values().end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
    return t;
}

DatasetPreview preview(const Dataset& d, std::size_t k) {
    DatasetPreview p;
    p.total_rows = d.size();
    p.x_shape = d.x.shape();
    p.y_shape = d.y.shape();
    p.input_columns = d.input_columns;
    p.target_columns = d.target_columns;
    p.category_labels = d.category_labels;
    p.source = d.source;
    for (std::size_t r = 0; r < std::min(k, d.size()); ++r) {
        p.x_rows.push_back(row_of(d.x, r));
        p.y_rows.push_back(row_of(d.y, r));
    }
    return p;
}

nlohmann::json to_json(const DatasetPreview& p) {
    nlohmann::json xs = nlohmann::json::array();
    nlohmann::json ys = nlohmann::json::array();
    for (std::size_t i = 0; i < p.x_rows.size(); ++i) {
        xs.push_back(tensor_to_json(p.x_rows[i]));
        ys.push_back(tensor_to_json(p.y_rows[i]));
    }
    return {{"total_rows", p.total_rows},
            {"x_shape", p.x_shape},
            {"y_shape", p.y_shape},
            {"input_columns", p.input_columns},
            {"target_columns", p.target_columns},
            {"category_labels", p.category_labels},
            {"source", to_string(p.source)},
            {"x_rows", xs},
            {"y_rows", ys}};
}

nlohmann::json to_json(const Dataset& d) {
    return {{"format_version", 1},
            {"source", to_string(d.source)},
            {"input_columns", d.input_columns},
            {"target_columns", d.target_columns},
            {"category_labels", d.category_labels},
            {"x", tensor_to_json(d.x)},
            {"y", tensor_to_json(d.y)}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ParseError("data set must be an object", 0, "");
    }
    for (const auto& [key, value] : j.items()) {
        static const char* known[] = {"format_version", "source", "input_columns", "target_columns",
                                      "category_labels", "x", "y"};
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
            std::end(known)) {
            throw ParseError("unknown data set field", 0, key);
        }
    }
    if (!j.contains("x") || !j.contains("y")) {
        throw ParseError("data set needs x and y", 0, j.contains("x") ? "y" : "x");
    }
    DataSource source = DataSource::builtin;
    if (j.contains("source")) {
        if (!j.at("source").is_string()) {
            throw ParseError("source must be a string", 0, "source");
        }
        try {
            source = parse_data_source(j.at("source").get<std::string>());
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), 0, "source");
        }
    }
    Dataset d = make_dataset(tensor_from_json(j.at("x"), "x"), tensor_from_json(j.at("y"), "y"), source);
    d.input_columns = strings(j, "input_columns");
    d.target_columns = strings(j, "target_columns");
    d.category_labels = strings(j, "category_labels");
    return d;
}

}  // namespace mlwb
