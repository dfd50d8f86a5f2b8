#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mlwb/model/adapt.hpp"
#include "mlwb/tensor/tensor.hpp"

namespace mlwb {

enum class DataSource { csv, images, literal, builtin };

std::string_view to_string(DataSource s);
DataSource parse_data_source(std::string_view name);

/// Immutable once built; x and y share the leading sample axis.
struct Dataset {
    Tensor x;
    Tensor y;
    std::vector<std::string> input_columns;
    std::vector<std::string> target_columns;
    /// Images: label of each one-hot position, sorted.
    std::vector<std::string> category_labels;
    DataSource source = DataSource::builtin;

    std::size_t size() const { return x.dim(0); }
};

/// ShapeError unless x and y have rank >= 1 and equal leading dimensions.
Dataset make_dataset(Tensor x, Tensor y, DataSource source);

/// The four XOR samples with one target column.
Dataset xor_dataset();

/// Categorical when category labels exist or every target row is one-hot with
/// at least two columns; regression otherwise.
TargetInfo target_info(const Dataset& d);

struct DatasetPreview {
    std::vector<Tensor> x_rows;
    std::vector<Tensor> y_rows;
    std::size_t total_rows = 0;
    Shape x_shape;
    Shape y_shape;
    std::vector<std::string> input_columns;
    std::vector<std::string> target_columns;
    std::vector<std::string> category_labels;
    DataSource source = DataSource::builtin;
};

/// First min(k, n) rows.
DatasetPreview preview(const Dataset& d, std::size_t k);

nlohmann::json to_json(const DatasetPreview& p);
nlohmann::json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

}  // namespace mlwb
