#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlwb/data/dataset.hpp"
#include "mlwb/model/compiled.hpp"
#include "mlwb/tensor/errors.hpp"
#include "mlwb/train/trainer.hpp"

namespace mlwb {

class ArchiveError : public Error {
public:
    using Error::Error;
};

struct ArchiveEntry {
    std::string path;
    std::string data;

    bool operator==(const ArchiveEntry&) const = default;
};

/// ZIP archive with stored (uncompressed) entries, sorted by path, fixed
/// timestamps. ArchiveError for duplicate or empty paths.
std::string write_zip(std::vector<ArchiveEntry> entries);

/// Reads archives produced by write_zip (stored entries only); verifies CRCs.
std::vector<ArchiveEntry> read_zip(std::string_view bytes);

/// model.json, train.py, README.txt and, when a data set is given, dataset.csv
/// for flat inputs or dataset.json otherwise.
std::string export_bundle(const CompiledModel& model, const std::optional<Dataset>& dataset,
                          const TrainConfig& config = {});

}  // namespace mlwb
