#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mlwb/data/dataset.hpp"
#include "mlwb/model/validate.hpp"
#include "mlwb/service/events.hpp"
#include "mlwb/train/trainer.hpp"

namespace mlwb {

class NotFound : public Error {
public:
    using Error::Error;
};

/// The request clashes with the session's state (training in progress, nothing to undo).
class Conflict : public Error {
public:
    using Error::Error;
};

/// Semantically invalid request; `body` carries details such as a ValidationReport.
class Unprocessable : public Error {
public:
    Unprocessable(const std::string& message, nlohmann::json body = nlohmann::json::object())
        : Error(message), body_(std::move(body)) {}

    const nlohmann::json& body() const noexcept { return body_; }

private:
    nlohmann::json body_;
};

struct WorkbenchOptions {
    /// When set, sessions (model file, mode, data set) are persisted here and reloaded on start.
    std::optional<std::filesystem::path> state_dir;
    std::chrono::milliseconds tick_interval{200};
    std::size_t event_batch_capacity = 256;
};

/// Validation state of a pending field, addressed as "layers/<index>/<param>".
struct FieldFlag {
    std::string path;
    bool valid = true;
    std::string message;

    bool operator==(const FieldFlag&) const = default;
};

nlohmann::json to_json(const FieldFlag& f);

/// Splits "layers/<index>/<param>"; ParseError otherwise.
std::pair<std::size_t, std::string> parse_field_path(std::string_view path);

class Session;

/// All sessions of one service instance. Each session owns one model, an undo
/// log, an optional data set, a command queue that serializes mutations, a
/// validation ticker and a background training context. Every method is
/// thread-safe; unknown session ids raise NotFound.
class Workbench {
public:
    explicit Workbench(WorkbenchOptions options = {});
    ~Workbench();

    Workbench(const Workbench&) = delete;
    Workbench& operator=(const Workbench&) = delete;

    /// Starter model, beginner mode, XOR data attached.
    std::string create_session();
    void delete_session(const std::string& id);
    std::vector<std::string> session_ids() const;

    /// {id, mode, revision, training, can_undo, can_redo, valid, flags, pending_fields, has_dataset}.
    nlohmann::json state(const std::string& id);
    ModelSpec spec(const std::string& id);
    /// Latest model that passed validation; during training, the most recent
    /// committed weights. nullptr when the current spec has errors.
    std::shared_ptr<const CompiledModel> committed(const std::string& id);
    /// Snapshot taken before the latest commit, for weight-delta coloring.
    std::shared_ptr<const CompiledModel> previous(const std::string& id);
    /// Model file text; architecture only when the spec has errors.
    std::string model_file(const std::string& id);

    /// Replaces the model (weights kept when the file carries them) and clears
    /// the undo log. Unprocessable with the report if the spec has errors.
    nlohmann::json put_model(const std::string& id, std::string_view model_file);
    /// EditResult as JSON plus the new revision. Unprocessable when rejected.
    nlohmann::json edit(const std::string& id, const EditOp& op);
    nlohmann::json undo(const std::string& id);
    nlohmann::json redo(const std::string& id);
    nlohmann::json set_mode(const std::string& id, OperationalMode mode);
    /// Every edit applied so far, in the order the queue applied them.
    std::vector<EditOp> applied_edits(const std::string& id);

    /// Queues a raw field value; the ticker validates it, publishes flag changes
    /// and applies it once valid.
    void set_field(const std::string& id, const std::string& path, const std::string& raw);
    /// Current flags of fields that were ever flagged invalid and not yet resolved.
    std::vector<FieldFlag> field_flags(const std::string& id);

    /// Attaches the data set and adapts the output layer to its targets
    /// (recorded as one undo group). Returns the preview and the applied edits.
    nlohmann::json import_dataset(const std::string& id, Dataset dataset);
    std::shared_ptr<const Dataset> dataset(const std::string& id);

    /// Conflict when already training; Unprocessable for invalid fields, a spec
    /// with errors, a missing data set, a bad config or mismatched shapes.
    void start_training(const std::string& id, const TrainConfig& config);
    void stop_training(const std::string& id);
    bool is_training(const std::string& id);
    /// Blocks until no training runs; false on timeout.
    bool wait_until_idle(const std::string& id, std::chrono::milliseconds timeout);
    std::optional<TrainConfig> last_train_config(const std::string& id);

    std::shared_ptr<EventSubscription> subscribe(const std::string& id);

private:
    std::shared_ptr<Session> find(const std::string& id) const;
    std::shared_ptr<Session> make_session(std::string id);
    void load_state();

    WorkbenchOptions options_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace mlwb
