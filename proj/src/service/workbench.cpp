#include "mlwb/service/workbench.hpp"

#include <atomic>
#include <charconv>
#include <condition_variable>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "mlwb/model/adapt.hpp"
#include "mlwb/model/model_file.hpp"
#include "mlwb/service/command_queue.hpp"
#include "mlwb/train/forward.hpp"

namespace mlwb {

nlohmann::json to_json(const FieldFlag& f) {
    return {{"path", f.path}, {"valid", f.valid}, {"message", f.message}};
}

std::pair<std::size_t, std::string> parse_field_path(std::string_view path) {
    constexpr std::string_view prefix = "layers/";
    const auto bad = [&] { return ParseError("field path must look like layers/<index>/<param>", 0, std::string(path)); };
    if (path.substr(0, prefix.size()) != prefix) {
        throw bad();
    }
    const std::string_view rest = path.substr(prefix.size());
    const auto slash = rest.find('/');
    if (slash == std::string_view::npos || slash == 0 || slash + 1 == rest.size()) {
        throw bad();
    }
    std::size_t index = 0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + slash, index);
    if (ec != std::errc{} || ptr != rest.data() + slash) {
        throw bad();
    }
    return {index, std::string(rest.substr(slash + 1))};
}

/// State below the "queue thread only" line is touched exclusively by commands
/// running on `queue`; the rest is synchronized on its own.
class Session {
public:
    Session(std::string id, const WorkbenchOptions& options)
        : id(std::move(id)), options(options), events(options.event_batch_capacity) {}

    const std::string id;
    const WorkbenchOptions options;
    EventHub events;
    std::atomic<bool> training{false};

    // ---- queue thread only ----
    ModelSpec spec;
    OperationalMode mode = OperationalMode::beginner;
    UndoHistory history;
    std::vector<EditOp> applied;
    /// Last compiled model; lags `spec` while the spec has errors.
    std::shared_ptr<const CompiledModel> compiled;
    bool spec_valid = false;
    std::shared_ptr<const Dataset> dataset;
    std::map<std::string, std::string> pending;
    std::map<std::string, FieldFlag> flags;
    std::uint64_t revision = 0;
    std::optional<TrainConfig> last_config;
    std::optional<TrainEvent> terminal_event;
    std::string train_error;

    CommandQueue queue;

    // ---- snapshot, read from any thread ----
    std::shared_ptr<const CompiledModel> snapshot() const {
        std::lock_guard lock(snapshot_mutex_);
        return snapshot_;
    }
    std::shared_ptr<const CompiledModel> previous_snapshot() const {
        std::lock_guard lock(snapshot_mutex_);
        return previous_;
    }
    void commit(std::shared_ptr<const CompiledModel> m) {
        std::lock_guard lock(snapshot_mutex_);
        previous_ = std::move(snapshot_);
        snapshot_ = std::move(m);
    }
    /// Replaces both snapshots (new architecture, so no delta history).
    void reset_snapshot(std::shared_ptr<const CompiledModel> m) {
        std::lock_guard lock(snapshot_mutex_);
        previous_ = m;
        snapshot_ = std::move(m);
    }

    bool wait_idle(std::chrono::milliseconds timeout) {
        std::unique_lock lock(idle_mutex_);
        return idle_cv_.wait_for(lock, timeout, [&] { return !training.load(); });
    }
    void notify_idle() {
        { std::lock_guard lock(idle_mutex_); }
        idle_cv_.notify_all();
    }

    void start_ticker() {
        ticker_ = std::jthread([this](std::stop_token st) { tick_loop(st); });
    }

    std::jthread trainer;

    void shutdown() {
        ticker_.request_stop();
        if (ticker_.joinable()) {
            ticker_.join();
        }
        trainer.request_stop();
        if (trainer.joinable()) {
            trainer.join();
        }
        queue.stop();
        events.close();
    }

    // ---- helpers run on the queue thread ----

    void require_idle(std::string_view what) const {
        if (training) {
            throw Conflict(std::string(what) + " is not allowed while training runs");
        }
    }

    /// Adopts `next`, recompiling with weight retention when it is valid.
    std::vector<std::size_t> install_spec(ModelSpec next, std::string_view reason) {
        spec = std::move(next);
        spec_valid = !validate(spec, OperationalMode::expert).has_errors();
        std::vector<std::size_t> reinitialized;
        if (spec_valid) {
            if (compiled) {
                auto r = recompile(*compiled, spec);
                reinitialized = r.reinitialized;
                compiled = std::make_shared<const CompiledModel>(std::move(r.model));
            } else {
                compiled = std::make_shared<const CompiledModel>(compile(spec, fresh_seed()));
                for (std::size_t i = 0; i < spec.layers.size(); ++i) {
                    reinitialized.push_back(i);
                }
            }
            reset_snapshot(compiled);
        } else {
            reset_snapshot(nullptr);
        }
        model_changed(reason, reinitialized);
        return reinitialized;
    }

    void model_changed(std::string_view reason, const std::vector<std::size_t>& reinitialized = {}) {
        ++revision;
        events.publish("model_changed",
                       {{"revision", revision}, {"reason", reason}, {"valid", spec_valid}, {"reinitialized", reinitialized}});
        persist();
    }

    std::uint64_t fresh_seed() const { return std::hash<std::string>{}(id) ^ (revision * 0x9e3779b97f4a7c15ULL); }

    nlohmann::json edit_result_json(const EditResult& r, const std::vector<std::size_t>& reinitialized) const {
        nlohmann::json applied_ops = nlohmann::json::array();
        for (const auto& op : r.applied) {
            applied_ops.push_back(to_json(op));
        }
        return {{"format_version", 1},
                {"revision", revision},
                {"spec", to_json(spec)},
                {"applied", applied_ops},
                {"report", to_json(r.report)},
                {"reinitialized", reinitialized}};
    }

    nlohmann::json apply_edit_op(const EditOp& op) {
        require_idle("editing");
        EditResult r;
        try {
            r = apply_edit(spec, op, mode);
        } catch (const EditRejected& e) {
            throw Unprocessable(e.what(), to_json(e.report()));
        } catch (const ConfigError& e) {
            throw Unprocessable(e.what());
        } catch (const ContractError& e) {
            throw Unprocessable(e.what());
        }
        applied.push_back(op);
        history.record(r.applied);
        const auto reinit = install_spec(r.spec, "edit");
        return edit_result_json(r, reinit);
    }

    /// Flag for one pending value against the current spec.
    FieldFlag evaluate_field(const std::string& path, const std::string& raw) const {
        FieldFlag flag{path, true, {}};
        const auto [index, field] = parse_field_path(path);
        nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
        if (value.is_discarded()) {
            value = raw;  // bare words such as relu
        }
        ModelSpec candidate = spec;
        try {
            apply_payload(candidate, SetParam{index, field, value});
        } catch (const Error& e) {
            flag.valid = false;
            flag.message = e.what();
            return flag;
        }
        for (const auto& f : validate(candidate, OperationalMode::expert).findings) {
            if (f.severity == Severity::error && f.layer == index && f.field == field) {
                flag.valid = false;
                flag.message += (flag.message.empty() ? "" : "; ") + f.message;
            }
        }
        return flag;
    }

    void tick() {
        for (auto it = pending.begin(); it != pending.end();) {
            const std::string path = it->first;
            FieldFlag flag = evaluate_field(path, it->second);
            if (flag.valid && !training) {
                const auto [index, field] = parse_field_path(path);
                nlohmann::json value = nlohmann::json::parse(it->second, nullptr, false);
                if (value.is_discarded()) {
                    value = it->second;
                }
                try {
                    apply_edit_op(EditOp{SetParam{index, field, value}, std::nullopt});
                } catch (const Error& e) {
                    flag.valid = false;
                    flag.message = e.what();
                }
            }
            const auto known = flags.find(path);
            const bool was_valid = known == flags.end() || known->second.valid;
            if (!flag.valid) {
                if (was_valid || known->second.message != flag.message) {
                    events.publish("field_flag", to_json(flag));
                }
                flags[path] = flag;
                ++it;
                continue;
            }
            if (!was_valid) {
                events.publish("field_flag", to_json(flag));
                flags.erase(known);
            }
            if (training) {
                ++it;  // valid but waits for training to finish
            } else {
                it = pending.erase(it);
            }
        }
    }

    bool has_invalid_fields() const {
        for (const auto& [path, flag] : flags) {
            if (!flag.valid) {
                return true;
            }
        }
        return false;
    }

    void persist() const {
        if (!options.state_dir) {
            return;
        }
        namespace fs = std::filesystem;
        fs::create_directories(*options.state_dir);
        const std::string model_text = spec_valid && compiled ? save_model(*compiled) : save_model(spec);
        const nlohmann::json doc{{"format_version", 1},
                                 {"id", id},
                                 {"mode", to_string(mode)},
                                 {"model", nlohmann::json::parse(model_text)}};
        write_atomically(*options.state_dir / ("session-" + id + ".json"), doc.dump(1));
        const auto data_path = *options.state_dir / ("session-" + id + ".dataset.json");
        if (dataset) {
            write_atomically(data_path, to_json(*dataset).dump());
        } else {
            fs::remove(data_path);
        }
    }

private:
    static void write_atomically(const std::filesystem::path& path, const std::string& text) {
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << text;
            if (!out) {
                throw Error("cannot write " + tmp);
            }
        }
        std::filesystem::rename(tmp, path);
    }

    void tick_loop(std::stop_token st) {
        std::mutex m;
        std::condition_variable_any cv;
        auto next = std::chrono::steady_clock::now() + options.tick_interval;
        while (!st.stop_requested()) {
            {
                std::unique_lock lock(m);
                cv.wait_until(lock, st, next, [] { return false; });
            }
            if (st.stop_requested()) {
                return;
            }
            queue.post([this] { tick(); });
            next += options.tick_interval;
            const auto now = std::chrono::steady_clock::now();
            if (next <= now) {
                next = now + options.tick_interval;
            }
        }
    }

    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const CompiledModel> snapshot_;
    std::shared_ptr<const CompiledModel> previous_;
    std::mutex idle_mutex_;
    std::condition_variable idle_cv_;
    std::jthread ticker_;
};

namespace {

std::string random_id() {
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

/// Shapes the data set must have to train `model`; ShapeError otherwise.
void check_training_shapes(const CompiledModel& model, const Dataset& d) {
    Shape expected_x{d.size()};
    for (auto v : model.input_shape()) {
        expected_x.push_back(v);
    }
    Shape expected_y{d.size()};
    for (auto v : model.output_shape()) {
        expected_y.push_back(v);
    }
    const auto fmt = [](const Shape& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i) {
            out += (i ? ", " : "") + std::to_string(s[i]);
        }
        return out + "]";
    };
    if (d.x.shape() != expected_x) {
        throw ShapeError("data inputs have shape " + fmt(d.x.shape()) + " but the model expects " + fmt(expected_x));
    }
    if (d.y.shape() != expected_y) {
        throw ShapeError("data targets have shape " + fmt(d.y.shape()) + " but the model outputs " + fmt(expected_y));
    }
}

}  // namespace

Workbench::Workbench(WorkbenchOptions options) : options_(std::move(options)) {
    if (options_.state_dir) {
        load_state();
    }
}

Workbench::~Workbench() {
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(mutex_);
        sessions.swap(sessions_);
    }
    for (auto& [id, s] : sessions) {
        s->shutdown();
    }
}

std::shared_ptr<Session> Workbench::make_session(std::string id) {
    auto s = std::make_shared<Session>(std::move(id), options_);
    s->start_ticker();
    return s;
}

void Workbench::load_state() {
    namespace fs = std::filesystem;
    if (!fs::exists(*options_.state_dir)) {
        return;
    }
    for (const auto& entry : fs::directory_iterator(*options_.state_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("session-", 0) != 0 || name.find(".dataset.") != std::string::npos ||
            entry.path().extension() != ".json") {
            continue;
        }
        std::ifstream in(entry.path(), std::ios::binary);
        std::stringstream text;
        text << in.rdbuf();
        const auto doc = nlohmann::json::parse(text.str());
        auto s = make_session(doc.at("id").get<std::string>());
        const auto loaded = load_model(doc.at("model").dump());
        std::shared_ptr<const Dataset> data;
        const auto data_path = *options_.state_dir / ("session-" + s->id + ".dataset.json");
        if (fs::exists(data_path)) {
            std::ifstream din(data_path, std::ios::binary);
            std::stringstream dtext;
            dtext << din.rdbuf();
            data = std::make_shared<const Dataset>(dataset_from_json(nlohmann::json::parse(dtext.str())));
        }
        s->queue.call([&, s] {
            s->mode = parse_mode(doc.at("mode").get<std::string>());
            s->spec = loaded.spec;
            s->dataset = data;
            s->spec_valid = !validate(s->spec, OperationalMode::expert).has_errors();
            if (s->spec_valid) {
                s->compiled = std::make_shared<const CompiledModel>(
                    loaded.weights.empty() ? compile(s->spec, s->fresh_seed())
                                           : compile_with_weights(s->spec, loaded.weights));
                s->reset_snapshot(s->compiled);
            }
        });
        std::lock_guard lock(mutex_);
        sessions_.emplace(s->id, s);
    }
}

std::shared_ptr<Session> Workbench::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw NotFound("unknown session " + id);
    }
    return it->second;
}

std::string Workbench::create_session() {
    auto s = make_session(random_id());
    s->queue.call([s] {
        s->dataset = std::make_shared<const Dataset>(xor_dataset());
        s->install_spec(starter_model(), "created");
    });
    std::lock_guard lock(mutex_);
    sessions_.emplace(s->id, s);
    return s->id;
}

void Workbench::delete_session(const std::string& id) {
    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(mutex_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) {
            throw NotFound("unknown session " + id);
        }
        s = it->second;
        sessions_.erase(it);
    }
    s->shutdown();
    if (options_.state_dir) {
        std::filesystem::remove(*options_.state_dir / ("session-" + id + ".json"));
        std::filesystem::remove(*options_.state_dir / ("session-" + id + ".dataset.json"));
    }
}

std::vector<std::string> Workbench::session_ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) {
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

nlohmann::json Workbench::state(const std::string& id) {
    auto s = find(id);
    return s->queue.call([s] {
        nlohmann::json flags = nlohmann::json::array();
        for (const auto& [path, f] : s->flags) {
            flags.push_back(to_json(f));
        }
        return nlohmann::json{{"format_version", 1},
                              {"id", s->id},
                              {"mode", to_string(s->mode)},
                              {"revision", s->revision},
                              {"training", s->training.load()},
                              {"can_undo", s->history.can_undo()},
                              {"can_redo", s->history.can_redo()},
                              {"valid", s->spec_valid},
                              {"flags", flags},
                              {"pending_fields", s->pending.size()},
                              {"has_dataset", s->dataset != nullptr}};
    });
}

ModelSpec Workbench::spec(const std::string& id) {
    auto s = find(id);
    return s->queue.call([s] { return s->spec; });
}

std::shared_ptr<const CompiledModel> Workbench::committed(const std::string& id) { return find(id)->snapshot(); }

std::shared_ptr<const CompiledModel> Workbench::previous(const std::string& id) {
    return find(id)->previous_snapshot();
}

std::string Workbench::model_file(const std::string& id) {
    auto s = find(id);
    const ModelSpec spec = s->queue.call([s] { return s->spec; });
    const auto snap = s->snapshot();
    return snap && snap->spec == spec ? save_model(*snap) : save_model(spec);
}

nlohmann::json Workbench::put_model(const std::string& id, std::string_view text) {
    auto s = find(id);
    const LoadedModel loaded = load_model(text);
    const auto report = validate(loaded.spec, OperationalMode::expert);
    if (report.has_errors()) {
        throw Unprocessable("model has validation errors", to_json(report));
    }
    CompiledModel model =
        loaded.weights.empty() ? compile(loaded.spec, 0) : compile_with_weights(loaded.spec, loaded.weights);
    return s->queue.call([s, m = std::move(model)]() mutable {
        s->require_idle("replacing the model");
        s->spec = m.spec;
        s->spec_valid = true;
        s->compiled = std::make_shared<const CompiledModel>(std::move(m));
        s->reset_snapshot(s->compiled);
        s->history.clear();
        s->pending.clear();
        s->flags.clear();
        s->model_changed("loaded");
        return nlohmann::json{{"format_version", 1}, {"revision", s->revision}, {"spec", to_json(s->spec)}};
    });
}

nlohmann::json Workbench::edit(const std::string& id, const EditOp& op) {
    auto s = find(id);
    return s->queue.call([s, op] { return s->apply_edit_op(op); });
}

nlohmann::json Workbench::undo(const std::string& id) {
    auto s = find(id);
    return s->queue.call([s] {
        s->require_idle("undo");
        auto prev = s->history.undo(s->spec);
        if (!prev) {
            throw Conflict("nothing to undo");
        }
        const auto reinit = s->install_spec(std::move(*prev), "undo");
        return nlohmann::json{{"format_version", 1},
                              {"revision", s->revision},
                              {"spec", to_json(s->spec)},
                              {"reinitialized", reinit}};
    });
}

nlohmann::json Workbench::redo(const std::string& id) {
    auto s = find(id);
    return s->queue.call([s] {
        s->require_idle("redo");
        auto next = s->history.redo(s->spec);
        if (!next) {
            throw Conflict("nothing to redo");
        }
        const auto reinit = s->install_spec(std::move(*next), "redo");
        return nlohmann::json{{"format_version", 1},
                              {"revision", s->revision},
                              {"spec", to_json(s->spec)},
                              {"reinitialized", reinit}};
    });
}

nlohmann::json Workbench::set_mode(const std::string& id, OperationalMode mode) {
    auto s = find(id);
    return s->queue.call([s, mode] {
        if (s->mode != mode) {
            s->mode = mode;
            s->events.publish("mode_changed", {{"mode", to_string(mode)}});
            s->persist();
        }
        const auto report = validate(s->spec, mode);
        return nlohmann::json{{"format_version", 1}, {"mode", to_string(mode)}, {"report", to_json(report)}};
    });
}

std::vector<EditOp> Workbench::applied_edits(const std::string& id) {
    auto s = find(id);
    return s->queue.call([s] { return s->applied; });
}

void Workbench::set_field(const std::string& id, const std::string& path, const std::string& raw) {
    parse_field_path(path);
    auto s = find(id);
    s->queue.call([s, path, raw] { s->pending[path] = raw; });
}

std::vector<FieldFlag> Workbench::field_flags(const std::string& id) {
    auto s = find(id);
    return s->queue.call([s] {
        std::vector<FieldFlag> out;
        for (const auto& [path, f] : s->flags) {
            out.push_back(f);
        }
        return out;
    });
}

nlohmann::json Workbench::import_dataset(const std::string& id, Dataset dataset) {
    auto s = find(id);
    auto data = std::make_shared<const Dataset>(std::move(dataset));
    return s->queue.call([s, data] {
        s->require_idle("importing data");
        EditResult adapted;
        try {
            adapted = adapt_output_layer(s->spec, target_info(*data), s->mode);
        } catch (const EditRejected& e) {
            throw Unprocessable(e.what(), to_json(e.report()));
        }
        s->dataset = data;
        s->events.publish("dataset_changed", {{"rows", data->size()}, {"source", to_string(data->source)}});
        std::vector<std::size_t> reinit;
        if (!adapted.applied.empty()) {
            s->history.record(adapted.applied);
            for (const auto& op : adapted.applied) {
                s->applied.push_back(op);
            }
            reinit = s->install_spec(adapted.spec, "adapted to data");
        } else {
            s->persist();
        }
        nlohmann::json result = s->edit_result_json(adapted, reinit);
        result["preview"] = to_json(preview(*data, 5));
        return result;
    });
}

std::shared_ptr<const Dataset> Workbench::dataset(const std::string& id) {
    auto s = find(id);
    return s->queue.call([s] { return s->dataset; });
}

void Workbench::start_training(const std::string& id, const TrainConfig& config) {
    auto s = find(id);
    s->queue.call([s, config] {
        if (s->training) {
            throw Conflict("training is already running");
        }
        if (s->has_invalid_fields()) {
            nlohmann::json flags = nlohmann::json::array();
            for (const auto& [path, f] : s->flags) {
                flags.push_back(to_json(f));
            }
            throw Unprocessable("training is disabled while fields are invalid", {{"flags", flags}});
        }
        const auto report = validate(s->spec, OperationalMode::expert);
        if (report.has_errors() || !s->compiled) {
            throw Unprocessable("model has validation errors", to_json(report));
        }
        if (!s->dataset) {
            throw Unprocessable("no data set attached");
        }
        try {
            check_train_config(config, s->dataset->size());
            check_training_shapes(*s->compiled, *s->dataset);
        } catch (const Error& e) {
            throw Unprocessable(e.what());
        }
        s->last_config = config;
        s->training = true;
        s->terminal_event.reset();
        s->train_error.clear();
        if (s->trainer.joinable()) {
            s->trainer.join();
        }
        s->trainer = std::jthread([s, model = *s->compiled, data = s->dataset, config](std::stop_token st) {
            std::optional<TrainEvent> terminal;
            TrainCallbacks callbacks;
            callbacks.on_event = [&](const TrainEvent& e) {
                if (e.kind == TrainEventKind::train_end || e.kind == TrainEventKind::aborted) {
                    terminal = e;  // published once the trained model is installed
                } else {
                    s->events.publish("train", to_json(e));
                }
            };
            callbacks.on_commit = [&](const CompiledModel& m, std::size_t, std::size_t) {
                s->commit(std::make_shared<const CompiledModel>(m));
            };
            std::shared_ptr<const CompiledModel> result;
            std::string error;
            try {
                result = std::make_shared<const CompiledModel>(train(model, data->x, data->y, config, callbacks, st));
            } catch (const std::exception& e) {
                error = e.what();
            }
            s->queue.post([s, result, terminal, error] {
                if (result) {
                    s->compiled = result;
                    s->commit(result);
                }
                s->training = false;
                s->notify_idle();
                if (terminal) {
                    s->events.publish("train", to_json(*terminal));
                } else {
                    s->events.publish("train", {{"kind", "failed"}, {"message", error}});
                }
                s->model_changed("trained");
            });
        });
    });
}

void Workbench::stop_training(const std::string& id) {
    auto s = find(id);
    s->queue.call([s] {
        if (!s->training) {
            throw Conflict("no training is running");
        }
        s->trainer.request_stop();
    });
}

bool Workbench::is_training(const std::string& id) { return find(id)->training; }

bool Workbench::wait_until_idle(const std::string& id, std::chrono::milliseconds timeout) {
    return find(id)->wait_idle(timeout);
}

std::optional<TrainConfig> Workbench::last_train_config(const std::string& id) {
    auto s = find(id);
    return s->queue.call([s] { return s->last_config; });
}

std::shared_ptr<EventSubscription> Workbench::subscribe(const std::string& id) { return find(id)->events.subscribe(); }

}  // namespace mlwb
