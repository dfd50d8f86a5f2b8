#include "mlwb/service/http.hpp"

#include <atomic>
#include <cstdlib>

#include "httplib.h"
#include "mlwb/codegen/bundle.hpp"
#include "mlwb/codegen/python.hpp"
#include "mlwb/data/csv.hpp"
#include "mlwb/data/image.hpp"
#include "mlwb/data/tensor_literal.hpp"
#include "mlwb/model/diagram.hpp"
#include "mlwb/model/model_file.hpp"
#include "mlwb/service/views.hpp"

namespace mlwb {

int port_from_env(int fallback) {
    const char* v = std::getenv("MLWB_PORT");
    if (!v || !*v) {
        return fallback;
    }
    char* end = nullptr;
    const long p = std::strtol(v, &end, 10);
    return (*end == '\0' && p > 0 && p < 65536) ? static_cast<int>(p) : fallback;
}

namespace {

constexpr const char* kJson = "application/json";

nlohmann::json error_body(const std::string& message) { return {{"format_version", 1}, {"error", message}}; }

void send(httplib::Response& res, int status, nlohmann::json body) {
    if (body.is_object() && !body.contains("format_version")) {
        body["format_version"] = 1;
    }
    res.status = status;
    res.set_content(body.dump(), kJson);
}

nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) {
        return nlohmann::json::object();
    }
    try {
        return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
    }
}

/// Runs a handler and maps exceptions to statuses.
template <typename F>
void guarded(httplib::Response& res, F&& handler) {
    try {
        handler();
    } catch (const NotFound& e) {
        send(res, 404, error_body(e.what()));
    } catch (const Conflict& e) {
        send(res, 409, error_body(e.what()));
    } catch (const Unprocessable& e) {
        auto body = error_body(e.what());
        body["details"] = e.body();
        send(res, 422, body);
    } catch (const EditRejected& e) {
        auto body = error_body(e.what());
        body["details"] = to_json(e.report());
        send(res, 422, body);
    } catch (const ParseError& e) {
        auto body = error_body(e.what());
        body["offset"] = e.offset();
        body["path"] = e.path();
        send(res, 400, body);
    } catch (const nlohmann::json::exception& e) {
        send(res, 400, error_body(e.what()));
    } catch (const Error& e) {
        // Shape, config, contract, image and codegen errors: well-formed but unusable input.
        send(res, 422, error_body(e.what()));
    } catch (const std::exception& e) {
        send(res, 500, error_body(e.what()));
    }
}

}  // namespace

struct HttpService::Impl {
    Workbench& wb;
    httplib::Server server;
    std::atomic<bool> stopping{false};

    explicit Impl(Workbench& w) : wb(w) {}

    std::shared_ptr<const CompiledModel> model_of(const std::string& id) {
        auto m = wb.committed(id);
        if (!m) {
            throw Unprocessable("the model has validation errors", {{"report", to_json(validate(wb.spec(id), OperationalMode::expert))}});
        }
        return m;
    }

    Tensor input_of(const std::string& id, const httplib::Request& req, const CompiledModel& model,
                    nlohmann::json* request_out) {
        if (req.is_multipart_form_data()) {
            if (!req.has_file("image")) {
                throw ParseError("multipart request needs an \"image\" part", 0, "image");
            }
            const auto file = req.get_file_value("image");
            if (req.has_file("request")) {
                *request_out = nlohmann::json::parse(req.get_file_value("request").content);
            }
            return image_for_model(model, std::vector<std::uint8_t>(file.content.begin(), file.content.end()));
        }
        *request_out = parse_body(req);
        const auto data = wb.dataset(id);
        return request_input(*request_out, data.get());
    }

    void routes() {
        using httplib::Request;
        using httplib::Response;
        const std::string sid = R"(/session/([0-9a-f]+))";

        server.Post("/session", [this](const Request&, Response& res) {
            guarded(res, [&] {
                const std::string id = wb.create_session();
                send(res, 201, wb.state(id));
            });
        });
        server.Get("/session", [this](const Request&, Response& res) {
            guarded(res, [&] { send(res, 200, {{"format_version", 1}, {"sessions", wb.session_ids()}}); });
        });
        server.Get(sid, [this](const Request& req, Response& res) {
            guarded(res, [&] { send(res, 200, wb.state(req.matches[1])); });
        });
        server.Delete(sid, [this](const Request& req, Response& res) {
            guarded(res, [&] {
                wb.delete_session(req.matches[1]);
                send(res, 200, {{"format_version", 1}, {"deleted", std::string(req.matches[1])}});
            });
        });

        server.Get(sid + "/model", [this](const Request& req, Response& res) {
            guarded(res, [&] { res.set_content(wb.model_file(req.matches[1]), kJson); });
        });
        server.Put(sid + "/model", [this](const Request& req, Response& res) {
            guarded(res, [&] { send(res, 200, wb.put_model(req.matches[1], req.body)); });
        });
        server.Post(sid + "/edit", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const EditOp op = edit_from_json(parse_body(req));
                send(res, 200, wb.edit(req.matches[1], op));
            });
        });
        server.Post(sid + "/undo", [this](const Request& req, Response& res) {
            guarded(res, [&] { send(res, 200, wb.undo(req.matches[1])); });
        });
        server.Post(sid + "/redo", [this](const Request& req, Response& res) {
            guarded(res, [&] { send(res, 200, wb.redo(req.matches[1])); });
        });
        server.Post(sid + "/mode", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                send(res, 200, wb.set_mode(req.matches[1], parse_mode(body.at("mode").get<std::string>())));
            });
        });
        server.Post(sid + "/field", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                const auto& value = body.at("value");
                wb.set_field(req.matches[1], body.at("path").get<std::string>(),
                             value.is_string() ? value.get<std::string>() : value.dump());
                send(res, 202, {{"format_version", 1}, {"queued", true}});
            });
        });
        server.Get(sid + "/flags", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                nlohmann::json flags = nlohmann::json::array();
                for (const auto& f : wb.field_flags(req.matches[1])) {
                    flags.push_back(to_json(f));
                }
                send(res, 200, {{"format_version", 1}, {"flags", flags}});
            });
        });

        server.Post(sid + "/import/csv", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                CsvImportConfig config;
                const auto sep = body.value("separator", std::string(","));
                if (sep.size() != 1) {
                    throw ParseError("separator must be one character", 0, "separator");
                }
                config.separator = sep[0];
                config.input_columns = body.value("input_columns", std::vector<std::string>{});
                config.target_columns = body.value("target_columns", std::vector<std::string>{});
                config.divisors = body.value("divisors", std::map<std::string, double>{});
                Dataset d = parse_csv(body.at("text").get<std::string>(), config);
                send(res, 200, wb.import_dataset(req.matches[1], std::move(d)));
            });
        });
        server.Post(sid + "/import/images", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                if (!req.is_multipart_form_data()) {
                    throw ParseError("images must be sent as multipart form data (part name = label)", 0);
                }
                std::vector<ImageFile> files;
                for (const auto& [label, part] : req.files) {
                    files.push_back({label, part.filename, std::vector<std::uint8_t>(part.content.begin(), part.content.end())});
                }
                const Shape in = wb.spec(req.matches[1]).input.index() == 0
                                     ? input_shape(wb.spec(req.matches[1]).input)
                                     : Shape{28, 28, 3};
                const std::size_t h = req.has_param("height") ? std::stoul(req.get_param_value("height")) : in[0];
                const std::size_t w = req.has_param("width") ? std::stoul(req.get_param_value("width")) : in[1];
                send(res, 200, wb.import_dataset(req.matches[1], import_images(files, h, w)));
            });
        });
        server.Post(sid + "/import/tensor", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                Dataset d = make_dataset(parse_tensor_literal(body.at("x").get<std::string>()),
                                         parse_tensor_literal(body.at("y").get<std::string>()), DataSource::literal);
                send(res, 200, wb.import_dataset(req.matches[1], std::move(d)));
            });
        });
        server.Get(sid + "/dataset/preview", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto d = wb.dataset(req.matches[1]);
                if (!d) {
                    throw Unprocessable("no data set attached");
                }
                const std::size_t k = req.has_param("k") ? std::stoul(req.get_param_value("k")) : 10;
                auto body = to_json(preview(*d, k));
                body["format_version"] = 1;
                send(res, 200, body);
            });
        });

        server.Post(sid + "/train", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                wb.start_training(req.matches[1], train_config_from_json(parse_body(req)));
                send(res, 202, {{"format_version", 1}, {"training", true}});
            });
        });
        server.Post(sid + "/train/stop", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                wb.stop_training(req.matches[1]);
                send(res, 202, {{"format_version", 1}, {"stopping", true}});
            });
        });
        server.Get(sid + "/events", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                auto sub = wb.subscribe(req.matches[1]);
                res.set_header("Cache-Control", "no-cache");
                res.set_chunked_content_provider(
                    "text/event-stream", [this, sub, idle = 0](std::size_t, httplib::DataSink& sink) mutable {
                        if (stopping) {
                            return false;
                        }
                        if (auto e = sub->next(std::chrono::milliseconds(250))) {
                            idle = 0;
                            const std::string text = to_sse(*e);
                            return sink.write(text.data(), text.size());
                        }
                        if (sub->closed()) {
                            sink.done();
                            return true;
                        }
                        if (++idle % 40 == 0) {
                            static constexpr char keep_alive[] = ": keep-alive\n\n";
                            return sink.write(keep_alive, sizeof keep_alive - 1);
                        }
                        return true;
                    });
            });
        });

        server.Post(sid + "/predict", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto model = model_of(req.matches[1]);
                nlohmann::json request;
                const Tensor input = input_of(req.matches[1], req, *model, &request);
                send(res, 200, predict_view(*model, input));
            });
        });
        server.Get(sid + R"(/visualize/(fcnn|lenet))", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const std::size_t cap = req.has_param("cap") ? std::stoul(req.get_param_value("cap")) : 16;
                const Diagram d = diagram(wb.spec(req.matches[1]), parse_diagram_style(std::string(req.matches[2])), cap);
                if (req.get_param_value("format") == "svg") {
                    res.set_content(render_svg(d), "image/svg+xml");
                } else {
                    auto body = to_json(d);
                    body["format_version"] = 1;
                    send(res, 200, body);
                }
            });
        });
        server.Get(sid + "/visualize/mathmode", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto model = model_of(req.matches[1]);
                const auto prev = wb.previous(req.matches[1]);
                send(res, 200, mathmode_view(*model, prev.get()));
            });
        });
        server.Post(sid + "/visualize/featuremap", [this](const Request& req, Response& res) {
            guarded(res, [&] { send(res, 200, featuremap_view(*model_of(req.matches[1]), parse_body(req))); });
        });
        server.Post(sid + "/visualize/gradcam", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto model = model_of(req.matches[1]);
                nlohmann::json request;
                const Tensor input = input_of(req.matches[1], req, *model, &request);
                send(res, 200, gradcam_view(*model, input, request));
            });
        });
        server.Post(sid + "/visualize/layerio", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto model = model_of(req.matches[1]);
                nlohmann::json request;
                const Tensor input = input_of(req.matches[1], req, *model, &request);
                send(res, 200, layerio_view(*model, input));
            });
        });

        server.Get(sid + "/export/model", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                res.set_header("Content-Disposition", "attachment; filename=\"model.json\"");
                res.set_content(wb.model_file(req.matches[1]), kJson);
            });
        });
        server.Get(sid + "/export/python", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const auto program =
                    generate_python(wb.spec(req.matches[1]), wb.last_train_config(req.matches[1]).value_or(TrainConfig{}));
                nlohmann::json manifest = nlohmann::json::array();
                for (const auto& m : program.manifest) {
                    manifest.push_back({{"layer", m.layer}, {"construct", m.construct}});
                }
                send(res, 200,
                     {{"format_version", 1},
                      {"source", program.source},
                      {"instructions", program.instructions},
                      {"manifest", manifest}});
            });
        });
        server.Get(sid + "/export/bundle", [this](const Request& req, Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                const auto model = model_of(id);
                const auto data = wb.dataset(id);
                const std::string zip = export_bundle(*model, data ? std::optional<Dataset>(*data) : std::nullopt,
                                                      wb.last_train_config(id).value_or(TrainConfig{}));
                res.set_header("Content-Disposition", "attachment; filename=\"model_bundle.zip\"");
                res.set_content(zip, "application/zip");
            });
        });
    }
};

HttpService::HttpService(Workbench& workbench, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(workbench)) {
    // Event streams hold a worker each; keep plenty for ordinary requests.
    impl_->server.new_task_queue = [] { return new httplib::ThreadPool(32); };
    // Small JSON responses; without this, Nagle plus delayed ACKs adds ~40 ms per request.
    impl_->server.set_tcp_nodelay(true);
    impl_->routes();
    if (static_dir && !impl_->server.set_mount_point("/", static_dir->string())) {
        throw Error("cannot serve static files from " + static_dir->string());
    }
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    }
    return bound;
}

void HttpService::run() { impl_->server.listen_after_bind(); }

void HttpService::stop() {
    impl_->stopping = true;
    impl_->server.stop();
}

}  // namespace mlwb
