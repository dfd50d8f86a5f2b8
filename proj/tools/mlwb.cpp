// mlwb: command-line entry point (service, headless training, export, inference, visualization).

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mlwb/codegen/bundle.hpp"
#include "mlwb/codegen/python.hpp"
#include "mlwb/data/csv.hpp"
#include "mlwb/data/image.hpp"
#include "mlwb/data/tensor_literal.hpp"
#include "mlwb/explain/explain.hpp"
#include "mlwb/math/equations.hpp"
#include "mlwb/model/diagram.hpp"
#include "mlwb/model/model_file.hpp"
#include "mlwb/service/http.hpp"
#include "mlwb/service/views.hpp"
#include "mlwb/train/forward.hpp"

namespace fs = std::filesystem;
using namespace mlwb;

namespace {

constexpr int kExitError = 1;
constexpr int kExitShape = 2;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + p.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("cannot write " + p.string());
    }
}

/// CSV: the model's output width picks the trailing target columns unless given.
/// JSON: a workbench data set file.
Dataset load_dataset(const fs::path& path, const CompiledModel& model, std::vector<std::string> inputs,
                     std::vector<std::string> targets, char separator) {
    const std::string text = read_file(path);
    if (path.extension() == ".json") {
        return dataset_from_json(nlohmann::json::parse(text));
    }
    if (inputs.empty() || targets.empty()) {
        const auto header = parse_csv_table(text, separator).header;
        const Shape out = model.output_shape();
        const std::size_t k = out.empty() ? 1 : out.back();
        if (header.size() <= k) {
            throw ShapeError(path.string() + " has " + std::to_string(header.size()) + " columns; the model has " +
                             std::to_string(k) + " outputs and needs at least one input column");
        }
        if (targets.empty()) {
            targets.assign(header.end() - static_cast<std::ptrdiff_t>(k), header.end());
        }
        if (inputs.empty()) {
            for (const auto& h : header) {
                if (std::find(targets.begin(), targets.end(), h) == targets.end()) {
                    inputs.push_back(h);
                }
            }
        }
    }
    CsvImportConfig config;
    config.separator = separator;
    config.input_columns = std::move(inputs);
    config.target_columns = std::move(targets);
    return parse_csv(text, config);
}

std::string shape_text(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += (i ? ", " : "") + std::to_string(s[i]);
    }
    return out + "]";
}

void check_shapes(const CompiledModel& model, const Dataset& d) {
    Shape x{d.size()};
    Shape y{d.size()};
    for (auto v : model.input_shape()) {
        x.push_back(v);
    }
    for (auto v : model.output_shape()) {
        y.push_back(v);
    }
    if (d.x.shape() != x) {
        throw ShapeError("data inputs have shape " + shape_text(d.x.shape()) + ", the model expects " + shape_text(x));
    }
    if (d.y.shape() != y) {
        throw ShapeError("data targets have shape " + shape_text(d.y.shape()) + ", the model outputs " + shape_text(y));
    }
}

Tensor input_tensor(const CompiledModel& model, const std::string& literal, const std::string& image) {
    if (!image.empty()) {
        const std::string bytes = read_file(image);
        return image_for_model(model, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    }
    if (literal.empty()) {
        throw ContractError("give --input LITERAL or --image FILE");
    }
    return parse_tensor_literal(literal);
}

struct TrainArgs {
    std::string model;
    std::string data;
    std::string out;
    std::vector<std::string> inputs;
    std::vector<std::string> targets;
    std::string separator = ",";
    TrainConfig config;
    bool no_shuffle = false;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    const CompiledModel model = load_compiled(read_file(a.model));
    const Dataset data = load_dataset(a.data, model, a.inputs, a.targets, a.separator.at(0));
    check_shapes(model, data);
    TrainConfig config = a.config;
    config.shuffle = !a.no_shuffle;
    check_train_config(config, data.size());

    TrainCallbacks callbacks;
    callbacks.on_event = [&](const TrainEvent& e) {
        if (e.kind == TrainEventKind::batch_end || a.quiet) {
            return;
        }
        std::printf("%-9s epoch %zu  loss %.6f", std::string(to_string(e.kind)).c_str(), e.epoch + 1, e.metrics.loss);
        if (e.metrics.accuracy) {
            std::printf("  accuracy %.4f", *e.metrics.accuracy);
        }
        if (e.metrics.validation_loss) {
            std::printf("  val_loss %.6f", *e.metrics.validation_loss);
        }
        std::printf("\n");
    };
    const CompiledModel trained = train(model, data.x, data.y, config, callbacks);
    const fs::path out = a.out.empty() ? fs::path(a.model).replace_extension(".trained.json") : fs::path(a.out);
    write_file(out, save_model(trained));
    std::printf("final loss %.6f\nwrote %s\n", evaluate_loss(trained, data.x, data.y), out.string().c_str());
    return 0;
}

struct ExportArgs {
    std::string model;
    std::string out;
    std::string data;
    std::string zip;
    TrainConfig config;
};

int run_export(const ExportArgs& a) {
    const CompiledModel model = load_compiled(read_file(a.model));
    std::optional<Dataset> data;
    if (!a.data.empty()) {
        data = load_dataset(a.data, model, {}, {}, ',');
    }
    const std::string zip = export_bundle(model, data, a.config);
    if (!a.zip.empty()) {
        write_file(a.zip, zip);
        std::printf("wrote %s\n", a.zip.c_str());
    }
    if (!a.out.empty()) {
        for (const auto& entry : read_zip(zip)) {
            write_file(fs::path(a.out) / entry.path, entry.data);
            std::printf("wrote %s\n", (fs::path(a.out) / entry.path).string().c_str());
        }
    }
    return 0;
}

struct VisualizeArgs {
    std::string model;
    std::string kind;
    std::string out;
    std::string input;
    std::string image;
    std::size_t layer = 0;
    std::size_t unit = 0;
    std::size_t class_index = 0;
    std::int64_t steps = 100;
    double step_size = 0.1;
    std::size_t node_cap = 16;
};

int run_visualize(const VisualizeArgs& a) {
    const CompiledModel model = load_compiled(read_file(a.model));
    std::string bytes;
    std::string what;
    if (a.kind == "fcnn" || a.kind == "lenet") {
        bytes = render_svg(diagram(model.spec, parse_diagram_style(a.kind), a.node_cap));
        what = "SVG";
    } else if (a.kind == "math") {
        bytes = to_text(render_equations(model));
        what = "text";
    } else if (a.kind == "featuremap") {
        FeatureMapOptions options;
        options.steps = a.steps;
        options.step_size = a.step_size;
        const auto r = feature_map(model, a.layer, a.unit, options);
        const auto& s = r.input.shape();
        if (s.size() == 3 && (s[2] == 1 || s[2] == 3)) {
            const auto png = feature_png(r.input);
            bytes.assign(png.begin(), png.end());
            what = "PNG";
        } else {
            bytes = format_tensor_literal(r.input) + "\n";
            what = "text";
        }
        std::fprintf(stderr, "objective %.6f -> %.6f (%s)\n", r.trace.front(), r.trace.back(),
                     r.converged ? "converged" : "not converged");
    } else if (a.kind == "gradcam") {
        const Heatmap h = gradcam(model, input_tensor(model, a.input, a.image), a.class_index);
        const auto png = encode_png(colorize_heatmap(h.values));
        bytes.assign(png.begin(), png.end());
        what = "PNG";
    } else {
        throw ContractError("unknown visualization " + a.kind);
    }
    if (a.out.empty() || a.out == "-") {
        std::cout << bytes;
    } else {
        write_file(a.out, bytes);
        std::fprintf(stderr, "wrote %s (%s)\n", a.out.c_str(), what.c_str());
    }
    return 0;
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = kDefaultPort;
    std::string state_dir;
    std::string ui_dir;
};

int run_serve(const ServeArgs& a) {
    // Block termination signals in every thread; a dedicated thread waits for them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    WorkbenchOptions options;
    if (!a.state_dir.empty()) {
        options.state_dir = a.state_dir;
    }
    Workbench workbench(options);
    HttpService http(workbench, a.ui_dir.empty() ? std::nullopt : std::optional<fs::path>(a.ui_dir));
    const int port = http.bind(a.host, port_from_env(a.port));
    std::printf("listening on http://%s:%d\n", a.host.c_str(), port);
    std::fflush(stdout);

    std::jthread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        http.stop();
    });
    http.run();
    pthread_kill(waiter.native_handle(), SIGTERM);  // wakes sigwait if run() ended on its own
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural-network workbench: local service, headless training, export and inspection"};
    app.require_subcommand(1);

    std::string new_out;
    bool new_with_data = false;
    std::uint64_t new_seed = 1;
    auto* new_cmd = app.add_subcommand("new", "Write the starter model (2-4-1 XOR network)");
    new_cmd->add_option("--out", new_out, "Model file to create")->required();
    new_cmd->add_option("--seed", new_seed, "Weight initialization seed")->capture_default_str();
    new_cmd->add_flag("--with-data", new_with_data, "Also write the XOR data set next to it as <stem>.data.json");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service (MLWB_PORT overrides --port)");
    serve_cmd->add_option("--host", serve.host, "Address to bind")->capture_default_str();
    serve_cmd->add_option("--port", serve.port, "Port to listen on")->capture_default_str();
    serve_cmd->add_option("--state-dir", serve.state_dir, "Persist sessions in this directory");
    serve_cmd->add_option("--ui-dir", serve.ui_dir, "Serve the web UI build from this directory");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model file on a CSV or data set JSON file");
    train_cmd->add_option("--model", tr.model, "Model file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--data", tr.data, "CSV or data set JSON")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", tr.out, "Where to write the trained model (default: <model>.trained.json)");
    train_cmd->add_option("--epochs", tr.config.epochs)->capture_default_str();
    train_cmd->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
    train_cmd->add_option("--seed", tr.config.seed)->capture_default_str();
    train_cmd->add_option("--validation-split", tr.config.validation_split)->capture_default_str();
    train_cmd->add_flag("--no-shuffle", tr.no_shuffle);
    train_cmd->add_option("--inputs", tr.inputs, "CSV input columns (default: all but the targets)")->delimiter(',');
    train_cmd->add_option("--targets", tr.targets, "CSV target columns (default: last output-width columns)")
        ->delimiter(',');
    train_cmd->add_option("--separator", tr.separator)->capture_default_str();
    train_cmd->add_flag("--quiet", tr.quiet, "Only print the final loss");

    ExportArgs ex;
    auto* export_cmd = app.add_subcommand("export-python", "Write train.py, README.txt and model.json");
    export_cmd->add_option("--model", ex.model, "Model file")->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--out", ex.out, "Output directory");
    export_cmd->add_option("--zip", ex.zip, "Also write the bundle as a ZIP archive");
    export_cmd->add_option("--data", ex.data, "Data set to include (CSV or JSON)")->check(CLI::ExistingFile);
    export_cmd->add_option("--epochs", ex.config.epochs)->capture_default_str();
    export_cmd->add_option("--batch-size", ex.config.batch_size)->capture_default_str();
    export_cmd->add_option("--seed", ex.config.seed)->capture_default_str();
    export_cmd->add_option("--validation-split", ex.config.validation_split)->capture_default_str();

    std::string pred_model;
    std::string pred_input;
    std::string pred_image;
    auto* predict_cmd = app.add_subcommand("predict", "Run inference on a tensor literal or an image");
    predict_cmd->add_option("--model", pred_model, "Model file")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--input", pred_input, "Tensor literal, e.g. \"[[true, false]]\"");
    predict_cmd->add_option("--image", pred_image, "PNG or JPEG file")->check(CLI::ExistingFile);

    VisualizeArgs vis;
    auto* vis_cmd = app.add_subcommand("visualize", "Write a diagram, feature map, heatmap or equations");
    vis_cmd->add_option("--model", vis.model, "Model file")->required()->check(CLI::ExistingFile);
    vis_cmd->add_option("--kind", vis.kind)
        ->required()
        ->check(CLI::IsMember({"fcnn", "lenet", "featuremap", "gradcam", "math"}));
    vis_cmd->add_option("--out", vis.out, "Output file (default: stdout)");
    vis_cmd->add_option("--input", vis.input, "gradcam: tensor literal");
    vis_cmd->add_option("--image", vis.image, "gradcam: PNG or JPEG file")->check(CLI::ExistingFile);
    vis_cmd->add_option("--class", vis.class_index, "gradcam: class index")->capture_default_str();
    vis_cmd->add_option("--layer", vis.layer, "featuremap: layer index")->capture_default_str();
    vis_cmd->add_option("--unit", vis.unit, "featuremap: unit or channel")->capture_default_str();
    vis_cmd->add_option("--steps", vis.steps, "featuremap: ascent steps")->capture_default_str();
    vis_cmd->add_option("--step-size", vis.step_size, "featuremap: step size")->capture_default_str();
    vis_cmd->add_option("--node-cap", vis.node_cap, "fcnn/lenet: nodes drawn per layer")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*new_cmd) {
            write_file(new_out, save_model(compile(starter_model(), new_seed)));
            std::printf("wrote %s\n", new_out.c_str());
            if (new_with_data) {
                const fs::path data = fs::path(new_out).replace_extension(".data.json");
                write_file(data, to_json(xor_dataset()).dump());
                std::printf("wrote %s\n", data.string().c_str());
            }
            return 0;
        }
        if (*serve_cmd) {
            return run_serve(serve);
        }
        if (*train_cmd) {
            return run_train(tr);
        }
        if (*export_cmd) {
            if (ex.out.empty() && ex.zip.empty()) {
                throw ContractError("give --out DIR and/or --zip FILE");
            }
            return run_export(ex);
        }
        if (*predict_cmd) {
            const CompiledModel model = load_compiled(read_file(pred_model));
            const Tensor out = predict(model, input_tensor(model, pred_input, pred_image));
            std::printf("%s\n", format_tensor_literal(out).c_str());
            return 0;
        }
        if (*vis_cmd) {
            return run_visualize(vis);
        }
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return kExitShape;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kExitError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
    return 0;
}
