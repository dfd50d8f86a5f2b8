// Generated training scripts: determinism, the XOR golden file, layer order and
// (when TensorFlow is importable) an end-to-end run.

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "acceptance.hpp"
#include "mlwb/codegen/bundle.hpp"
#include "mlwb/codegen/python.hpp"
#include "mlwb/model/model_file.hpp"
#include "mlwb/train/forward.hpp"
#include "support/random_edits.hpp"

using namespace mlwb;
namespace fs = std::filesystem;

namespace acceptance {

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

TrainConfig xor_config() {
    TrainConfig c;
    c.epochs = 500;
    c.batch_size = 4;
    c.seed = 1;
    return c;
}

/// Keras class each layer is expected to become, independent of the generator's tables.
std::string expected_class(const LayerSpec& layer) {
    switch (layer.kind()) {
        case LayerKind::dense: return "Dense";
        case LayerKind::conv2d: return "Conv2D";
        case LayerKind::max_pool2d: return "MaxPooling2D";
        case LayerKind::flatten: return "Flatten";
        case LayerKind::reshape: return "Reshape";
        case LayerKind::dropout: return "Dropout";
        case LayerKind::batch_norm: return "BatchNormalization";
        case LayerKind::gaussian_noise: return "GaussianNoise";
        case LayerKind::activation: {
            const auto& a = layer.as<ActivationParams>().activation;
            return a.name == Activation::elu && a.alpha != 1.0 ? "ELU" : "Activation";
        }
    }
    return "?";
}

/// Keras classes of the `model.add(layers.X(` statements, in source order.
std::vector<std::string> added_layers(const std::string& source) {
    static const std::string marker = "model.add(layers.";
    std::vector<std::string> out;
    for (auto pos = source.find(marker); pos != std::string::npos; pos = source.find(marker, pos + 1)) {
        const auto start = pos + marker.size();
        out.push_back(source.substr(start, source.find('(', start) - start));
    }
    return out;
}

std::vector<ModelSpec> random_specs(std::mt19937_64& rng, int count) {
    std::vector<ModelSpec> out;
    ModelSpec spec = starter_model();
    while (static_cast<int>(out.size()) < count) {
        if (out.size() % 10 == 0) {
            spec = starter_model();
        }
        try {
            const auto r = apply_edit(spec, testsupport::random_edit(rng, spec), OperationalMode::beginner);
            if (!validate(r.spec, OperationalMode::expert).has_errors() && r.spec.layers.size() <= 12) {
                spec = r.spec;
                out.push_back(spec);
            }
        } catch (const EditRejected&) {
        }
    }
    return out;
}

bool tensorflow_available() {
    return std::system("python3 -c 'import tensorflow' >/dev/null 2>&1") == 0;
}

/// Runs the exported XOR bundle briefly and loads the weights it writes back.
std::string run_generated_script(const CompiledModel& model, const Dataset& data) {
    const fs::path dir = fs::temp_directory_path() / ("mlwb_acceptance_py_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainConfig config = xor_config();
    config.epochs = 20;
    for (const auto& entry : read_zip(export_bundle(model, data, config))) {
        write_file(dir / entry.path, entry.data);
    }
    const std::string quiet = " >" + (dir / "log.txt").string() + " 2>&1";
    const std::string train_cmd =
        "cd " + dir.string() + " && python3 train.py --weights model.json --save-weights trained.json" + quiet;
    if (std::system(train_cmd.c_str()) != 0) {
        return "train.py failed: " + read_file(dir / "log.txt").substr(0, 400);
    }
    const CompiledModel trained = load_compiled(read_file(dir / "trained.json"));
    const Tensor out = predict(trained, data.x);
    for (float v : out.values()) {
        if (!std::isfinite(v)) {
            return "trained weights give non-finite predictions";
        }
    }
    const std::string predict_cmd =
        "cd " + dir.string() + " && python3 train.py --weights trained.json --predict-only" + quiet;
    if (std::system(predict_cmd.c_str()) != 0) {
        return "predict-only run failed: " + read_file(dir / "log.txt").substr(0, 400);
    }
    fs::remove_all(dir);
    return {};
}

}  // namespace

Outcome codegen_determinism() {
    std::ostringstream detail;
    bool pass = true;

    const GeneratedProgram xor_program = generate_python(starter_model(), xor_config());
    const std::string golden = read_file(fs::path(MLWB_SOURCE_DIR) / "tests/golden/xor_train.py");
    const bool golden_ok = !golden.empty() && xor_program.source == golden;
    pass = pass && golden_ok;
    detail << "golden " << (golden_ok ? "matches" : "DIFFERS");

    std::mt19937_64 rng(7171);
    std::size_t nondeterministic = 0, order_errors = 0, unsupported = 0, layers = 0;
    for (const ModelSpec& spec : random_specs(rng, 60)) {
        try {
            const GeneratedProgram a = generate_python(spec, xor_config());
            const GeneratedProgram b = generate_python(spec, xor_config());
            nondeterministic += a.source == b.source ? 0 : 1;
            std::vector<std::string> expected;
            for (const auto& layer : spec.layers) {
                expected.push_back(expected_class(layer));
            }
            order_errors += added_layers(a.source) == expected ? 0 : 1;
            layers += expected.size();
        } catch (const CodegenError&) {
            ++unsupported;
        }
    }
    const CompiledModel xor_model = compile(starter_model(), 1);
    const bool bundle_stable = export_bundle(xor_model, xor_dataset(), xor_config()) ==
                               export_bundle(xor_model, xor_dataset(), xor_config());
    pass = pass && nondeterministic == 0 && order_errors == 0 && bundle_stable;
    detail << "; 60 random specs (" << layers << " layers): " << nondeterministic << " non-deterministic, "
           << order_errors << " with constructs out of order, " << unsupported << " refused (elu alpha in a fused "
           << "activation); bundle " << (bundle_stable ? "byte-identical" : "DIFFERS");

    if (tensorflow_available()) {
        const std::string error = run_generated_script(xor_model, xor_dataset());
        pass = pass && error.empty();
        detail << "; python run " << (error.empty() ? "ok (20 epochs, weights reloaded)" : error);
    } else {
        detail << "; python run skipped (tensorflow not importable)";
    }
    return {pass, detail.str()};
}

}  // namespace acceptance
