// Validation ticker latency and the HTTP/SSE service contract.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "acceptance.hpp"
#include "httplib.h"
#include "mlwb/data/tensor_literal.hpp"
#include "mlwb/model/model_file.hpp"
#include "mlwb/service/http.hpp"
#include "mlwb/service/workbench.hpp"

using namespace mlwb;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace acceptance {

namespace {

double ms_since(Clock::time_point t) { return std::chrono::duration<double, std::milli>(Clock::now() - t).count(); }

double percentile(std::vector<double> v, double q) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    return v[std::min(v.size() - 1, static_cast<std::size_t>(q * static_cast<double>(v.size())))];
}

std::optional<ServiceEvent> wait_for_flag(EventSubscription& sub, bool valid, Clock::time_point deadline) {
    while (Clock::now() < deadline) {
        auto e = sub.next(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()));
        if (e && e->type == "field_flag" && e->data["valid"] == valid) {
            return e;
        }
    }
    return std::nullopt;
}

/// One SSE event as received by a client.
struct Received {
    std::uint64_t seq = 0;
    std::string type;
    nlohmann::json data;
};

/// Minimal text/event-stream reader on a dedicated connection.
class SseReader {
public:
    SseReader(int port, std::string path) : client_("127.0.0.1", port), path_(std::move(path)) {
        client_.set_read_timeout(60, 0);
        thread_ = std::thread([this] {
            client_.Get(path_, [this](const char* data, std::size_t n) {
                buffer_.append(data, n);
                for (auto end = buffer_.find("\n\n"); end != std::string::npos; end = buffer_.find("\n\n")) {
                    parse(buffer_.substr(0, end));
                    buffer_.erase(0, end + 2);
                }
                return !stop_;
            });
        });
    }

    ~SseReader() {
        stop_ = true;
        client_.stop();
        thread_.join();
    }

    std::vector<Received> events() {
        std::lock_guard lock(mutex_);
        return events_;
    }

    bool wait_for(const std::function<bool(const Received&)>& pred, std::chrono::milliseconds timeout) {
        const auto deadline = Clock::now() + timeout;
        while (Clock::now() < deadline) {
            {
                std::lock_guard lock(mutex_);
                if (std::any_of(events_.begin(), events_.end(), pred)) {
                    return true;
                }
            }
            std::this_thread::sleep_for(10ms);
        }
        return false;
    }

private:
    void parse(const std::string& block) {
        std::istringstream lines(block);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.rfind("data: ", 0) == 0) {
                const auto j = nlohmann::json::parse(line.substr(6));
                std::lock_guard lock(mutex_);
                events_.push_back({j.at("seq").get<std::uint64_t>(), j.at("type").get<std::string>(), j.at("data")});
            }
        }
    }

    httplib::Client client_;
    std::string path_;
    std::string buffer_;
    std::atomic<bool> stop_{false};
    std::mutex mutex_;
    std::vector<Received> events_;
    std::thread thread_;
};

/// 16x16x3 image classifier, big enough that one training batch takes a measurable time.
ModelSpec image_classifier() {
    ModelSpec spec;
    spec.input = ImageInput{16, 16, 3};
    LayerSpec conv1 = default_layer(LayerKind::conv2d);
    conv1.as<Conv2dParams>().filters = 16;
    conv1.as<Conv2dParams>().padding = Padding::same;
    LayerSpec conv2 = default_layer(LayerKind::conv2d);
    conv2.as<Conv2dParams>().filters = 16;
    spec.layers = {conv1, default_layer(LayerKind::max_pool2d), conv2, default_layer(LayerKind::flatten),
                   dense_layer(4, Activation::softmax)};
    spec.loss = LossKind::categorical_crossentropy;
    assign_layer_ids(spec);
    return spec;
}

std::pair<Tensor, Tensor> image_data(std::size_t n) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<float> pixel(0.0f, 1.0f);
    Tensor x = Tensor::zeros({n, 16, 16, 3});
    for (float& v : x.data()) {
        v = pixel(rng);
    }
    Tensor y = Tensor::zeros({n, 4});
    for (std::size_t i = 0; i < n; ++i) {
        y[i * 4 + rng() % 4] = 1.0f;
    }
    return {x, y};
}

/// Checks the train events of one run: per epoch, batch_end for batches 0..B-1
/// then epoch_end; a single terminal event last; sequence numbers increasing.
std::string check_train_stream(const std::vector<Received>& events, std::size_t epochs, std::size_t batches) {
    std::vector<const Received*> train;
    for (const auto& e : events) {
        if (e.type == "train") {
            train.push_back(&e);
        }
    }
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].seq <= events[i - 1].seq) {
            return "sequence numbers not increasing";
        }
    }
    if (train.size() != epochs * (batches + 1) + 1) {
        return "expected " + std::to_string(epochs * (batches + 1) + 1) + " train events, got " +
               std::to_string(train.size());
    }
    std::size_t k = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t batch = 0; batch < batches; ++batch, ++k) {
            const auto& d = train[k]->data;
            if (d["kind"] != "batch_end" || d["epoch"] != epoch || d["batch"] != batch) {
                return "event " + std::to_string(k) + " is " + d.dump().substr(0, 80);
            }
        }
        const auto& d = train[k++]->data;
        if (d["kind"] != "epoch_end" || d["epoch"] != epoch) {
            return "missing epoch_end " + std::to_string(epoch);
        }
    }
    if (train[k]->data["kind"] != "train_end") {
        return "last train event is not train_end";
    }
    return {};
}

}  // namespace

Outcome validation_ticker() {
    constexpr int kSessions = 10, kTrials = 10;
    Workbench wb;
    std::mutex mutex;
    std::vector<double> latencies;
    std::atomic<int> missing{0};
    std::vector<std::thread> threads;
    for (int s = 0; s < kSessions; ++s) {
        threads.emplace_back([&, s] {
            const std::string id = wb.create_session();
            auto sub = wb.subscribe(id);
            std::mt19937_64 rng(static_cast<std::uint64_t>(s));
            const char* invalid[] = {"0", "-3", "abc", "2.5"};
            for (int t = 0; t < kTrials; ++t) {
                // Random phase relative to the ticker.
                std::this_thread::sleep_for(std::chrono::milliseconds(rng() % 200));
                const auto start = Clock::now();
                wb.set_field(id, "layers/0/units", invalid[t % 4]);
                if (!wait_for_flag(*sub, false, start + 2s)) {
                    ++missing;
                    continue;
                }
                const double latency = ms_since(start);
                {
                    std::lock_guard lock(mutex);
                    latencies.push_back(latency);
                }
                wb.set_field(id, "layers/0/units", t % 2 ? "8" : "6");
                if (!wait_for_flag(*sub, true, Clock::now() + 2s)) {
                    ++missing;
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    const double worst = latencies.empty() ? 0.0 : *std::max_element(latencies.begin(), latencies.end());
    std::ostringstream detail;
    detail << latencies.size() << " trials over " << kSessions << " concurrent sessions: latency p50 "
           << percentile(latencies, 0.5) << " ms, p95 " << percentile(latencies, 0.95) << " ms, max " << worst
           << " ms (limit 220); " << missing << " flags missing";
    return {latencies.size() == kSessions * kTrials && missing == 0 && worst <= 220.0, detail.str()};
}

Outcome service_contract() {
    constexpr std::size_t kRows = 256, kBatch = 32, kEpochs = 3;
    Workbench wb;
    HttpService http(wb);
    const int port = http.bind("127.0.0.1", 0);
    std::thread server([&] { http.run(); });
    std::ostringstream detail;
    std::vector<std::string> problems;

    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(60, 0);
    const auto created = cli.Post("/session");
    const std::string id = nlohmann::json::parse(created->body)["id"];
    const std::string base = "/session/" + id;
    if (cli.Put(base + "/model", save_model(image_classifier()), "application/json")->status != 200) {
        problems.push_back("PUT model failed");
    }
    const auto [x, y] = image_data(kRows);
    const nlohmann::json import{{"x", format_tensor_literal(x)}, {"y", format_tensor_literal(y)}};
    if (cli.Post(base + "/import/tensor", import.dump(), "application/json")->status != 200) {
        problems.push_back("tensor import failed");
    }

    std::vector<double> predict_ms;
    std::size_t predict_during_training = 0;
    int second_train = 0, edit_during_training = 0;
    {
        SseReader sse(port, base + "/events");
        std::this_thread::sleep_for(300ms);  // let the stream connect before training starts
        const nlohmann::json config{{"epochs", kEpochs}, {"batch_size", kBatch}, {"seed", 1}};
        const auto started = cli.Post(base + "/train", config.dump(), "application/json");
        if (!started || started->status != 202) {
            problems.push_back("train did not start");
        }
        second_train = cli.Post(base + "/train", config.dump(), "application/json")->status;
        edit_during_training =
            cli.Post(base + "/edit", R"({"kind": "set_param", "index": 4, "field": "units", "value": 5})",
                     "application/json")
                ->status;

        httplib::Client predictor("127.0.0.1", port);
        predictor.set_keep_alive(true);
        predictor.set_tcp_nodelay(true);
        std::size_t sample = 0;
        while (wb.is_training(id)) {
            const nlohmann::json body{{"sample", sample++ % kRows}};
            const auto t0 = Clock::now();
            const auto res = predictor.Post(base + "/predict", body.dump(), "application/json");
            const double ms = ms_since(t0);
            if (!res || res->status != 200) {
                problems.push_back("predict failed during training");
                break;
            }
            if (wb.is_training(id)) {
                predict_ms.push_back(ms);
                ++predict_during_training;
            }
            std::this_thread::sleep_for(20ms);
        }
        if (!sse.wait_for([](const Received& e) { return e.type == "model_changed" && e.data["reason"] == "trained"; },
                          10s)) {
            problems.push_back("no model_changed after training");
        }
        const auto events = sse.events();
        if (const std::string error = check_train_stream(events, kEpochs, kRows / kBatch); !error.empty()) {
            problems.push_back("event stream: " + error);
        }
        std::vector<double> batch_ms;
        for (const auto& e : events) {
            if (e.type == "train" && e.data["kind"] == "batch_end") {
                batch_ms.push_back(e.data["metrics"]["batch_duration_ms"].get<double>());
            }
        }
        const double batch_median = percentile(batch_ms, 0.5);
        const double predict_worst = predict_ms.empty() ? 0.0 : *std::max_element(predict_ms.begin(), predict_ms.end());
        if (predict_ms.size() < 5) {
            problems.push_back("only " + std::to_string(predict_ms.size()) + " predictions landed during training");
        }
        if (!(predict_worst < batch_median)) {
            problems.push_back("slowest predict not below the median batch duration");
        }
        detail << events.size() << " SSE events, " << kEpochs << " epochs x " << kRows / kBatch
               << " batches; second train -> " << second_train << ", edit -> " << edit_during_training << "; "
               << predict_during_training << " predictions during training: p50 " << percentile(predict_ms, 0.5)
               << " ms, max " << predict_worst << " ms vs median batch " << batch_median << " ms";
    }
    if (second_train != 409) {
        problems.push_back("concurrent train answered " + std::to_string(second_train));
    }
    if (edit_during_training != 409) {
        problems.push_back("edit during training answered " + std::to_string(edit_during_training));
    }

    http.stop();
    server.join();
    for (const auto& p : problems) {
        detail << "; " << p;
    }
    return {problems.empty(), detail.str()};
}

}  // namespace acceptance
