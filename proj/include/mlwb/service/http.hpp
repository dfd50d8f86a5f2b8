#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "mlwb/service/workbench.hpp"

namespace mlwb {

constexpr int kDefaultPort = 7007;

/// MLWB_PORT when set to a valid port number, else `fallback`.
int port_from_env(int fallback);

/// HTTP/JSON front end of a Workbench. Error statuses: 400 malformed request,
/// 404 unknown session, 409 state conflict, 422 semantically invalid request.
class HttpService {
public:
    /// `static_dir`, when given, is served at "/" (the web UI build).
    explicit HttpService(Workbench& workbench, std::optional<std::filesystem::path> static_dir = std::nullopt);
    ~HttpService();

    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Port 0 picks a free port. Returns the bound port; throws Error on failure.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    /// Ends event streams and stops the listener. Safe from any thread.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mlwb
