// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <exception>
#include <functional>
#include <vector>

#include "acceptance.hpp"

namespace {

struct Criterion {
    const char* name;
    double budget_seconds;
    std::function<acceptance::Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {"gradient-correctness", 60, acceptance::gradient_correctness},
        {"oracle-equivalence", 30, acceptance::oracle_equivalence},
        {"xor-convergence", 10, acceptance::xor_convergence},
        {"weight-retention", 0, acceptance::weight_retention},
        {"undo-redo", 0, acceptance::undo_redo},
        {"validation-ticker", 0, acceptance::validation_ticker},
        {"gradcam-oracle", 0, acceptance::gradcam_oracle},
        {"feature-map", 0, acceptance::feature_map_optimum},
        {"codegen-determinism-golden", 0, acceptance::codegen_determinism},
        {"round-trips", 0, acceptance::round_trips},
        {"service-contract", 0, acceptance::service_contract},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        if (argc > 1 && std::strcmp(argv[1], c.name) != 0) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        acceptance::Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_seconds > 0 && seconds >= c.budget_seconds) {
            outcome.pass = false;
            outcome.detail += "; over the " + std::to_string(static_cast<int>(c.budget_seconds)) + " s budget";
        }
        failed += outcome.pass ? 0 : 1;
        std::printf("%s %-28s %7.2fs  %s\n", outcome.pass ? "PASS" : "FAIL", c.name, seconds, outcome.detail.c_str());
        std::fflush(stdout);
    }
    return failed;
}
