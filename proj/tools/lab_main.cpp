#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "lab/config.hpp"
#include "lab/error.hpp"
#include "lab/report.hpp"
#include "lab/toy_model.hpp"
#include "lab/wire.hpp"

namespace {

int cmd_validate(const std::string& path) {
    const lab::ConfigCheck check = lab::validate_config(path);
    if (!check.ok()) {
        for (const auto& e : check.errors) std::cerr << "error: " << e << "\n";
        return 2;
    }
    std::cout << check.config->dump(2) << "\n";
    return 0;
}

int cmd_run(const std::string& path) {
    const lab::ConfigCheck check = lab::validate_config(path);
    if (!check.ok()) {
        for (const auto& e : check.errors) std::cerr << "error: " << e << "\n";
        return 2;
    }
    const lab::RunOutcome out = lab::run_experiment(*check.config);
    std::cout << "wrote " << out.manifest.at("artifacts").size() << " artifacts to " << out.output_dir.string() << "\n";
    std::cout << "config hash " << out.manifest.at("config_hash").get<std::string>() << "\n";
    if (out.partial) {
        std::cerr << "warning: results are partial\n";
        for (const auto& n : out.manifest.at("notes")) std::cerr << "  " << n.get<std::string>() << "\n";
    }
    return 0;
}

int cmd_serve_toy(const std::string& host, int port, std::uint64_t seed, const lab::ToyConfig& config) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    auto model = lab::build_toy_model(seed, config);
    lab::WireServer server(*model);
    const int bound = server.bind(host, port);
    std::cout << "listening on http://" << host << ":" << bound << std::endl;

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        server.stop();
    });
    server.serve();
    waiter.join();
    return 0;
}

int cmd_conformance(const std::string& url, double tolerance) {
    lab::HttpRunner runner(url);
    bool ok = true;
    for (const auto& c : lab::run_conformance(runner, tolerance)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        ok = ok && c.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual-stream analysis lab"};
    app.set_version_flag("--version", std::string(lab::software_version()));
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

    auto* validate = app.add_subcommand("validate", "Validate a config and print it with defaults filled");
    validate->add_option("config", config_path, "Config file")->required();

    std::string host = "127.0.0.1";
    int port = 8080;
    std::uint64_t seed = 1;
    lab::ToyConfig toy;
    auto* serve = app.add_subcommand("serve-toy", "Serve the toy transformer over the wire protocol");
    serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "Interface to bind");
    serve->add_option("--seed", seed, "Weight seed");
    serve->add_option("--layers", toy.layers, "Blocks");
    serve->add_option("--hidden", toy.hidden, "Residual width");
    serve->add_option("--heads", toy.heads, "Attention heads");

    std::string url;
    double tolerance = 1e-3;
    auto* conform = app.add_subcommand("conformance", "Run the protocol suite against a backend URL");
    conform->add_option("url", url, "Backend base URL, e.g. http://127.0.0.1:8080")->required();
    conform->add_option("--tolerance", tolerance, "Logit agreement tolerance");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(config_path);
        if (*validate) return cmd_validate(config_path);
        if (*serve) return cmd_serve_toy(host, port, seed, toy);
        if (*conform) return cmd_conformance(url, tolerance);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
