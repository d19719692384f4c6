#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <csignal>
#include <cstdlib>
#include <iostream>

#include "xrank/error.hpp"
#include "xrank/pipeline.hpp"
#include "xrank/service.hpp"

namespace {

xrank::SearchService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("xrank");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("%H:%M:%S.%e %^%l%$ %v");
    const char* env = std::getenv("XRANK_LOG");
    spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Expertise search pipeline: offline stages and the query service"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string host;
    int port = -1;

    std::vector<std::pair<CLI::App*, std::string>> commands;
    auto add = [&](const std::string& name, const std::string& help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "pipeline config (JSON)")->required();
        sub->add_option("--seed", seed, "override the master seed");
        commands.emplace_back(sub, name);
        return sub;
    };
    for (auto stage : xrank::all_stages()) add(std::string(xrank::to_string(stage)), "run one pipeline stage");
    add("all", "run every stage in order");
    auto* serve = add("serve", "serve POST /search and GET /healthz");
    serve->add_option("--host", host, "bind address (default from config)");
    serve->add_option("--port", port, "port (default from config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    setup_logging();

    try {
        const auto cfg = xrank::load_pipeline_config(config_path, seed);
        std::string name;
        for (const auto& [sub, n] : commands)
            if (sub->parsed()) name = n;
        if (name == "all") {
            xrank::run_all(cfg);
        } else if (name == "serve") {
            const auto engine = xrank::SearchEngine::load(cfg);
            xrank::SearchService service(*engine);
            const int bound = service.bind(host.empty() ? cfg.host : host, port >= 0 ? port : cfg.port);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            spdlog::info("listening on {}:{}", host.empty() ? cfg.host : host, bound);
            service.run();
            g_service = nullptr;
        } else {
            xrank::run_stage(xrank::stage_from_string(name), cfg);
        }
    } catch (const xrank::ConfigError& e) {
        spdlog::error("config error: {}", e.what());
        return 2;
    } catch (const xrank::MissingArtifact& e) {
        spdlog::error("{}", e.what());
        return 3;
    } catch (const xrank::DataError& e) {
        spdlog::error("data error: {}", e.what());
        return 4;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
