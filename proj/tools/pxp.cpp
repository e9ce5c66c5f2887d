#include "pxp/orchestrator.hpp"
#include "pxp/service.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, usage = 1, config = 2, backend = 3, data = 4 };

int exit_for(pxp::ErrorCode code) {
    switch (code) {
        case pxp::ErrorCode::validation:
        case pxp::ErrorCode::config: return config;
        case pxp::ErrorCode::transport:
        case pxp::ErrorCode::timeout:
        case pxp::ErrorCode::contract: return backend;
        case pxp::ErrorCode::parse:
        case pxp::ErrorCode::not_found:
        case pxp::ErrorCode::conflict: return data;
    }
    return backend;
}

pxp::Service* serving = nullptr;

void on_signal(int) {
    if (serving) serving->stop();
}

pxp::RunConfig load_config(const std::string& path, const std::string& output, const std::optional<std::uint64_t>& seed,
                           const std::string& mock) {
    pxp::RunConfig cfg = pxp::load_run_config(path);
    if (!output.empty()) {
        cfg.output_dir = fs::absolute(output);
        cfg.document["output_dir"] = cfg.output_dir.string();
    }
    if (seed) {
        cfg.seed = *seed;
        cfg.document["seed"] = *seed;
    }
    if (!mock.empty()) {
        if (!fs::exists(mock)) throw pxp::Error(pxp::ErrorCode::validation, "mock fixture not found: " + mock, {"mock_llm"});
        cfg.mock_llm = fs::absolute(mock);
        cfg.document["mock_llm"] = cfg.mock_llm->string();
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pxp: two-way intelligibility protocol engine"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");

    std::string config_path, output, mock, data_dir = "pxp-data", host = "127.0.0.1", transcript_path;
    std::optional<std::uint64_t> seed;
    int port = 8080;
    int min_length = 0;
    std::vector<std::string> inputs;

    auto* run = app.add_subcommand("run", "run a configured experiment (all repetitions)");
    run->add_option("-c,--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--output", output, "output directory (overrides the config)");
    run->add_option("--seed", seed, "random seed (overrides the config)");
    run->add_option("--mock-llm", mock, "answer every LLM call from this fixture file");

    auto* serve = app.add_subcommand("serve", "serve the HTTP API for live runs");
    serve->add_option("-p,--port", port, "port")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "bind address");
    serve->add_option("-d,--data-dir", data_dir, "directory holding runs");
    serve->add_option("-c,--config", config_path, "start this run on launch")->check(CLI::ExistingFile);
    serve->add_option("--mock-llm", mock, "answer every LLM call from this fixture file");

    auto* analyze = app.add_subcommand("analyze", "report on stored runs or transcript files");
    analyze->add_option("paths", inputs, "output dirs, run dirs, transcript dirs or files")->required();
    analyze->add_option("-o,--output", output, "write report.json, report.txt and curves.csv here");
    analyze->add_option("-n,--min-length", min_length, "minimum curve length");

    auto* replay = app.add_subcommand("replay", "recompute the tags of recorded sessions");
    replay->add_option("-t,--transcript", transcript_path, "transcript file")->required()->check(CLI::ExistingFile);
    replay->add_option("-c,--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);
    replay->add_option("--mock-llm", mock, "answer every LLM call from this fixture file");

    auto* validate = app.add_subcommand("validate-config", "check a run configuration file");
    validate->add_option("-c,--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        if (*run) {
            const pxp::RunConfig cfg = load_config(config_path, output, seed, mock);
            const auto result = pxp::run_repeated(cfg);
            std::cout << pxp::render_table({{cfg.name, result.report}});
            std::size_t sessions = 0;
            for (const auto& r : result.runs) sessions += r.sessions.size();
            std::cout << "\n" << result.runs.size() << " run(s), " << sessions << " session(s) in "
                      << cfg.output_dir.string() << "\n";
            for (const auto& f : result.failures) std::cerr << "run failed: " << f << "\n";
            return result.failures.empty() ? ok : backend;
        }
        if (*serve) {
            pxp::ServiceOptions options;
            options.data_dir = data_dir;
            if (!mock.empty()) {
                options.llm_override = std::shared_ptr<pxp::ChatClient>(pxp::FixtureChatClient::from_file(mock));
            }
            pxp::Service service(options);
            if (!config_path.empty()) {
                std::ifstream in(config_path);
                auto doc = nlohmann::json::parse(in);
                if (doc.contains("data") && doc["data"].is_string() && fs::path(doc["data"].get<std::string>()).is_relative()) {
                    doc["data"] = (fs::absolute(config_path).parent_path() / doc["data"].get<std::string>()).string();
                }
                std::cout << "started run " << service.create_run(doc) << "\n";
            }
            serving = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on " << host << ":" << port << std::endl;
            service.listen(host, port);
            serving = nullptr;
            return ok;
        }
        if (*analyze) {
            std::vector<fs::path> paths(inputs.begin(), inputs.end());
            const auto report = pxp::analyze_paths(paths, min_length);
            std::cout << pxp::render_table({{"analysis", report}});
            if (!output.empty()) {
                fs::create_directories(output);
                pxp::write_report(output, "analysis", report, true);
            }
            return ok;
        }
        if (*replay) {
            const pxp::RunConfig cfg = load_config(config_path, "", std::nullopt, mock);
            int diverged = 0;
            for (const auto& t : pxp::load_transcript_file(transcript_path)) {
                const auto result = pxp::replay_transcript(t, cfg);
                if (result.divergences.empty()) {
                    std::cout << t.session_id << ": " << result.messages << " messages, no divergence\n";
                    continue;
                }
                ++diverged;
                const auto& d = result.divergences.front();
                std::cout << t.session_id << ": first divergence at j=" << d.msg_number << " (recorded " << d.recorded
                          << ", computed " << d.computed << "), " << result.divergences.size() << " total\n";
            }
            return diverged == 0 ? ok : data;
        }
        if (*validate) {
            const pxp::RunConfig cfg = pxp::load_run_config(config_path);
            std::cout << "ok: " << cfg.name << " (" << cfg.repetitions << " repetition(s), n=" << cfg.session.n
                      << ", k=" << cfg.session.k << ")\n";
            return ok;
        }
    } catch (const pxp::Error& e) {
        std::cerr << "error [" << pxp::error_code_name(e.code()) << "]: " << e.what() << "\n";
        return exit_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error [validation]: " << e.what() << "\n";
        return config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return backend;
    }
    return usage;
}
