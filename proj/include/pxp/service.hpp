#pragma once

// HTTP surface: run lifecycle, transcripts, reports and the live-human turn
// queue.
//
//   POST /runs                     config document -> {"run_id": ...}
//   GET  /runs/{id}                status summary
//   GET  /runs/{id}/report         aggregated report (partial while running)
//   GET  /runs/{id}/sessions       per-session states
//   GET  /sessions/{id}/transcript ordered messages
//   GET  /pending?author=          open human turns
//   POST /sessions/{id}/turns      {"j", "tag", "prediction", "explanation", "author"}
//   GET  /content/{ref}            instance content (ref is a session id)
//
// Errors: {"error": {"code": ..., "message": ..., "fields": [...]}} with
// 422 validation, 404 not_found, 409 conflict, 408 timeout.

#include "pxp/error.hpp"
#include "pxp/orchestrator.hpp"
#include "pxp/turn_queue.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace pxp {

struct ServiceOptions {
    std::filesystem::path data_dir = "pxp-data";
    /// Replaces every LLM client of runs started through this service.
    std::shared_ptr<ChatClient> llm_override;
};

/// HTTP status for an error category.
int http_status_for(ErrorCode code) noexcept;

class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Operations behind the endpoints; each throws pxp::Error.
    std::string create_run(const nlohmann::json& document);
    nlohmann::ordered_json get_run(const std::string& run_id) const;
    nlohmann::ordered_json get_report(const std::string& run_id) const;
    nlohmann::ordered_json list_sessions(const std::string& run_id) const;
    nlohmann::ordered_json get_transcript(const std::string& session_id) const;
    nlohmann::ordered_json list_pending(const std::string& author) const;
    nlohmann::ordered_json submit_turn(const std::string& session_id, const nlohmann::json& body);
    /// (bytes, mime type)
    std::pair<std::string, std::string> content(const std::string& ref) const;

    /// Blocks until the run's worker thread has finished.
    void wait_run(const std::string& run_id);

    /// Binds and serves in a background thread; returns the bound port
    /// (pass 0 for an ephemeral one).
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    const std::shared_ptr<TurnQueue>& turn_queue() const noexcept { return queue_; }

private:
    struct RunState;

    void install_routes();
    void load_existing();
    std::shared_ptr<RunState> find_run(const std::string& run_id) const;
    std::pair<std::shared_ptr<RunState>, std::shared_ptr<Blackboard>> find_session(const std::string& session_id) const;
    nlohmann::ordered_json session_json(const Blackboard& board, const std::string& session_id) const;

    ServiceOptions options_;
    std::shared_ptr<TurnQueue> queue_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<RunState>> runs_;
    std::vector<std::string> run_order_;
    std::unique_ptr<httplib::Server> server_;
    std::thread server_thread_;
};

}  // namespace pxp
