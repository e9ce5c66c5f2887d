#include "pxp/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <sstream>

namespace pxp {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Service::RunState {
    std::string id;
    RunConfig config;
    std::vector<RunHandle> handles;
    std::vector<bool> finished;
    std::string state = "running";  // running | completed | failed | interrupted
    std::string error;
    std::thread worker;
    mutable std::mutex mutex;
};

namespace {

std::string iso_time(Clock::time_point t) {
    const std::time_t secs = Clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ojson payload_json(const Payload& p) {
    return {{"tag", tag_name(p.tag)}, {"prediction", p.prediction}, {"explanation", p.explanation}};
}

ojson error_body(const Error& e) {
    return {{"error", {{"code", error_code_name(e.code())}, {"message", e.what()}, {"fields", e.fields()}}}};
}

std::string mime_for(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    if (ext == ".txt") return "text/plain; charset=utf-8";
    return "application/octet-stream";
}

std::string sanitize(std::string name) {
    for (char& c : name) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    }
    return name.empty() ? "run" : name;
}

nlohmann::json parse_body(const std::string& body) {
    try {
        return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::validation, std::string("request body is not JSON: ") + e.what(), {"$"});
    }
}

}  // namespace

int http_status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::validation:
        case ErrorCode::parse:
        case ErrorCode::config: return 422;
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::timeout: return 408;
        case ErrorCode::transport: return 502;
        case ErrorCode::contract: return 500;
    }
    return 500;
}

Service::Service(ServiceOptions options) : options_(std::move(options)), queue_(std::make_shared<TurnQueue>()) {
    fs::create_directories(options_.data_dir);
    load_existing();
}

Service::~Service() {
    stop();
    queue_->shutdown();
    std::vector<std::shared_ptr<RunState>> runs;
    {
        std::lock_guard lock(mutex_);
        for (auto& [id, run] : runs_) runs.push_back(run);
    }
    for (auto& run : runs) {
        if (run->worker.joinable()) run->worker.join();
    }
}

void Service::load_existing() {
    for (const auto& entry : fs::directory_iterator(options_.data_dir)) {
        const fs::path runs_dir = entry.path() / "runs";
        if (!entry.is_directory() || !fs::is_directory(runs_dir)) continue;
        auto run = std::make_shared<RunState>();
        run->id = entry.path().filename().string();
        std::vector<fs::path> dirs;
        for (const auto& r : fs::directory_iterator(runs_dir)) {
            if (r.is_directory()) dirs.push_back(r.path());
        }
        std::sort(dirs.begin(), dirs.end());
        try {
            for (const auto& dir : dirs) {
                RunHandle handle;
                handle.run_id = dir.filename().string();
                handle.dir = dir;
                handle.board = std::make_shared<Blackboard>(dir);
                for (const auto& row : handle.board->data_rows()) handle.session_ids.push_back(row.session_id);
                std::ifstream in(dir / "run.json");
                if (in && run->handles.empty()) {
                    run->config = parse_run_config(nlohmann::json::parse(in).at("config"));
                }
                run->handles.push_back(std::move(handle));
                run->finished.push_back(true);
            }
        } catch (const std::exception& e) {
            spdlog::warn("skipping stored run {}: {}", run->id, e.what());
            continue;
        }
        bool all_terminal = true;
        for (const auto& h : run->handles) {
            for (const auto& s : h.session_ids) {
                const auto st = h.board->status(s);
                all_terminal = all_terminal && st && is_terminal(st->status);
            }
        }
        run->state = all_terminal ? "completed" : "interrupted";
        runs_[run->id] = run;
        run_order_.push_back(run->id);
    }
}

std::string Service::create_run(const nlohmann::json& document) {
    if (!document.is_object()) throw Error(ErrorCode::validation, "run configuration must be a JSON object", {"$"});

    auto run = std::make_shared<RunState>();
    {
        std::lock_guard lock(mutex_);
        const std::string base =
            sanitize(document.contains("name") && document["name"].is_string() ? document["name"].get<std::string>()
                                                                                : "run");
        for (int i = 1;; ++i) {
            char suffix[16];
            std::snprintf(suffix, sizeof suffix, "-%03d", i);
            const std::string candidate = base + suffix;
            if (!runs_.contains(candidate) && !fs::exists(options_.data_dir / candidate)) {
                run->id = candidate;
                break;
            }
        }
        runs_[run->id] = run;
        run_order_.push_back(run->id);
    }

    try {
        nlohmann::json doc = document;
        doc["name"] = run->id;
        doc["output_dir"] = fs::absolute(options_.data_dir / run->id).string();
        run->config = parse_run_config(doc, fs::absolute(options_.data_dir));
        AgentEnvironment env{queue_, options_.llm_override};
        auto participants = std::make_shared<Participants>(build_participants(run->config, env));
        for (int r = 1; r <= run->config.repetitions; ++r) {
            RunHandle handle = prepare_run(run->config, r);
            std::lock_guard lock(run->mutex);
            run->handles.push_back(std::move(handle));
            run->finished.push_back(false);
        }
        run->worker = std::thread([this, run, participants] {
            std::vector<RunSummary> summaries;
            try {
                for (std::size_t i = 0; i < run->handles.size(); ++i) {
                    auto result = execute_run(run->handles[i], run->config, *participants);
                    summaries.push_back(result.summary);
                    std::lock_guard lock(run->mutex);
                    run->finished[i] = true;
                }
                write_report(run->config.output_dir, run->id, aggregate_report(summaries), true);
                std::lock_guard lock(run->mutex);
                bool interrupted = false;
                for (const auto& h : run->handles) {
                    for (const auto& s : h.session_ids) {
                        const auto st = h.board->status(s);
                        interrupted = interrupted || !st || !is_terminal(st->status);
                    }
                }
                run->state = interrupted ? "interrupted" : "completed";
            } catch (const std::exception& e) {
                spdlog::error("run {} failed: {}", run->id, e.what());
                std::lock_guard lock(run->mutex);
                run->state = "failed";
                run->error = e.what();
            }
        });
    } catch (...) {
        std::lock_guard lock(mutex_);
        runs_.erase(run->id);
        run_order_.erase(std::remove(run_order_.begin(), run_order_.end(), run->id), run_order_.end());
        std::error_code ignored;
        fs::remove_all(options_.data_dir / run->id, ignored);
        throw;
    }
    return run->id;
}

void Service::wait_run(const std::string& run_id) {
    auto run = find_run(run_id);
    if (run->worker.joinable()) run->worker.join();
}

std::shared_ptr<Service::RunState> Service::find_run(const std::string& run_id) const {
    std::lock_guard lock(mutex_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw Error(ErrorCode::not_found, "unknown run '" + run_id + "'");
    return it->second;
}

std::pair<std::shared_ptr<Service::RunState>, std::shared_ptr<Blackboard>> Service::find_session(
    const std::string& session_id) const {
    std::vector<std::shared_ptr<RunState>> runs;
    {
        std::lock_guard lock(mutex_);
        for (const auto& id : run_order_) runs.push_back(runs_.at(id));
    }
    for (const auto& run : runs) {
        std::lock_guard lock(run->mutex);
        for (const auto& h : run->handles) {
            if (h.board && h.board->data(session_id)) return {run, h.board};
        }
    }
    throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'");
}

ojson Service::session_json(const Blackboard& board, const std::string& session_id) const {
    const auto st = board.status(session_id);
    std::string status = st ? std::string(session_status_name(st->status)) : "running";
    if ((!st || st->status == SessionStatus::running) && queue_->pending_for(session_id)) status = "awaiting_human";
    ojson out{{"session_id", session_id}, {"status", status}, {"messages", board.message_count(session_id)}};
    if (st && !st->reason.empty()) out["reason"] = st->reason;
    return out;
}

ojson Service::list_sessions(const std::string& run_id) const {
    auto run = find_run(run_id);
    std::lock_guard lock(run->mutex);
    ojson out = ojson::array();
    for (const auto& h : run->handles) {
        for (const auto& s : h.session_ids) out.push_back(session_json(*h.board, s));
    }
    return out;
}

ojson Service::get_run(const std::string& run_id) const {
    auto run = find_run(run_id);
    ojson runs = ojson::array();
    int total = 0;
    int terminal = 0;
    std::string state;
    std::string error;
    {
        std::lock_guard lock(run->mutex);
        state = run->state;
        error = run->error;
        for (std::size_t i = 0; i < run->handles.size(); ++i) {
            const auto& h = run->handles[i];
            ojson sessions = ojson::array();
            for (const auto& s : h.session_ids) {
                ojson item = session_json(*h.board, s);
                ++total;
                const auto parsed = parse_session_status(item["status"].get<std::string>());
                if (parsed && is_terminal(*parsed)) ++terminal;
                sessions.push_back(std::move(item));
            }
            runs.push_back({{"run_id", h.run_id}, {"finished", static_cast<bool>(run->finished[i])},
                            {"sessions", std::move(sessions)}});
        }
    }
    ojson out{{"run_id", run->id},
              {"state", state},
              {"repetitions", run->config.repetitions},
              {"progress", {{"sessions", total}, {"terminal", terminal}}},
              {"runs", std::move(runs)}};
    if (!error.empty()) out["error"] = error;
    return out;
}

ojson Service::get_report(const std::string& run_id) const {
    auto run = find_run(run_id);
    std::vector<RunSummary> summaries;
    {
        std::lock_guard lock(run->mutex);
        for (const auto& h : run->handles) summaries.push_back(summarize_board(*h.board, run->config.session.n));
    }
    ojson out = report_to_json(aggregate_report(summaries));
    out["run_id"] = run->id;
    return out;
}

ojson Service::get_transcript(const std::string& session_id) const {
    auto [run, board] = find_session(session_id);
    ojson messages = ojson::array();
    for (const auto& m : board->export_transcript(session_id)) messages.push_back(ojson::parse(encode_message(m)));
    ojson out = session_json(*board, session_id);
    out["transcript"] = std::move(messages);
    return out;
}

ojson Service::list_pending(const std::string& author) const {
    ojson out = ojson::array();
    for (const auto& turn : queue_->list_pending(author)) {
        ojson instance{{"kind", instance_kind_name(turn.instance.kind)},
                       {"content_ref", "/content/" + turn.session_id}};
        if (turn.instance.kind == InstanceKind::text) instance["value"] = turn.instance.value;
        out.push_back({{"session_id", turn.session_id},
                       {"j", turn.msg_number},
                       {"incoming", payload_json(turn.incoming)},
                       {"instance", std::move(instance)},
                       {"reject_allowed", turn.reject_allowed},
                       {"deadline", iso_time(turn.deadline)},
                       {"author", turn.author}});
    }
    return out;
}

ojson Service::submit_turn(const std::string& session_id, const nlohmann::json& body) {
    if (!body.is_object()) throw Error(ErrorCode::validation, "submission must be a JSON object", {"$"});
    std::vector<std::string> bad;
    HumanSubmission submission;
    submission.session_id = session_id;
    if (body.contains("j") && body["j"].is_number_integer()) {
        submission.msg_number = body["j"].get<int>();
    } else {
        bad.push_back("j");
    }
    const std::string tag_text = body.value("tag", nlohmann::json()).is_string() ? body["tag"].get<std::string>() : "";
    if (auto tag = parse_tag(tag_text); tag && *tag != Tag::init) {
        submission.tag = *tag;
    } else {
        bad.push_back("tag");
    }
    for (const char* key : {"prediction", "explanation"}) {
        if (!body.contains(key) || !body[key].is_string() || body[key].get<std::string>().empty()) bad.push_back(key);
    }
    if (body.contains("author") && !body["author"].is_string()) bad.push_back("author");
    if (!bad.empty()) {
        std::string message = "invalid submission:";
        for (const auto& f : bad) message += " " + f;
        throw Error(ErrorCode::validation, message, bad);
    }
    submission.prediction = body["prediction"].get<std::string>();
    submission.explanation = body["explanation"].get<std::string>();
    submission.author = body.value("author", "");

    const SubmitResult result = queue_->submit(submission);
    return {{"session_id", session_id},
            {"j", submission.msg_number},
            {"stored_tag", tag_name(result.stored_tag)},
            {"downgraded", result.downgraded}};
}

std::pair<std::string, std::string> Service::content(const std::string& ref) const {
    auto [run, board] = find_session(ref);
    const auto row = board->data(ref);
    if (row->instance.kind == InstanceKind::text) return {row->instance.value, "text/plain; charset=utf-8"};
    fs::path path(row->instance.value);
    if (path.is_relative()) path = run->config.data_path.parent_path() / path;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "content for '" + ref + "' is not readable");
    std::ostringstream bytes;
    bytes << in.rdbuf();
    return {bytes.str(), mime_for(path)};
}

void Service::install_routes() {
    server_ = std::make_unique<httplib::Server>();
    auto& srv = *server_;

    auto guarded = [](auto fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const Error& e) {
                res.status = http_status_for(e.code());
                res.set_content(error_body(e).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 500;
                res.set_content(error_body(Error(ErrorCode::contract, e.what())).dump(), "application/json");
            }
        };
    };
    auto send = [](httplib::Response& res, const ojson& body, int status = 200) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };

    srv.Post("/runs", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
                 send(res, {{"run_id", create_run(parse_body(req.body))}}, 201);
             }));
    srv.Get(R"(/runs/([^/]+))", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
                send(res, get_run(req.matches[1]));
            }));
    srv.Get(R"(/runs/([^/]+)/report)", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
                send(res, get_report(req.matches[1]));
            }));
    srv.Get(R"(/runs/([^/]+)/sessions)", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
                send(res, list_sessions(req.matches[1]));
            }));
    srv.Get(R"(/sessions/([^/]+)/transcript)",
            guarded([this, send](const httplib::Request& req, httplib::Response& res) {
                send(res, get_transcript(req.matches[1]));
            }));
    srv.Get("/pending", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
                send(res, list_pending(req.get_param_value("author")));
            }));
    srv.Post(R"(/sessions/([^/]+)/turns)", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
                 send(res, submit_turn(req.matches[1], parse_body(req.body)));
             }));
    srv.Get(R"(/content/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto [bytes, mime] = content(req.matches[1]);
                res.set_content(std::move(bytes), mime);
            }));
}

int Service::start(const std::string& host, int port) {
    install_routes();
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::config, "cannot bind " + host + ":" + std::to_string(port));
    server_thread_ = std::thread([this] { server_->listen_after_bind(); });
    return bound;
}

void Service::listen(const std::string& host, int port) {
    install_routes();
    if (!server_->listen(host, port)) throw Error(ErrorCode::config, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
    if (server_) server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace pxp
