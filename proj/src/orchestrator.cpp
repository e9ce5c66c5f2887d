#include "pxp/orchestrator.hpp"

#include "pxp/error.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace pxp {

namespace fs = std::filesystem;

namespace {

Termination ending(const std::vector<MessageRecord>& messages) {
    Transcript t{messages.empty() ? std::string() : messages.front().session_id, messages};
    return classify_session(t).terminal;
}

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::config, "cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

std::string run_label(const RunHandle& handle) { return handle.run_id; }

}  // namespace

SessionOutcome run_session(const Participants& participants, const SessionConfig& config,
                           const std::string& session_id, Blackboard& board, const RunHooks& hooks) {
    validate_session_config(config);
    if (auto st = board.status(session_id); st && is_terminal(st->status)) {
        return {session_id, st->status, st->reason, board.message_count(session_id)};
    }

    const auto existing = board.export_transcript(session_id);
    Tag l_m = Tag::init;
    Tag l_h = Tag::init;
    for (const auto& m : existing) (m.sender == machine_id ? l_m : l_h) = m.payload.tag;
    int j = static_cast<int>(existing.size()) + 1;

    auto complete = [&] {
        const auto messages = board.export_transcript(session_id);
        const std::string reason(termination_name(ending(messages)));
        board.set_status(session_id, SessionStatus::completed, reason);
        return SessionOutcome{session_id, SessionStatus::completed, reason, static_cast<int>(messages.size())};
    };

    if (!existing.empty()) {
        const Role last = existing.back().sender == machine_id ? Role::machine : Role::human;
        if (session_stopped(l_m, l_h, last) || j > config.n) return complete();
    }
    if (!board.status(session_id)) board.set_status(session_id, SessionStatus::running);

    try {
        while (j <= config.n) {
            const Role role = j % 2 == 1 ? Role::machine : Role::human;
            const Participant& self = role == Role::machine ? participants.machine : participants.human;
            const Payload out = agent_step(self, session_id, j, config.k, board);
            MessageRecord record;
            record.session_id = session_id;
            record.msg_number = j;
            record.sender = self.id();
            record.receiver = std::string(role == Role::machine ? human_id : machine_id);
            record.payload = out;
            record.timestamp = utc_timestamp_now();
            board.insert_message(record);
            (role == Role::machine ? l_m : l_h) = out.tag;
            if (hooks.after_message) hooks.after_message(session_id, j);
            if (session_stopped(l_m, l_h, role)) break;
            ++j;
        }
    } catch (const Error& e) {
        const SessionStatus status = e.code() == ErrorCode::timeout ? SessionStatus::abandoned : SessionStatus::failed;
        spdlog::warn("session {} {}: {}", session_id, session_status_name(status), e.what());
        board.set_status(session_id, status, e.what());
        return {session_id, status, e.what(), board.message_count(session_id)};
    }
    return complete();
}

std::string run_id_for(const std::string& name, int run_index) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "-r%02d", run_index);
    return name + suffix;
}

std::string session_id_for(const std::string& run_id, const std::string& data_id) { return run_id + ":" + data_id; }

RunHandle prepare_run(const RunConfig& config, int run_index) {
    if (run_index < 1) throw Error(ErrorCode::contract, "run index starts at 1");
    validate_session_config(config.session);
    const auto rows = load_data_file(config.data_path);

    RunHandle handle;
    handle.run_id = run_id_for(config.name, run_index);
    handle.dir = config.output_dir / "runs" / handle.run_id;
    if (fs::exists(handle.dir / "transcript.jsonl") || fs::exists(handle.dir / "data.jsonl")) {
        throw Error(ErrorCode::conflict, "run directory already exists: " + handle.dir.string() +
                                             " (resume it or choose another output directory)");
    }
    fs::create_directories(handle.dir);

    nlohmann::json snapshot{{"run_id", handle.run_id}, {"run_index", run_index}, {"config", config.document}};
    write_text(handle.dir / "run.json", snapshot.dump(2) + "\n");

    handle.board = std::make_shared<Blackboard>(handle.dir);
    for (const auto& row : rows) {
        DataRow stored = row;
        stored.session_id = session_id_for(handle.run_id, row.session_id);
        handle.board->insert_data(stored);
        handle.session_ids.push_back(stored.session_id);
    }
    return handle;
}

RunSummary summarize_board(const Blackboard& board, int min_length) {
    std::map<std::string, GroundTruth> truth;
    for (const auto& row : board.data_rows()) {
        if (row.truth) truth.emplace(row.session_id, *row.truth);
    }
    std::map<std::string, std::string> statuses;
    for (const auto& s : board.session_ids()) {
        const auto st = board.status(s);
        statuses[s] = st ? std::string(session_status_name(st->status)) : "running";
    }
    std::vector<Transcript> transcripts;
    for (const auto& s : board.session_ids()) {
        transcripts.push_back(Transcript{s, board.export_transcript(s)});
    }
    return summarize_run(transcripts, truth, statuses, exact_match, min_length);
}

void write_report(const fs::path& dir, const std::string& label, const RunReport& report, bool with_curves) {
    write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
    write_text(dir / "report.txt", render_table({{label, report}}));
    if (with_curves) write_text(dir / "curves.csv", curves_csv(report));
}

RunResult execute_run(const RunHandle& handle, const RunConfig& config, const Participants& participants,
                      const RunHooks& hooks) {
    RunResult result;
    result.handle = handle;
    Blackboard& board = *handle.board;

    std::vector<std::string> ids = handle.session_ids;
    if (ids.empty()) {
        for (const auto& row : board.data_rows()) ids.push_back(row.session_id);
    }
    result.sessions.resize(ids.size());

    const std::size_t workers =
        config.interactive() ? ids.size()
                             : std::min<std::size_t>(ids.size(), static_cast<std::size_t>(config.parallel_sessions));
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto work = [&] {
        for (std::size_t i = next++; i < ids.size(); i = next++) {
            try {
                result.sessions[i] = run_session(participants, config.session, ids[i], board, hooks);
            } catch (const Interrupted&) {
                result.sessions[i] = {ids[i], SessionStatus::running, "interrupted", board.message_count(ids[i])};
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next = ids.size();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (first_error) std::rethrow_exception(first_error);

    result.summary = summarize_board(board, config.session.n);
    write_report(handle.dir, run_label(handle), aggregate_report({result.summary}), false);
    spdlog::info("run {}: {} sessions", handle.run_id, ids.size());
    return result;
}

RunResult interact(const RunConfig& config, int run_index, const AgentEnvironment& env, const RunHooks& hooks) {
    const RunHandle handle = prepare_run(config, run_index);
    const Participants participants = build_participants(config, env);
    return execute_run(handle, config, participants, hooks);
}

RepeatedResult run_repeated(const RunConfig& config, const AgentEnvironment& env, const RunHooks& hooks) {
    if (config.repetitions < 1) throw Error(ErrorCode::validation, "repetitions must be >= 1", {"repetitions"});
    const Participants participants = build_participants(config, env);
    RepeatedResult out;
    std::vector<RunSummary> summaries;
    for (int r = 1; r <= config.repetitions; ++r) {
        const RunHandle handle = prepare_run(config, r);
        try {
            out.runs.push_back(execute_run(handle, config, participants, hooks));
            summaries.push_back(out.runs.back().summary);
        } catch (const Error& e) {
            spdlog::error("run {} failed: {}", handle.run_id, e.what());
            out.failures.push_back(handle.run_id + ": " + e.what());
        }
    }
    out.report = aggregate_report(summaries);
    fs::create_directories(config.output_dir);
    write_report(config.output_dir, config.name, out.report, true);
    return out;
}

RunResult resume(const fs::path& run_dir, const AgentEnvironment& env, const RunHooks& hooks) {
    const fs::path snapshot_path = run_dir / "run.json";
    std::ifstream in(snapshot_path);
    if (!in) throw Error(ErrorCode::not_found, "no run snapshot at " + snapshot_path.string());
    nlohmann::json snapshot;
    try {
        snapshot = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::parse, snapshot_path.string() + ": " + e.what());
    }
    const RunConfig config = parse_run_config(snapshot.at("config"));

    RunHandle handle;
    handle.run_id = snapshot.value("run_id", run_dir.filename().string());
    handle.dir = run_dir;
    try {
        handle.board = std::make_shared<Blackboard>(run_dir);
    } catch (const Error& e) {
        throw Error(ErrorCode::parse, "cannot resume " + run_dir.string() + ": " + e.what());
    }
    for (const auto& row : handle.board->data_rows()) handle.session_ids.push_back(row.session_id);

    bool pending = false;
    for (const auto& s : handle.session_ids) {
        const auto st = handle.board->status(s);
        if (!st || !is_terminal(st->status)) pending = true;
    }
    if (!pending) {
        RunResult result;
        result.handle = handle;
        for (const auto& s : handle.session_ids) {
            const auto st = handle.board->status(s);
            result.sessions.push_back({s, st->status, st->reason, handle.board->message_count(s)});
        }
        result.summary = summarize_board(*handle.board, config.session.n);
        return result;
    }
    const Participants participants = build_participants(config, env);
    return execute_run(handle, config, participants, hooks);
}

}  // namespace pxp

namespace pxp {

ReplayResult replay_transcript(const Transcript& transcript, const RunConfig& config, const AgentEnvironment& env) {
    validate_transcript(transcript);
    const int length = static_cast<int>(transcript.messages.size());
    if (length > config.session.n) {
        throw Error(ErrorCode::validation,
                    "transcript " + transcript.session_id + " has " + std::to_string(length) +
                        " messages but the config bounds sessions at n=" + std::to_string(config.session.n),
                    {"session.n"});
    }
    if (config.interactive()) {
        throw Error(ErrorCode::validation, "replay needs computed tags; interactive agents supply their own",
                    {"human.backend.kind"});
    }

    Participants participants = build_participants(config, env);
    auto recorded = std::make_shared<std::vector<MessageRecord>>(transcript.messages);
    auto script = [recorded](const AgentRequest& request) {
        const auto& m = (*recorded)[static_cast<std::size_t>(request.msg_number - 1)];
        return AgentResponse{m.payload.prediction, m.payload.explanation, std::nullopt};
    };
    participants.machine.behavior = std::make_shared<ScriptedAgent>(script);
    participants.human.behavior = std::make_shared<ScriptedAgent>(script);

    ReplayResult result{transcript.session_id, length, {}};
    Blackboard board;
    const std::string s = transcript.session_id;
    board.insert_data(DataRow{s, Instance{InstanceKind::text, "replay"}, std::nullopt});

    Tag l_m = Tag::init;
    Tag l_h = Tag::init;
    for (int j = 1; j <= length; ++j) {
        const Role role = j % 2 == 1 ? Role::machine : Role::human;
        const Participant& self = role == Role::machine ? participants.machine : participants.human;
        const MessageRecord& m = transcript.messages[static_cast<std::size_t>(j - 1)];
        const Payload computed = agent_step(self, s, j, config.session.k, board);
        if (computed.tag != m.payload.tag) {
            result.divergences.push_back({j, std::string(tag_name(m.payload.tag)), std::string(tag_name(computed.tag))});
        }
        board.insert_message(m);
        (role == Role::machine ? l_m : l_h) = m.payload.tag;
        const bool stopped = session_stopped(l_m, l_h, role);
        if (stopped && j < length) {
            result.divergences.push_back({j + 1, "message " + std::to_string(j + 1), "stop after " + std::to_string(j)});
            break;
        }
        if (!stopped && j == length && j < config.session.n) {
            result.divergences.push_back({j + 1, "end after " + std::to_string(j), "message " + std::to_string(j + 1)});
        }
    }
    return result;
}

}  // namespace pxp

namespace pxp {

namespace {

int snapshot_n(const fs::path& run_dir, int fallback) {
    std::ifstream in(run_dir / "run.json");
    if (!in) return fallback;
    try {
        const auto snapshot = nlohmann::json::parse(in);
        return std::max(fallback, snapshot.at("config").at("session").value("n", 10));
    } catch (const std::exception&) {
        return fallback;
    }
}

bool is_run_dir(const fs::path& dir) { return fs::exists(dir / "transcript.jsonl") && fs::exists(dir / "data.jsonl"); }

}  // namespace

RunReport analyze_paths(const std::vector<fs::path>& paths, int min_length, std::vector<std::string>* warnings) {
    std::vector<RunSummary> summaries;
    std::vector<Transcript> loose;
    auto warn = [&](const std::string& message) {
        spdlog::warn("{}", message);
        if (warnings) warnings->push_back(message);
    };
    auto add_run = [&](const fs::path& dir) {
        Blackboard board(dir);
        summaries.push_back(summarize_board(board, snapshot_n(dir, min_length)));
    };
    auto add_file = [&](const fs::path& file) {
        for (auto& t : load_transcript_file(file)) loose.push_back(std::move(t));
    };

    for (const auto& path : paths) {
        if (!fs::exists(path)) throw Error(ErrorCode::not_found, "no such file or directory: " + path.string());
        if (!fs::is_directory(path)) {
            add_file(path);
            continue;
        }
        if (fs::is_directory(path / "runs")) {
            std::vector<fs::path> dirs;
            for (const auto& entry : fs::directory_iterator(path / "runs")) {
                if (entry.is_directory() && is_run_dir(entry.path())) dirs.push_back(entry.path());
            }
            std::sort(dirs.begin(), dirs.end());
            if (dirs.empty()) warn("no runs under " + path.string());
            for (const auto& dir : dirs) add_run(dir);
            continue;
        }
        if (is_run_dir(path)) {
            add_run(path);
            continue;
        }
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) warn("no transcript files in " + path.string());
        for (const auto& file : files) add_file(file);
    }

    if (!loose.empty()) {
        std::map<std::string, GroundTruth> no_truth;
        summaries.push_back(summarize_run(loose, no_truth, {}, exact_match, min_length));
    }
    if (summaries.empty()) {
        warn("no sessions found; reporting zero sessions");
        summaries.push_back(summarize_run({}, {}, {}, exact_match, min_length));
    }
    return aggregate_report(summaries);
}

}  // namespace pxp
