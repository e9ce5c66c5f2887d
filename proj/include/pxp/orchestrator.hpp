#pragma once

// Session loop, single runs, repeated runs and resumption.
//
// Layout under the output directory:
//   runs/<run_id>/{data,transcript,context,sessions}.jsonl   the store
//   runs/<run_id>/run.json                                   config snapshot
//   runs/<run_id>/report.json, report.txt                     per-run report
//   report.json, report.txt, curves.csv                       across runs

#include "pxp/analyzer.hpp"
#include "pxp/blackboard.hpp"
#include "pxp/run_config.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pxp {

struct RunHooks {
    /// Called after message j of session s is persisted.
    std::function<void(const std::string& session_id, int j)> after_message;
};

struct SessionOutcome {
    std::string session_id;
    SessionStatus status = SessionStatus::running;
    std::string reason;
    int messages = 0;
};

/// Runs (or continues) one session until it stops, reaches n messages or an
/// agent fails. Picks up from whatever the store already holds.
SessionOutcome run_session(const Participants& participants, const SessionConfig& config,
                           const std::string& session_id, Blackboard& board, const RunHooks& hooks = {});

std::string run_id_for(const std::string& name, int run_index);
std::string session_id_for(const std::string& run_id, const std::string& data_id);

struct RunHandle {
    std::string run_id;
    std::filesystem::path dir;
    std::shared_ptr<Blackboard> board;
    std::vector<std::string> session_ids;
};

/// Creates runs/<run_id>, snapshots the config and loads every data row.
/// Data errors surface here, before any session starts.
RunHandle prepare_run(const RunConfig& config, int run_index);

struct RunResult {
    RunHandle handle;
    std::vector<SessionOutcome> sessions;
    RunSummary summary;
};

/// Executes every non-terminal session of a prepared run and writes its report.
RunResult execute_run(const RunHandle& handle, const RunConfig& config, const Participants& participants,
                      const RunHooks& hooks = {});

RunResult interact(const RunConfig& config, int run_index = 1, const AgentEnvironment& env = {},
                   const RunHooks& hooks = {});

struct RepeatedResult {
    std::vector<RunResult> runs;
    std::vector<std::string> failures;  ///< "<run_id>: <message>"
    RunReport report;
};

RepeatedResult run_repeated(const RunConfig& config, const AgentEnvironment& env = {}, const RunHooks& hooks = {});

/// Reopens runs/<run_id> (or the directory itself) and finishes its
/// non-terminal sessions. A run with only terminal sessions is left as is.
RunResult resume(const std::filesystem::path& run_dir, const AgentEnvironment& env = {}, const RunHooks& hooks = {});

/// Summary of a store: truth from its data rows, statuses from its status log.
RunSummary summarize_board(const Blackboard& board, int min_length = 0);

/// Offline analysis. Each path may be an output directory (runs/ inside), a
/// run directory, a directory of transcript files or a transcript file.
/// Every run directory contributes one repetition; loose transcripts are
/// pooled into one more. Curves span at least the run's n (or `min_length`).
RunReport analyze_paths(const std::vector<std::filesystem::path>& paths, int min_length = 0,
                        std::vector<std::string>* warnings = nullptr);

struct Divergence {
    int msg_number = 0;
    std::string recorded;
    std::string computed;
};

struct ReplayResult {
    std::string session_id;
    int messages = 0;
    std::vector<Divergence> divergences;
};

/// Re-executes the protocol over a recorded session: each agent answers with
/// its recorded (y, e) and the configured comparators recompute every tag.
/// Also reports a session that runs past, or stops short of, where the
/// protocol stops. Refuses (validation) transcripts longer than n.
ReplayResult replay_transcript(const Transcript& transcript, const RunConfig& config,
                               const AgentEnvironment& env = {});

/// Writes report.json and report.txt (and curves.csv when `with_curves`).
void write_report(const std::filesystem::path& dir, const std::string& label, const RunReport& report,
                  bool with_curves);

}  // namespace pxp
