#pragma once

// The shared store: Data, Message and Context tables plus a session status
// log. With a directory attached every insert is appended to a line-delimited
// log and synced before the call returns; opening the same directory again
// replays the logs.

#include "pxp/records.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace pxp {

enum class SessionStatus { running, awaiting_human, completed, failed, abandoned };

std::string_view session_status_name(SessionStatus status) noexcept;
std::optional<SessionStatus> parse_session_status(std::string_view name) noexcept;
bool is_terminal(SessionStatus status) noexcept;

struct StatusRecord {
    SessionStatus status = SessionStatus::running;
    std::string reason;
};

class Blackboard {
public:
    /// In-memory store.
    Blackboard();

    /// Persistent store rooted at `dir` (created if missing). Existing logs are
    /// replayed; a corrupt message log is refused with ErrorCode::validation
    /// or ErrorCode::parse.
    explicit Blackboard(std::filesystem::path dir);

    ~Blackboard();
    Blackboard(const Blackboard&) = delete;
    Blackboard& operator=(const Blackboard&) = delete;

    static constexpr const char* data_file = "data.jsonl";
    static constexpr const char* transcript_file = "transcript.jsonl";
    static constexpr const char* context_file = "context.jsonl";
    static constexpr const char* status_file = "sessions.jsonl";

    void insert_data(const DataRow& row);
    void insert_message(const MessageRecord& record);
    void insert_context(const ContextRow& row);

    /// Records a status transition. Terminal states are final: a later
    /// transition for a terminal session throws ErrorCode::conflict.
    void set_status(const std::string& session_id, SessionStatus status, std::string reason = {});

    std::optional<DataRow> data(const std::string& session_id) const;
    std::vector<DataRow> data_rows() const;

    /// Message j-1 addressed to `receiver`; ErrorCode::not_found otherwise.
    MessageRecord incoming_message(const std::string& session_id, int j,
                                   const std::string& receiver) const;

    /// `sender`'s own message at j-2 (requires j >= 3); ErrorCode::not_found otherwise.
    MessageRecord own_previous_message(const std::string& session_id, int j,
                                       const std::string& sender) const;

    std::optional<ContextRow> context(const std::string& session_id, int j) const;

    int message_count(const std::string& session_id) const;
    std::optional<StatusRecord> status(const std::string& session_id) const;

    /// Session ids with at least one data row or message, in insertion order.
    std::vector<std::string> session_ids() const;

    std::vector<MessageRecord> export_transcript(const std::string& session_id) const;
    std::vector<Transcript> transcripts() const;

    /// Loads transcript lines, validates every session, then inserts them.
    /// Returns the imported session ids. Sessions already present conflict.
    std::vector<std::string> import_transcript(std::istream& in);

    const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

private:
    struct SessionEntry {
        std::optional<DataRow> data;
        std::vector<MessageRecord> messages;
        std::map<int, ContextRow> contexts;
        std::optional<StatusRecord> status;
    };

    struct LogFile;

    void load();
    void append(LogFile& log, const std::string& line);
    void check_message(const SessionEntry& entry, const MessageRecord& record) const;
    SessionEntry& entry_for(const std::string& session_id);
    const SessionEntry* find(const std::string& session_id) const;

    std::optional<std::filesystem::path> dir_;
    std::unique_ptr<LogFile> data_log_;
    std::unique_ptr<LogFile> message_log_;
    std::unique_ptr<LogFile> context_log_;
    std::unique_ptr<LogFile> status_log_;

    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, SessionEntry> sessions_;
    std::vector<std::string> order_;
};

}  // namespace pxp
