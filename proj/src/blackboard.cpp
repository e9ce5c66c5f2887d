#include "pxp/blackboard.hpp"

#include "pxp/error.hpp"

#include <unistd.h>

#include <fstream>
#include <istream>

namespace pxp {

namespace {

using ojson = nlohmann::ordered_json;

std::string status_line(const std::string& session_id, const StatusRecord& record) {
    ojson obj{{"s", session_id}, {"status", session_status_name(record.status)}};
    if (!record.reason.empty()) obj["reason"] = record.reason;
    return obj.dump();
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
    std::ifstream in(path);
    if (!in) return;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            f(line, line_number);
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + ": " + e.what(), e.fields());
        }
    }
}

}  // namespace

std::string_view session_status_name(SessionStatus status) noexcept {
    switch (status) {
        case SessionStatus::running: return "running";
        case SessionStatus::awaiting_human: return "awaiting_human";
        case SessionStatus::completed: return "completed";
        case SessionStatus::failed: return "failed";
        case SessionStatus::abandoned: return "abandoned";
    }
    return "running";
}

std::optional<SessionStatus> parse_session_status(std::string_view name) noexcept {
    for (auto status : {SessionStatus::running, SessionStatus::awaiting_human, SessionStatus::completed,
                        SessionStatus::failed, SessionStatus::abandoned}) {
        if (session_status_name(status) == name) return status;
    }
    return std::nullopt;
}

bool is_terminal(SessionStatus status) noexcept {
    return status == SessionStatus::completed || status == SessionStatus::failed ||
           status == SessionStatus::abandoned;
}

struct Blackboard::LogFile {
    explicit LogFile(const std::filesystem::path& path) : file(std::fopen(path.c_str(), "a")) {
        if (!file) throw Error(ErrorCode::config, "cannot open log " + path.string() + " for append");
    }
    ~LogFile() {
        if (file) std::fclose(file);
    }
    LogFile(const LogFile&) = delete;
    LogFile& operator=(const LogFile&) = delete;

    std::FILE* file;
};

Blackboard::Blackboard() = default;

Blackboard::Blackboard(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
    load();
    data_log_ = std::make_unique<LogFile>(*dir_ / data_file);
    message_log_ = std::make_unique<LogFile>(*dir_ / transcript_file);
    context_log_ = std::make_unique<LogFile>(*dir_ / context_file);
    status_log_ = std::make_unique<LogFile>(*dir_ / status_file);
}

Blackboard::~Blackboard() = default;

void Blackboard::load() {
    for_each_line(*dir_ / data_file, [&](const std::string& line, std::size_t n) {
        DataRow row = decode_data_row(line, n);
        SessionEntry& entry = entry_for(row.session_id);
        if (entry.data) throw Error(ErrorCode::validation, "duplicate data row for " + row.session_id);
        entry.data = std::move(row);
    });
    for_each_line(*dir_ / transcript_file, [&](const std::string& line, std::size_t n) {
        MessageRecord record = decode_message(line, n);
        SessionEntry& entry = entry_for(record.session_id);
        check_message(entry, record);
        entry.messages.push_back(std::move(record));
    });
    // A context row can outlive a crash that happened before its message was
    // written. Later rows for the same key supersede earlier ones, and rows
    // beyond the last message are dropped.
    for_each_line(*dir_ / context_file, [&](const std::string& line, std::size_t n) {
        ContextRow row = decode_context_row(line, n);
        entry_for(row.session_id).contexts[row.msg_number] = std::move(row);
    });
    for (auto& [id, entry] : sessions_) {
        const int count = static_cast<int>(entry.messages.size());
        std::erase_if(entry.contexts, [count](const auto& kv) { return kv.first > count; });
    }
    for_each_line(*dir_ / status_file, [&](const std::string& line, std::size_t n) {
        ojson obj;
        try {
            obj = ojson::parse(line);
        } catch (const ojson::parse_error& e) {
            throw Error(ErrorCode::parse, "line " + std::to_string(n) + ": " + e.what());
        }
        const auto status = parse_session_status(obj.value("status", ""));
        if (!obj.contains("s") || !status) {
            throw Error(ErrorCode::parse, "line " + std::to_string(n) + ": bad status record");
        }
        entry_for(obj["s"].get<std::string>()).status = StatusRecord{*status, obj.value("reason", "")};
    });
}

void Blackboard::append(LogFile& log, const std::string& line) {
    if (std::fputs(line.c_str(), log.file) < 0 || std::fputc('\n', log.file) == EOF ||
        std::fflush(log.file) != 0 || ::fsync(::fileno(log.file)) != 0) {
        throw Error(ErrorCode::config, "failed to append to blackboard log");
    }
}

Blackboard::SessionEntry& Blackboard::entry_for(const std::string& session_id) {
    auto [it, inserted] = sessions_.try_emplace(session_id);
    if (inserted) order_.push_back(session_id);
    return it->second;
}

const Blackboard::SessionEntry* Blackboard::find(const std::string& session_id) const {
    auto it = sessions_.find(session_id);
    return it == sessions_.end() ? nullptr : &it->second;
}

void Blackboard::check_message(const SessionEntry& entry, const MessageRecord& record) const {
    const int count = static_cast<int>(entry.messages.size());
    if (record.msg_number >= 1 && record.msg_number <= count) {
        throw Error(ErrorCode::conflict, "message (" + record.session_id + ", " +
                                             std::to_string(record.msg_number) + ") already exists");
    }
    if (count == 0) {
        validate_transcript(Transcript{record.session_id, {record}});
        return;
    }
    if (record.msg_number != count + 1) {
        throw Error(ErrorCode::validation, "session '" + record.session_id + "' message " +
                                               std::to_string(record.msg_number) +
                                               ": message numbers must be contiguous (expected " +
                                               std::to_string(count + 1) + ")");
    }
    const MessageRecord& previous = entry.messages.back();
    auto invalid = [&](const std::string& what) {
        throw Error(ErrorCode::validation, "session '" + record.session_id + "' message " +
                                               std::to_string(record.msg_number) + ": " + what);
    };
    if (record.sender.empty() || record.receiver.empty()) invalid("empty agent id");
    if (record.sender == record.receiver) invalid("sender equals receiver");
    if (record.sender == previous.sender) invalid("senders must alternate");
    if (record.sender != previous.receiver) invalid("sender is not the previous receiver");
    if (record.payload.tag == Tag::init) invalid("INIT is only allowed at message 1");
    if (record.payload.prediction.empty() || record.payload.explanation.empty()) {
        invalid("prediction and explanation must be non-empty");
    }
}

void Blackboard::insert_data(const DataRow& row) {
    if (row.session_id.empty()) throw Error(ErrorCode::validation, "data row needs a session id", {"s"});
    if (row.instance.value.empty()) {
        throw Error(ErrorCode::validation, "data row needs an instance value", {"x_value"});
    }
    std::unique_lock lock(mutex_);
    if (const auto* existing = find(row.session_id); existing && existing->data) {
        throw Error(ErrorCode::conflict, "data row for '" + row.session_id + "' already exists");
    }
    if (data_log_) append(*data_log_, encode_data_row(row));
    entry_for(row.session_id).data = row;
}

void Blackboard::insert_message(const MessageRecord& record) {
    MessageRecord stored = record;
    if (stored.timestamp.empty()) stored.timestamp = utc_timestamp_now();
    std::unique_lock lock(mutex_);
    static const SessionEntry empty_entry;
    const auto* existing = find(stored.session_id);
    check_message(existing ? *existing : empty_entry, stored);
    if (message_log_) append(*message_log_, encode_message(stored));
    entry_for(stored.session_id).messages.push_back(std::move(stored));
}

void Blackboard::insert_context(const ContextRow& row) {
    if (row.msg_number < 1) throw Error(ErrorCode::validation, "context message number must be >= 1", {"j"});
    int previous = 0;
    for (const auto& item : row.context) {
        if (item.msg_number <= previous || item.msg_number > row.msg_number) {
            throw Error(ErrorCode::validation,
                        "context entries must be strictly increasing and not exceed j", {"c"});
        }
        previous = item.msg_number;
    }
    std::unique_lock lock(mutex_);
    if (const auto* existing = find(row.session_id); existing && existing->contexts.contains(row.msg_number)) {
        throw Error(ErrorCode::conflict, "context (" + row.session_id + ", " +
                                             std::to_string(row.msg_number) + ") already exists");
    }
    if (context_log_) append(*context_log_, encode_context_row(row));
    entry_for(row.session_id).contexts.emplace(row.msg_number, row);
}

void Blackboard::set_status(const std::string& session_id, SessionStatus status, std::string reason) {
    std::unique_lock lock(mutex_);
    SessionEntry& entry = entry_for(session_id);
    if (entry.status && is_terminal(entry.status->status)) {
        if (entry.status->status == status) return;
        throw Error(ErrorCode::conflict, "session '" + session_id + "' is already " +
                                             std::string(session_status_name(entry.status->status)));
    }
    StatusRecord record{status, std::move(reason)};
    if (status_log_) append(*status_log_, status_line(session_id, record));
    entry.status = std::move(record);
}

std::optional<DataRow> Blackboard::data(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    const auto* entry = find(session_id);
    return entry ? entry->data : std::nullopt;
}

std::vector<DataRow> Blackboard::data_rows() const {
    std::shared_lock lock(mutex_);
    std::vector<DataRow> out;
    for (const auto& id : order_) {
        if (const auto& data = sessions_.at(id).data) out.push_back(*data);
    }
    return out;
}

MessageRecord Blackboard::incoming_message(const std::string& session_id, int j,
                                           const std::string& receiver) const {
    std::shared_lock lock(mutex_);
    const auto* entry = find(session_id);
    const int index = j - 2;
    if (entry && index >= 0 && index < static_cast<int>(entry->messages.size()) &&
        entry->messages[index].receiver == receiver) {
        return entry->messages[index];
    }
    throw Error(ErrorCode::not_found, "no message (" + session_id + ", " + std::to_string(j - 1) +
                                          ") addressed to '" + receiver + "'");
}

MessageRecord Blackboard::own_previous_message(const std::string& session_id, int j,
                                               const std::string& sender) const {
    std::shared_lock lock(mutex_);
    const auto* entry = find(session_id);
    const int index = j - 3;
    if (entry && j >= 3 && index < static_cast<int>(entry->messages.size()) &&
        entry->messages[index].sender == sender) {
        return entry->messages[index];
    }
    throw Error(ErrorCode::not_found, "no message (" + session_id + ", " + std::to_string(j - 2) +
                                          ") sent by '" + sender + "'");
}

std::optional<ContextRow> Blackboard::context(const std::string& session_id, int j) const {
    std::shared_lock lock(mutex_);
    const auto* entry = find(session_id);
    if (!entry) return std::nullopt;
    auto it = entry->contexts.find(j);
    if (it == entry->contexts.end()) return std::nullopt;
    return it->second;
}

int Blackboard::message_count(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    const auto* entry = find(session_id);
    return entry ? static_cast<int>(entry->messages.size()) : 0;
}

std::optional<StatusRecord> Blackboard::status(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    const auto* entry = find(session_id);
    return entry ? entry->status : std::nullopt;
}

std::vector<std::string> Blackboard::session_ids() const {
    std::shared_lock lock(mutex_);
    return order_;
}

std::vector<MessageRecord> Blackboard::export_transcript(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    const auto* entry = find(session_id);
    if (!entry) throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'");
    return entry->messages;
}

std::vector<Transcript> Blackboard::transcripts() const {
    std::shared_lock lock(mutex_);
    std::vector<Transcript> out;
    for (const auto& id : order_) {
        const auto& entry = sessions_.at(id);
        if (!entry.messages.empty()) out.push_back(Transcript{id, entry.messages});
    }
    return out;
}

std::vector<std::string> Blackboard::import_transcript(std::istream& in) {
    auto transcripts = group_transcripts(read_messages(in));
    std::vector<std::string> ids;
    {
        std::shared_lock lock(mutex_);
        for (const auto& transcript : transcripts) {
            const auto* entry = find(transcript.session_id);
            if (entry && !entry->messages.empty()) {
                throw Error(ErrorCode::conflict, "session '" + transcript.session_id + "' already has messages");
            }
        }
    }
    for (const auto& transcript : transcripts) {
        for (const auto& record : transcript.messages) insert_message(record);
        ids.push_back(transcript.session_id);
    }
    return ids;
}

}  // namespace pxp
