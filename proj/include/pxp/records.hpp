#pragma once

// Row types of the shared store and their line-delimited JSON encodings.

#include "pxp/protocol.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pxp {

enum class InstanceKind { text, image_ref };

std::string_view instance_kind_name(InstanceKind kind) noexcept;

/// A data instance. For image_ref the value is a path or URI, never bytes.
struct Instance {
    InstanceKind kind = InstanceKind::text;
    std::string value;

    friend bool operator==(const Instance&, const Instance&) = default;
};

struct GroundTruth {
    std::string prediction;
    std::string explanation;

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct DataRow {
    std::string session_id;
    Instance instance;
    std::optional<GroundTruth> truth;

    friend bool operator==(const DataRow&, const DataRow&) = default;
};

struct MessageRecord {
    std::string session_id;
    int msg_number = 0;
    std::string sender;
    std::string receiver;
    Payload payload;
    std::string timestamp;  ///< ISO-8601 UTC
    /// Fields not known to this version, kept in their original order.
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();

    /// Equality ignoring the timestamp.
    bool same_content(const MessageRecord& other) const;
};

struct ContextEntry {
    int msg_number = 0;
    std::string sender;
    Payload payload;

    friend bool operator==(const ContextEntry&, const ContextEntry&) = default;
};

using Context = std::vector<ContextEntry>;

struct ContextRow {
    std::string session_id;
    int msg_number = 0;
    Context context;

    friend bool operator==(const ContextRow&, const ContextRow&) = default;
};

/// All messages of one session, ordered by message number.
struct Transcript {
    std::string session_id;
    std::vector<MessageRecord> messages;
};

std::string utc_timestamp_now();

// Line codecs. Parsers throw ErrorCode::parse naming the line number.
std::string encode_message(const MessageRecord& record);
MessageRecord decode_message(std::string_view line, std::size_t line_number = 0);

std::string encode_data_row(const DataRow& row);
DataRow decode_data_row(std::string_view line, std::size_t line_number = 0);

std::string encode_context_row(const ContextRow& row);
ContextRow decode_context_row(std::string_view line, std::size_t line_number = 0);

/// Reads every non-blank line of a transcript stream.
std::vector<MessageRecord> read_messages(std::istream& in);
std::vector<DataRow> read_data_rows(std::istream& in);

std::vector<DataRow> load_data_file(const std::filesystem::path& path);

/// Groups records by session (first-appearance order) and checks that each
/// session is contiguous from 1, alternates senders and starts with "m".
std::vector<Transcript> group_transcripts(const std::vector<MessageRecord>& records);

/// Throws ErrorCode::validation on the first violated transcript invariant.
void validate_transcript(const Transcript& transcript);

std::vector<Transcript> load_transcript_file(const std::filesystem::path& path);

void write_messages(std::ostream& out, const std::vector<MessageRecord>& records);

}  // namespace pxp
