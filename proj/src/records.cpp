#include "pxp/records.hpp"

#include "pxp/error.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace pxp {

namespace {

using ojson = nlohmann::ordered_json;

[[noreturn]] void parse_fail(std::size_t line_number, const std::string& what) {
    std::string message = "line " + std::to_string(line_number) + ": " + what;
    throw Error(ErrorCode::parse, message);
}

ojson parse_object(std::string_view line, std::size_t line_number) {
    ojson value;
    try {
        value = ojson::parse(line);
    } catch (const ojson::parse_error& e) {
        parse_fail(line_number, std::string("malformed JSON: ") + e.what());
    }
    if (!value.is_object()) parse_fail(line_number, "expected a JSON object");
    return value;
}

std::string take_string(ojson& obj, const char* key, std::size_t line_number) {
    auto it = obj.find(key);
    if (it == obj.end()) parse_fail(line_number, std::string("missing field '") + key + "'");
    if (!it->is_string()) parse_fail(line_number, std::string("field '") + key + "' must be a string");
    std::string value = it->get<std::string>();
    obj.erase(it);
    return value;
}

std::optional<std::string> take_optional_string(ojson& obj, const char* key,
                                                std::size_t line_number) {
    if (!obj.contains(key)) return std::nullopt;
    return take_string(obj, key, line_number);
}

int take_int(ojson& obj, const char* key, std::size_t line_number) {
    auto it = obj.find(key);
    if (it == obj.end()) parse_fail(line_number, std::string("missing field '") + key + "'");
    if (!it->is_number_integer()) {
        parse_fail(line_number, std::string("field '") + key + "' must be an integer");
    }
    int value = it->get<int>();
    obj.erase(it);
    return value;
}

Tag take_tag(ojson& obj, std::size_t line_number) {
    std::string name = take_string(obj, "tag", line_number);
    auto tag = parse_tag(name);
    if (!tag) parse_fail(line_number, "unknown tag '" + name + "'");
    return *tag;
}

template <typename Decode>
auto read_lines(std::istream& in, Decode decode) {
    std::vector<decltype(decode(std::string_view{}, std::size_t{}))> out;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(decode(line, line_number));
    }
    return out;
}

ojson payload_json(const Payload& payload) {
    return ojson{{"tag", tag_name(payload.tag)},
                 {"prediction", payload.prediction},
                 {"explanation", payload.explanation}};
}

}  // namespace

std::string_view instance_kind_name(InstanceKind kind) noexcept {
    return kind == InstanceKind::text ? "text" : "image_ref";
}

bool MessageRecord::same_content(const MessageRecord& other) const {
    return session_id == other.session_id && msg_number == other.msg_number &&
           sender == other.sender && receiver == other.receiver && payload == other.payload &&
           extra == other.extra;
}

std::string utc_timestamp_now() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const auto millis = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    const std::time_t seconds = system_clock::to_time_t(now);
    std::tm utc{};
    gmtime_r(&seconds, &utc);
    char buffer[32];
    std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%S", &utc);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buffer, static_cast<int>(millis));
    return out;
}

std::string encode_message(const MessageRecord& record) {
    ojson obj{{"s", record.session_id},
              {"j", record.msg_number},
              {"sender", record.sender},
              {"receiver", record.receiver},
              {"tag", tag_name(record.payload.tag)},
              {"prediction", record.payload.prediction},
              {"explanation", record.payload.explanation},
              {"ts", record.timestamp}};
    for (const auto& [key, value] : record.extra.items()) obj[key] = value;
    return obj.dump();
}

MessageRecord decode_message(std::string_view line, std::size_t line_number) {
    ojson obj = parse_object(line, line_number);
    MessageRecord record;
    record.session_id = take_string(obj, "s", line_number);
    record.msg_number = take_int(obj, "j", line_number);
    record.sender = take_string(obj, "sender", line_number);
    record.receiver = take_string(obj, "receiver", line_number);
    record.payload.tag = take_tag(obj, line_number);
    record.payload.prediction = take_string(obj, "prediction", line_number);
    record.payload.explanation = take_string(obj, "explanation", line_number);
    record.timestamp = take_optional_string(obj, "ts", line_number).value_or("");
    record.extra = std::move(obj);
    return record;
}

std::string encode_data_row(const DataRow& row) {
    ojson obj{{"s", row.session_id},
              {"x_kind", instance_kind_name(row.instance.kind)},
              {"x_value", row.instance.value}};
    if (row.truth) {
        obj["truth_y"] = row.truth->prediction;
        obj["truth_e"] = row.truth->explanation;
    }
    return obj.dump();
}

DataRow decode_data_row(std::string_view line, std::size_t line_number) {
    ojson obj = parse_object(line, line_number);
    DataRow row;
    row.session_id = take_string(obj, "s", line_number);
    const std::string kind = take_string(obj, "x_kind", line_number);
    if (kind == "text") {
        row.instance.kind = InstanceKind::text;
    } else if (kind == "image_ref") {
        row.instance.kind = InstanceKind::image_ref;
    } else {
        parse_fail(line_number, "x_kind must be \"text\" or \"image_ref\", got '" + kind + "'");
    }
    row.instance.value = take_string(obj, "x_value", line_number);
    auto truth_y = take_optional_string(obj, "truth_y", line_number);
    auto truth_e = take_optional_string(obj, "truth_e", line_number);
    if (truth_y.has_value() != truth_e.has_value()) {
        parse_fail(line_number, "truth_y and truth_e must be given together");
    }
    if (truth_y) row.truth = GroundTruth{*truth_y, *truth_e};
    return row;
}

std::string encode_context_row(const ContextRow& row) {
    ojson entries = ojson::array();
    for (const auto& entry : row.context) {
        ojson item{{"j", entry.msg_number}, {"sender", entry.sender}};
        item.update(payload_json(entry.payload));
        entries.push_back(std::move(item));
    }
    return ojson{{"s", row.session_id}, {"j", row.msg_number}, {"c", std::move(entries)}}.dump();
}

ContextRow decode_context_row(std::string_view line, std::size_t line_number) {
    ojson obj = parse_object(line, line_number);
    ContextRow row;
    row.session_id = take_string(obj, "s", line_number);
    row.msg_number = take_int(obj, "j", line_number);
    auto entries = obj.find("c");
    if (entries == obj.end() || !entries->is_array()) parse_fail(line_number, "field 'c' must be an array");
    for (auto& item : *entries) {
        if (!item.is_object()) parse_fail(line_number, "context entries must be objects");
        ContextEntry entry;
        entry.msg_number = take_int(item, "j", line_number);
        entry.sender = take_string(item, "sender", line_number);
        entry.payload.tag = take_tag(item, line_number);
        entry.payload.prediction = take_string(item, "prediction", line_number);
        entry.payload.explanation = take_string(item, "explanation", line_number);
        row.context.push_back(std::move(entry));
    }
    return row;
}

std::vector<MessageRecord> read_messages(std::istream& in) {
    return read_lines(in, [](std::string_view line, std::size_t n) { return decode_message(line, n); });
}

std::vector<DataRow> read_data_rows(std::istream& in) {
    return read_lines(in, [](std::string_view line, std::size_t n) { return decode_data_row(line, n); });
}

std::vector<DataRow> load_data_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::not_found, "cannot open data file " + path.string());
    try {
        auto rows = read_data_rows(in);
        std::unordered_map<std::string, int> seen;
        for (const auto& row : rows) {
            if (++seen[row.session_id] > 1) {
                throw Error(ErrorCode::validation, "duplicate session id '" + row.session_id + "'");
            }
        }
        return rows;
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what(), e.fields());
    }
}

void validate_transcript(const Transcript& transcript) {
    const std::string& s = transcript.session_id;
    auto invalid = [&](int j, const std::string& what) {
        throw Error(ErrorCode::validation,
                    "session '" + s + "' message " + std::to_string(j) + ": " + what);
    };
    for (std::size_t i = 0; i < transcript.messages.size(); ++i) {
        const MessageRecord& record = transcript.messages[i];
        const int expected = static_cast<int>(i) + 1;
        if (record.session_id != s) invalid(record.msg_number, "belongs to another session");
        if (record.msg_number != expected) {
            invalid(record.msg_number, "message numbers must be contiguous from 1 (expected " +
                                           std::to_string(expected) + ")");
        }
        if (record.sender.empty() || record.receiver.empty()) invalid(expected, "empty agent id");
        if (record.sender == record.receiver) invalid(expected, "sender equals receiver");
        if (expected == 1 && record.sender != machine_id) invalid(expected, "first sender must be \"m\"");
        if ((expected == 1) != (record.payload.tag == Tag::init)) {
            invalid(expected, "INIT is required at message 1 and only there");
        }
        if (record.payload.prediction.empty() || record.payload.explanation.empty()) {
            invalid(expected, "prediction and explanation must be non-empty");
        }
        if (i > 0) {
            const MessageRecord& previous = transcript.messages[i - 1];
            if (record.sender == previous.sender) invalid(expected, "senders must alternate");
            if (record.sender != previous.receiver) invalid(expected, "sender is not the previous receiver");
        }
    }
}

std::vector<Transcript> group_transcripts(const std::vector<MessageRecord>& records) {
    std::vector<Transcript> out;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& record : records) {
        auto [it, inserted] = index.try_emplace(record.session_id, out.size());
        if (inserted) out.push_back(Transcript{record.session_id, {}});
        out[it->second].messages.push_back(record);
    }
    for (const auto& transcript : out) validate_transcript(transcript);
    return out;
}

std::vector<Transcript> load_transcript_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::not_found, "cannot open transcript " + path.string());
    try {
        return group_transcripts(read_messages(in));
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what(), e.fields());
    }
}

void write_messages(std::ostream& out, const std::vector<MessageRecord>& records) {
    for (const auto& record : records) out << encode_message(record) << '\n';
}

}  // namespace pxp
