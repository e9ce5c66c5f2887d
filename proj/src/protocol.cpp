#include "pxp/protocol.hpp"

#include "pxp/error.hpp"

#include <string>
#include <vector>

namespace pxp {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::validation: return "validation";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::timeout: return "timeout";
        case ErrorCode::parse: return "parse";
        case ErrorCode::config: return "config";
        case ErrorCode::transport: return "transport";
        case ErrorCode::contract: return "contract";
    }
    return "unknown";
}

std::string_view tag_name(Tag tag) noexcept {
    switch (tag) {
        case Tag::init: return "INIT";
        case Tag::ratify: return "RATIFY";
        case Tag::refute: return "REFUTE";
        case Tag::revise: return "REVISE";
        case Tag::reject: return "REJECT";
    }
    return "INIT";
}

std::optional<Tag> parse_tag(std::string_view name) noexcept {
    for (Tag tag : all_tags) {
        if (tag_name(tag) == name) return tag;
    }
    return std::nullopt;
}

void validate_payload(const Payload& payload) {
    std::vector<std::string> fields;
    if (payload.prediction.empty()) fields.emplace_back("prediction");
    if (payload.explanation.empty()) fields.emplace_back("explanation");
    if (!fields.empty()) {
        throw Error(ErrorCode::validation, "payload prediction and explanation must be non-empty",
                    std::move(fields));
    }
}

Payload initial_payload(std::string prediction, std::string explanation) {
    Payload payload{Tag::init, std::move(prediction), std::move(explanation)};
    validate_payload(payload);
    return payload;
}

Category categorize(bool match, bool agree) noexcept {
    if (match) return agree ? Category::a : Category::b;
    return agree ? Category::c : Category::d;
}

void validate_session_config(const SessionConfig& config) {
    std::vector<std::string> fields;
    if (config.n < 1) fields.emplace_back("session.n");
    if (config.k < 1) fields.emplace_back("session.k");
    if (!fields.empty()) {
        throw Error(ErrorCode::validation, "session bounds require n >= 1 and k >= 1",
                    std::move(fields));
    }
}

Tag decide_tag(const ComparisonOutcome& outcome, int j, int k) {
    if (j < 2) fail(ErrorCode::contract, "decide_tag requires j >= 2 (message 1 is INIT)");
    if (k < 1) fail(ErrorCode::contract, "decide_tag requires k >= 1");

    const Tag keep_or_move = outcome.changed ? Tag::revise : Tag::refute;
    switch (categorize(outcome.match_incoming, outcome.agree_incoming)) {
        case Category::a: return Tag::ratify;
        case Category::b:
        case Category::c: return keep_or_move;
        case Category::d: return j > k ? Tag::reject : keep_or_move;
    }
    return keep_or_move;
}

Tag downgrade_early_reject(Tag supplied, int j, int k) noexcept {
    return (supplied == Tag::reject && j <= k) ? Tag::refute : supplied;
}

bool session_stopped(Tag machine_tag, Tag human_tag, Role last_sender) noexcept {
    const bool mutual = machine_tag == Tag::ratify && human_tag == Tag::ratify;
    const Tag last = last_sender == Role::machine ? machine_tag : human_tag;
    return mutual || last == Tag::reject;
}

}  // namespace pxp
