#pragma once

// Pure tag-decision logic of the intelligibility protocol. Nothing in here
// knows about agents, storage or scheduling.

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace pxp {

enum class Tag { init, ratify, refute, revise, reject };

inline constexpr std::array<Tag, 5> all_tags{Tag::init, Tag::ratify, Tag::refute, Tag::revise,
                                             Tag::reject};

/// Uppercase wire name: "INIT", "RATIFY", ...
std::string_view tag_name(Tag tag) noexcept;

/// Exact, case-sensitive inverse of tag_name.
std::optional<Tag> parse_tag(std::string_view name) noexcept;

/// Reserved agent ids.
inline constexpr std::string_view human_id = "h";
inline constexpr std::string_view machine_id = "m";

/// Which side of the session an agent plays. The machine always speaks first.
enum class Role { machine, human };

inline constexpr Role other(Role role) noexcept {
    return role == Role::machine ? Role::human : Role::machine;
}

/// Message body: tag, prediction and explanation.
struct Payload {
    Tag tag = Tag::init;
    std::string prediction;
    std::string explanation;

    friend bool operator==(const Payload&, const Payload&) = default;
};

/// Throws ErrorCode::validation when prediction or explanation is empty.
void validate_payload(const Payload& payload);

/// First message of a session.
Payload initial_payload(std::string prediction, std::string explanation);

/// Comparator results an agent computes before tagging its message at j >= 2.
///
/// match_incoming / agree_incoming compare the incoming message against the
/// agent's own previous position; changed records whether the agent's fresh
/// answer moved away from that previous position.
struct ComparisonOutcome {
    bool match_incoming = false;
    bool agree_incoming = false;
    bool changed = false;

    friend bool operator==(const ComparisonOutcome&, const ComparisonOutcome&) = default;
};

/// Category of the (match, agree) cell in the tag matrix.
enum class Category { a, b, c, d };

Category categorize(bool match, bool agree) noexcept;

struct SessionConfig {
    int n = 10;  ///< upper bound on messages per session
    int k = 4;   ///< REJECT is permitted only for message numbers j > k
    std::string q_h;
    std::string q_m;
};

/// Throws ErrorCode::validation with field paths when n < 1 or k < 1.
void validate_session_config(const SessionConfig& config);

/// Tag for message j (j >= 2). Throws ErrorCode::contract for j < 2 or k < 1;
/// message 1 is always INIT and is handled by the caller.
Tag decide_tag(const ComparisonOutcome& outcome, int j, int k);

/// A REJECT supplied for j <= k is stored as REFUTE.
Tag downgrade_early_reject(Tag supplied, int j, int k) noexcept;

/// Stop guard evaluated after each message. INIT counts as "no decision yet".
bool session_stopped(Tag machine_tag, Tag human_tag, Role last_sender) noexcept;

}  // namespace pxp
