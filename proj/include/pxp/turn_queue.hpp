#pragma once

// Rendezvous between a waiting interactive agent and the human submitting a
// turn through the service. Each (session, j) is consumed exactly once.

#include "pxp/protocol.hpp"
#include "pxp/records.hpp"

#include <chrono>
#include <condition_variable>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace pxp {

using Clock = std::chrono::system_clock;

/// Thrown from TurnQueue::wait when the queue shuts down. The session is left
/// non-terminal so a later resume can continue it.
class Interrupted : public std::exception {
public:
    const char* what() const noexcept override { return "turn queue shut down"; }
};

struct PendingTurn {
    std::string session_id;
    int msg_number = 0;
    Payload incoming;
    Instance instance;
    bool reject_allowed = false;
    Clock::time_point deadline;
    std::string author;
};

struct HumanSubmission {
    std::string session_id;
    int msg_number = 0;
    Tag tag = Tag::ratify;
    std::string prediction;
    std::string explanation;
    std::string author;
};

struct SubmitResult {
    Tag stored_tag = Tag::ratify;
    bool downgraded = false;
};

class TurnQueue {
public:
    /// Opens a turn. A session may hold one open turn; a second is a conflict.
    void publish(PendingTurn turn);

    /// Blocks until the turn is answered or its deadline passes. The returned
    /// submission already carries the stored (possibly downgraded) tag. On
    /// timeout the turn is closed and nullopt returned.
    std::optional<HumanSubmission> wait(const std::string& session_id, int msg_number);

    /// Closes the turn with the given answer. Errors: validation (INIT tag,
    /// empty texts, wrong author), not_found (no turn ever opened for the
    /// session), conflict (stale j or turn already answered).
    SubmitResult submit(const HumanSubmission& submission);

    /// Open, unanswered turns for `author` (all authors when empty), ordered
    /// by deadline then session id.
    std::vector<PendingTurn> list_pending(const std::string& author = {}) const;

    std::optional<PendingTurn> pending_for(const std::string& session_id) const;

    /// Withdraws an open turn, e.g. when its run is shut down.
    void cancel(const std::string& session_id);

    /// Wakes every waiter; their waits throw Interrupted.
    void shutdown();

private:
    struct Slot {
        PendingTurn turn;
        std::optional<HumanSubmission> answer;
    };

    mutable std::mutex mutex_;
    std::condition_variable changed_;
    std::map<std::string, Slot> open_;
    std::set<std::pair<std::string, int>> closed_;
    std::set<std::string> known_sessions_;
    bool shutting_down_ = false;
};

}  // namespace pxp
