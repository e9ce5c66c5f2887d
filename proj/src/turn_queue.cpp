#include "pxp/turn_queue.hpp"

#include "pxp/error.hpp"

#include <algorithm>
#include <tuple>

namespace pxp {

void TurnQueue::publish(PendingTurn turn) {
    std::lock_guard lock(mutex_);
    if (shutting_down_) throw Interrupted();
    if (open_.contains(turn.session_id)) {
        throw Error(ErrorCode::conflict, "session '" + turn.session_id + "' already has an open turn");
    }
    known_sessions_.insert(turn.session_id);
    const std::string key = turn.session_id;
    open_.emplace(key, Slot{std::move(turn), std::nullopt});
    changed_.notify_all();
}

std::optional<HumanSubmission> TurnQueue::wait(const std::string& session_id, int msg_number) {
    std::unique_lock lock(mutex_);
    auto it = open_.find(session_id);
    if (it == open_.end() || it->second.turn.msg_number != msg_number) {
        throw Error(ErrorCode::not_found, "no open turn for (" + session_id + ", " + std::to_string(msg_number) + ")");
    }
    const auto deadline = it->second.turn.deadline;
    const bool answered = changed_.wait_until(lock, deadline, [&] {
        auto slot = open_.find(session_id);
        return shutting_down_ || slot == open_.end() || slot->second.answer.has_value();
    });
    auto slot = open_.find(session_id);
    if (slot == open_.end()) return std::nullopt;
    if (shutting_down_ && !slot->second.answer) {
        open_.erase(slot);
        throw Interrupted();
    }
    std::optional<HumanSubmission> answer = answered ? slot->second.answer : std::nullopt;
    if (!answer) closed_.emplace(session_id, msg_number);
    open_.erase(slot);
    return answer;
}

SubmitResult TurnQueue::submit(const HumanSubmission& submission) {
    if (submission.tag == Tag::init) {
        throw Error(ErrorCode::validation, "a human turn cannot carry the INIT tag", {"tag"});
    }
    std::vector<std::string> empty;
    if (submission.prediction.empty()) empty.emplace_back("prediction");
    if (submission.explanation.empty()) empty.emplace_back("explanation");
    if (!empty.empty()) throw Error(ErrorCode::validation, "prediction and explanation are required", empty);

    std::lock_guard lock(mutex_);
    const std::string turn_name =
        "(" + submission.session_id + ", " + std::to_string(submission.msg_number) + ")";
    auto it = open_.find(submission.session_id);
    if (it == open_.end() || it->second.answer) {
        if (closed_.contains({submission.session_id, submission.msg_number}) ||
            (it != open_.end() && it->second.turn.msg_number == submission.msg_number)) {
            throw Error(ErrorCode::conflict, "turn " + turn_name + " is already closed");
        }
        if (known_sessions_.contains(submission.session_id)) {
            throw Error(ErrorCode::conflict, "turn " + turn_name + " is not open");
        }
        throw Error(ErrorCode::not_found, "no open turn for session '" + submission.session_id + "'");
    }
    Slot& slot = it->second;
    if (slot.turn.msg_number != submission.msg_number) {
        throw Error(ErrorCode::conflict, "stale turn " + turn_name + "; open turn is j=" +
                                             std::to_string(slot.turn.msg_number));
    }
    if (!slot.turn.author.empty() && submission.author != slot.turn.author) {
        throw Error(ErrorCode::validation, "turn " + turn_name + " belongs to another author", {"author"});
    }

    SubmitResult result;
    result.stored_tag = (!slot.turn.reject_allowed && submission.tag == Tag::reject) ? Tag::refute : submission.tag;
    result.downgraded = result.stored_tag != submission.tag;

    HumanSubmission stored = submission;
    stored.tag = result.stored_tag;
    slot.answer = std::move(stored);
    closed_.emplace(submission.session_id, submission.msg_number);
    changed_.notify_all();
    return result;
}

std::vector<PendingTurn> TurnQueue::list_pending(const std::string& author) const {
    std::lock_guard lock(mutex_);
    std::vector<PendingTurn> out;
    for (const auto& [id, slot] : open_) {
        if (slot.answer) continue;
        if (!author.empty() && slot.turn.author != author) continue;
        out.push_back(slot.turn);
    }
    std::sort(out.begin(), out.end(), [](const PendingTurn& a, const PendingTurn& b) {
        return std::tie(a.deadline, a.session_id) < std::tie(b.deadline, b.session_id);
    });
    return out;
}

std::optional<PendingTurn> TurnQueue::pending_for(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = open_.find(session_id);
    if (it == open_.end() || it->second.answer) return std::nullopt;
    return it->second.turn;
}

void TurnQueue::cancel(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    auto it = open_.find(session_id);
    if (it == open_.end()) return;
    closed_.emplace(session_id, it->second.turn.msg_number);
    open_.erase(it);
    changed_.notify_all();
}

void TurnQueue::shutdown() {
    std::lock_guard lock(mutex_);
    shutting_down_ = true;
    changed_.notify_all();
}

}  // namespace pxp
