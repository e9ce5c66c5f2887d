#include "pxp/comparators.hpp"

#include "pxp/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>

namespace pxp {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(lower(c));
    }
    return out;
}

bool exact_match(std::string_view a, std::string_view b) {
    return a == b || normalize_text(a) == normalize_text(b);
}

std::set<std::string> token_set(std::string_view text) {
    std::set<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current.push_back(lower(c));
        } else if (!current.empty()) {
            tokens.insert(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.insert(std::move(current));
    return tokens;
}

double jaccard(std::string_view a, std::string_view b) {
    const auto left = token_set(a);
    const auto right = token_set(b);
    if (left.empty() && right.empty()) return 1.0;
    std::vector<std::string> common;
    std::set_intersection(left.begin(), left.end(), right.begin(), right.end(), std::back_inserter(common));
    const std::size_t united = left.size() + right.size() - common.size();
    return static_cast<double>(common.size()) / static_cast<double>(united);
}

bool token_overlap_agree(std::string_view a, std::string_view b, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) {
        throw Error(ErrorCode::contract, "token overlap threshold must lie in [0, 1]");
    }
    if (a == b) return true;
    return jaccard(a, b) >= threshold;
}

CheckerReply parse_checker_reply(std::string_view reply) {
    std::size_t i = 0;
    while (i < reply.size() && !std::isalpha(static_cast<unsigned char>(reply[i]))) ++i;
    std::string word;
    while (i < reply.size() && std::isalpha(static_cast<unsigned char>(reply[i]))) word.push_back(lower(reply[i++]));
    if (word == "yes") return CheckerReply::yes;
    if (word == "no") return CheckerReply::no;
    return CheckerReply::unrecognized;
}

bool llm_checker_agree(std::string_view a, std::string_view b, ChatClient& checker, const CheckerConfig& config) {
    if (a == b) return true;
    ChatRequest request;
    request.max_tokens = config.max_tokens;
    request.temperature = config.temperature;
    std::string prompt = config.question;
    prompt += " Answer yes or no.\n\nFirst:\n";
    prompt += a;
    prompt += "\n\nSecond:\n";
    prompt += b;
    request.messages.push_back(ChatMessage{"user", std::move(prompt), {}});

    const std::string reply = checker.complete(request);
    switch (parse_checker_reply(reply)) {
        case CheckerReply::yes: return true;
        case CheckerReply::no: return false;
        case CheckerReply::unrecognized: break;
    }
    spdlog::warn("checker reply not yes/no, treating as disagreement: \"{}\"", reply);
    return false;
}

Agreer make_llm_checker(std::shared_ptr<ChatClient> checker, CheckerConfig config) {
    return [checker = std::move(checker), config = std::move(config)](std::string_view a, std::string_view b) {
        return llm_checker_agree(a, b, *checker, config);
    };
}

double validation_accuracy(const Payload& hypothesis, const std::vector<DataRow>& validation_set,
                           const Matcher& matcher, const Evaluator& evaluator) {
    std::size_t scored = 0;
    std::size_t correct = 0;
    for (const auto& row : validation_set) {
        if (!row.truth) continue;
        ++scored;
        if (matcher(evaluator(hypothesis, row), row.truth->prediction)) ++correct;
    }
    if (scored == 0) throw Error(ErrorCode::config, "validation set has no rows with ground truth");
    return static_cast<double>(correct) / static_cast<double>(scored);
}

bool validation_gated_accept(const Payload& candidate, const Payload& previous,
                             const std::vector<DataRow>& validation_set, const Matcher& matcher,
                             const Evaluator& evaluator) {
    if (validation_set.empty()) throw Error(ErrorCode::config, "validation-gated revision needs a validation set");
    return validation_accuracy(candidate, validation_set, matcher, evaluator) >
           validation_accuracy(previous, validation_set, matcher, evaluator);
}

ValidationGatedRevision::ValidationGatedRevision(std::vector<DataRow> validation_set, Matcher matcher,
                                                 Evaluator evaluator)
    : validation_set_(std::move(validation_set)), matcher_(std::move(matcher)), evaluator_(std::move(evaluator)) {
    if (validation_set_.empty()) {
        throw Error(ErrorCode::config, "validation-gated revision needs a validation set");
    }
}

bool ValidationGatedRevision::accept_revision(const Payload& candidate, const Payload& previous) {
    return validation_gated_accept(candidate, previous, validation_set_, matcher_, evaluator_);
}

Evaluator hypothesis_label_evaluator() {
    return [](const Payload& hypothesis, const DataRow&) { return hypothesis.prediction; };
}

}  // namespace pxp
