#pragma once

// MATCH / AGREE predicates and the revision policies that decide whether an
// agent adopts a changed answer.

#include "pxp/llm_client.hpp"
#include "pxp/protocol.hpp"
#include "pxp/records.hpp"

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace pxp {

/// Prediction comparator. Must be reflexive.
using Matcher = std::function<bool(std::string_view, std::string_view)>;
/// Explanation comparator. Byte-identical inputs must compare true.
using Agreer = std::function<bool(std::string_view, std::string_view)>;

/// Trim, collapse internal whitespace to one space, ASCII case-fold.
std::string normalize_text(std::string_view text);

bool exact_match(std::string_view a, std::string_view b);

/// Lower-cased alphanumeric tokens.
std::set<std::string> token_set(std::string_view text);

/// |A ∩ B| / |A ∪ B| over token sets; 1 when both are empty.
double jaccard(std::string_view a, std::string_view b);

bool token_overlap_agree(std::string_view a, std::string_view b, double threshold);

struct CheckerConfig {
    std::string question = "Are these two reports/pathways consistent with each other?";
    int max_tokens = 10;
    double temperature = 0.0;
};

enum class CheckerReply { yes, no, unrecognized };

/// Looks at the first word only, case-insensitively.
CheckerReply parse_checker_reply(std::string_view reply);

/// Asks a checker model whether two explanations are consistent. Identical
/// inputs short-circuit to true without a request. Unrecognized replies count
/// as disagreement and are logged.
bool llm_checker_agree(std::string_view a, std::string_view b, ChatClient& checker,
                       const CheckerConfig& config = {});

Agreer make_llm_checker(std::shared_ptr<ChatClient> checker, CheckerConfig config = {});

class RevisionPolicy {
public:
    virtual ~RevisionPolicy() = default;
    virtual bool accept_revision(const Payload& candidate, const Payload& previous) = 0;
};

class AlwaysRevise final : public RevisionPolicy {
public:
    bool accept_revision(const Payload&, const Payload&) override { return true; }
};

/// Prediction an agent would make for a validation instance if it held the
/// given (prediction, explanation) as its current position.
using Evaluator = std::function<std::string(const Payload& hypothesis, const DataRow& instance)>;

/// Fraction of validation rows whose truth the matcher accepts. Rows without
/// truth are skipped; throws ErrorCode::config if none remain.
double validation_accuracy(const Payload& hypothesis, const std::vector<DataRow>& validation_set,
                           const Matcher& matcher, const Evaluator& evaluator);

/// True iff validation accuracy under `candidate` strictly exceeds accuracy
/// under `previous`. Empty validation set: ErrorCode::config.
bool validation_gated_accept(const Payload& candidate, const Payload& previous,
                             const std::vector<DataRow>& validation_set, const Matcher& matcher,
                             const Evaluator& evaluator);

class ValidationGatedRevision final : public RevisionPolicy {
public:
    ValidationGatedRevision(std::vector<DataRow> validation_set, Matcher matcher, Evaluator evaluator);

    bool accept_revision(const Payload& candidate, const Payload& previous) override;

private:
    std::vector<DataRow> validation_set_;
    Matcher matcher_;
    Evaluator evaluator_;
};

/// Predicts the hypothesis' own prediction for every instance, so accuracy is
/// the share of validation rows carrying that label.
Evaluator hypothesis_label_evaluator();

}  // namespace pxp
