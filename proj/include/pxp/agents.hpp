#pragma once

// Agent backends, prompt assembly, context update and the per-message agent
// step that decides a message's tag.

#include "pxp/blackboard.hpp"
#include "pxp/comparators.hpp"
#include "pxp/llm_client.hpp"
#include "pxp/protocol.hpp"
#include "pxp/records.hpp"
#include "pxp/turn_queue.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pxp {

struct AgentRequest {
    std::string_view query;
    const DataRow& instance;
    /// Messages visible to the agent before it answers: 1..j-1.
    const Context& context;
    std::string_view session_id;
    int msg_number = 1;
    int reject_threshold = 1;
};

struct AgentResponse {
    std::string prediction;
    std::string explanation;
    /// Only live humans supply their own tag.
    std::optional<Tag> supplied_tag;
};

class AgentBehavior {
public:
    virtual ~AgentBehavior() = default;
    virtual AgentResponse respond(const AgentRequest& request) = 0;
    virtual std::string_view kind() const = 0;
};

/// Deterministic agent driven by a callback.
class ScriptedAgent final : public AgentBehavior {
public:
    using Script = std::function<AgentResponse(const AgentRequest&)>;

    explicit ScriptedAgent(Script script) : script_(std::move(script)) {}

    AgentResponse respond(const AgentRequest& request) override { return script_(request); }
    std::string_view kind() const override { return "scripted"; }

    /// Answers with the agent's i-th entry, where i counts the agent's own
    /// turns in the session; the last entry repeats. Per-instance tables are
    /// keyed by session id or instance value and override `fallback`.
    static std::unique_ptr<ScriptedAgent> sequence(
        std::vector<std::pair<std::string, std::string>> fallback,
        std::map<std::string, std::vector<std::pair<std::string, std::string>>> per_instance = {});

    /// Repeats the incoming message; the first message comes from `opening`
    /// (or the instance's ground truth when `opening` is empty).
    static std::unique_ptr<ScriptedAgent> echo(std::optional<std::pair<std::string, std::string>> opening = {});

private:
    Script script_;
};

/// Human stand-in answering from the immutable ground-truth table.
class ProxyHumanAgent final : public AgentBehavior {
public:
    AgentResponse respond(const AgentRequest& request) override;
    std::string_view kind() const override { return "proxy"; }
};

/// Returns the stored truth; ErrorCode::config when the instance has none.
std::pair<std::string, std::string> proxy_human_respond(const DataRow& instance);

struct PromptTemplate {
    std::string system_text;
    /// Placeholders: {query}, {instance}, {history}.
    std::string turn_text;

    static PromptTemplate standard();
};

struct AssembledPrompt {
    std::string system;
    std::string user;
    std::vector<std::string> attachments;
};

/// Chronological history blocks, or "" for an empty context.
std::string render_history(const Context& context);

/// Binds {query}, {instance} and {history}. Image instances are referenced by
/// attachment slot unless `image_rendering` supplies text for them. Any other
/// placeholder is a configuration error.
AssembledPrompt assemble_prompt(const PromptTemplate& prompt_template, std::string_view query,
                                const DataRow& instance, const Context& context,
                                const std::optional<std::string>& image_rendering = std::nullopt);

/// Splits a reply carrying "PREDICTION:" and "EXPLANATION:" parts.
std::optional<std::pair<std::string, std::string>> parse_structured_reply(std::string_view reply);

struct LlmAgentOptions {
    int max_tokens = 300;
    std::optional<double> temperature;
    /// Text stand-ins for image instances, keyed by session id or image path.
    std::map<std::string, std::string> image_renderings;
};

/// Default reply budgets by task family.
inline constexpr int radiology_max_tokens = 300;
inline constexpr int synthesis_max_tokens = 1024;

class LlmAgent final : public AgentBehavior {
public:
    LlmAgent(std::shared_ptr<ChatClient> client, PromptTemplate prompt_template, LlmAgentOptions options = {});

    /// One corrective re-prompt on an unparseable reply, then ErrorCode::parse.
    AgentResponse respond(const AgentRequest& request) override;
    std::string_view kind() const override { return "llm"; }

private:
    std::shared_ptr<ChatClient> client_;
    PromptTemplate template_;
    LlmAgentOptions options_;
};

/// Live human answering through a TurnQueue.
class InteractiveHumanAgent final : public AgentBehavior {
public:
    InteractiveHumanAgent(std::shared_ptr<TurnQueue> queue, std::string author,
                          std::chrono::seconds turn_timeout = std::chrono::hours(24));

    /// Publishes a pending turn and blocks for the answer. ErrorCode::timeout
    /// when the deadline passes.
    AgentResponse respond(const AgentRequest& request) override;
    std::string_view kind() const override { return "interactive"; }

private:
    std::shared_ptr<TurnQueue> queue_;
    std::string author_;
    std::chrono::seconds timeout_;
};

AgentResponse ask_agent(std::string_view query, const DataRow& instance, AgentBehavior& agent,
                        const Context& context, std::string_view session_id = {}, int msg_number = 1,
                        int reject_threshold = 1);

/// Appends the incoming message (if newer than anything held) and then the
/// agent's own message j. Never removes entries.
Context update_context(const Payload& payload, int j, const std::string& sender, const Context& previous,
                       const std::optional<ContextEntry>& incoming = std::nullopt);

/// One side of a session with its comparators and revision policy.
struct Participant {
    Role role = Role::machine;
    std::string query;
    std::shared_ptr<AgentBehavior> behavior;
    Matcher matcher = exact_match;
    Agreer agreer = exact_match;
    std::shared_ptr<RevisionPolicy> revision = std::make_shared<AlwaysRevise>();

    std::string id() const { return std::string(role == Role::machine ? machine_id : human_id); }
};

/// Produces the participant's message j for session s: asks the backend,
/// applies the revision policy, computes the tag and writes the context row.
/// The caller persists the returned payload as message j.
Payload agent_step(const Participant& self, const std::string& session_id, int j, int k, Blackboard& board);

}  // namespace pxp
