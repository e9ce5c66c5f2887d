#include "pxp/agents.hpp"

#include "pxp/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>

namespace pxp {

namespace {

std::string trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

int own_turn_index(int msg_number) { return (msg_number - 1) / 2; }

// Position of `label` at the start of a line, ignoring case and leading
// markdown emphasis. Returns the offset just past the label.
std::optional<std::size_t> find_label(std::string_view text, std::string_view label, std::size_t from = 0) {
    std::size_t line_start = from;
    while (line_start <= text.size()) {
        std::size_t i = line_start;
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '*' || text[i] == '#')) ++i;
        bool matches = i + label.size() <= text.size();
        for (std::size_t k = 0; matches && k < label.size(); ++k) {
            matches = std::toupper(static_cast<unsigned char>(text[i + k])) == label[k];
        }
        if (matches) {
            std::size_t end = i + label.size();
            while (end < text.size() && text[end] == '*') ++end;
            return end;
        }
        const auto newline = text.find('\n', line_start);
        if (newline == std::string_view::npos) break;
        line_start = newline + 1;
    }
    return std::nullopt;
}

std::string strip_emphasis(std::string text) {
    while (!text.empty() && text.front() == '*') text.erase(text.begin());
    while (!text.empty() && text.back() == '*') text.pop_back();
    return trim(text);
}

}  // namespace

std::unique_ptr<ScriptedAgent> ScriptedAgent::sequence(
    std::vector<std::pair<std::string, std::string>> fallback,
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> per_instance) {
    if (fallback.empty() && per_instance.empty()) {
        throw Error(ErrorCode::config, "scripted agent needs at least one response");
    }
    return std::make_unique<ScriptedAgent>(
        [fallback = std::move(fallback), per_instance = std::move(per_instance)](const AgentRequest& request) {
            const std::vector<std::pair<std::string, std::string>>* table = &fallback;
            // Keys: full session id, the data-file key after the run prefix, or
            // the instance value.
            const std::string session(request.session_id);
            const auto colon = session.rfind(':');
            for (const std::string& key : {session, colon == std::string::npos ? session : session.substr(colon + 1),
                                           request.instance.instance.value}) {
                if (auto it = per_instance.find(key); it != per_instance.end()) {
                    table = &it->second;
                    break;
                }
            }
            if (table->empty()) {
                throw Error(ErrorCode::config, "no scripted response for session '" +
                                                   std::string(request.session_id) + "'");
            }
            const auto index = std::min<std::size_t>(own_turn_index(request.msg_number), table->size() - 1);
            const auto& [y, e] = (*table)[index];
            return AgentResponse{y, e, std::nullopt};
        });
}

std::unique_ptr<ScriptedAgent> ScriptedAgent::echo(std::optional<std::pair<std::string, std::string>> opening) {
    return std::make_unique<ScriptedAgent>([opening = std::move(opening)](const AgentRequest& request) {
        if (!request.context.empty()) {
            const Payload& last = request.context.back().payload;
            return AgentResponse{last.prediction, last.explanation, std::nullopt};
        }
        if (opening) return AgentResponse{opening->first, opening->second, std::nullopt};
        auto [y, e] = proxy_human_respond(request.instance);
        return AgentResponse{std::move(y), std::move(e), std::nullopt};
    });
}

std::pair<std::string, std::string> proxy_human_respond(const DataRow& instance) {
    if (!instance.truth) {
        throw Error(ErrorCode::config, "instance '" + instance.session_id + "' has no ground truth for the proxy agent");
    }
    return {instance.truth->prediction, instance.truth->explanation};
}

AgentResponse ProxyHumanAgent::respond(const AgentRequest& request) {
    auto [y, e] = proxy_human_respond(request.instance);
    return AgentResponse{std::move(y), std::move(e), std::nullopt};
}

PromptTemplate PromptTemplate::standard() {
    return PromptTemplate{
        "You are an expert reviewing one case together with a colleague. Each turn, state your current "
        "prediction and the explanation for it. If the colleague's message convinces you, you may change "
        "your answer; otherwise keep it and say why.\n"
        "Reply with exactly two labelled parts:\n"
        "PREDICTION: <your prediction on one line>\n"
        "EXPLANATION: <your explanation>",
        "{query}\n\nCase:\n{instance}{history}"};
}

std::string render_history(const Context& context) {
    if (context.empty()) return {};
    std::string out = "\n\nConversation so far:";
    for (const auto& entry : context) {
        out += "\n\n[message ";
        out += std::to_string(entry.msg_number);
        out += " | ";
        out += entry.sender;
        out += " | ";
        out += tag_name(entry.payload.tag);
        out += "]\nPREDICTION: ";
        out += entry.payload.prediction;
        out += "\nEXPLANATION: ";
        out += entry.payload.explanation;
    }
    return out;
}

AssembledPrompt assemble_prompt(const PromptTemplate& prompt_template, std::string_view query,
                                const DataRow& instance, const Context& context,
                                const std::optional<std::string>& image_rendering) {
    AssembledPrompt prompt;
    std::string instance_text;
    if (instance.instance.kind == InstanceKind::text) {
        instance_text = instance.instance.value;
    } else if (image_rendering) {
        instance_text = *image_rendering;
    } else {
        prompt.attachments.push_back(instance.instance.value);
        instance_text = "[attached image 1]";
    }
    const std::map<std::string, std::string, std::less<>> bindings{
        {"query", std::string(query)}, {"instance", instance_text}, {"history", render_history(context)}};

    auto bind = [&](std::string_view text) {
        std::string out;
        out.reserve(text.size() + 256);
        std::size_t i = 0;
        while (i < text.size()) {
            if (text[i] == '{') {
                const auto close = text.find('}', i + 1);
                if (close != std::string_view::npos) {
                    const std::string_view name = text.substr(i + 1, close - i - 1);
                    const bool identifier = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
                        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
                    });
                    if (identifier) {
                        auto it = bindings.find(name);
                        if (it == bindings.end()) {
                            throw Error(ErrorCode::config, "prompt template has unbound placeholder {" +
                                                               std::string(name) + "}");
                        }
                        out += it->second;
                        i = close + 1;
                        continue;
                    }
                }
            }
            out.push_back(text[i++]);
        }
        return out;
    };
    prompt.system = bind(prompt_template.system_text);
    prompt.user = bind(prompt_template.turn_text);
    return prompt;
}

std::optional<std::pair<std::string, std::string>> parse_structured_reply(std::string_view reply) {
    const auto prediction_at = find_label(reply, "PREDICTION:");
    if (!prediction_at) return std::nullopt;
    const auto explanation_at = find_label(reply, "EXPLANATION:", *prediction_at);
    if (!explanation_at) return std::nullopt;
    // The explanation label begins on its own line; walk back to that line start.
    auto label_line = reply.rfind('\n', *explanation_at);
    if (label_line == std::string_view::npos || label_line < *prediction_at) label_line = *prediction_at;
    std::string prediction = strip_emphasis(trim(reply.substr(*prediction_at, label_line - *prediction_at)));
    std::string explanation = trim(reply.substr(*explanation_at));
    if (prediction.empty() || explanation.empty()) return std::nullopt;
    return std::make_pair(std::move(prediction), std::move(explanation));
}

LlmAgent::LlmAgent(std::shared_ptr<ChatClient> client, PromptTemplate prompt_template, LlmAgentOptions options)
    : client_(std::move(client)), template_(std::move(prompt_template)), options_(std::move(options)) {
    if (!client_) throw Error(ErrorCode::config, "LLM agent needs a client");
    if (options_.max_tokens < 1) throw Error(ErrorCode::config, "max_tokens must be positive");
}

AgentResponse LlmAgent::respond(const AgentRequest& request) {
    std::optional<std::string> rendering;
    if (request.instance.instance.kind == InstanceKind::image_ref) {
        auto it = options_.image_renderings.find(std::string(request.session_id));
        if (it == options_.image_renderings.end()) it = options_.image_renderings.find(request.instance.instance.value);
        if (it != options_.image_renderings.end()) {
            rendering = it->second;
        } else if (!client_->supports_images()) {
            throw Error(ErrorCode::config, "image instance '" + request.instance.instance.value +
                                               "' needs a multimodal backend or a text rendering");
        }
    }
    const AssembledPrompt prompt = assemble_prompt(template_, request.query, request.instance, request.context, rendering);

    ChatRequest chat;
    chat.system = prompt.system;
    chat.max_tokens = options_.max_tokens;
    chat.temperature = options_.temperature;
    chat.messages.push_back(ChatMessage{"user", prompt.user, prompt.attachments});

    std::string reply = client_->complete(chat);
    if (auto parsed = parse_structured_reply(reply)) return AgentResponse{parsed->first, parsed->second, std::nullopt};

    spdlog::warn("session {} message {}: unstructured LLM reply, re-prompting", request.session_id, request.msg_number);
    chat.messages.push_back(ChatMessage{"assistant", reply, {}});
    chat.messages.push_back(ChatMessage{
        "user", "Reply again using exactly two labelled parts, PREDICTION: and EXPLANATION:.", {}});
    reply = client_->complete(chat);
    if (auto parsed = parse_structured_reply(reply)) return AgentResponse{parsed->first, parsed->second, std::nullopt};
    throw Error(ErrorCode::parse, "LLM reply for session " + std::string(request.session_id) + " message " +
                                      std::to_string(request.msg_number) + " lacks PREDICTION/EXPLANATION parts");
}

InteractiveHumanAgent::InteractiveHumanAgent(std::shared_ptr<TurnQueue> queue, std::string author,
                                             std::chrono::seconds turn_timeout)
    : queue_(std::move(queue)), author_(std::move(author)), timeout_(turn_timeout) {
    if (!queue_) throw Error(ErrorCode::config, "interactive agent needs a turn queue");
}

AgentResponse InteractiveHumanAgent::respond(const AgentRequest& request) {
    if (request.context.empty()) {
        throw Error(ErrorCode::contract, "interactive human agent cannot open a session");
    }
    PendingTurn turn;
    turn.session_id = std::string(request.session_id);
    turn.msg_number = request.msg_number;
    turn.incoming = request.context.back().payload;
    turn.instance = request.instance.instance;
    turn.reject_allowed = request.msg_number > request.reject_threshold;
    turn.deadline = Clock::now() + timeout_;
    turn.author = author_;
    queue_->publish(turn);

    auto answer = queue_->wait(turn.session_id, turn.msg_number);
    if (!answer) {
        throw Error(ErrorCode::timeout, "no human answer for session " + turn.session_id + " message " +
                                            std::to_string(turn.msg_number) + " before the deadline");
    }
    return AgentResponse{answer->prediction, answer->explanation, answer->tag};
}

AgentResponse ask_agent(std::string_view query, const DataRow& instance, AgentBehavior& agent, const Context& context,
                        std::string_view session_id, int msg_number, int reject_threshold) {
    const AgentRequest request{query, instance, context, session_id.empty() ? instance.session_id : session_id,
                               msg_number, reject_threshold};
    return agent.respond(request);
}

Context update_context(const Payload& payload, int j, const std::string& sender, const Context& previous,
                       const std::optional<ContextEntry>& incoming) {
    Context next = previous;
    if (incoming && (next.empty() || next.back().msg_number < incoming->msg_number)) next.push_back(*incoming);
    next.push_back(ContextEntry{j, sender, payload});
    return next;
}

namespace {

ContextEntry as_entry(const MessageRecord& record) {
    return ContextEntry{record.msg_number, record.sender, record.payload};
}

// The agent's context after its previous message (j - 2). Taken from the
// context table; rebuilt from the transcript if the row is missing.
Context previous_context(const Blackboard& board, const std::string& session_id, int j) {
    if (j < 3) return {};
    if (auto row = board.context(session_id, j - 2)) return row->context;
    Context rebuilt;
    const auto messages = board.export_transcript(session_id);
    for (const auto& record : messages) {
        if (record.msg_number > j - 2) break;
        rebuilt.push_back(as_entry(record));
    }
    return rebuilt;
}

}  // namespace

Payload agent_step(const Participant& self, const std::string& session_id, int j, int k, Blackboard& board) {
    if (j < 1) throw Error(ErrorCode::contract, "message numbers start at 1");
    if (!self.behavior) throw Error(ErrorCode::config, "participant has no agent backend");
    const auto data = board.data(session_id);
    if (!data) throw Error(ErrorCode::not_found, "no data row for session '" + session_id + "'");
    const std::string id = self.id();

    const Context before = previous_context(board, session_id, j);
    std::optional<MessageRecord> incoming;
    Context visible = before;
    if (j >= 2) {
        incoming = board.incoming_message(session_id, j, id);
        visible.push_back(as_entry(*incoming));
    }

    const AgentResponse response = ask_agent(self.query, *data, *self.behavior, visible, session_id, j, k);
    Payload out{Tag::init, response.prediction, response.explanation};

    if (j >= 2) {
        Payload own_previous = j == 2 ? out : board.own_previous_message(session_id, j, id).payload;
        if (response.supplied_tag) {
            if (*response.supplied_tag == Tag::init) {
                throw Error(ErrorCode::validation, "supplied tag cannot be INIT after message 1", {"tag"});
            }
            out.tag = downgrade_early_reject(*response.supplied_tag, j, k);
        } else {
            if (j >= 3) {
                const bool differs = !self.matcher(out.prediction, own_previous.prediction) ||
                                     !self.agreer(out.explanation, own_previous.explanation);
                if (differs && !self.revision->accept_revision(out, own_previous)) {
                    out.prediction = own_previous.prediction;
                    out.explanation = own_previous.explanation;
                }
            }
            const Payload& received = incoming->payload;
            ComparisonOutcome outcome;
            outcome.match_incoming = self.matcher(received.prediction, own_previous.prediction);
            outcome.agree_incoming = self.agreer(received.explanation, own_previous.explanation);
            outcome.changed = !self.matcher(out.prediction, own_previous.prediction) ||
                              !self.agreer(out.explanation, own_previous.explanation);
            out.tag = decide_tag(outcome, j, k);
        }
    }
    validate_payload(out);

    std::optional<ContextEntry> incoming_entry;
    if (incoming) incoming_entry = as_entry(*incoming);
    board.insert_context(ContextRow{session_id, j, update_context(out, j, id, before, incoming_entry)});
    return out;
}

}  // namespace pxp
