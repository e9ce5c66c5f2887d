#pragma once

// Run configuration document (JSON) and construction of the two session
// participants from it.
//
//   {
//     "name": "rad-controlled",
//     "data": "data.jsonl",
//     "validation_data": "validation.jsonl",
//     "output_dir": "out",
//     "repetitions": 5,
//     "seed": 7,
//     "parallel_sessions": 1,
//     "turn_timeout_s": 86400,
//     "mock_llm": "fixture.json",
//     "session": {"n": 10, "k": 4, "q_m": "...", "q_h": "..."},
//     "machine": {"backend": {...}, "match": {...}, "agree": {...}, "revision": {...}},
//     "human":   {"backend": {...}, "match": {...}, "agree": {...}, "revision": {...}}
//   }
//
// Backends: {"kind": "scripted", "responses": [[y, e], ...], "per_instance": {key: [[y, e], ...]}}
//           {"kind": "random", "choices": [[y, e], ...]}
//           {"kind": "echo", "opening": [y, e]}
//           {"kind": "proxy"}
//           {"kind": "llm", "client": {...}, "profile": "radiology" | "synthesis", "max_tokens": int,
//            "temperature": number, "template": {"system": text, "turn": text}, "image_renderings": {key: text}}
//           {"kind": "interactive", "author": text}
// Comparators: {"kind": "exact"} | {"kind": "token_overlap", "threshold": x}
//              | {"kind": "llm_checker", "client": {...}, "max_tokens": 10, "temperature": 0}
// Revision: {"kind": "always"} | {"kind": "gated", "evaluator": "hypothesis"}

#include "pxp/agents.hpp"
#include "pxp/comparators.hpp"
#include "pxp/protocol.hpp"
#include "pxp/turn_queue.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace pxp {

struct AgentSpec {
    nlohmann::json backend;
    nlohmann::json match = {{"kind", "exact"}};
    nlohmann::json agree = {{"kind", "exact"}};
    nlohmann::json revision = {{"kind", "always"}};
};

struct RunConfig {
    std::string name = "run";
    std::filesystem::path data_path;
    std::optional<std::filesystem::path> validation_path;
    std::filesystem::path output_dir = "pxp-out";
    SessionConfig session;
    int repetitions = 1;
    std::uint64_t seed = 0;
    int parallel_sessions = 1;
    std::chrono::seconds turn_timeout{24 * 3600};
    std::optional<std::filesystem::path> mock_llm;
    AgentSpec machine;
    AgentSpec human;

    /// The document as given, with paths made absolute. Stored with each run.
    nlohmann::json document;

    bool interactive() const;
};

/// Validates and resolves relative paths against `base_dir`. Throws
/// ErrorCode::validation listing every offending field path.
RunConfig parse_run_config(const nlohmann::json& document, const std::filesystem::path& base_dir = {});

RunConfig load_run_config(const std::filesystem::path& path);

/// What participants need from outside the config.
struct AgentEnvironment {
    std::shared_ptr<TurnQueue> turn_queue;
    /// Replaces every LLM client (agents and checkers) with this one.
    std::shared_ptr<ChatClient> llm_override;
};

struct Participants {
    Participant machine;
    Participant human;
};

Participants build_participants(const RunConfig& config, const AgentEnvironment& env = {});

}  // namespace pxp
