#include "pxp/run_config.hpp"

#include "pxp/error.hpp"

#include <fstream>
#include <random>

namespace pxp {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string> machine_backends{"scripted", "random", "echo", "proxy", "llm"};
const std::vector<std::string> human_backends{"scripted", "random", "echo", "proxy", "llm", "interactive"};

bool contains(const std::vector<std::string>& set, const std::string& value) {
    return std::find(set.begin(), set.end(), value) != set.end();
}

std::string kind_of(const json& j) {
    return j.is_object() && j.contains("kind") && j["kind"].is_string() ? j["kind"].get<std::string>() : "";
}

bool is_pair_list(const json& j) {
    if (!j.is_array() || j.empty()) return false;
    for (const auto& item : j) {
        if (!item.is_array() || item.size() != 2 || !item[0].is_string() || !item[1].is_string()) return false;
        if (item[0].get<std::string>().empty() || item[1].get<std::string>().empty()) return false;
    }
    return true;
}

std::vector<std::pair<std::string, std::string>> pairs(const json& j) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& item : j) out.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
    return out;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = 1469598103934665603ull) {
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

class Checker {
public:
    void require(bool ok, const std::string& field) {
        if (!ok) fields_.push_back(field);
    }
    std::vector<std::string> take() { return std::move(fields_); }

private:
    std::vector<std::string> fields_;
};

void check_client(const json& j, const std::string& path, Checker& check) {
    if (!j.contains("client")) return;
    try {
        llm_client_config_from_json(j["client"], path + ".client");
    } catch (const Error& e) {
        for (const auto& f : e.fields()) check.require(false, f);
    }
}

void check_comparator(const json& j, const std::string& path, bool prediction, Checker& check) {
    const std::string kind = kind_of(j);
    if (prediction) {
        check.require(kind == "exact" || kind == "token_overlap", path + ".kind");
    } else {
        check.require(kind == "exact" || kind == "token_overlap" || kind == "llm_checker", path + ".kind");
    }
    if (kind == "token_overlap") {
        const bool ok = j.contains("threshold") && j["threshold"].is_number() && j["threshold"].get<double>() >= 0.0 &&
                        j["threshold"].get<double>() <= 1.0;
        check.require(ok, path + ".threshold");
    }
    if (kind == "llm_checker") {
        check_client(j, path, check);
        if (j.contains("max_tokens")) {
            check.require(j["max_tokens"].is_number_integer() && j["max_tokens"].get<int>() > 0, path + ".max_tokens");
        }
        if (j.contains("temperature")) {
            check.require(j["temperature"].is_number() && j["temperature"].get<double>() >= 0, path + ".temperature");
        }
    }
}

void check_backend(const json& j, const std::string& path, bool machine, Checker& check) {
    const std::string kind = kind_of(j);
    if (!contains(machine ? machine_backends : human_backends, kind)) {
        check.require(false, path + ".kind");
        return;
    }
    if (kind == "scripted") {
        const bool has_default = j.contains("responses");
        const bool has_table = j.contains("per_instance");
        check.require(has_default || has_table, path + ".responses");
        if (has_default) check.require(is_pair_list(j["responses"]), path + ".responses");
        if (has_table) {
            bool ok = j["per_instance"].is_object();
            if (ok) {
                for (const auto& [key, value] : j["per_instance"].items()) ok = ok && is_pair_list(value);
            }
            check.require(ok, path + ".per_instance");
        }
    } else if (kind == "random") {
        check.require(j.contains("choices") && is_pair_list(j["choices"]), path + ".choices");
    } else if (kind == "echo") {
        if (j.contains("opening")) {
            check.require(is_pair_list(json::array({j["opening"]})), path + ".opening");
        }
    } else if (kind == "llm") {
        check_client(j, path, check);
        if (j.contains("profile")) {
            const std::string profile = j["profile"].is_string() ? j["profile"].get<std::string>() : "";
            check.require(profile == "radiology" || profile == "synthesis", path + ".profile");
        }
        if (j.contains("max_tokens")) {
            check.require(j["max_tokens"].is_number_integer() && j["max_tokens"].get<int>() > 0, path + ".max_tokens");
        }
        if (j.contains("temperature")) {
            check.require(j["temperature"].is_number() && j["temperature"].get<double>() >= 0, path + ".temperature");
        }
        if (j.contains("template")) {
            const auto& t = j["template"];
            check.require(t.is_object() && t.value("system", json()).is_string() && t.value("turn", json()).is_string(),
                          path + ".template");
        }
        if (j.contains("image_renderings")) {
            bool ok = j["image_renderings"].is_object();
            if (ok) {
                for (const auto& [key, value] : j["image_renderings"].items()) ok = ok && value.is_string();
            }
            check.require(ok, path + ".image_renderings");
        }
    } else if (kind == "interactive") {
        if (j.contains("author")) check.require(j["author"].is_string(), path + ".author");
    }
}

AgentSpec parse_agent(const json& doc, const std::string& key, Checker& check) {
    AgentSpec spec;
    if (!doc.contains(key) || !doc[key].is_object()) {
        check.require(false, key);
        return spec;
    }
    const json& j = doc[key];
    if (!j.contains("backend")) {
        check.require(false, key + ".backend");
    } else {
        spec.backend = j["backend"];
        check_backend(spec.backend, key + ".backend", key == "machine", check);
    }
    if (j.contains("match")) spec.match = j["match"];
    if (j.contains("agree")) spec.agree = j["agree"];
    if (j.contains("revision")) spec.revision = j["revision"];
    check_comparator(spec.match, key + ".match", true, check);
    check_comparator(spec.agree, key + ".agree", false, check);
    const std::string revision = kind_of(spec.revision);
    check.require(revision == "always" || revision == "gated", key + ".revision.kind");
    if (revision == "gated" && spec.revision.contains("evaluator")) {
        check.require(spec.revision["evaluator"] == "hypothesis", key + ".revision.evaluator");
    }
    return spec;
}

fs::path resolve(const fs::path& base, const std::string& value) {
    fs::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

std::shared_ptr<ChatClient> make_client(const json& j, const std::string& path, const AgentEnvironment& env) {
    if (env.llm_override) return env.llm_override;
    return std::make_shared<HttpChatClient>(llm_client_config_from_json(j.value("client", json::object()), path));
}

Matcher make_matcher(const json& j) {
    if (kind_of(j) == "token_overlap") {
        const double threshold = j["threshold"].get<double>();
        return [threshold](std::string_view a, std::string_view b) { return token_overlap_agree(a, b, threshold); };
    }
    return exact_match;
}

Agreer make_agreer(const json& j, const std::string& path, const AgentEnvironment& env) {
    if (kind_of(j) == "llm_checker") {
        CheckerConfig checker;
        checker.max_tokens = j.value("max_tokens", checker.max_tokens);
        checker.temperature = j.value("temperature", checker.temperature);
        return make_llm_checker(make_client(j, path, env), checker);
    }
    return make_matcher(j);
}

std::shared_ptr<AgentBehavior> make_backend(const RunConfig& config, const json& j, const std::string& path,
                                            const AgentEnvironment& env) {
    const std::string kind = kind_of(j);
    if (kind == "scripted") {
        std::map<std::string, std::vector<std::pair<std::string, std::string>>> table;
        for (const auto& [key, value] : j.value("per_instance", json::object()).items()) table[key] = pairs(value);
        return ScriptedAgent::sequence(pairs(j.value("responses", json::array())), std::move(table));
    }
    if (kind == "random") {
        auto choices = pairs(j["choices"]);
        const std::uint64_t seed = config.seed;
        return std::make_shared<ScriptedAgent>([choices = std::move(choices), seed](const AgentRequest& request) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(fnv1a(request.session_id)),
                              static_cast<std::uint32_t>(request.msg_number)};
            std::mt19937 rng(seq);
            std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
            const auto& [y, e] = choices[pick(rng)];
            return AgentResponse{y, e, std::nullopt};
        });
    }
    if (kind == "echo") {
        std::optional<std::pair<std::string, std::string>> opening;
        if (j.contains("opening")) opening = pairs(json::array({j["opening"]})).front();
        return ScriptedAgent::echo(std::move(opening));
    }
    if (kind == "proxy") return std::make_shared<ProxyHumanAgent>();
    if (kind == "llm") {
        LlmAgentOptions options;
        const std::string profile = j.value("profile", "radiology");
        options.max_tokens = j.value("max_tokens", profile == "synthesis" ? synthesis_max_tokens : radiology_max_tokens);
        if (j.contains("temperature")) options.temperature = j["temperature"].get<double>();
        for (const auto& [key, value] : j.value("image_renderings", json::object()).items()) {
            options.image_renderings[key] = value.get<std::string>();
        }
        PromptTemplate prompt = PromptTemplate::standard();
        if (j.contains("template")) {
            prompt.system_text = j["template"]["system"].get<std::string>();
            prompt.turn_text = j["template"]["turn"].get<std::string>();
        }
        return std::make_shared<LlmAgent>(make_client(j, path, env), std::move(prompt), std::move(options));
    }
    if (kind == "interactive") {
        if (!env.turn_queue) {
            throw Error(ErrorCode::config, "interactive human agent needs a running service (use `serve`)");
        }
        return std::make_shared<InteractiveHumanAgent>(env.turn_queue, j.value("author", ""), config.turn_timeout);
    }
    throw Error(ErrorCode::config, "unknown backend kind '" + kind + "' at " + path);
}

Participant make_participant(const RunConfig& config, const AgentSpec& spec, Role role, const std::string& path,
                             const AgentEnvironment& env) {
    Participant p;
    p.role = role;
    p.query = role == Role::machine ? config.session.q_m : config.session.q_h;
    p.behavior = make_backend(config, spec.backend, path + ".backend", env);
    p.matcher = make_matcher(spec.match);
    p.agreer = make_agreer(spec.agree, path + ".agree", env);
    if (kind_of(spec.revision) == "gated") {
        if (!config.validation_path) throw Error(ErrorCode::config, path + ": gated revision needs validation_data");
        p.revision = std::make_shared<ValidationGatedRevision>(load_data_file(*config.validation_path), p.matcher,
                                                               hypothesis_label_evaluator());
    }
    return p;
}

}  // namespace

bool RunConfig::interactive() const {
    return kind_of(human.backend) == "interactive" || kind_of(machine.backend) == "interactive";
}

RunConfig parse_run_config(const json& document, const fs::path& base_dir) {
    if (!document.is_object()) throw Error(ErrorCode::validation, "run configuration must be a JSON object", {"$"});
    Checker check;
    RunConfig config;
    config.document = document;

    if (document.contains("name")) {
        const bool ok = document["name"].is_string() && !document["name"].get<std::string>().empty() &&
                        document["name"].get<std::string>().find_first_of("/\\:") == std::string::npos;
        check.require(ok, "name");
        if (ok) config.name = document["name"].get<std::string>();
    }

    if (document.contains("data") && document["data"].is_string()) {
        config.data_path = resolve(base_dir, document["data"].get<std::string>());
        config.document["data"] = config.data_path.string();
        if (!fs::exists(config.data_path)) {
            throw Error(ErrorCode::validation, "data file not found: " + config.data_path.string(), {"data"});
        }
    } else {
        check.require(false, "data");
    }
    if (document.contains("validation_data")) {
        if (document["validation_data"].is_string()) {
            config.validation_path = resolve(base_dir, document["validation_data"].get<std::string>());
            config.document["validation_data"] = config.validation_path->string();
            if (!fs::exists(*config.validation_path)) {
                throw Error(ErrorCode::validation, "validation file not found: " + config.validation_path->string(),
                            {"validation_data"});
            }
        } else {
            check.require(false, "validation_data");
        }
    }
    if (document.contains("output_dir")) {
        check.require(document["output_dir"].is_string(), "output_dir");
        if (document["output_dir"].is_string()) {
            config.output_dir = resolve(base_dir, document["output_dir"].get<std::string>());
            config.document["output_dir"] = config.output_dir.string();
        }
    } else {
        config.output_dir = resolve(base_dir, config.output_dir.string());
    }
    if (document.contains("mock_llm")) {
        check.require(document["mock_llm"].is_string(), "mock_llm");
        if (document["mock_llm"].is_string()) {
            config.mock_llm = resolve(base_dir, document["mock_llm"].get<std::string>());
            config.document["mock_llm"] = config.mock_llm->string();
        }
    }

    auto positive_int = [&](const json& j, const char* key, const std::string& path, int& out) {
        if (!j.contains(key)) return;
        const bool ok = j[key].is_number_integer() && j[key].get<long long>() >= 1 && j[key].get<long long>() <= 1'000'000;
        check.require(ok, path);
        if (ok) out = j[key].get<int>();
    };
    positive_int(document, "repetitions", "repetitions", config.repetitions);
    positive_int(document, "parallel_sessions", "parallel_sessions", config.parallel_sessions);
    if (document.contains("seed")) {
        const bool ok = document["seed"].is_number_unsigned() || (document["seed"].is_number_integer() &&
                                                                   document["seed"].get<long long>() >= 0);
        check.require(ok, "seed");
        if (ok) config.seed = document["seed"].get<std::uint64_t>();
    }
    if (document.contains("turn_timeout_s")) {
        const bool ok = document["turn_timeout_s"].is_number_integer() && document["turn_timeout_s"].get<long long>() > 0;
        check.require(ok, "turn_timeout_s");
        if (ok) config.turn_timeout = std::chrono::seconds(document["turn_timeout_s"].get<long long>());
    }

    if (!document.contains("session") || !document["session"].is_object()) {
        check.require(false, "session");
    } else {
        const json& s = document["session"];
        config.session.n = 10;
        config.session.k = 4;
        positive_int(s, "n", "session.n", config.session.n);
        positive_int(s, "k", "session.k", config.session.k);
        for (const char* key : {"q_m", "q_h"}) {
            if (!s.contains(key)) continue;
            check.require(s[key].is_string(), std::string("session.") + key);
        }
        config.session.q_m = s.value("q_m", "");
        config.session.q_h = s.value("q_h", "");
    }

    config.machine = parse_agent(document, "machine", check);
    config.human = parse_agent(document, "human", check);
    if (kind_of(config.machine.revision) == "gated" || kind_of(config.human.revision) == "gated") {
        check.require(config.validation_path.has_value(), "validation_data");
    }

    auto bad = check.take();
    if (!bad.empty()) {
        std::string message = "invalid run configuration:";
        for (const auto& f : bad) message += " " + f;
        throw Error(ErrorCode::validation, message, std::move(bad));
    }
    return config;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::config, "cannot open config " + path.string());
    json document;
    try {
        document = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::validation, path.string() + ": " + e.what(), {"$"});
    }
    return parse_run_config(document, fs::absolute(path).parent_path());
}

Participants build_participants(const RunConfig& config, const AgentEnvironment& env) {
    AgentEnvironment resolved = env;
    if (!resolved.llm_override && config.mock_llm) {
        resolved.llm_override = std::shared_ptr<ChatClient>(FixtureChatClient::from_file(*config.mock_llm));
    }
    return Participants{make_participant(config, config.machine, Role::machine, "machine", resolved),
                        make_participant(config, config.human, Role::human, "human", resolved)};
}

}  // namespace pxp
