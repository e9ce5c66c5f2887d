#include "pxp/llm_client.hpp"

#include "pxp/error.hpp"

#include <httplib.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <thread>

namespace pxp {

namespace {

using json = nlohmann::json;

std::string base64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::config, "cannot read image attachment " + path);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                        reinterpret_cast<const unsigned char*>(bytes.data()),
                                        static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(written));
    return out;
}

std::string media_type(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    return "image/png";
}

json anthropic_content(const ChatMessage& message) {
    json content = json::array();
    for (const auto& path : message.image_paths) {
        content.push_back({{"type", "image"},
                           {"source",
                            {{"type", "base64"}, {"media_type", media_type(path)}, {"data", base64_file(path)}}}});
    }
    content.push_back({{"type", "text"}, {"text", message.content}});
    return content;
}

json openai_content(const ChatMessage& message) {
    if (message.image_paths.empty()) return message.content;
    json content = json::array();
    for (const auto& path : message.image_paths) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + media_type(path) + ";base64," + base64_file(path)}}}});
    }
    content.push_back({{"type", "text"}, {"text", message.content}});
    return content;
}

bool status_retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

LlmClientConfig llm_client_config_from_json(const json& j, const std::string& path) {
    LlmClientConfig config;
    if (!j.is_object()) throw Error(ErrorCode::validation, path + " must be an object", {path});
    std::vector<std::string> bad;
    auto str = [&](const char* key, std::string& out) {
        if (!j.contains(key)) return;
        if (j[key].is_string()) out = j[key].get<std::string>();
        else bad.push_back(path + "." + key);
    };
    str("endpoint", config.endpoint);
    str("model", config.model);
    str("api_key_env", config.api_key_env);
    if (j.contains("style")) {
        const auto style = j["style"].is_string() ? j["style"].get<std::string>() : "";
        if (style == "anthropic") config.style = ApiStyle::anthropic;
        else if (style == "openai") config.style = ApiStyle::openai;
        else bad.push_back(path + ".style");
    }
    if (j.contains("timeout_s")) {
        if (j["timeout_s"].is_number() && j["timeout_s"].get<double>() > 0) {
            config.timeout_seconds = j["timeout_s"].get<double>();
        } else {
            bad.push_back(path + ".timeout_s");
        }
    }
    auto small_int = [&](const char* key, int& out, int lo, int hi) {
        if (!j.contains(key)) return;
        if (j[key].is_number_integer() && j[key].get<int>() >= lo && j[key].get<int>() <= hi) {
            out = j[key].get<int>();
        } else {
            bad.push_back(path + "." + key);
        }
    };
    small_int("max_retries", config.max_retries, 0, 10);
    small_int("max_concurrency", config.max_concurrency, 1, 1024);
    auto flag = [&](const char* key, bool& out) {
        if (!j.contains(key)) return;
        if (j[key].is_boolean()) out = j[key].get<bool>();
        else bad.push_back(path + "." + key);
    };
    flag("multimodal", config.multimodal);
    flag("allow_insecure", config.allow_insecure);
    if (config.endpoint.empty()) bad.push_back(path + ".endpoint");
    if (config.model.empty()) bad.push_back(path + ".model");
    if (config.api_key_env.empty()) bad.push_back(path + ".api_key_env");
    if (!bad.empty()) throw Error(ErrorCode::validation, "invalid LLM client configuration", bad);
    return config;
}

json build_request_body(const LlmClientConfig& config, const ChatRequest& request) {
    json body{{"model", config.model}, {"max_tokens", request.max_tokens}};
    if (request.temperature) body["temperature"] = *request.temperature;
    json messages = json::array();
    if (config.style == ApiStyle::anthropic) {
        if (!request.system.empty()) body["system"] = request.system;
        for (const auto& message : request.messages) {
            messages.push_back({{"role", message.role}, {"content", anthropic_content(message)}});
        }
    } else {
        if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
        for (const auto& message : request.messages) {
            messages.push_back({{"role", message.role}, {"content", openai_content(message)}});
        }
    }
    body["messages"] = std::move(messages);
    return body;
}

std::string extract_reply_text(ApiStyle style, const json& body) {
    if (style == ApiStyle::anthropic) {
        if (body.contains("content") && body["content"].is_array()) {
            for (const auto& block : body["content"]) {
                if (block.value("type", "") == "text" && block.contains("text") && block["text"].is_string()) {
                    return block["text"].get<std::string>();
                }
            }
        }
    } else if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
        const auto& message = body["choices"][0].value("message", json::object());
        if (message.contains("content") && message["content"].is_string()) {
            return message["content"].get<std::string>();
        }
    }
    throw Error(ErrorCode::transport, "response carries no text block");
}

HttpChatClient::HttpChatClient(LlmClientConfig config)
    : config_(std::move(config)), slots_(config_.max_concurrency) {
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::config, "endpoint must be an absolute URL: " + config_.endpoint);
    }
    const std::string scheme = config_.endpoint.substr(0, scheme_end);
    if (scheme != "https" && !(scheme == "http" && config_.allow_insecure)) {
        throw Error(ErrorCode::config, "endpoint must use https: " + config_.endpoint);
    }
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    origin_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    if (api_key_.empty() && !config_.allow_insecure) {
        throw Error(ErrorCode::config, "environment variable " + config_.api_key_env + " is not set");
    }
}

std::string HttpChatClient::post_once(const std::string& body) {
    httplib::Client client(origin_);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    if (const char* proxy = std::getenv("PXP_HTTPS_PROXY")) {
        httplib::Client parsed(proxy);
        client.set_proxy(parsed.host(), parsed.port());
    }

    httplib::Headers headers;
    if (config_.style == ApiStyle::anthropic) {
        headers.emplace("x-api-key", api_key_);
        headers.emplace("anthropic-version", "2023-06-01");
    } else {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }

    auto result = client.Post(path_, headers, body, "application/json");
    if (!result) {
        throw Error(ErrorCode::transport, "request to " + origin_ + " failed: " + httplib::to_string(result.error()));
    }
    if (result->status != 200) {
        const std::string what = "HTTP " + std::to_string(result->status) + " from " + origin_;
        throw Error(status_retryable(result->status) ? ErrorCode::transport : ErrorCode::config, what);
    }
    json parsed;
    try {
        parsed = json::parse(result->body);
    } catch (const json::parse_error&) {
        throw Error(ErrorCode::transport, "response body is not JSON");
    }
    return extract_reply_text(config_.style, parsed);
}

std::string HttpChatClient::complete(const ChatRequest& request) {
    const std::string body = build_request_body(config_, request).dump();
    slots_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{slots_};

    auto delay = std::chrono::milliseconds(250);
    for (int attempt = 0;; ++attempt) {
        try {
            return post_once(body);
        } catch (const Error& e) {
            if (!e.retryable() || attempt >= config_.max_retries) throw;
            spdlog::warn("LLM request failed ({}), retry {}/{}", e.what(), attempt + 1, config_.max_retries);
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
    }
}

FixtureChatClient::FixtureChatClient(json fixture, bool images) : images_(images) {
    if (!fixture.is_object()) throw Error(ErrorCode::config, "LLM fixture must be a JSON object");
    for (const auto& rule : fixture.value("rules", json::array())) {
        rules_.push_back(Rule{rule.at("contains").get<std::string>(), rule.at("reply").get<std::string>()});
    }
    for (const auto& reply : fixture.value("replies", json::array())) replies_.push_back(reply.get<std::string>());
    if (fixture.contains("default")) fallback_ = fixture["default"].get<std::string>();
    if (rules_.empty() && replies_.empty() && !fallback_) {
        throw Error(ErrorCode::config, "LLM fixture has no rules, replies or default");
    }
}

std::unique_ptr<FixtureChatClient> FixtureChatClient::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::config, "cannot open LLM fixture " + path.string());
    try {
        return std::make_unique<FixtureChatClient>(json::parse(in));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, "bad LLM fixture " + path.string() + ": " + e.what());
    }
}

std::string FixtureChatClient::complete(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    log_.push_back(request);
    const std::string& last = request.messages.empty() ? std::string() : request.messages.back().content;
    for (const auto& rule : rules_) {
        if (last.find(rule.needle) != std::string::npos) return rule.reply;
    }
    if (!replies_.empty()) return replies_[next_reply_++ % replies_.size()];
    if (fallback_) return *fallback_;
    throw Error(ErrorCode::transport, "LLM fixture has no reply for this request");
}

std::vector<ChatRequest> FixtureChatClient::requests() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t FixtureChatClient::call_count() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

}  // namespace pxp
