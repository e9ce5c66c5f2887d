#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace pxp {

struct ChatMessage {
    std::string role;  ///< "user" or "assistant"
    std::string content;
    std::vector<std::string> image_paths;  ///< attachments, sent before the text
};

struct ChatRequest {
    std::string system;
    std::vector<ChatMessage> messages;
    int max_tokens = 300;
    std::optional<double> temperature;  ///< unset: backend default
};

class ChatClient {
public:
    virtual ~ChatClient() = default;

    /// Returns the first text block of the reply. Throws ErrorCode::transport
    /// after retries are exhausted.
    virtual std::string complete(const ChatRequest& request) = 0;

    virtual bool supports_images() const { return false; }
};

enum class ApiStyle {
    anthropic,  ///< Messages API, x-api-key header
    openai,     ///< chat/completions, bearer token
};

struct LlmClientConfig {
    std::string endpoint = "https://api.anthropic.com/v1/messages";
    std::string model = "claude-3-5-sonnet-latest";
    std::string api_key_env = "ANTHROPIC_API_KEY";
    ApiStyle style = ApiStyle::anthropic;
    double timeout_seconds = 120.0;
    int max_retries = 3;
    int max_concurrency = 4;
    bool multimodal = true;
    /// Permits plain http endpoints. Only for tests against a local server.
    bool allow_insecure = false;
};

/// Parses the "llm" configuration object; throws ErrorCode::validation with
/// field paths prefixed by `path`.
LlmClientConfig llm_client_config_from_json(const nlohmann::json& j, const std::string& path);

/// Request body for the configured wire style. Image attachments are read
/// from disk and base64 encoded.
nlohmann::json build_request_body(const LlmClientConfig& config, const ChatRequest& request);

/// Extracts the first text block from a response body.
std::string extract_reply_text(ApiStyle style, const nlohmann::json& body);

class HttpChatClient final : public ChatClient {
public:
    /// Reads the API key from the configured environment variable. Throws
    /// ErrorCode::config for a non-https endpoint unless allow_insecure is set.
    explicit HttpChatClient(LlmClientConfig config);

    std::string complete(const ChatRequest& request) override;
    bool supports_images() const override { return config_.multimodal; }

    const LlmClientConfig& config() const noexcept { return config_; }

private:
    std::string post_once(const std::string& body);

    LlmClientConfig config_;
    std::string api_key_;
    std::string origin_;
    std::string path_;
    std::counting_semaphore<1024> slots_;
};

/// Offline client answering from a fixture.
///
/// Fixture object: {"rules": [{"contains": text, "reply": text}, ...],
/// "replies": [text, ...], "default": text}. The first rule whose needle
/// occurs in the final user message wins; otherwise replies are returned in
/// rotation; otherwise "default".
class FixtureChatClient final : public ChatClient {
public:
    explicit FixtureChatClient(nlohmann::json fixture, bool images = true);
    static std::unique_ptr<FixtureChatClient> from_file(const std::filesystem::path& path);

    std::string complete(const ChatRequest& request) override;
    bool supports_images() const override { return images_; }

    std::vector<ChatRequest> requests() const;
    std::size_t call_count() const;

private:
    struct Rule {
        std::string needle;
        std::string reply;
    };

    std::vector<Rule> rules_;
    std::vector<std::string> replies_;
    std::optional<std::string> fallback_;
    bool images_;

    mutable std::mutex mutex_;
    std::size_t next_reply_ = 0;
    std::vector<ChatRequest> log_;
};

}  // namespace pxp
