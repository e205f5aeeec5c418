// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/image_store.hpp"
#include "counselforge/types.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

namespace counselforge {

enum class ServiceKind { chat, image_synth, img_txt_sim, face_embed, face_attr, nsfw, safety };

inline constexpr std::array<ServiceKind, 7> kServiceKinds = {
    ServiceKind::chat,      ServiceKind::image_synth, ServiceKind::img_txt_sim, ServiceKind::face_embed,
    ServiceKind::face_attr, ServiceKind::nsfw,        ServiceKind::safety};

std::string_view to_string(ServiceKind k);
ServiceKind parse_service_kind(std::string_view text);

struct ServiceEndpoint {
    ServiceKind kind = ServiceKind::chat;
    std::string base_url;
    std::optional<std::string> auth_token;
    std::chrono::milliseconds timeout{60000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{250};
    /// Maximum requests in flight against this endpoint.
    std::size_t max_in_flight = 4;
    bool cache_enabled = false;
    /// Free-form model/version label recorded in provenance.
    std::string model;

    /// Throws PreconditionError on a non-positive timeout, negative retries or empty URL.
    void validate() const;
};

enum class ChatRole { user, assistant };

struct ChatMessage {
    ChatRole role = ChatRole::user;
    std::string content;
    /// Attached image, sent as `images_b64` on the wire.
    std::optional<ImageRef> image;
};

struct ChatRequest {
    std::string system;
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
    std::optional<std::int64_t> seed;
};

struct ImageSynthRequest {
    ImageRef reference_image;
    std::string positive_prompt;
    std::string negative_prompt;
    std::optional<std::uint64_t> seed;
};

struct UnitVector {
    std::vector<double> components;
};

struct AttributePrediction {
    Gender gender = Gender::woman;
    double gender_confidence = 0.0;
    double age_years = 0.0;

    friend bool operator==(const AttributePrediction&, const AttributePrediction&) = default;
};

struct ClassifierVerdict {
    std::string label;
    double probability = 0.0;

    friend bool operator==(const ClassifierVerdict&, const ClassifierVerdict&) = default;
};

/// One HTTP-like exchange. Implementations raise TransportError (transient or not),
/// ProtocolError or ContentError.
class Transport {
public:
    virtual ~Transport() = default;
    virtual json post(const ServiceEndpoint& endpoint, const json& body) = 0;
};

/// Real transport over HTTP(S). Bearer auth when the endpoint carries a token.
class HttpTransport final : public Transport {
public:
    json post(const ServiceEndpoint& endpoint, const json& body) override;
};

/// Digest of a request for caching: SHA-256 over the kind label and the request bytes.
std::string cache_key(ServiceKind kind, std::string_view request_bytes);

/// Canonical serialization: object keys sorted, no insignificant whitespace.
std::string canonical_dump(const json& body);

class ResponseCache {
public:
    ResponseCache() = default;
    /// Persist entries as `<dir>/<key>.json` in addition to memory.
    explicit ResponseCache(std::filesystem::path dir);

    [[nodiscard]] std::optional<json> get(const std::string& key) const;
    void put(const std::string& key, const json& value);
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::shared_mutex mutex_;
    mutable std::map<std::string, json> entries_;
    std::optional<std::filesystem::path> dir_;
};

/// Counting semaphore bounding in-flight requests for one endpoint.
class ConcurrencyLimiter {
public:
    explicit ConcurrencyLimiter(std::size_t max_in_flight);

    void acquire();
    void release();
    [[nodiscard]] std::size_t peak() const;

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t max_;
    std::size_t in_flight_ = 0;
    std::size_t peak_ = 0;
};

struct GatewayStats {
    std::size_t attempts = 0;
    std::size_t retries = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
};

class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;
    using Payload = std::variant<ImageRef, std::string>;

    Gateway(std::shared_ptr<Transport> transport, std::shared_ptr<ImageStore> images);

    /// Registers (or replaces) the default endpoint for its kind.
    void set_endpoint(ServiceEndpoint endpoint);
    [[nodiscard]] const ServiceEndpoint& endpoint(ServiceKind kind) const;
    [[nodiscard]] bool has_endpoint(ServiceKind kind) const;
    void set_cache_enabled(ServiceKind kind, bool enabled);

    void set_cache(std::shared_ptr<ResponseCache> cache);
    void set_sleeper(Sleeper sleeper);

    std::string complete_chat(const ChatRequest& req);
    std::string complete_chat(const ServiceEndpoint& endpoint, const ChatRequest& req);

    /// Returns the synthesized image bytes.
    std::string synthesize_face(const ImageSynthRequest& req);
    /// Synthesizes and writes the bytes into the image store under `relative_path`.
    ImageRef synthesize_face(const ImageSynthRequest& req, const std::string& relative_path);

    double image_text_similarity(const ImageRef& image, const std::string& text);
    std::vector<double> image_text_similarity(const std::vector<std::pair<ImageRef, std::string>>& batch);

    UnitVector face_embedding(const ImageRef& image);
    AttributePrediction face_attributes(const ImageRef& image);
    /// kind must be nsfw (image payload) or safety (text payload).
    ClassifierVerdict classify(ServiceKind kind, const Payload& payload);

    [[nodiscard]] GatewayStats stats() const;
    [[nodiscard]] ImageStore& images() { return *images_; }
    [[nodiscard]] std::shared_ptr<ImageStore> image_store() const { return images_; }

private:
    json call(const ServiceEndpoint& endpoint, const json& body);
    json call_uncached(const ServiceEndpoint& endpoint, const json& body);
    ConcurrencyLimiter& limiter_for(const ServiceEndpoint& endpoint);
    std::string image_b64(const ImageRef& ref) const;
    static void require_kind(const ServiceEndpoint& endpoint, ServiceKind kind);

    std::shared_ptr<Transport> transport_;
    std::shared_ptr<ImageStore> images_;
    std::shared_ptr<ResponseCache> cache_;
    std::map<ServiceKind, ServiceEndpoint> endpoints_;
    Sleeper sleeper_;

    mutable std::mutex mutex_;
    std::map<std::string, std::unique_ptr<ConcurrencyLimiter>> limiters_;
    std::uint64_t jitter_state_ = 0x5EEDULL;
    GatewayStats stats_;
};

/// Wire form of a chat request. Attached images are encoded with `encode_image`.
json to_wire(const ChatRequest& req, const std::function<std::string(const ImageRef&)>& encode_image);

} // namespace counselforge
