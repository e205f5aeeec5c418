// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/gateway.hpp"

#include <array>
#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace counselforge {

/// In-process transport with per-kind handlers, call counters, request logs and
/// fault injection. Handlers may throw the gateway error types.
class MockTransport final : public Transport {
public:
    using Handler = std::function<json(const json& body)>;

    void on(ServiceKind kind, Handler handler);
    json post(const ServiceEndpoint& endpoint, const json& body) override;

    /// The next `count` calls of `kind` fail with a TransportError before reaching the handler.
    void fail_next(ServiceKind kind, int count, bool transient = true);

    [[nodiscard]] std::size_t calls(ServiceKind kind) const;
    [[nodiscard]] std::size_t total_calls() const;
    void reset_counts();

    /// When on, every request body is kept and can be read back with requests().
    void set_recording(bool on);
    [[nodiscard]] std::vector<json> requests(ServiceKind kind) const;

private:
    mutable std::mutex mutex_;
    std::map<ServiceKind, Handler> handlers_;
    std::map<ServiceKind, std::size_t> calls_;
    std::map<ServiceKind, std::pair<int, bool>> pending_failures_;
    std::map<ServiceKind, std::vector<json>> log_;
    bool recording_ = false;
};

/// Probabilities the bundled mocks use to produce realistic failures. Every draw is a
/// hash of the request content, so a given request always gets the same answer.
struct MockOptions {
    std::uint64_t seed = 20250101;
    double low_similarity = 0.03;       // per image
    double identity_drift = 0.08;       // per synthesized image
    double gender_flip = 0.015;         // per synthesized image
    double nsfw = 0.004;                // per image
    double unsafe_text = 0.001;         // per utterance
    double weak_alliance = 0.10;        // per dialogue
    double short_screenplay = 0.02;     // per screenplay
    double persona_copy = 0.03;         // per screenplay
    double malformed_expression = 0.01; // per expression request
    std::size_t embedding_dim = 64;
};

enum class MockChatKind {
    screenplay,
    expression,
    client,
    therapist,
    caption,
    planning,
    wai,
    skills,
    profile_synthesis,
    unknown
};

/// Identifies which prompt template produced a chat request body.
MockChatKind classify_chat_request(const json& body);

/// Builds the deterministic handlers shipped for offline runs.
class BundledMocks {
public:
    explicit BundledMocks(MockOptions options = {});

    json chat(const json& body) const;
    json image_synth(const json& body) const;
    json img_txt_sim(const json& body) const;
    json face_embed(const json& body) const;
    json face_attr(const json& body) const;
    json nsfw(const json& body) const;
    json safety(const json& body) const;

    json handle(ServiceKind kind, const json& body) const;
    void install(MockTransport& transport) const;

    [[nodiscard]] const MockOptions& options() const noexcept { return options_; }

private:
    [[nodiscard]] double draw(std::string_view label, std::string_view content) const;

    std::string screenplay(const std::string& system, const std::string& query) const;
    std::string expression(const std::string& query, const std::string& seed) const;
    std::string client(const std::string& system, const std::string& query) const;
    std::string therapist(const std::string& query) const;
    std::string caption(const json& message) const;
    std::string planning(const std::string& query) const;
    std::string wai(const std::string& query) const;
    std::string skills(const std::string& query) const;
    std::string profile_synthesis(const std::string& query) const;

    MockOptions options_;
};

/// A MockTransport preloaded with the bundled handlers.
std::shared_ptr<MockTransport> make_bundled_transport(const MockOptions& options = {});

/// Registers `mock://<kind>` endpoints for every service kind on the gateway.
/// Retries are immediate; chat caching follows `cache_chat`.
void use_mock_endpoints(Gateway& gateway, bool cache_chat);

/// Image bytes for a face-pool reference identity.
std::string make_reference_face(const std::string& identity, Gender gender, int age, std::uint64_t seed);

/// Expression vocabulary shared by the mocks and their tests.
struct ExpressionCue {
    std::string_view keyword;
    std::string_view target;
    std::string_view contrast;
    std::string_view caption;
};
const std::vector<ExpressionCue>& expression_cues();

/// Sentence pools used by the mock screenplay and session agents.
const std::vector<std::string_view>& mock_therapist_lines();
const std::vector<std::string_view>& mock_client_lines(ResistanceType type);
const std::vector<std::string_view>& mock_directions(ResistanceType type);

} // namespace counselforge
