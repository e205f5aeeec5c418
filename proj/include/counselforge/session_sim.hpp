// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/gateway.hpp"
#include "counselforge/screenplay.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace counselforge {

enum class TerminationReason { client_end_marker, disengage_limit, max_turns };

std::string_view to_string(TerminationReason r);
TerminationReason parse_termination_reason(std::string_view text);

struct EmotionalCaption {
    std::size_t turn_index = 0;
    std::string text;

    friend bool operator==(const EmotionalCaption&, const EmotionalCaption&) = default;
};

struct SessionConfig {
    TherapistVariant variant = TherapistVariant::base;
    /// Cap on the session length, counted in `turn_unit`s. The greeting counts.
    std::size_t max_turns = 20;
    TurnUnit turn_unit = TurnUnit::utterance;
    /// Case-insensitive substrings that mark a client turn as disengaged in
    /// addition to the end marker.
    std::vector<std::string> disengage_patterns;
    /// When set, a single end marker stops the session as client_end_marker.
    bool end_marker_immediate = false;
    bool therapist_opens = true;
    bool synthesize_images = true;
    std::uint64_t seed = 7;
    double temperature = 0.7;
    /// Label stored with transcripts and scores; defaults to the variant name.
    std::string model_label;
    std::optional<ServiceEndpoint> client_endpoint;
    std::optional<ServiceEndpoint> therapist_endpoint;

    [[nodiscard]] std::string label() const;
    void validate() const;
};

void to_json(json& j, const SessionConfig& v);
void from_json(const json& j, SessionConfig& v);

/// One model exchange, kept so a transcript can be replayed without the services.
struct StepLog {
    std::string step;
    std::size_t turn_index = 0;
    std::string system;
    std::string prompt;
    std::optional<std::string> image;
    std::string response;

    friend bool operator==(const StepLog&, const StepLog&) = default;
};

struct SessionState {
    ClientProfile profile;
    std::vector<Turn> history;
    std::size_t consecutive_disengaged = 0;
    bool terminated = false;
    std::optional<TerminationReason> termination_reason;
    std::optional<CbtPlan> plan;
    std::vector<EmotionalCaption> captions;
};

struct TranscriptRecord {
    std::string session_id;
    std::string model;
    TherapistVariant variant = TherapistVariant::base;
    SessionState state;
    bool failed = false;
    std::string failure;
    std::vector<StepLog> logs;
};

void to_json(json& j, const TranscriptRecord& v);
void from_json(const json& j, TranscriptRecord& v);

/// Parses "CBT technique: ... Counseling planning: ..." replies.
CbtPlan parse_plan_reply(std::string_view reply);

/// Builds the client turn from a reply whose first line starts with "Client:".
Turn parse_client_reply(std::string_view reply);

/// Therapist reply with any speaker prefix and bracketed spans removed.
Turn parse_therapist_reply(std::string_view reply);

bool detect_disengagement(const Turn& turn, const std::vector<std::string>& patterns = {});

/// History as the client sees it: every turn with its directions.
std::string render_client_history(const std::vector<Turn>& turns);

/// History as the therapist sees it: no directions and no end markers.
std::string render_therapist_history(const std::vector<Turn>& turns);

ChatRequest client_request(const SessionState& state, const TemplateSet& templates, const SessionConfig& cfg);
ChatRequest therapist_request(const SessionState& state, const TemplateSet& templates, const SessionConfig& cfg);
ChatRequest planning_request(const ClientProfile& profile, const TemplateSet& templates, const SessionConfig& cfg);
ChatRequest caption_request(const ImageRef& image, const TemplateSet& templates, const SessionConfig& cfg);

/// Drives one session. Steps talk to the gateway; the loop itself is deterministic.
class SessionRunner {
public:
    SessionRunner(Gateway& gateway, const TemplateSet& templates, SessionConfig cfg);

    CbtPlan plan_session(SessionState& state, std::vector<StepLog>* logs = nullptr);
    EmotionalCaption caption_emotion(SessionState& state, std::size_t turn_index,
                                     std::vector<StepLog>* logs = nullptr);
    Turn client_step(SessionState& state, std::vector<StepLog>* logs = nullptr);
    Turn therapist_step(SessionState& state, std::vector<StepLog>* logs = nullptr);

    /// Runs the session to termination. Step errors mark the record failed and keep
    /// the partial transcript.
    TranscriptRecord run(const ClientProfile& profile);

    [[nodiscard]] std::string session_id(const ClientProfile& profile) const;
    [[nodiscard]] const SessionConfig& config() const noexcept { return cfg_; }

private:
    std::string chat(const ChatRequest& req, const std::optional<ServiceEndpoint>& endpoint);
    void attach_image(SessionState& state, const std::string& session_id, std::size_t turn_index,
                      std::vector<StepLog>* logs);

    Gateway& gateway_;
    const TemplateSet& templates_;
    SessionConfig cfg_;
};

TranscriptRecord run_session(const ClientProfile& profile, Gateway& gateway, const TemplateSet& templates,
                             const SessionConfig& cfg);

/// Runs sessions on `workers` threads; output keeps profile order.
std::vector<TranscriptRecord> run_sessions(const std::vector<ClientProfile>& profiles, Gateway& gateway,
                                           const TemplateSet& templates, const SessionConfig& cfg,
                                           std::size_t workers = 1);

} // namespace counselforge
