// SPDX-License-Identifier: Apache-2.0
#include "counselforge/session_sim.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/face_synth.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <atomic>
#include <thread>

namespace counselforge {

std::string_view to_string(TerminationReason r) {
    switch (r) {
    case TerminationReason::client_end_marker:
        return "client_end_marker";
    case TerminationReason::disengage_limit:
        return "disengage_limit";
    case TerminationReason::max_turns:
        return "max_turns";
    }
    return "max_turns";
}

TerminationReason parse_termination_reason(std::string_view text) {
    for (auto r : {TerminationReason::client_end_marker, TerminationReason::disengage_limit,
                   TerminationReason::max_turns}) {
        if (to_string(r) == text) {
            return r;
        }
    }
    throw PreconditionError(fmt::format("unknown termination reason '{}'", text));
}

std::string SessionConfig::label() const {
    return model_label.empty() ? std::string(to_string(variant)) : model_label;
}

void SessionConfig::validate() const {
    if (max_turns < 2) {
        throw PreconditionError("max_turns must allow at least two turns");
    }
    if (temperature < 0.0) {
        throw PreconditionError("temperature must be non-negative");
    }
    for (const auto& p : disengage_patterns) {
        if (trim(p).empty()) {
            throw PreconditionError("disengagement patterns must be non-empty");
        }
    }
}

void to_json(json& j, const SessionConfig& v) {
    j = json{{"variant", v.variant},
             {"max_turns", v.max_turns},
             {"turn_unit", to_string(v.turn_unit)},
             {"disengage_patterns", v.disengage_patterns},
             {"end_marker_immediate", v.end_marker_immediate},
             {"therapist_opens", v.therapist_opens},
             {"synthesize_images", v.synthesize_images},
             {"seed", v.seed},
             {"temperature", v.temperature},
             {"model_label", v.model_label}};
}

void from_json(const json& j, SessionConfig& v) {
    const SessionConfig d;
    v.variant = j.value("variant", d.variant);
    v.max_turns = j.value("max_turns", d.max_turns);
    v.turn_unit = parse_turn_unit(j.value("turn_unit", std::string(to_string(d.turn_unit))));
    v.disengage_patterns = j.value("disengage_patterns", d.disengage_patterns);
    v.end_marker_immediate = j.value("end_marker_immediate", d.end_marker_immediate);
    v.therapist_opens = j.value("therapist_opens", d.therapist_opens);
    v.synthesize_images = j.value("synthesize_images", d.synthesize_images);
    v.seed = j.value("seed", d.seed);
    v.temperature = j.value("temperature", d.temperature);
    v.model_label = j.value("model_label", d.model_label);
}

namespace {

json optional_string(const std::optional<std::string>& s) {
    return s ? json(*s) : json(nullptr);
}

} // namespace

void to_json(json& j, const TranscriptRecord& v) {
    json logs = json::array();
    for (const auto& l : v.logs) {
        logs.push_back({{"step", l.step},
                        {"turn_index", l.turn_index},
                        {"system", l.system},
                        {"prompt", l.prompt},
                        {"image", optional_string(l.image)},
                        {"response", l.response}});
    }
    json captions = json::array();
    for (const auto& c : v.state.captions) {
        captions.push_back({{"turn_index", c.turn_index}, {"text", c.text}});
    }
    j = json{{"session_id", v.session_id},
             {"model", v.model},
             {"variant", v.variant},
             {"profile", v.state.profile},
             {"turns", v.state.history},
             {"consecutive_disengaged", v.state.consecutive_disengaged},
             {"terminated", v.state.terminated},
             {"termination_reason", v.state.termination_reason
                                        ? json(to_string(*v.state.termination_reason))
                                        : json(nullptr)},
             {"plan", v.state.plan ? json(*v.state.plan) : json(nullptr)},
             {"captions", captions},
             {"failed", v.failed},
             {"failure", v.failure},
             {"logs", logs}};
}

void from_json(const json& j, TranscriptRecord& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("model").get_to(v.model);
    j.at("variant").get_to(v.variant);
    j.at("profile").get_to(v.state.profile);
    j.at("turns").get_to(v.state.history);
    j.at("consecutive_disengaged").get_to(v.state.consecutive_disengaged);
    j.at("terminated").get_to(v.state.terminated);
    const auto& reason = j.at("termination_reason");
    v.state.termination_reason =
        reason.is_null() ? std::nullopt
                         : std::optional<TerminationReason>(parse_termination_reason(reason.get<std::string>()));
    const auto& plan = j.at("plan");
    v.state.plan = plan.is_null() ? std::nullopt : std::optional<CbtPlan>(plan.get<CbtPlan>());
    v.state.captions.clear();
    for (const auto& c : j.at("captions")) {
        v.state.captions.push_back({c.at("turn_index").get<std::size_t>(), c.at("text").get<std::string>()});
    }
    j.at("failed").get_to(v.failed);
    j.at("failure").get_to(v.failure);
    v.logs.clear();
    for (const auto& l : j.at("logs")) {
        StepLog s;
        l.at("step").get_to(s.step);
        l.at("turn_index").get_to(s.turn_index);
        l.at("system").get_to(s.system);
        l.at("prompt").get_to(s.prompt);
        if (!l.at("image").is_null()) {
            s.image = l.at("image").get<std::string>();
        }
        l.at("response").get_to(s.response);
        v.logs.push_back(std::move(s));
    }
}

CbtPlan parse_plan_reply(std::string_view reply) {
    constexpr std::string_view kTech = "CBT technique:";
    constexpr std::string_view kPlan = "Counseling planning:";
    const auto t = reply.find(kTech);
    const auto p = reply.find(kPlan);
    if (t == std::string_view::npos || p == std::string_view::npos || p < t) {
        throw ParseError("planning reply lacks the 'CBT technique:' / 'Counseling planning:' markers", {});
    }
    std::string technique;
    for (const auto& line : split_lines(reply.substr(t + kTech.size(), p - t - kTech.size()))) {
        auto cleaned = trim(line);
        cleaned.erase(std::remove(cleaned.begin(), cleaned.end(), '*'), cleaned.end());
        while (!cleaned.empty() && (cleaned.back() == '.' || cleaned.back() == ':')) {
            cleaned.pop_back();
        }
        cleaned = trim(cleaned);
        if (!cleaned.empty()) {
            technique = cleaned;
            break;
        }
    }
    const auto plan = trim(reply.substr(p + kPlan.size()));
    if (technique.empty() || plan.empty()) {
        throw ParseError("planning reply has an empty technique or plan", {});
    }
    if (!is_known_technique(technique)) {
        throw UnknownTechniqueError(fmt::format("'{}' is not one of the listed techniques", technique));
    }
    return {technique, plan};
}

Turn parse_client_reply(std::string_view reply) {
    const auto lines = split_lines(reply);
    std::size_t i = 0;
    while (i < lines.size() && trim(lines[i]).empty()) {
        ++i;
    }
    if (i == lines.size()) {
        throw ParseError("client reply is empty", {});
    }
    const auto first = split_speaker_prefix(lines[i]);
    if (!first || first->first != Speaker::client) {
        throw ParseError("client reply does not start with 'Client:'", {i + 1});
    }
    std::string text = first->second;
    const std::size_t first_line = i + 1;
    for (++i; i < lines.size(); ++i) {
        if (split_speaker_prefix(lines[i])) {
            break;
        }
        if (!trim(lines[i]).empty()) {
            text += " " + trim(lines[i]);
        }
    }
    auto turn = parse_turn_text(Speaker::client, text, first_line);
    if (trim(turn.utterance).empty() && turn.directions.empty() && !turn.end_marker) {
        throw ParseError("client reply carries no utterance", {first_line});
    }
    return turn;
}

Turn parse_therapist_reply(std::string_view reply) {
    std::string text = trim(reply);
    if (auto prefixed = split_speaker_prefix(text)) {
        if (prefixed->first == Speaker::client) {
            throw ParseError("therapist reply is written as the client", {1});
        }
        text = prefixed->second;
    }
    Turn turn;
    turn.speaker = Speaker::therapist;
    turn.utterance = collapse_spaces(strip_bracket_spans(replace_all(text, "\n", " ")));
    if (turn.utterance.empty()) {
        throw GenerationError("therapist reply is empty");
    }
    return turn;
}

bool detect_disengagement(const Turn& turn, const std::vector<std::string>& patterns) {
    if (turn.end_marker) {
        return true;
    }
    // Case-insensitive, and a typographic apostrophe matches a plain one.
    auto fold = [](std::string_view s) { return replace_all(to_lower(s), "\xE2\x80\x99", "'"); };
    const auto text = fold(turn.utterance);
    return std::any_of(patterns.begin(), patterns.end(),
                       [&](const std::string& p) { return contains(text, fold(trim(p))); });
}

std::string render_client_history(const std::vector<Turn>& turns) {
    std::vector<std::string> lines;
    lines.reserve(turns.size());
    for (const auto& t : turns) {
        lines.push_back(render_turn(t, true));
    }
    return join(lines, "\n");
}

std::string render_therapist_history(const std::vector<Turn>& turns) {
    std::vector<std::string> lines;
    lines.reserve(turns.size());
    for (const auto& t : turns) {
        lines.push_back(render_turn(t, false));
    }
    return join(lines, "\n");
}

ChatRequest client_request(const SessionState& state, const TemplateSet& templates, const SessionConfig& cfg) {
    const auto& s = state.profile.source;
    ChatRequest req;
    req.system = templates.get("client_system") + "\n\n" +
                 templates.get(fmt::format("resistance_{}", to_string(state.profile.resistance)));
    req.messages.push_back({ChatRole::user,
                            render_template(templates.get("client_query"),
                                            {{"client information", client_information(s)},
                                             {"personality trait", join(s.personality_traits, ", ")},
                                             {"distorted thoughts", s.distorted_thoughts},
                                             {"reason counseling", s.reason_for_counseling},
                                             {"history", render_client_history(state.history)}}),
                            std::nullopt});
    req.temperature = cfg.temperature;
    return req;
}

ChatRequest therapist_request(const SessionState& state, const TemplateSet& templates, const SessionConfig& cfg) {
    const auto& s = state.profile.source;
    TemplateValues values = {{"client information", client_information(s)},
                             {"reason counseling", s.reason_for_counseling},
                             {"history", render_therapist_history(state.history)}};
    std::string name = "therapist_base";
    if (cfg.variant != TherapistVariant::base) {
        if (!state.plan) {
            throw MissingPlanError("planning variants need a plan before the first therapist turn");
        }
        values.emplace_back("cbt tech and plan", cbt_tech_and_plan(state.plan->technique, state.plan->plan));
        name = "therapist_planning";
    }
    std::optional<ImageRef> image;
    for (auto it = state.history.rbegin(); it != state.history.rend(); ++it) {
        if (it->speaker == Speaker::client) {
            image = it->image;
            if (cfg.variant == TherapistVariant::planning_ec) {
                const auto idx = static_cast<std::size_t>(std::distance(it, state.history.rend()) - 1);
                auto cap = std::find_if(state.captions.begin(), state.captions.end(),
                                        [&](const EmotionalCaption& c) { return c.turn_index == idx; });
                values.emplace_back("emotional caption", cap == state.captions.end() ? "N/A" : cap->text);
            }
            break;
        }
    }
    if (cfg.variant == TherapistVariant::planning_ec) {
        name = "therapist_planning_ec";
        if (std::none_of(values.begin(), values.end(), [](const auto& kv) { return kv.first == "emotional caption"; })) {
            values.emplace_back("emotional caption", "N/A");
        }
    }
    if (!image) {
        image = state.profile.face.image;
    }
    ChatRequest req;
    req.messages.push_back({ChatRole::user, render_template(templates.get(name), values), image});
    req.temperature = cfg.temperature;
    return req;
}

ChatRequest planning_request(const ClientProfile& profile, const TemplateSet& templates, const SessionConfig& cfg) {
    ChatRequest req;
    req.messages.push_back({ChatRole::user,
                            render_template(templates.get("planning"),
                                            {{"client information", client_information(profile.source)},
                                             {"reason counseling", profile.source.reason_for_counseling}}),
                            profile.face.image});
    req.temperature = cfg.temperature;
    return req;
}

ChatRequest caption_request(const ImageRef& image, const TemplateSet& templates, const SessionConfig& cfg) {
    ChatRequest req;
    req.messages.push_back({ChatRole::user, templates.get("emotion_caption"), image});
    req.temperature = cfg.temperature;
    return req;
}

SessionRunner::SessionRunner(Gateway& gateway, const TemplateSet& templates, SessionConfig cfg)
    : gateway_(gateway), templates_(templates), cfg_(std::move(cfg)) {
    cfg_.validate();
}

std::string SessionRunner::session_id(const ClientProfile& profile) const {
    return fmt::format("{}--{}", cfg_.label(), profile.profile_id);
}

std::string SessionRunner::chat(const ChatRequest& req, const std::optional<ServiceEndpoint>& endpoint) {
    return endpoint ? gateway_.complete_chat(*endpoint, req) : gateway_.complete_chat(req);
}

namespace {

StepLog log_of(std::string step, std::size_t turn, const ChatRequest& req, std::string response) {
    StepLog l;
    l.step = std::move(step);
    l.turn_index = turn;
    l.system = req.system;
    l.prompt = req.messages.empty() ? std::string{} : req.messages.back().content;
    if (!req.messages.empty() && req.messages.back().image) {
        l.image = req.messages.back().image->path;
    }
    l.response = std::move(response);
    return l;
}

} // namespace

CbtPlan SessionRunner::plan_session(SessionState& state, std::vector<StepLog>* logs) {
    if (cfg_.variant == TherapistVariant::base) {
        throw PreconditionError("the base variant does not plan");
    }
    const auto req = planning_request(state.profile, templates_, cfg_);
    for (int attempt = 0;; ++attempt) {
        auto reply = chat(req, cfg_.therapist_endpoint);
        if (logs != nullptr) {
            logs->push_back(log_of("plan", 0, req, reply));
        }
        try {
            state.plan = parse_plan_reply(reply);
            return *state.plan;
        } catch (const ParseError&) {
            if (attempt >= 1) {
                throw;
            }
        }
    }
}

EmotionalCaption SessionRunner::caption_emotion(SessionState& state, std::size_t turn_index,
                                                std::vector<StepLog>* logs) {
    if (turn_index >= state.history.size() || !state.history[turn_index].image) {
        throw PreconditionError(fmt::format("turn {} has no image to caption", turn_index));
    }
    const auto req = caption_request(*state.history[turn_index].image, templates_, cfg_);
    std::string reply;
    try {
        reply = chat(req, cfg_.therapist_endpoint);
    } catch (const Error& e) {
        throw GenerationError(fmt::format("emotional caption for turn {}: {}", turn_index, e.what()));
    }
    if (logs != nullptr) {
        logs->push_back(log_of("caption", turn_index, req, reply));
    }
    const auto text = trim(reply);
    if (text.empty()) {
        throw GenerationError(fmt::format("emotional caption for turn {} is empty", turn_index));
    }
    EmotionalCaption caption{turn_index, text};
    state.captions.push_back(caption);
    return caption;
}

Turn SessionRunner::client_step(SessionState& state, std::vector<StepLog>* logs) {
    if (state.terminated) {
        throw PreconditionError("session already terminated");
    }
    const auto req = client_request(state, templates_, cfg_);
    for (int attempt = 0;; ++attempt) {
        auto reply = chat(req, cfg_.client_endpoint);
        if (logs != nullptr) {
            logs->push_back(log_of("client", state.history.size(), req, reply));
        }
        try {
            auto turn = parse_client_reply(reply);
            state.history.push_back(turn);
            return turn;
        } catch (const ParseError&) {
            if (attempt >= 1) {
                throw;
            }
        }
    }
}

Turn SessionRunner::therapist_step(SessionState& state, std::vector<StepLog>* logs) {
    if (state.terminated) {
        throw PreconditionError("session already terminated");
    }
    const auto req = therapist_request(state, templates_, cfg_);
    std::string reply;
    try {
        reply = chat(req, cfg_.therapist_endpoint);
    } catch (const Error& e) {
        throw GenerationError(fmt::format("therapist turn {}: {}", state.history.size(), e.what()));
    }
    if (logs != nullptr) {
        logs->push_back(log_of("therapist", state.history.size(), req, reply));
    }
    auto turn = parse_therapist_reply(reply);
    state.history.push_back(turn);
    return turn;
}

void SessionRunner::attach_image(SessionState& state, const std::string& id, std::size_t turn_index,
                                 std::vector<StepLog>* logs) {
    auto& turn = state.history[turn_index];
    const std::vector<Turn> prior(state.history.begin(),
                                  state.history.begin() + static_cast<std::ptrdiff_t>(turn_index));
    const auto text = render_turn(turn).substr(std::string_view("Client: ").size());
    const auto pair = derive_expression_prompts(gateway_, templates_, prior, text);
    const auto prompts = compile_image_prompts(templates_, state.profile.source.gender, pair);
    const auto seed = turn_image_seed(cfg_.seed, id, turn_index);
    turn.image = synthesize_turn_image(gateway_, state.profile.face, prompts, seed, turn_image_path(id, turn_index));
    if (logs != nullptr) {
        const auto req = expression_request(templates_, prior, text);
        StepLog l = log_of("expression", turn_index, req, pair.target + "\n" + pair.contrast);
        logs->push_back(std::move(l));
        StepLog img;
        img.step = "image";
        img.turn_index = turn_index;
        img.prompt = prompts.positive + "\n" + prompts.negative;
        img.image = turn.image->path;
        img.response = std::to_string(seed);
        logs->push_back(std::move(img));
    }
}

TranscriptRecord SessionRunner::run(const ClientProfile& profile) {
    TranscriptRecord rec;
    rec.session_id = session_id(profile);
    rec.model = cfg_.label();
    rec.variant = cfg_.variant;
    auto& state = rec.state;
    state.profile = profile;
    auto* logs = &rec.logs;
    const auto length = [&] { return count_turns(state.history, cfg_.turn_unit); };
    const auto stop = [&](TerminationReason r) {
        state.terminated = true;
        state.termination_reason = r;
    };
    try {
        validate(profile.source);
        if (cfg_.variant != TherapistVariant::base) {
            plan_session(state, logs);
        }
        if (cfg_.therapist_opens) {
            Turn greeting;
            greeting.speaker = Speaker::therapist;
            greeting.utterance = render_template(templates_.get("therapist_greeting"),
                                                 {{"client name", profile.source.name}});
            state.history.push_back(std::move(greeting));
        }
        while (!state.terminated) {
            if (length() >= cfg_.max_turns) {
                stop(TerminationReason::max_turns);
                break;
            }
            const auto turn = client_step(state, logs);
            const auto idx = state.history.size() - 1;
            if (cfg_.synthesize_images) {
                attach_image(state, rec.session_id, idx, logs);
                if (cfg_.variant == TherapistVariant::planning_ec) {
                    caption_emotion(state, idx, logs);
                }
            }
            const bool disengaged = detect_disengagement(turn, cfg_.disengage_patterns);
            state.consecutive_disengaged = disengaged ? state.consecutive_disengaged + 1 : 0;
            if (turn.end_marker && cfg_.end_marker_immediate) {
                stop(TerminationReason::client_end_marker);
                break;
            }
            if (state.consecutive_disengaged >= 2) {
                stop(TerminationReason::disengage_limit);
                break;
            }
            if (length() >= cfg_.max_turns) {
                stop(TerminationReason::max_turns);
                break;
            }
            therapist_step(state, logs);
        }
    } catch (const std::exception& e) {
        rec.failed = true;
        rec.failure = e.what();
    }
    return rec;
}

TranscriptRecord run_session(const ClientProfile& profile, Gateway& gateway, const TemplateSet& templates,
                             const SessionConfig& cfg) {
    return SessionRunner(gateway, templates, cfg).run(profile);
}

std::vector<TranscriptRecord> run_sessions(const std::vector<ClientProfile>& profiles, Gateway& gateway,
                                           const TemplateSet& templates, const SessionConfig& cfg,
                                           std::size_t workers) {
    SessionRunner runner(gateway, templates, cfg);
    std::vector<TranscriptRecord> out(profiles.size());
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(profiles.size(), 1));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < profiles.size(); i = next++) {
            out[i] = runner.run(profiles[i]);
        }
    };
    if (workers == 1) {
        work();
        return out;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back(work);
    }
    for (auto& t : pool) {
        t.join();
    }
    return out;
}

} // namespace counselforge
