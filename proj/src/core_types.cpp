// SPDX-License-Identifier: Apache-2.0
#include "counselforge/types.hpp"

#include "counselforge/errors.hpp"

#include <algorithm>

#include <fmt/core.h>

namespace counselforge {

std::string_view to_string(Gender g) {
    return g == Gender::man ? "man" : "woman";
}

std::string_view to_string(Speaker s) {
    return s == Speaker::therapist ? "therapist" : "client";
}

std::string_view to_string(ResistanceType r) {
    switch (r) {
    case ResistanceType::cognitive: return "cognitive";
    case ResistanceType::emotional: return "emotional";
    case ResistanceType::behavioral: return "behavioral";
    case ResistanceType::non_resistant: return "non_resistant";
    }
    return "non_resistant";
}

std::string_view to_string(TherapistVariant v) {
    switch (v) {
    case TherapistVariant::base: return "base";
    case TherapistVariant::planning: return "planning";
    case TherapistVariant::planning_ec: return "planning_ec";
    }
    return "base";
}

Gender parse_gender(std::string_view text) {
    if (text == "man" || text == "male" || text == "Man" || text == "Male") {
        return Gender::man;
    }
    if (text == "woman" || text == "female" || text == "Woman" || text == "Female") {
        return Gender::woman;
    }
    throw PreconditionError(fmt::format("unknown gender '{}'", text));
}

Speaker parse_speaker(std::string_view text) {
    if (text == "therapist") {
        return Speaker::therapist;
    }
    if (text == "client") {
        return Speaker::client;
    }
    throw PreconditionError(fmt::format("unknown speaker '{}'", text));
}

ResistanceType parse_resistance(std::string_view text) {
    for (auto r : kResistanceTypes) {
        if (to_string(r) == text) {
            return r;
        }
    }
    throw PreconditionError(fmt::format("unknown resistance type '{}'", text));
}

TherapistVariant parse_variant(std::string_view text) {
    for (auto v : {TherapistVariant::base, TherapistVariant::planning, TherapistVariant::planning_ec}) {
        if (to_string(v) == text) {
            return v;
        }
    }
    throw PreconditionError(fmt::format("unknown therapist variant '{}'", text));
}

bool is_resistant(ResistanceType r) {
    return r != ResistanceType::non_resistant;
}

bool is_known_technique(std::string_view technique) {
    return std::find(kCbtTechniques.begin(), kCbtTechniques.end(), technique) != kCbtTechniques.end();
}

void validate(const SourceProfile& p) {
    auto require = [](bool ok, std::string_view field) {
        if (!ok) {
            throw PreconditionError(fmt::format("source profile field '{}' is empty or invalid", field));
        }
    };
    require(!p.name.empty(), "name");
    require(p.age > 0, "age");
    require(!p.occupation.empty(), "occupation");
    require(!p.personality_traits.empty(), "personality_traits");
    require(!p.distorted_thoughts.empty(), "distorted_thoughts");
    require(!p.thinking_trap.empty(), "thinking_trap");
    require(!p.reason_for_counseling.empty(), "reason_for_counseling");
    require(!p.cbt_technique.empty(), "cbt_technique");
    require(!p.cbt_plan.empty(), "cbt_plan");
    if (!is_known_technique(p.cbt_technique)) {
        throw PreconditionError(fmt::format("cbt_technique '{}' is not one of the listed techniques", p.cbt_technique));
    }
}

std::size_t count_client_turns(const std::vector<Turn>& turns) {
    return static_cast<std::size_t>(
        std::count_if(turns.begin(), turns.end(), [](const Turn& t) { return t.speaker == Speaker::client; }));
}

std::string_view to_string(TurnUnit u) {
    return u == TurnUnit::utterance ? "utterance" : "exchange";
}

TurnUnit parse_turn_unit(std::string_view text) {
    if (text == "utterance") {
        return TurnUnit::utterance;
    }
    if (text == "exchange") {
        return TurnUnit::exchange;
    }
    throw PreconditionError(fmt::format("unknown turn unit '{}'", text));
}

std::size_t count_turns(const std::vector<Turn>& turns, TurnUnit unit) {
    return unit == TurnUnit::utterance ? turns.size() : (turns.size() + 1) / 2;
}

void to_json(json& j, const ImageRef& v) {
    j = v.path;
}

void from_json(const json& j, ImageRef& v) {
    v.path = j.get<std::string>();
}

void to_json(json& j, const CbtPlan& v) {
    j = json{{"technique", v.technique}, {"plan", v.plan}};
}

void from_json(const json& j, CbtPlan& v) {
    j.at("technique").get_to(v.technique);
    j.at("plan").get_to(v.plan);
}

void to_json(json& j, const SourceProfile& v) {
    j = json{{"name", v.name},
             {"age", v.age},
             {"gender", v.gender},
             {"occupation", v.occupation},
             {"personality_traits", v.personality_traits},
             {"distorted_thoughts", v.distorted_thoughts},
             {"thinking_trap", v.thinking_trap},
             {"reason_for_counseling", v.reason_for_counseling},
             {"cbt_technique", v.cbt_technique},
             {"cbt_plan", v.cbt_plan}};
}

void from_json(const json& j, SourceProfile& v) {
    j.at("name").get_to(v.name);
    j.at("age").get_to(v.age);
    j.at("gender").get_to(v.gender);
    j.at("occupation").get_to(v.occupation);
    j.at("personality_traits").get_to(v.personality_traits);
    j.at("distorted_thoughts").get_to(v.distorted_thoughts);
    j.at("thinking_trap").get_to(v.thinking_trap);
    j.at("reason_for_counseling").get_to(v.reason_for_counseling);
    j.at("cbt_technique").get_to(v.cbt_technique);
    j.at("cbt_plan").get_to(v.cbt_plan);
}

void to_json(json& j, const FaceIdentity& v) {
    j = json{{"image", v.image},
             {"predicted_gender", v.predicted_gender},
             {"gender_confidence", v.gender_confidence},
             {"predicted_age", v.predicted_age}};
}

void from_json(const json& j, FaceIdentity& v) {
    j.at("image").get_to(v.image);
    j.at("predicted_gender").get_to(v.predicted_gender);
    v.gender_confidence = j.value("gender_confidence", 1.0);
    j.at("predicted_age").get_to(v.predicted_age);
}

void to_json(json& j, const ClientProfile& v) {
    j = json{{"profile_id", v.profile_id}, {"source", v.source}, {"face", v.face}, {"resistance", v.resistance}};
}

void from_json(const json& j, ClientProfile& v) {
    j.at("profile_id").get_to(v.profile_id);
    j.at("source").get_to(v.source);
    j.at("face").get_to(v.face);
    j.at("resistance").get_to(v.resistance);
}

void to_json(json& j, const Turn& v) {
    j = json{{"speaker", v.speaker}, {"directions", v.directions}, {"utterance", v.utterance}};
    j["image"] = v.image ? json(*v.image) : json(nullptr);
    if (v.end_marker) {
        j["end_marker"] = true;
    }
}

void from_json(const json& j, Turn& v) {
    j.at("speaker").get_to(v.speaker);
    j.at("directions").get_to(v.directions);
    j.at("utterance").get_to(v.utterance);
    v.image.reset();
    if (auto it = j.find("image"); it != j.end() && !it->is_null()) {
        v.image = it->get<ImageRef>();
    }
    v.end_marker = j.value("end_marker", false);
}

void to_json(json& j, const Screenplay& v) {
    j = json{{"profile_id", v.profile_id}, {"turns", v.turns}};
}

void from_json(const json& j, Screenplay& v) {
    j.at("profile_id").get_to(v.profile_id);
    j.at("turns").get_to(v.turns);
}

} // namespace counselforge
