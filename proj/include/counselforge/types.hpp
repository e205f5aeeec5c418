// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace counselforge {

using json = nlohmann::json;

enum class Gender { man, woman };
enum class Speaker { therapist, client };
enum class ResistanceType { cognitive, emotional, behavioral, non_resistant };
enum class TherapistVariant { base, planning, planning_ec };

inline constexpr std::array<ResistanceType, 4> kResistanceTypes = {
    ResistanceType::cognitive, ResistanceType::emotional, ResistanceType::behavioral,
    ResistanceType::non_resistant};

std::string_view to_string(Gender g);
std::string_view to_string(Speaker s);
std::string_view to_string(ResistanceType r);
std::string_view to_string(TherapistVariant v);

Gender parse_gender(std::string_view text);
Speaker parse_speaker(std::string_view text);
ResistanceType parse_resistance(std::string_view text);
TherapistVariant parse_variant(std::string_view text);

bool is_resistant(ResistanceType r);

/// Location of an image inside an ImageStore, relative to the store root.
struct ImageRef {
    std::string path;

    friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

/// The twelve techniques a counseling plan may name.
inline constexpr std::array<std::string_view, 12> kCbtTechniques = {
    "Efficiency Evaluation",   "Pie Chart Technique",      "Alternative Perspective",
    "Decatastrophizing",       "Pros and Cons Analysis",   "Evidence-Based Questioning",
    "Reality Testing",         "Continuum Technique",      "Changing Rules to Wishes",
    "Behavior Experiment",     "Problem-Solving Skills Training", "Systematic Exposure"};

bool is_known_technique(std::string_view technique);

struct CbtPlan {
    std::string technique;
    std::string plan;

    friend bool operator==(const CbtPlan&, const CbtPlan&) = default;
};

struct SourceProfile {
    std::string name;
    int age = 0;
    Gender gender = Gender::woman;
    std::string occupation;
    std::vector<std::string> personality_traits;
    std::string distorted_thoughts;
    std::string thinking_trap;
    std::string reason_for_counseling;
    std::string cbt_technique;
    std::string cbt_plan;

    friend bool operator==(const SourceProfile&, const SourceProfile&) = default;
};

/// Throws PreconditionError naming the first violated field.
void validate(const SourceProfile& profile);

struct FaceIdentity {
    ImageRef image;
    Gender predicted_gender = Gender::woman;
    double gender_confidence = 1.0;
    double predicted_age = 0.0;

    friend bool operator==(const FaceIdentity&, const FaceIdentity&) = default;
};

struct ClientProfile {
    std::string profile_id;
    SourceProfile source;
    FaceIdentity face;
    ResistanceType resistance = ResistanceType::non_resistant;

    friend bool operator==(const ClientProfile&, const ClientProfile&) = default;
};

struct Turn {
    Speaker speaker = Speaker::therapist;
    std::vector<std::string> directions;
    std::string utterance;
    std::optional<ImageRef> image;
    /// Set when the utterance carried the client end marker.
    bool end_marker = false;

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct Screenplay {
    std::string profile_id;
    std::vector<Turn> turns;

    friend bool operator==(const Screenplay&, const Screenplay&) = default;
};

std::size_t count_client_turns(const std::vector<Turn>& turns);

/// How a dialogue length is counted. An exchange is a therapist/client pair, so a
/// dialogue of u utterances has ceil(u / 2) exchanges.
enum class TurnUnit { utterance, exchange };

std::string_view to_string(TurnUnit u);
TurnUnit parse_turn_unit(std::string_view text);
std::size_t count_turns(const std::vector<Turn>& turns, TurnUnit unit);

void to_json(json& j, const ImageRef& v);
void from_json(const json& j, ImageRef& v);
void to_json(json& j, const CbtPlan& v);
void from_json(const json& j, CbtPlan& v);
void to_json(json& j, const SourceProfile& v);
void from_json(const json& j, SourceProfile& v);
void to_json(json& j, const FaceIdentity& v);
void from_json(const json& j, FaceIdentity& v);
void to_json(json& j, const ClientProfile& v);
void from_json(const json& j, ClientProfile& v);
void to_json(json& j, const Turn& v);
void from_json(const json& j, Turn& v);
void to_json(json& j, const Screenplay& v);
void from_json(const json& j, Screenplay& v);

} // namespace counselforge

namespace nlohmann {

template <>
struct adl_serializer<counselforge::Gender> {
    static void to_json(json& j, counselforge::Gender v) { j = counselforge::to_string(v); }
    static void from_json(const json& j, counselforge::Gender& v) {
        v = counselforge::parse_gender(j.get<std::string>());
    }
};

template <>
struct adl_serializer<counselforge::Speaker> {
    static void to_json(json& j, counselforge::Speaker v) { j = counselforge::to_string(v); }
    static void from_json(const json& j, counselforge::Speaker& v) {
        v = counselforge::parse_speaker(j.get<std::string>());
    }
};

template <>
struct adl_serializer<counselforge::ResistanceType> {
    static void to_json(json& j, counselforge::ResistanceType v) { j = counselforge::to_string(v); }
    static void from_json(const json& j, counselforge::ResistanceType& v) {
        v = counselforge::parse_resistance(j.get<std::string>());
    }
};

template <>
struct adl_serializer<counselforge::TherapistVariant> {
    static void to_json(json& j, counselforge::TherapistVariant v) { j = counselforge::to_string(v); }
    static void from_json(const json& j, counselforge::TherapistVariant& v) {
        v = counselforge::parse_variant(j.get<std::string>());
    }
};

} // namespace nlohmann
