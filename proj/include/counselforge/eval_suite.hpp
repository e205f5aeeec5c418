// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/gateway.hpp"
#include "counselforge/statistics.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/types.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace counselforge {

inline constexpr std::array<std::string_view, 5> kSkillDimensions = {
    "understanding", "interpersonal_effectiveness", "collaboration", "guided_discovery", "focus"};

struct SkillScores {
    /// Indexed like kSkillDimensions, each in [0, 6].
    std::array<double, 5> values{};

    [[nodiscard]] double mean() const;
};

enum class AllianceDimension { goal, approach, affective_bond };
inline constexpr std::array<AllianceDimension, 3> kAllianceDimensions = {
    AllianceDimension::goal, AllianceDimension::approach, AllianceDimension::affective_bond};

std::string_view to_string(AllianceDimension d);
AllianceDimension parse_alliance_dimension(std::string_view text);

struct AllianceScores {
    double goal = 0.0;
    double approach = 0.0;
    double affective_bond = 0.0;
    std::array<int, 12> per_question{};

    [[nodiscard]] double get(AllianceDimension d) const;
    /// Mean of the twelve answers mapped from [1, 5] onto [0, 1].
    [[nodiscard]] double normalized_mean() const;
};

/// Questions 1-4 are Goal, 5-8 Approach, 9-12 Affective Bond. Throws RangeError outside 1..5.
AllianceScores alliance_from_questions(const std::array<int, 12>& answers);

/// Last `[[k]]` in the text whose k lies in [lo, hi]; whitespace inside the brackets is allowed.
std::optional<int> parse_rating(std::string_view text, int lo, int hi);
/// Last `[[k]]` in the text regardless of range.
std::optional<int> parse_last_bracket_number(std::string_view text);

struct JudgeOptions {
    /// Score alliance even when the guideline files are empty.
    bool no_guidelines = false;
    /// Judge endpoint; the gateway's chat endpoint when unset.
    std::optional<ServiceEndpoint> endpoint;
    double temperature = 0.0;
};

/// "Counselor: ..." / "Client: [..] ..." lines as shown to the judge.
std::string render_conversation(const std::vector<Turn>& turns);

SkillScores score_skills(const std::vector<Turn>& turns, Gateway& gateway, const TemplateSet& templates,
                         const JudgeOptions& options = {});

/// The twelve questions and their guidelines. Refuses (PreconditionError) when a guideline is
/// empty unless options.no_guidelines is set.
AllianceScores score_alliance(const std::vector<Turn>& turns, Gateway& gateway, const TemplateSet& templates,
                              const JudgeOptions& options = {});

std::vector<std::string> wai_questions(const TemplateSet& templates);

struct LengthStats {
    double avg_tokens_per_turn = 0.0;
    std::size_t max_tokens_per_turn = 0;
};

/// Whitespace tokens over therapist turns. Throws PreconditionError without therapist turns.
LengthStats length_stats(const std::vector<Turn>& turns);

/// mean(resistant) - mean(non_resistant) with all resistant types pooled.
double delta_vs_nonresistant(const std::map<ResistanceType, std::vector<double>>& scores_by_type);

struct Judgment {
    std::string case_id;
    AllianceDimension dimension = AllianceDimension::goal;
    std::string model_a;
    std::string model_b;
    std::string winner;
    std::string rater;

    friend bool operator==(const Judgment&, const Judgment&) = default;
};

void to_json(json& j, const Judgment& v);
void from_json(const json& j, Judgment& v);
void validate(const Judgment& j);

struct WinRates {
    std::vector<std::string> models;
    /// cells[{i, j}] = percent of i-vs-j judgments won by i.
    std::map<std::pair<std::string, std::string>, double> cells;
    std::map<std::pair<std::string, std::string>, std::size_t> totals;
    std::map<std::string, double> overall;
};

WinRates aggregate_win_rates(const std::vector<Judgment>& judgments);
json to_json_value(const WinRates& rates);
std::string render_win_rates(const WinRates& rates, std::string_view title);

std::vector<Judgment> read_judgments_csv(std::string_view csv);
std::string write_judgments_csv(const std::vector<Judgment>& judgments);

/// One scored session in the score store.
struct ScoreRow {
    std::string session_id;
    std::string model;
    std::string profile_id;
    ResistanceType resistance = ResistanceType::non_resistant;
    SkillScores skills;
    AllianceScores alliance;
    LengthStats length;
};

void to_json(json& j, const ScoreRow& v);
void from_json(const json& j, ScoreRow& v);

struct ReportOptions {
    /// Model the t-tests compare against; no tests when empty.
    std::string baseline_model;
    /// Pair by profile source rather than by session.
    bool pair_by_profile = false;
    double significance = 0.05;
};

/// Means, deltas, t-tests and the length correlation, as JSON.
json build_eval_report(const std::vector<ScoreRow>& rows, const ReportOptions& options = {});
std::string render_eval_report(const json& report);

} // namespace counselforge
