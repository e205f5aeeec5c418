// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/eval_suite.hpp"
#include "counselforge/gateway.hpp"
#include "counselforge/pos_tagger.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/types.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace counselforge {

enum class FilterStage { img_txt, identity, gender, basic, copy_paste, alliance, nsfw, safety };

inline constexpr std::array<FilterStage, 8> kFilterStages = {
    FilterStage::img_txt,    FilterStage::identity, FilterStage::gender, FilterStage::basic,
    FilterStage::copy_paste, FilterStage::alliance, FilterStage::nsfw,   FilterStage::safety};

std::string_view to_string(FilterStage s);
FilterStage parse_filter_stage(std::string_view text);

enum class GenderScope { every_turn, reference_only };

struct FilterConfig {
    double sim_min = 0.2;
    double identity_min = 0.3;
    double wai_min_normalized = 0.3;
    std::size_t max_words_per_utterance = 100;
    std::size_t min_turns = 4;
    std::size_t max_turns = 20;
    TurnUnit turn_unit = TurnUnit::exchange;
    std::size_t pos_repeat_limit = 3;
    std::size_t persona_ngram = 8;
    double nsfw_prob_max = 0.5;
    GenderScope gender_scope = GenderScope::every_turn;
    std::vector<FilterStage> order{kFilterStages.begin(), kFilterStages.end()};

    void validate() const;
};

void to_json(json& j, const FilterConfig& v);
void from_json(const json& j, FilterConfig& v);

struct FilterVerdict {
    FilterStage stage = FilterStage::img_txt;
    bool passed = true;
    std::optional<double> score;
    std::optional<double> threshold;
    std::string detail;

    friend bool operator==(const FilterVerdict&, const FilterVerdict&) = default;
};

void to_json(json& j, const FilterVerdict& v);
void from_json(const json& j, FilterVerdict& v);

/// A generated dialogue with images attached to its client turns.
struct Dialogue {
    std::string id;
    ClientProfile profile;
    std::vector<Turn> turns;
};

/// Services a filter run may call. Stages that need none ignore it.
struct FilterContext {
    Gateway* gateway = nullptr;
    const TemplateSet* templates = nullptr;
    const PosTagger* tagger = nullptr;
    JudgeOptions judge;
};

/// Image-level counts kept by the identity stage next to its dialogue-level verdicts.
struct ImageTally {
    std::size_t evaluated = 0;
    std::size_t below = 0;
};

FilterVerdict filter_image_text(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway);
FilterVerdict filter_identity(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway,
                              ImageTally* images = nullptr);
FilterVerdict filter_gender(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway);
FilterVerdict filter_basic(const Dialogue& d, const FilterConfig& cfg, const PosTagger& tagger);
FilterVerdict filter_copy_paste(const Dialogue& d, const FilterConfig& cfg);
FilterVerdict filter_alliance(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway,
                              const TemplateSet& templates, const JudgeOptions& judge = {});
/// The alliance decision on an already normalized mean. Twelve integer answers only reach
/// multiples of 1/48, so this is also how exact threshold values are checked.
FilterVerdict alliance_verdict(double normalized_mean, const FilterConfig& cfg);
FilterVerdict filter_nsfw(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway);
FilterVerdict filter_safety(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway);

/// Runs one stage by name. MissingImageError becomes a rejection; other errors propagate.
FilterVerdict run_stage(FilterStage stage, const Dialogue& d, const FilterConfig& cfg, const FilterContext& ctx,
                        ImageTally* identity_images = nullptr);

/// Case- and punctuation-folded tokens used by the copy-paste stage.
std::vector<std::string> fold_tokens(std::string_view text);

/// Length of the longest contiguous token run shared by `a` and `b`.
std::size_t longest_shared_run(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct StageCounts {
    std::size_t evaluated = 0;
    std::size_t rejected = 0;
    std::size_t errored = 0;

    [[nodiscard]] double reject_rate() const;
};

struct FilterReport {
    std::vector<FilterStage> order;
    std::map<FilterStage, StageCounts> stages;
    ImageTally identity_images;
    std::size_t input = 0;
    std::size_t kept = 0;
    double identity_min = 0.3;

    struct StageError {
        std::string dialogue_id;
        FilterStage stage = FilterStage::img_txt;
        std::string message;
    };
    std::vector<StageError> errors;

    /// Adds another report's counters. Both must share the stage order.
    void merge(const FilterReport& other);
};

json to_json_value(const FilterReport& report);
std::string render_filter_report(const FilterReport& report);

struct DialogueOutcome {
    std::string dialogue_id;
    std::vector<FilterVerdict> verdicts;
    bool kept = false;
    std::optional<std::string> error;
};

struct FilterResult {
    std::vector<Dialogue> kept;
    std::vector<DialogueOutcome> outcomes;
    FilterReport report;
};

/// Evaluates every dialogue stage by stage in `cfg.order`, stopping at the first
/// rejection. Dialogues run on `workers` threads; results keep input order.
FilterResult run_pipeline(const std::vector<Dialogue>& corpus, const FilterConfig& cfg, const FilterContext& ctx,
                          std::size_t workers = 1);

} // namespace counselforge
