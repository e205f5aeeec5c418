// SPDX-License-Identifier: Apache-2.0
#include "counselforge/filter_bank.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/statistics.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <set>
#include <thread>

namespace counselforge {

namespace {

constexpr std::array<std::string_view, 8> kStageNames = {"img_txt",    "identity", "gender", "basic",
                                                         "copy_paste", "alliance", "nsfw",   "safety"};

struct ClientImage {
    std::size_t turn_index;
    std::size_t client_ordinal;
    const Turn* turn;
};

// Client turns in order, each required to carry an image.
std::vector<ClientImage> client_images(const Dialogue& d) {
    std::vector<ClientImage> out;
    std::size_t ordinal = 0;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const auto& t = d.turns[i];
        if (t.speaker != Speaker::client) {
            continue;
        }
        ++ordinal;
        if (!t.image || t.image->path.empty()) {
            throw MissingImageError(fmt::format("dialogue {} client turn {} (turn index {}) has no image", d.id,
                                                ordinal, i));
        }
        out.push_back({i, ordinal, &t});
    }
    return out;
}

FilterVerdict verdict(FilterStage stage, bool passed, std::optional<double> score, std::optional<double> threshold,
                      std::string detail) {
    return FilterVerdict{stage, passed, score, threshold, std::move(detail)};
}

} // namespace

std::string_view to_string(FilterStage s) {
    return kStageNames[static_cast<std::size_t>(s)];
}

FilterStage parse_filter_stage(std::string_view text) {
    for (std::size_t i = 0; i < kStageNames.size(); ++i) {
        if (kStageNames[i] == text) {
            return kFilterStages[i];
        }
    }
    throw PreconditionError(fmt::format("unknown filter stage '{}'", text));
}

void FilterConfig::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!(sim_min >= -1.0 && sim_min <= 1.0)) {
        throw PreconditionError("sim_min must lie in [-1, 1]");
    }
    if (!(identity_min >= -1.0 && identity_min <= 1.0)) {
        throw PreconditionError("identity_min must lie in [-1, 1]");
    }
    if (!unit(wai_min_normalized)) {
        throw PreconditionError("wai_min_normalized must lie in [0, 1]");
    }
    if (!unit(nsfw_prob_max)) {
        throw PreconditionError("nsfw_prob_max must lie in [0, 1]");
    }
    if (min_turns >= max_turns) {
        throw PreconditionError("min_turns must be below max_turns");
    }
    if (max_words_per_utterance == 0 || pos_repeat_limit == 0 || persona_ngram == 0) {
        throw PreconditionError("word, POS-run and n-gram limits must be positive");
    }
    std::set<FilterStage> seen(order.begin(), order.end());
    if (order.empty() || seen.size() != order.size()) {
        throw PreconditionError("filter order must list each stage at most once");
    }
}

void to_json(json& j, const FilterConfig& v) {
    std::vector<std::string> order;
    for (auto s : v.order) {
        order.emplace_back(to_string(s));
    }
    j = json{{"sim_min", v.sim_min},
             {"identity_min", v.identity_min},
             {"wai_min_normalized", v.wai_min_normalized},
             {"max_words_per_utterance", v.max_words_per_utterance},
             {"min_turns", v.min_turns},
             {"max_turns", v.max_turns},
             {"turn_unit", to_string(v.turn_unit)},
             {"pos_repeat_limit", v.pos_repeat_limit},
             {"persona_ngram", v.persona_ngram},
             {"nsfw_prob_max", v.nsfw_prob_max},
             {"gender_scope", v.gender_scope == GenderScope::every_turn ? "every_turn" : "reference_only"},
             {"order", order}};
}

void from_json(const json& j, FilterConfig& v) {
    FilterConfig d;
    v.sim_min = j.value("sim_min", d.sim_min);
    v.identity_min = j.value("identity_min", d.identity_min);
    v.wai_min_normalized = j.value("wai_min_normalized", d.wai_min_normalized);
    v.max_words_per_utterance = j.value("max_words_per_utterance", d.max_words_per_utterance);
    v.min_turns = j.value("min_turns", d.min_turns);
    v.max_turns = j.value("max_turns", d.max_turns);
    v.turn_unit = parse_turn_unit(j.value("turn_unit", std::string(to_string(d.turn_unit))));
    v.pos_repeat_limit = j.value("pos_repeat_limit", d.pos_repeat_limit);
    v.persona_ngram = j.value("persona_ngram", d.persona_ngram);
    v.nsfw_prob_max = j.value("nsfw_prob_max", d.nsfw_prob_max);
    const auto scope = j.value("gender_scope", std::string("every_turn"));
    if (scope != "every_turn" && scope != "reference_only") {
        throw PreconditionError(fmt::format("unknown gender_scope '{}'", scope));
    }
    v.gender_scope = scope == "every_turn" ? GenderScope::every_turn : GenderScope::reference_only;
    v.order = d.order;
    if (j.contains("order")) {
        v.order.clear();
        for (const auto& s : j.at("order")) {
            v.order.push_back(parse_filter_stage(s.get<std::string>()));
        }
    }
}

void to_json(json& j, const FilterVerdict& v) {
    j = json{{"stage", to_string(v.stage)}, {"passed", v.passed}, {"detail", v.detail}};
    j["score"] = v.score ? json(*v.score) : json(nullptr);
    j["threshold"] = v.threshold ? json(*v.threshold) : json(nullptr);
}

void from_json(const json& j, FilterVerdict& v) {
    v.stage = parse_filter_stage(j.at("stage").get<std::string>());
    j.at("passed").get_to(v.passed);
    j.at("detail").get_to(v.detail);
    v.score = j.at("score").is_null() ? std::nullopt : std::optional<double>(j.at("score").get<double>());
    v.threshold =
        j.at("threshold").is_null() ? std::nullopt : std::optional<double>(j.at("threshold").get<double>());
}

FilterVerdict filter_image_text(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway) {
    const auto images = client_images(d);
    if (images.empty()) {
        throw MissingImageError(fmt::format("dialogue {} has no client images", d.id));
    }
    double worst = 1.0;
    std::size_t worst_turn = 0;
    for (const auto& ci : images) {
        std::string text = join(ci.turn->directions, ", ");
        if (trim(text).empty()) {
            text = ci.turn->utterance;
        }
        if (trim(text).empty()) {
            throw PreconditionError(fmt::format("dialogue {} turn {} has neither directions nor text", d.id,
                                                ci.turn_index));
        }
        const double s = gateway.image_text_similarity(*ci.turn->image, text);
        if (s < worst) {
            worst = s;
            worst_turn = ci.turn_index;
        }
    }
    const bool passed = !(worst < cfg.sim_min);
    return verdict(FilterStage::img_txt, passed, worst, cfg.sim_min,
                   passed ? std::string{} : fmt::format("turn {} similarity {:.4f}", worst_turn, worst));
}

FilterVerdict filter_identity(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway, ImageTally* tally) {
    const auto images = client_images(d);
    const auto reference = gateway.face_embedding(d.profile.face.image);
    double worst = 1.0;
    std::size_t worst_turn = 0;
    std::size_t below = 0;
    for (const auto& ci : images) {
        const auto e = gateway.face_embedding(*ci.turn->image);
        const double s = cosine(reference.components, e.components);
        if (s < cfg.identity_min) {
            ++below;
        }
        if (s < worst) {
            worst = s;
            worst_turn = ci.turn_index;
        }
    }
    if (tally != nullptr) {
        tally->evaluated += images.size();
        tally->below += below;
    }
    const bool passed = below == 0;
    return verdict(FilterStage::identity, passed, worst, cfg.identity_min,
                   passed ? std::string{}
                          : fmt::format("{} of {} images below threshold, worst at turn {}", below, images.size(),
                                        worst_turn));
}

FilterVerdict filter_gender(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway) {
    const Gender expected = d.profile.source.gender;
    if (cfg.gender_scope == GenderScope::reference_only) {
        const auto p = gateway.face_attributes(d.profile.face.image);
        const bool ok = p.gender == expected;
        return verdict(FilterStage::gender, ok, std::nullopt, std::nullopt,
                       ok ? std::string{}
                          : fmt::format("reference image predicted {}, profile is {}", to_string(p.gender),
                                        to_string(expected)));
    }
    const auto images = client_images(d);
    for (const auto& ci : images) {
        const auto p = gateway.face_attributes(*ci.turn->image);
        if (p.gender != expected) {
            return verdict(FilterStage::gender, false, std::nullopt, std::nullopt,
                           fmt::format("client turn {} of {} (turn index {}) predicted {}, profile is {}",
                                       ci.client_ordinal, images.size(), ci.turn_index, to_string(p.gender),
                                       to_string(expected)));
        }
    }
    return verdict(FilterStage::gender, true, std::nullopt, std::nullopt, {});
}

FilterVerdict filter_basic(const Dialogue& d, const FilterConfig& cfg, const PosTagger& tagger) {
    const auto n = count_turns(d.turns, cfg.turn_unit);
    if (n < cfg.min_turns || n > cfg.max_turns) {
        return verdict(FilterStage::basic, false, std::nullopt, std::nullopt,
                       fmt::format("{} {}s outside [{}, {}]", n, to_string(cfg.turn_unit), cfg.min_turns,
                                   cfg.max_turns));
    }
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const auto& utterance = d.turns[i].utterance;
        const auto words = split_whitespace(utterance).size();
        if (words > cfg.max_words_per_utterance) {
            return verdict(FilterStage::basic, false, std::nullopt, std::nullopt,
                           fmt::format("turn {} has {} words", i, words));
        }
        std::vector<TaggedToken> tags;
        try {
            tags = tagger.tag(utterance);
        } catch (const TaggerError&) {
            throw;
        } catch (const std::exception& e) {
            throw TaggerError(fmt::format("tagger {} failed on turn {}: {}", tagger.name(), i, e.what()));
        }
        const auto run = longest_tag_run(tags);
        if (run > cfg.pos_repeat_limit) {
            return verdict(FilterStage::basic, false, std::nullopt, std::nullopt,
                           fmt::format("turn {} repeats one part-of-speech tag {} times in a row", i, run));
        }
    }
    return verdict(FilterStage::basic, true, std::nullopt, std::nullopt, {});
}

std::vector<std::string> fold_tokens(std::string_view text) {
    std::string folded;
    folded.reserve(text.size());
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        folded.push_back(std::isalnum(u) || u >= 0x80 ? static_cast<char>(std::tolower(u)) : ' ');
    }
    return split_whitespace(folded);
}

std::size_t longest_shared_run(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    std::size_t best = 0;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
            best = std::max(best, cur[j]);
        }
        std::swap(prev, cur);
    }
    return best;
}

FilterVerdict filter_copy_paste(const Dialogue& d, const FilterConfig& cfg) {
    const auto& s = d.profile.source;
    std::vector<std::pair<std::string, std::vector<std::string>>> fields = {
        {"name", fold_tokens(s.name)},
        {"occupation", fold_tokens(s.occupation)},
        {"distorted_thoughts", fold_tokens(s.distorted_thoughts)},
        {"thinking_trap", fold_tokens(s.thinking_trap)},
        {"reason_for_counseling", fold_tokens(s.reason_for_counseling)}};
    for (const auto& trait : s.personality_traits) {
        fields.emplace_back("personality_traits", fold_tokens(trait));
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        if (d.turns[i].speaker != Speaker::client) {
            continue;
        }
        const auto tokens = fold_tokens(d.turns[i].utterance);
        for (const auto& [field, ftokens] : fields) {
            const auto run = longest_shared_run(tokens, ftokens);
            best = std::max(best, run);
            if (run >= cfg.persona_ngram) {
                return verdict(FilterStage::copy_paste, false, static_cast<double>(run),
                               static_cast<double>(cfg.persona_ngram),
                               fmt::format("turn {} repeats {} tokens of {}", i, run, field));
            }
        }
    }
    return verdict(FilterStage::copy_paste, true, static_cast<double>(best), static_cast<double>(cfg.persona_ngram),
                   {});
}

FilterVerdict filter_alliance(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway,
                              const TemplateSet& templates, const JudgeOptions& judge) {
    return alliance_verdict(score_alliance(d.turns, gateway, templates, judge).normalized_mean(), cfg);
}

FilterVerdict alliance_verdict(double m, const FilterConfig& cfg) {
    const bool passed = !(m < cfg.wai_min_normalized);
    return verdict(FilterStage::alliance, passed, m, cfg.wai_min_normalized,
                   passed ? std::string{} : fmt::format("normalized alliance mean {:.4f}", m));
}

FilterVerdict filter_nsfw(const Dialogue& d, const FilterConfig& cfg, Gateway& gateway) {
    const auto images = client_images(d);
    double worst = 0.0;
    for (const auto& ci : images) {
        const auto v = gateway.classify(ServiceKind::nsfw, *ci.turn->image);
        worst = std::max(worst, v.probability);
        if (v.probability > cfg.nsfw_prob_max) {
            return verdict(FilterStage::nsfw, false, v.probability, cfg.nsfw_prob_max,
                           fmt::format("turn {} unsafe probability {:.4f}", ci.turn_index, v.probability));
        }
    }
    return verdict(FilterStage::nsfw, true, worst, cfg.nsfw_prob_max, {});
}

FilterVerdict filter_safety(const Dialogue& d, const FilterConfig& /*cfg*/, Gateway& gateway) {
    if (d.turns.empty()) {
        throw PreconditionError(fmt::format("dialogue {} is empty", d.id));
    }
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        if (trim(d.turns[i].utterance).empty()) {
            continue;
        }
        const auto v = gateway.classify(ServiceKind::safety, d.turns[i].utterance);
        if (v.label == "needs_intervention") {
            return verdict(FilterStage::safety, false, std::nullopt, std::nullopt,
                           fmt::format("turn {} flagged {}", i, v.label));
        }
    }
    return verdict(FilterStage::safety, true, std::nullopt, std::nullopt, {});
}

FilterVerdict run_stage(FilterStage stage, const Dialogue& d, const FilterConfig& cfg, const FilterContext& ctx,
                        ImageTally* identity_images) {
    auto need_gateway = [&]() -> Gateway& {
        if (ctx.gateway == nullptr) {
            throw PreconditionError(fmt::format("stage {} needs a gateway", to_string(stage)));
        }
        return *ctx.gateway;
    };
    try {
        switch (stage) {
        case FilterStage::img_txt:
            return filter_image_text(d, cfg, need_gateway());
        case FilterStage::identity:
            return filter_identity(d, cfg, need_gateway(), identity_images);
        case FilterStage::gender:
            return filter_gender(d, cfg, need_gateway());
        case FilterStage::basic: {
            if (ctx.tagger == nullptr) {
                return filter_basic(d, cfg, LexiconTagger{});
            }
            return filter_basic(d, cfg, *ctx.tagger);
        }
        case FilterStage::copy_paste:
            return filter_copy_paste(d, cfg);
        case FilterStage::alliance: {
            if (ctx.templates == nullptr) {
                return filter_alliance(d, cfg, need_gateway(), TemplateSet{}, ctx.judge);
            }
            return filter_alliance(d, cfg, need_gateway(), *ctx.templates, ctx.judge);
        }
        case FilterStage::nsfw:
            return filter_nsfw(d, cfg, need_gateway());
        case FilterStage::safety:
            return filter_safety(d, cfg, need_gateway());
        }
    } catch (const MissingImageError& e) {
        return verdict(stage, false, std::nullopt, std::nullopt, e.what());
    }
    throw PreconditionError("unreachable filter stage");
}

double StageCounts::reject_rate() const {
    return evaluated == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(evaluated);
}

void FilterReport::merge(const FilterReport& other) {
    if (order.empty()) {
        order = other.order;
        identity_min = other.identity_min;
    } else if (!other.order.empty() && other.order != order) {
        throw PreconditionError("cannot merge filter reports with different stage orders");
    }
    for (const auto& [stage, c] : other.stages) {
        auto& mine = stages[stage];
        mine.evaluated += c.evaluated;
        mine.rejected += c.rejected;
        mine.errored += c.errored;
    }
    identity_images.evaluated += other.identity_images.evaluated;
    identity_images.below += other.identity_images.below;
    input += other.input;
    kept += other.kept;
    errors.insert(errors.end(), other.errors.begin(), other.errors.end());
}

json to_json_value(const FilterReport& report) {
    json order = json::array();
    json stages = json::array();
    for (auto s : report.order) {
        order.push_back(to_string(s));
        const auto it = report.stages.find(s);
        const StageCounts c = it == report.stages.end() ? StageCounts{} : it->second;
        stages.push_back({{"stage", to_string(s)},
                          {"evaluated", c.evaluated},
                          {"rejected", c.rejected},
                          {"errored", c.errored},
                          {"reject_rate", c.reject_rate()}});
    }
    json errors = json::array();
    for (const auto& e : report.errors) {
        errors.push_back({{"dialogue_id", e.dialogue_id}, {"stage", to_string(e.stage)}, {"message", e.message}});
    }
    const auto& img = report.identity_images;
    return {{"stage_order", order},
            {"short_circuit", true},
            {"identity_min", report.identity_min},
            {"identity_min_note", "identity threshold is a configured value, not a published one"},
            {"input", report.input},
            {"kept", report.kept},
            {"stages", stages},
            {"identity_images",
             {{"evaluated", img.evaluated},
              {"below_threshold", img.below},
              {"reject_rate", img.evaluated == 0 ? 0.0
                                                 : static_cast<double>(img.below) /
                                                       static_cast<double>(img.evaluated)}}},
            {"errors", errors}};
}

std::string render_filter_report(const FilterReport& report) {
    std::string out = fmt::format("identity_min = {:.3f} (configured; stages run in the order below and stop at the "
                                  "first rejection)\n",
                                  report.identity_min);
    out += fmt::format("{:<12}{:>10}{:>10}{:>9}{:>10}\n", "stage", "evaluated", "rejected", "errors", "rate %");
    for (auto s : report.order) {
        const auto it = report.stages.find(s);
        const StageCounts c = it == report.stages.end() ? StageCounts{} : it->second;
        out += fmt::format("{:<12}{:>10}{:>10}{:>9}{:>10.2f}\n", to_string(s), c.evaluated, c.rejected, c.errored,
                           100.0 * c.reject_rate());
    }
    const auto& img = report.identity_images;
    out += fmt::format("identity per image: {} of {} below threshold\n", img.below, img.evaluated);
    out += fmt::format("kept {} of {}\n", report.kept, report.input);
    return out;
}

namespace {

struct Evaluated {
    DialogueOutcome outcome;
    std::vector<FilterStage> evaluated;
    std::optional<FilterStage> rejected_at;
    std::optional<FilterStage> errored_at;
    ImageTally identity;
};

Evaluated evaluate_dialogue(const Dialogue& d, const FilterConfig& cfg, const FilterContext& ctx) {
    Evaluated ev;
    ev.outcome.dialogue_id = d.id;
    for (auto stage : cfg.order) {
        ev.evaluated.push_back(stage);
        try {
            auto v = run_stage(stage, d, cfg, ctx, &ev.identity);
            const bool passed = v.passed;
            ev.outcome.verdicts.push_back(std::move(v));
            if (!passed) {
                ev.rejected_at = stage;
                return ev;
            }
        } catch (const std::exception& e) {
            ev.errored_at = stage;
            ev.outcome.error = fmt::format("{}: {}", to_string(stage), e.what());
            return ev;
        }
    }
    ev.outcome.kept = true;
    return ev;
}

} // namespace

FilterResult run_pipeline(const std::vector<Dialogue>& corpus, const FilterConfig& cfg, const FilterContext& ctx,
                          std::size_t workers) {
    if (corpus.empty()) {
        throw EmptyCorpusError("filter input is empty");
    }
    cfg.validate();
    std::vector<Evaluated> results(corpus.size());
    workers = std::clamp<std::size_t>(workers, 1, corpus.size());
    if (workers == 1) {
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            results[i] = evaluate_dialogue(corpus[i], cfg, ctx);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < corpus.size(); i = next++) {
                    results[i] = evaluate_dialogue(corpus[i], cfg, ctx);
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    FilterResult out;
    out.report.order = cfg.order;
    out.report.identity_min = cfg.identity_min;
    out.report.input = corpus.size();
    for (auto s : cfg.order) {
        out.report.stages[s];
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto& r = results[i];
        for (auto s : r.evaluated) {
            ++out.report.stages[s].evaluated;
        }
        if (r.rejected_at) {
            ++out.report.stages[*r.rejected_at].rejected;
        }
        if (r.errored_at) {
            ++out.report.stages[*r.errored_at].errored;
            out.report.errors.push_back({corpus[i].id, *r.errored_at, *r.outcome.error});
        }
        out.report.identity_images.evaluated += r.identity.evaluated;
        out.report.identity_images.below += r.identity.below;
        if (r.outcome.kept) {
            out.kept.push_back(corpus[i]);
            ++out.report.kept;
        }
        out.outcomes.push_back(std::move(r.outcome));
    }
    return out;
}

} // namespace counselforge
