// SPDX-License-Identifier: Apache-2.0
#include "counselforge/face_synth.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

namespace counselforge {

namespace {

constexpr std::string_view kTargetLabel = "Facial Expression Description:";
constexpr std::string_view kContrastLabel = "Contrasting Facial Expression Description:";

std::string clean_value(std::string_view v) {
    auto s = trim(v);
    while (!s.empty() && (s.front() == '[' || s.front() == '*')) {
        s.erase(0, 1);
    }
    while (!s.empty() && (s.back() == ']' || s.back() == '*')) {
        s.pop_back();
    }
    return trim(s);
}

} // namespace

ExpressionPromptPair parse_expression_reply(std::string_view reply) {
    std::optional<std::string> target;
    std::optional<std::string> contrast;
    for (const auto& line : split_lines(reply)) {
        if (auto pos = line.find(kContrastLabel); pos != std::string::npos) {
            if (!contrast) {
                contrast = clean_value(std::string_view(line).substr(pos + kContrastLabel.size()));
            }
        } else if (auto tpos = line.find(kTargetLabel); tpos != std::string::npos) {
            if (!target) {
                target = clean_value(std::string_view(line).substr(tpos + kTargetLabel.size()));
            }
        }
    }
    if (!target || target->empty()) {
        throw ParseError("expression reply has no facial expression description");
    }
    if (!contrast || contrast->empty()) {
        throw ParseError("expression reply has no contrasting facial expression description");
    }
    if (*target == *contrast) {
        throw ParseError("expression reply gives the same text for target and contrast");
    }
    return {std::move(*target), std::move(*contrast)};
}

ChatRequest expression_request(const TemplateSet& templates, const std::vector<Turn>& history,
                               std::string_view utterance_with_directions, const GenerationOptions& options) {
    if (trim(utterance_with_directions).empty()) {
        throw PreconditionError("expression prompts need a non-empty utterance");
    }
    std::vector<std::string> lines;
    lines.reserve(history.size());
    for (const auto& t : history) {
        lines.push_back(render_turn(t));
    }
    ChatRequest req;
    req.messages.push_back({ChatRole::user,
                            render_template(templates.get("expression_refine"),
                                            {{"history", join(lines, "\n")},
                                             {"utterance", std::string(utterance_with_directions)}}),
                            std::nullopt});
    req.temperature = options.temperature;
    req.seed = options.seed;
    return req;
}

ExpressionPromptPair derive_expression_prompts(Gateway& gateway, const TemplateSet& templates,
                                               const std::vector<Turn>& history,
                                               std::string_view utterance_with_directions,
                                               const GenerationOptions& options) {
    auto req = expression_request(templates, history, utterance_with_directions, options);
    for (int attempt = 0;; ++attempt) {
        try {
            return parse_expression_reply(gateway.complete_chat(req));
        } catch (const ParseError&) {
            if (attempt >= 1) {
                throw;
            }
            // A new seed keeps the retry from hitting the cached reply.
            req.seed = req.seed.value_or(0) + 1;
        }
    }
}

CompiledImagePrompts compile_image_prompts(const TemplateSet& templates, Gender gender,
                                           const ExpressionPromptPair& pair) {
    if (pair.target.empty() || pair.contrast.empty()) {
        throw PreconditionError("expression prompts must both be non-empty");
    }
    return {render_template(templates.get("image_positive"),
                            {{"gender", std::string(to_string(gender))}, {"llama3 prompt", pair.target}}),
            render_template(templates.get("image_negative"), {{"llama3 negative prompt", pair.contrast}})};
}

ImageRef synthesize_turn_image(Gateway& gateway, const FaceIdentity& face, const CompiledImagePrompts& prompts,
                               std::uint64_t seed, const std::string& relative_path) {
    if (!gateway.images().exists(face.image)) {
        throw PreconditionError(fmt::format("reference image '{}' is not resolvable", face.image.path));
    }
    ImageSynthRequest req{face.image, prompts.positive, prompts.negative, seed};
    try {
        return gateway.synthesize_face(req, relative_path);
    } catch (const StorageError&) {
        throw;
    } catch (const PreconditionError&) {
        throw;
    } catch (const Error& e) {
        throw GenerationError(fmt::format("image synthesis for '{}': {}", relative_path, e.what()));
    }
}

std::uint64_t turn_image_seed(std::uint64_t base_seed, std::string_view dialogue_id, std::size_t turn_index) {
    return derive_seed(base_seed, fmt::format("image|{}|{}", dialogue_id, turn_index));
}

std::string turn_image_path(std::string_view dialogue_id, std::size_t turn_index) {
    return fmt::format("images/{}/{}.png", dialogue_id, turn_index);
}

void to_json(json& j, const ImageManifestRow& row) {
    j = json{{"dialogue_id", row.dialogue_id}, {"turn_index", row.turn_index}, {"path", row.path},
             {"seed", row.seed},               {"positive", row.positive},     {"negative", row.negative}};
}

void from_json(const json& j, ImageManifestRow& row) {
    j.at("dialogue_id").get_to(row.dialogue_id);
    j.at("turn_index").get_to(row.turn_index);
    j.at("path").get_to(row.path);
    j.at("seed").get_to(row.seed);
    j.at("positive").get_to(row.positive);
    j.at("negative").get_to(row.negative);
}

DialogueSynthesis synthesize_dialogue_images(Gateway& gateway, const TemplateSet& templates,
                                             const ClientProfile& profile, std::string_view dialogue_id,
                                             std::vector<Turn>& turns, std::uint64_t base_seed,
                                             const GenerationOptions& options) {
    DialogueSynthesis out;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        auto& turn = turns[i];
        if (turn.speaker != Speaker::client) {
            turn.image.reset();
            continue;
        }
        const std::vector<Turn> history(turns.begin(), turns.begin() + static_cast<std::ptrdiff_t>(i));
        const auto text = render_turn(turn).substr(std::string_view("Client: ").size());
        ExpressionPromptPair pair;
        try {
            pair = derive_expression_prompts(gateway, templates, history, text, options);
        } catch (const ParseError&) {
            turn.image.reset();
            out.flagged_turns.push_back(i);
            continue;
        }
        const auto prompts = compile_image_prompts(templates, profile.source.gender, pair);
        const auto seed = turn_image_seed(base_seed, dialogue_id, i);
        const auto path = turn_image_path(dialogue_id, i);
        turn.image = synthesize_turn_image(gateway, profile.face, prompts, seed, path);
        out.rows.push_back({std::string(dialogue_id), i, path, seed, prompts.positive, prompts.negative});
    }
    return out;
}

} // namespace counselforge
