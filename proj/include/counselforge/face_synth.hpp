// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/gateway.hpp"
#include "counselforge/screenplay.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/types.hpp"

#include <string>
#include <vector>

namespace counselforge {

struct ExpressionPromptPair {
    std::string target;
    std::string contrast;
};

struct CompiledImagePrompts {
    std::string positive;
    std::string negative;

    friend bool operator==(const CompiledImagePrompts&, const CompiledImagePrompts&) = default;
};

/// Extracts the two labeled expression lines. Throws ParseError if either is missing or
/// both are the same.
ExpressionPromptPair parse_expression_reply(std::string_view reply);

ChatRequest expression_request(const TemplateSet& templates, const std::vector<Turn>& history,
                               std::string_view utterance_with_directions, const GenerationOptions& options = {});

/// Asks the chat service for the pair; retries once on ParseError.
ExpressionPromptPair derive_expression_prompts(Gateway& gateway, const TemplateSet& templates,
                                               const std::vector<Turn>& history,
                                               std::string_view utterance_with_directions,
                                               const GenerationOptions& options = {});

CompiledImagePrompts compile_image_prompts(const TemplateSet& templates, Gender gender,
                                           const ExpressionPromptPair& pair);

ImageRef synthesize_turn_image(Gateway& gateway, const FaceIdentity& face, const CompiledImagePrompts& prompts,
                               std::uint64_t seed, const std::string& relative_path);

std::uint64_t turn_image_seed(std::uint64_t base_seed, std::string_view dialogue_id, std::size_t turn_index);
std::string turn_image_path(std::string_view dialogue_id, std::size_t turn_index);

struct ImageManifestRow {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    std::string path;
    std::uint64_t seed = 0;
    std::string positive;
    std::string negative;
};

void to_json(json& j, const ImageManifestRow& row);
void from_json(const json& j, ImageManifestRow& row);

struct DialogueSynthesis {
    std::vector<ImageManifestRow> rows;
    /// Client turns left without an image because their expression prompts never parsed.
    std::vector<std::size_t> flagged_turns;
};

/// Gives every client turn of the dialogue an image synthesized from the profile's face.
/// Turns whose expression prompt fails to parse after the retry keep no image and are listed.
DialogueSynthesis synthesize_dialogue_images(Gateway& gateway, const TemplateSet& templates,
                                             const ClientProfile& profile, std::string_view dialogue_id,
                                             std::vector<Turn>& turns, std::uint64_t base_seed,
                                             const GenerationOptions& options = {});

} // namespace counselforge
