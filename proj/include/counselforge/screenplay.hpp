// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/gateway.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/types.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace counselforge {

inline constexpr std::string_view kEndMarker = "[/END]";

struct ParsedScreenplay {
    Screenplay screenplay;
    /// Consecutive same-speaker lines folded into one turn.
    std::size_t merged_same_speaker = 0;
    /// Lines that held only stage directions and were dropped.
    std::size_t dropped_direction_only = 0;
    std::optional<Speaker> starter;
};

/// Parses `Therapist:` / `Counselor:` / `Client:` lines into turns. Bracketed groups become
/// directions in order of appearance; `[/END]` sets the end marker. Unprefixed lines continue
/// the previous turn. Throws ParseError (with 1-based line numbers) for text before the first
/// speaker prefix, nested or unbalanced brackets, or an input without any turn.
ParsedScreenplay parse_screenplay(std::string_view raw, std::string profile_id = {});

/// Parses a single utterance body (no speaker prefix) into a turn.
Turn parse_turn_text(Speaker speaker, std::string_view text, std::size_t line_no = 0);

/// Recognizes a speaker prefix and returns the text after it.
std::optional<std::pair<Speaker, std::string>> split_speaker_prefix(std::string_view line);

/// Utterance text without any bracketed span or end marker.
std::string strip_directions(const Turn& turn);
std::string strip_bracket_spans(std::string_view text);

/// "Client: [d1] [d2] utterance [/END]". The therapist label is "Therapist" unless given.
std::string render_turn(const Turn& turn, bool with_directions = true, std::string_view therapist_label = "Therapist");
std::string render_screenplay(const Screenplay& screenplay);

/// "Name: X, Age: N, Gender: g, Occupation: o"
std::string client_information(const SourceProfile& profile);
std::string cbt_tech_and_plan(std::string_view technique, std::string_view plan);

struct GenerationOptions {
    double temperature = 0.7;
    std::optional<std::int64_t> seed;
};

/// The exact chat request used to generate a screenplay for `profile`.
ChatRequest screenplay_request(const ClientProfile& profile, const TemplateSet& templates,
                               const GenerationOptions& options = {});

/// Raw screenplay text from the chat service. Gateway failures surface as GenerationError.
std::string generate_screenplay(const ClientProfile& profile, Gateway& gateway, const TemplateSet& templates,
                                const GenerationOptions& options = {});

} // namespace counselforge
