// SPDX-License-Identifier: Apache-2.0
#include "counselforge/screenplay.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <regex>

namespace counselforge {

std::optional<std::pair<Speaker, std::string>> split_speaker_prefix(std::string_view line) {
    static const std::regex prefix(R"(^\s*\**\s*(Therapist|Counselor|Counsellor|Client)\s*\**\s*:\s*\**\s*)",
                                   std::regex::icase);
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(line.begin(), line.end(), m, prefix)) {
        return std::nullopt;
    }
    const auto label = to_lower(m[1].str());
    const auto speaker = label == "client" ? Speaker::client : Speaker::therapist;
    return std::make_pair(speaker, std::string(line.substr(static_cast<std::size_t>(m.length(0)))));
}

Turn parse_turn_text(Speaker speaker, std::string_view text, std::size_t line_no) {
    Turn turn;
    turn.speaker = speaker;
    std::string rest;
    std::size_t i = 0;
    auto fail = [&](const std::string& what) {
        throw ParseError(line_no > 0 ? fmt::format("line {}: {}", line_no, what) : what,
                         line_no > 0 ? std::vector<std::size_t>{line_no} : std::vector<std::size_t>{});
    };
    while (i < text.size()) {
        const char c = text[i];
        if (c == ']') {
            fail("unbalanced ']'");
        }
        if (c != '[') {
            rest.push_back(c);
            ++i;
            continue;
        }
        const auto close = text.find(']', i + 1);
        if (close == std::string_view::npos) {
            fail("unbalanced '['");
        }
        const auto inner = text.substr(i + 1, close - i - 1);
        if (inner.find('[') != std::string_view::npos) {
            fail("nested stage direction");
        }
        if (trim(inner) == "/END") {
            turn.end_marker = true;
        } else if (auto d = collapse_spaces(inner); !d.empty()) {
            turn.directions.push_back(std::move(d));
        }
        rest.push_back(' ');
        i = close + 1;
    }
    turn.utterance = collapse_spaces(rest);
    return turn;
}

ParsedScreenplay parse_screenplay(std::string_view raw, std::string profile_id) {
    struct Segment {
        Speaker speaker;
        std::string text;
        std::size_t line_no;
    };
    std::vector<Segment> segments;
    std::vector<std::size_t> orphan_lines;
    const auto lines = split_lines(raw);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& line = lines[i];
        if (trim(line).empty()) {
            continue;
        }
        if (auto prefixed = split_speaker_prefix(line)) {
            segments.push_back({prefixed->first, prefixed->second, i + 1});
        } else if (!segments.empty()) {
            segments.back().text += " " + trim(line);
        } else {
            orphan_lines.push_back(i + 1);
        }
    }
    if (!orphan_lines.empty()) {
        std::vector<std::string> nums;
        for (auto n : orphan_lines) {
            nums.push_back(std::to_string(n));
        }
        throw ParseError(fmt::format("lines without a speaker prefix: {}", join(nums, ", ")), orphan_lines);
    }

    ParsedScreenplay out;
    out.screenplay.profile_id = std::move(profile_id);
    for (const auto& seg : segments) {
        auto turn = parse_turn_text(seg.speaker, seg.text, seg.line_no);
        if (turn.utterance.empty()) {
            ++out.dropped_direction_only;
            continue;
        }
        auto& turns = out.screenplay.turns;
        if (!turns.empty() && turns.back().speaker == turn.speaker) {
            auto& prev = turns.back();
            prev.directions.insert(prev.directions.end(), turn.directions.begin(), turn.directions.end());
            prev.utterance += " " + turn.utterance;
            prev.end_marker = prev.end_marker || turn.end_marker;
            ++out.merged_same_speaker;
            continue;
        }
        turns.push_back(std::move(turn));
    }
    if (out.screenplay.turns.empty()) {
        throw ParseError("screenplay contains no turns");
    }
    out.starter = out.screenplay.turns.front().speaker;
    return out;
}

std::string strip_bracket_spans(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t depth = 0;
    for (char c : text) {
        if (c == '[') {
            ++depth;
            out.push_back(' ');
        } else if (c == ']') {
            if (depth > 0) {
                --depth;
            }
            out.push_back(' ');
        } else if (depth == 0) {
            out.push_back(c);
        }
    }
    return collapse_spaces(out);
}

std::string strip_directions(const Turn& turn) {
    return strip_bracket_spans(turn.utterance);
}

std::string render_turn(const Turn& turn, bool with_directions, std::string_view therapist_label) {
    std::string out(turn.speaker == Speaker::client ? std::string_view("Client") : therapist_label);
    out += ":";
    if (with_directions) {
        for (const auto& d : turn.directions) {
            out += " [" + d + "]";
        }
        out += " " + turn.utterance;
        if (turn.end_marker) {
            out += " ";
            out += kEndMarker;
        }
    } else {
        out += " " + strip_directions(turn);
    }
    return out;
}

std::string render_screenplay(const Screenplay& screenplay) {
    std::vector<std::string> lines;
    lines.reserve(screenplay.turns.size());
    for (const auto& t : screenplay.turns) {
        lines.push_back(render_turn(t));
    }
    return join(lines, "\n");
}

std::string client_information(const SourceProfile& p) {
    return fmt::format("Name: {}, Age: {}, Gender: {}, Occupation: {}", p.name, p.age, to_string(p.gender),
                       p.occupation);
}

std::string cbt_tech_and_plan(std::string_view technique, std::string_view plan) {
    return fmt::format("{}\n{}", technique, plan);
}

ChatRequest screenplay_request(const ClientProfile& profile, const TemplateSet& templates,
                               const GenerationOptions& options) {
    validate(profile.source);
    const auto& s = profile.source;
    const TemplateValues values = {
        {"client information", client_information(s)},
        {"personality trait", join(s.personality_traits, ", ")},
        {"intrusive thoughts", s.distorted_thoughts},
        {"cognitive distortions", s.thinking_trap},
        {"reason counseling", s.reason_for_counseling},
        {"cbt tech and plan", cbt_tech_and_plan(s.cbt_technique, s.cbt_plan)},
    };
    ChatRequest req;
    req.system = templates.get("screenplay_system");
    auto query = render_template(templates.get("screenplay_query"), values);
    query += "\n\n";
    query += templates.get(fmt::format("resistance_{}", to_string(profile.resistance)));
    req.messages.push_back({ChatRole::user, std::move(query), std::nullopt});
    req.temperature = options.temperature;
    req.seed = options.seed;
    return req;
}

std::string generate_screenplay(const ClientProfile& profile, Gateway& gateway, const TemplateSet& templates,
                                const GenerationOptions& options) {
    const auto req = screenplay_request(profile, templates, options);
    std::string raw;
    try {
        raw = gateway.complete_chat(req);
    } catch (const PreconditionError&) {
        throw;
    } catch (const Error& e) {
        throw GenerationError(fmt::format("screenplay for {}: {}", profile.profile_id, e.what()));
    }
    if (trim(raw).empty()) {
        throw GenerationError(fmt::format("screenplay for {} came back empty", profile.profile_id));
    }
    return raw;
}

} // namespace counselforge
