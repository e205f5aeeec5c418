// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/screenplay.hpp"

#include <doctest.h>

#include <set>

using namespace cftest;

TEST_SUITE("screenplay") {

TEST_CASE("speaker prefixes and directions") {
    const auto parsed = parse_screenplay("Therapist: Hi Maya, what brings you here?\n"
                                         "Client: [sighs] [looks away] My boss, I guess.\n"
                                         "Counselor: Tell me more.\n"
                                         "Client: [shrugs] Nothing to add. [/END]\n",
                                         "p1");
    const auto& t = parsed.screenplay.turns;
    REQUIRE(t.size() == 4);
    CHECK(parsed.screenplay.profile_id == "p1");
    CHECK(parsed.starter == Speaker::therapist);
    CHECK(t[0].speaker == Speaker::therapist);
    CHECK(t[1].speaker == Speaker::client);
    CHECK(t[1].directions == std::vector<std::string>{"sighs", "looks away"});
    CHECK(t[1].utterance == "My boss, I guess.");
    CHECK(t[2].speaker == Speaker::therapist);
    CHECK(t[3].end_marker);
    CHECK(t[3].utterance == "Nothing to add.");
    CHECK_FALSE(t[1].end_marker);
}

TEST_CASE("randomly placed directions come out in order with single spaces") {
    Rng rng(258);
    const std::vector<std::string> vocab = {"I", "feel", "tired", "today,", "maybe", "work", "is", "fine.", "not"};
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> words;
        const auto n = 1 + rng.index(10);
        for (std::size_t i = 0; i < n; ++i) {
            words.push_back(rng.pick(vocab));
        }
        std::vector<std::string> directions;
        std::string text;
        auto put = [&](const std::string& piece) {
            text += std::string(rng.index(2), ' ');
            if (!text.empty() && text.back() != ' ') {
                text += ' ';
            }
            text += piece;
        };
        for (std::size_t i = 0; i <= n; ++i) {
            while (rng.bernoulli(0.3)) {
                directions.push_back(fmt::format("gesture {}", directions.size()));
                put("[" + directions.back() + "]");
            }
            if (i < n) {
                put(words[i]);
            }
        }
        const auto turn = parse_turn_text(Speaker::client, text);
        CHECK(turn.utterance == join(words, " "));
        CHECK(turn.directions == directions);
    }
    const auto t = parse_turn_text(Speaker::client, "I feel [sighs] tired.");
    CHECK(t.utterance == "I feel tired.");
    CHECK(t.directions == std::vector<std::string>{"sighs"});
}

TEST_CASE("markdown decorated prefixes are recognized") {
    const auto p = split_speaker_prefix("**Client:** fine");
    REQUIRE(p);
    CHECK(p->first == Speaker::client);
    CHECK(p->second == "fine");
    CHECK(split_speaker_prefix("  therapist : hello")->first == Speaker::therapist);
    CHECK_FALSE(split_speaker_prefix("Narrator: hello"));
}

TEST_CASE("continuation lines and merged same-speaker lines") {
    const auto parsed = parse_screenplay("Therapist: Hello.\nHow was the week?\nClient: Long.\nClient: [sighs] Very long.");
    const auto& t = parsed.screenplay.turns;
    REQUIRE(t.size() == 2);
    CHECK(t[0].utterance == "Hello. How was the week?");
    CHECK(t[1].utterance == "Long. Very long.");
    CHECK(t[1].directions == std::vector<std::string>{"sighs"});
    CHECK(parsed.merged_same_speaker == 1);
}

TEST_CASE("direction-only lines are dropped") {
    const auto parsed = parse_screenplay("Therapist: Hi.\nClient: [stares at the floor]\nClient: Okay.");
    CHECK(parsed.dropped_direction_only == 1);
    REQUIRE(parsed.screenplay.turns.size() == 2);
    CHECK(parsed.screenplay.turns[1].directions.empty());
}

TEST_CASE("malformed input reports line numbers") {
    try {
        parse_screenplay("Intro text\n\nTherapist: hi\nstill fine\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.lines() == std::vector<std::size_t>{1});
    }
    try {
        parse_screenplay("Therapist: hi\nClient: [sighs [deeply]] no");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.lines() == std::vector<std::size_t>{2});
    }
    CHECK_THROWS_AS(parse_screenplay("Client: [sighs no"), ParseError);
    CHECK_THROWS_AS(parse_screenplay("Client: sighs] no"), ParseError);
    CHECK_THROWS_AS(parse_screenplay(""), ParseError);
    CHECK_THROWS_AS(parse_screenplay("Client: [sighs]"), ParseError);
}

TEST_CASE("rendering with and without directions") {
    auto t = client_turn("I am fine.", {"sighs", "looks away"});
    t.end_marker = true;
    CHECK(render_turn(t) == "Client: [sighs] [looks away] I am fine. [/END]");
    CHECK(render_turn(t, false) == "Client: I am fine.");
    CHECK(render_turn(therapist_turn("Hi."), true, "Counselor") == "Counselor: Hi.");
    CHECK(strip_bracket_spans("a [b] c [d [e]] f") == "a c f");
}

TEST_CASE("render then parse is the identity on turns") {
    Screenplay s;
    s.turns = {therapist_turn("Hello there."), client_turn("Hi.", {"nods"}), therapist_turn("How are you?"),
               client_turn("Not great.", {"sighs", "fidgets"})};
    s.turns.back().end_marker = true;
    const auto parsed = parse_screenplay(render_screenplay(s));
    CHECK(parsed.screenplay.turns == s.turns);
}

TEST_CASE("screenplay request fills every template slot") {
    TemplateSet templates;
    const auto profile = sample_profile();
    const auto req = screenplay_request(profile, templates, {0.5, 17});
    REQUIRE(req.messages.size() == 1);
    const auto& q = req.messages[0].content;
    CHECK(contains(q, client_information(profile.source)));
    CHECK(contains(q, profile.source.distorted_thoughts));
    CHECK(contains(q, profile.source.cbt_technique));
    CHECK(contains(q, templates.get("resistance_cognitive")));
    CHECK_FALSE(contains(q, "{client information}"));
    CHECK_FALSE(contains(q, "{intrusive thoughts}"));
    CHECK(req.seed == 17);
    CHECK(req.temperature == 0.5);
    CHECK(client_information(profile.source) == "Name: Maya Chen, Age: 29, Gender: woman, Occupation: graphic designer");
}

TEST_CASE("every resistance type gets its own block") {
    TemplateSet templates;
    std::set<std::string> queries;
    for (auto type : kResistanceTypes) {
        queries.insert(screenplay_request(sample_profile("p", type), templates).messages[0].content);
    }
    CHECK(queries.size() == 4);
}

TEST_CASE("generate screenplay wraps gateway failures") {
    Harness h;
    h.transport->on(ServiceKind::chat, [](const json&) -> json { throw ProtocolError("bad"); });
    CHECK_THROWS_AS(generate_screenplay(sample_profile(), *h.gateway, h.templates), GenerationError);
    auto bad = sample_profile();
    bad.source.cbt_technique = "Unknown";
    CHECK_THROWS_AS(generate_screenplay(bad, *h.gateway, h.templates), PreconditionError);
}

TEST_CASE("bundled mock screenplays parse for every type") {
    Harness h(true);
    for (auto type : kResistanceTypes) {
        const auto profile = sample_profile("p-" + std::string(to_string(type)), type);
        const auto raw = generate_screenplay(profile, *h.gateway, h.templates, {0.7, 3});
        const auto parsed = parse_screenplay(raw, profile.profile_id);
        CHECK(parsed.screenplay.turns.size() >= 2);
        CHECK(parsed.starter == Speaker::therapist);
    }
}

} // TEST_SUITE
