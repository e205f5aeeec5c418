// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/face_synth.hpp"
#include "counselforge/screenplay.hpp"

#include <doctest.h>

#include <set>

using namespace cftest;

namespace {

constexpr const char* kGoodReply = "- Facial Expression Description: [tense jaw, eyes cast down]\n"
                                   "- Contrasting Facial Expression Description: [bright open smile]";

} // namespace

TEST_SUITE("face_synth") {

TEST_CASE("expression replies parse both labeled lines") {
    const auto pair = parse_expression_reply(kGoodReply);
    CHECK(pair.target == "tense jaw, eyes cast down");
    CHECK(pair.contrast == "bright open smile");
    const auto bold = parse_expression_reply("**Facial Expression Description:** frown\n"
                                             "**Contrasting Facial Expression Description:** grin");
    CHECK(bold.target == "frown");
    CHECK(bold.contrast == "grin");
}

TEST_CASE("incomplete or identical expression replies are rejected") {
    CHECK_THROWS_AS(parse_expression_reply("- Facial Expression Description: frown"), ParseError);
    CHECK_THROWS_AS(parse_expression_reply("- Contrasting Facial Expression Description: grin"), ParseError);
    CHECK_THROWS_AS(parse_expression_reply("- Facial Expression Description: frown\n"
                                           "- Contrasting Facial Expression Description: frown"),
                    ParseError);
    CHECK_THROWS_AS(parse_expression_reply("- Facial Expression Description: []\n"
                                           "- Contrasting Facial Expression Description: grin"),
                    ParseError);
}

TEST_CASE("expression request carries the history with directions") {
    TemplateSet templates;
    const std::vector<Turn> history = {therapist_turn("Hi."), client_turn("Fine.", {"shrugs"})};
    const auto req = expression_request(templates, history, "[sighs] Whatever.");
    const auto& q = req.messages.at(0).content;
    CHECK(contains(q, "Therapist: Hi.\nClient: [shrugs] Fine."));
    CHECK(contains(q, "### Client's Utterance ###\n[sighs] Whatever."));
    CHECK_THROWS_AS(expression_request(templates, history, "  "), PreconditionError);
}

TEST_CASE("image prompts fill the fixed templates") {
    TemplateSet templates;
    const auto p = compile_image_prompts(templates, Gender::man, {"tense jaw", "bright smile"});
    CHECK(p.positive == "portrait photo of a man img, perfect face, natural skin, high detail, tense jaw");
    CHECK(contains(p.negative, ", bright smile, missing limbs, mutilated"));
    CHECK(p.negative.rfind("nsfw, lowres", 0) == 0);
    CHECK_THROWS_AS(compile_image_prompts(templates, Gender::man, {"", "x"}), PreconditionError);
}

TEST_CASE("seeds and paths are stable per dialogue and turn") {
    CHECK(turn_image_path("p0001-emotional", 3) == "images/p0001-emotional/3.png");
    CHECK(turn_image_seed(1, "d", 3) == turn_image_seed(1, "d", 3));
    std::set<std::uint64_t> seeds;
    for (std::size_t i = 0; i < 50; ++i) {
        seeds.insert(turn_image_seed(1, "d", i));
    }
    CHECK(seeds.size() == 50);
    CHECK(turn_image_seed(1, "d", 3) != turn_image_seed(2, "d", 3));
}

TEST_CASE("every client turn gets one image from the reference face") {
    Harness h(true);
    auto profile = sample_profile();
    h.images->write(profile.face.image.path, make_reference_face("face-x", Gender::woman, 29, 1));
    auto turns = parse_screenplay("Therapist: Hi.\nClient: [sighs] Long week.\nTherapist: Tell me.\n"
                                  "Client: [looks away] Work.\nTherapist: Go on.")
                     .screenplay.turns;
    const auto result = synthesize_dialogue_images(*h.gateway, h.templates, profile, "d1", turns, 5);
    REQUIRE(result.rows.size() == 2);
    CHECK(result.flagged_turns.empty());
    CHECK(result.rows[0].turn_index == 1);
    CHECK(result.rows[1].turn_index == 3);
    for (std::size_t i = 0; i < turns.size(); ++i) {
        CHECK(turns[i].image.has_value() == (turns[i].speaker == Speaker::client));
    }
    CHECK(turns[1].image->path == "images/d1/1.png");
    CHECK(h.images->exists(*turns[3].image));
    CHECK(result.rows[0].seed == turn_image_seed(5, "d1", 1));
    CHECK(json(result.rows[0]).get<ImageManifestRow>().path == result.rows[0].path);
}

TEST_CASE("malformed expression reply is retried with a fresh seed") {
    Harness h(true);
    auto profile = sample_profile();
    h.images->write(profile.face.image.path, make_reference_face("face-x", Gender::woman, 29, 1));
    h.transport->set_recording(true);
    std::size_t calls = 0;
    h.transport->on(ServiceKind::chat, [&](const json&) {
        return json{{"content", ++calls == 1 ? std::string("no labels here") : std::string(kGoodReply)}};
    });
    const auto pair = derive_expression_prompts(*h.gateway, h.templates, {}, "[sighs] ok", {0.7, 10});
    CHECK(pair.target == "tense jaw, eyes cast down");
    const auto sent = h.transport->requests(ServiceKind::chat);
    REQUIRE(sent.size() == 2);
    CHECK(sent[0].at("seed") == 10);
    CHECK(sent[1].at("seed") == 11);
}

TEST_CASE("turns whose prompts never parse stay imageless and flagged") {
    Harness h(true);
    auto profile = sample_profile();
    h.images->write(profile.face.image.path, make_reference_face("face-x", Gender::woman, 29, 1));
    h.transport->on(ServiceKind::chat, [](const json&) { return json{{"content", "nothing useful"}}; });
    auto turns = std::vector<Turn>{therapist_turn("Hi."), client_turn("Fine.")};
    const auto result = synthesize_dialogue_images(*h.gateway, h.templates, profile, "d2", turns, 5);
    CHECK(result.rows.empty());
    CHECK(result.flagged_turns == std::vector<std::size_t>{1});
    CHECK_FALSE(turns[1].image.has_value());
    CHECK(h.transport->calls(ServiceKind::chat) == 2);
    CHECK(h.transport->calls(ServiceKind::image_synth) == 0);
}

TEST_CASE("synthesis needs a resolvable reference image") {
    Harness h(true);
    CHECK_THROWS_AS(synthesize_turn_image(*h.gateway, sample_profile().face, {"a", "b"}, 1, "x.png"),
                    PreconditionError);
}

TEST_CASE("mock images carry the prompt and identity") {
    Harness h(true);
    auto profile = sample_profile();
    h.images->write(profile.face.image.path, make_reference_face("face-x", Gender::woman, 29, 1));
    const auto a = synthesize_turn_image(*h.gateway, profile.face, {"tense jaw", "smile"}, 1, "a.png");
    const auto b = synthesize_turn_image(*h.gateway, profile.face, {"tense jaw", "smile"}, 1, "b.png");
    const auto c = synthesize_turn_image(*h.gateway, profile.face, {"tense jaw", "smile"}, 2, "c.png");
    CHECK(h.images->read(a) == h.images->read(b));
    CHECK(h.images->read(a) != h.images->read(c));
    CHECK(h.images->read(a).substr(1, 3) == "PNG");
}

} // TEST_SUITE
