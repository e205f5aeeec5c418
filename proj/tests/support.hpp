// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit tests and the acceptance binary.
#pragma once

#include "counselforge/filter_bank.hpp"
#include "counselforge/gateway.hpp"
#include "counselforge/image_store.hpp"
#include "counselforge/mock_services.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/types.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace cftest {

using namespace counselforge;

#ifndef CF_SOURCE_DIR
#define CF_SOURCE_DIR "."
#endif

inline std::filesystem::path source_dir() {
    return CF_SOURCE_DIR;
}

/// Gateway over an in-memory image store and a mock transport with no handlers.
struct Harness {
    std::shared_ptr<MockTransport> transport = std::make_shared<MockTransport>();
    std::shared_ptr<MemoryImageStore> images = std::make_shared<MemoryImageStore>();
    std::unique_ptr<Gateway> gateway;
    TemplateSet templates;

    explicit Harness(bool bundled = false, const MockOptions& options = {}, bool cache_chat = false) {
        if (bundled) {
            transport = make_bundled_transport(options);
        }
        gateway = std::make_unique<Gateway>(transport, images);
        use_mock_endpoints(*gateway, cache_chat);
        gateway->set_sleeper([](std::chrono::milliseconds) {});
    }
};

/// Unique temporary directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(std::string_view tag = "cf") {
        static std::size_t counter = 0;
        path = std::filesystem::temp_directory_path() /
               fmt::format("{}-{}-{}", tag, std::chrono::steady_clock::now().time_since_epoch().count(), ++counter);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline SourceProfile sample_source(std::string name = "Maya Chen", Gender gender = Gender::woman, int age = 29) {
    SourceProfile s;
    s.name = std::move(name);
    s.age = age;
    s.gender = gender;
    s.occupation = "graphic designer";
    s.personality_traits = {"perfectionistic", "warm"};
    s.distorted_thoughts = "If my draft is not perfect, the client will think I am useless and stop working with me.";
    s.thinking_trap = "all-or-nothing thinking";
    s.reason_for_counseling = "Constant fear of failing at work";
    s.cbt_technique = "Alternative Perspective";
    s.cbt_plan = "1. Name the thought.\n2. List other readings.\n3. Test one this week.";
    return s;
}

inline ClientProfile sample_profile(std::string id = "p0000-cognitive",
                                    ResistanceType type = ResistanceType::cognitive) {
    ClientProfile p;
    p.profile_id = std::move(id);
    p.source = sample_source();
    p.face = FaceIdentity{ImageRef{"faces/ref.png"}, Gender::woman, 0.95, 29.0};
    p.resistance = type;
    return p;
}

inline Turn therapist_turn(std::string text) {
    Turn t;
    t.speaker = Speaker::therapist;
    t.utterance = std::move(text);
    return t;
}

inline Turn client_turn(std::string text, std::vector<std::string> directions = {"sighs"},
                        std::optional<std::string> image = std::nullopt) {
    Turn t;
    t.speaker = Speaker::client;
    t.utterance = std::move(text);
    t.directions = std::move(directions);
    if (image) {
        t.image = ImageRef{*image};
    }
    return t;
}

/// Alternating therapist/client dialogue of `utterances` turns. Client turns get images
/// `img/<id>/<i>.png` written into `store` when given; the bytes spell out the path.
inline Dialogue make_dialogue(std::string id, std::size_t utterances, MemoryImageStore* store = nullptr,
                              ClientProfile profile = sample_profile()) {
    Dialogue d;
    d.id = id;
    d.profile = std::move(profile);
    if (store != nullptr && !store->exists(d.profile.face.image)) {
        store->write(d.profile.face.image.path, "reference:" + d.profile.face.image.path);
    }
    for (std::size_t i = 0; i < utterances; ++i) {
        if (i % 2 == 0) {
            d.turns.push_back(therapist_turn("How are you feeling about work today?"));
        } else {
            const auto path = fmt::format("img/{}/{}.png", id, i);
            d.turns.push_back(client_turn("I guess it has been a long week for me.", {"sighs"}, path));
            if (store != nullptr) {
                store->write(path, path);
            }
        }
    }
    return d;
}

/// Path spelled out by image bytes written by make_dialogue.
inline std::string image_key(const json& body) {
    return base64_decode(body.at("image_b64").get<std::string>());
}

/// A unit embedding: e1 scaled to `cos` plus the remainder on e2, so cosine with e1 is `cos`.
inline json embedding_with_cosine(double cos) {
    std::vector<double> v(8, 0.0);
    v[0] = cos;
    v[1] = std::sqrt(std::max(0.0, 1.0 - cos * cos));
    return json{{"vector", v}};
}

/// Registers handlers that let every stage pass.
inline void install_passing_services(MockTransport& t) {
    t.on(ServiceKind::img_txt_sim, [](const json&) { return json{{"score", 0.3}}; });
    t.on(ServiceKind::face_embed, [](const json&) { return embedding_with_cosine(1.0); });
    t.on(ServiceKind::face_attr,
         [](const json&) { return json{{"gender", "woman"}, {"gender_confidence", 0.97}, {"age", 29.0}}; });
    t.on(ServiceKind::nsfw, [](const json&) { return json{{"label", "safe"}, {"probability", 0.01}}; });
    t.on(ServiceKind::safety, [](const json&) { return json{{"label", "casual"}, {"probability", 0.95}}; });
    t.on(ServiceKind::chat, [](const json&) { return json{{"content", "Rating: [[5]]"}}; });
}

} // namespace cftest
