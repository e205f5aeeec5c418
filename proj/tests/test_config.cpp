// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "counselforge/config.hpp"
#include "counselforge/errors.hpp"

#include <doctest.h>

using namespace cftest;

TEST_SUITE("config") {

TEST_CASE("defaults") {
    const auto cfg = config_from_json(json::object());
    CHECK(cfg.seed == 20250101);
    CHECK_FALSE(cfg.mock);
    CHECK(cfg.filter.sim_min == 0.2);
    CHECK(cfg.filter.identity_min == 0.3);
    CHECK(cfg.filter.wai_min_normalized == 0.3);
    CHECK(cfg.filter.max_words_per_utterance == 100);
    CHECK(cfg.filter.min_turns == 4);
    CHECK(cfg.filter.max_turns == 20);
    CHECK(cfg.session.max_turns == 20);
    CHECK(cfg.review.cases_per_pair == 200);
    CHECK(cfg.services.empty());
}

TEST_CASE("nested sections are read") {
    const auto cfg = config_from_json(json::parse(R"({
        "seed": 5, "mock": true, "workers": 3, "data_root": "out",
        "services": {"chat": {"base_url": "http://h:1", "auth_token": "t", "timeout_ms": 900,
                              "max_retries": 1, "model": "m"}},
        "filter": {"identity_min": 0.4, "order": ["basic", "img_txt"]},
        "session": {"variant": "planning_ec", "max_turns": 16},
        "judge": {"no_guidelines": true},
        "report": {"baseline_model": "base", "pair_by_profile": true},
        "review": {"cases_per_pair": 12, "tokens": {"ann": "x"}},
        "mock_options": {"identity_drift": 0.5}
    })"));
    CHECK(cfg.seed == 5);
    CHECK(cfg.mock);
    CHECK(cfg.workers == 3);
    CHECK(cfg.data_root == "out");
    const auto& chat = cfg.services.at(ServiceKind::chat);
    CHECK(chat.base_url == "http://h:1");
    CHECK(chat.auth_token == "t");
    CHECK(chat.timeout.count() == 900);
    CHECK(chat.max_retries == 1);
    CHECK(chat.cache_enabled);
    CHECK(cfg.filter.identity_min == 0.4);
    CHECK(cfg.filter.order.size() == 2);
    CHECK(cfg.session.variant == TherapistVariant::planning_ec);
    CHECK(cfg.judge.no_guidelines);
    CHECK(cfg.report.pair_by_profile);
    CHECK(cfg.review.tokens.at("ann") == "x");
    CHECK(cfg.mock_options.identity_drift == 0.5);
    // Tokens are never echoed back.
    CHECK(config_to_json(cfg).at("services").at("chat").at("auth_token") == "<set>");
}

TEST_CASE("bad configs are rejected") {
    CHECK_THROWS_AS(config_from_json(json{{"seed", "x"}}), PreconditionError);
    CHECK_THROWS_AS(config_from_json(json{{"services", {{"telepathy", json::object()}}}}), Error);
    CHECK_THROWS_AS(config_from_json(json{{"filter", {{"min_turns", 30}}}}), PreconditionError);
    CHECK_THROWS_AS(config_from_json(json{{"session", {{"max_turns", 1}}}}), PreconditionError);
    TempDir dir;
    write_file(dir.path / "c.json", "{not json");
    CHECK_THROWS_AS(load_config(dir.path / "c.json"), PreconditionError);
    write_file(dir.path / "ok.json", R"({"seed": 9})");
    CHECK(load_config(dir.path / "ok.json").seed == 9);
}

TEST_CASE("environment overrides") {
    AppConfig cfg;
    std::map<std::string, std::string> env = {{"CF_CHAT_URL", "http://chat:80"},
                                              {"CF_FACE_EMBED_TOKEN", "tok"},
                                              {"CF_TIMEOUT_MS", "1500"},
                                              {"CF_MAX_RETRIES", "5"}};
    apply_env_overrides(cfg, [&](const std::string& k) -> std::optional<std::string> {
        auto it = env.find(k);
        return it == env.end() ? std::nullopt : std::optional<std::string>(it->second);
    });
    CHECK(cfg.services.at(ServiceKind::chat).base_url == "http://chat:80");
    CHECK(cfg.services.at(ServiceKind::face_embed).auth_token == "tok");
    CHECK(cfg.services.at(ServiceKind::chat).timeout.count() == 1500);
    CHECK(cfg.services.at(ServiceKind::face_embed).max_retries == 5);
    CHECK(cfg.services.count(ServiceKind::nsfw) == 0);

    AppConfig bad;
    CHECK_THROWS_AS(apply_env_overrides(bad,
                                        [](const std::string& k) -> std::optional<std::string> {
                                            if (k == "CF_MAX_RETRIES") {
                                                return "-2";
                                            }
                                            return std::nullopt;
                                        }),
                    PreconditionError);
}

} // TEST_SUITE
