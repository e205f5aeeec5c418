// SPDX-License-Identifier: Apache-2.0
#include "counselforge/config.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <cctype>
#include <cstdlib>

namespace counselforge {

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return out;
}

template <typename T>
T parse_number(const std::string& name, const std::string& text) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used != text.size() || v < 0) {
            throw std::invalid_argument(text);
        }
        return static_cast<T>(v);
    } catch (const std::exception&) {
        throw PreconditionError(fmt::format("{} must be a non-negative integer, got '{}'", name, text));
    }
}

} // namespace

ServiceEndpoint endpoint_from_json(ServiceKind kind, const json& j) {
    ServiceEndpoint ep;
    ep.kind = kind;
    ep.base_url = j.value("base_url", std::string{});
    if (j.contains("auth_token") && !j.at("auth_token").is_null()) {
        ep.auth_token = j.at("auth_token").get<std::string>();
    }
    ep.timeout = std::chrono::milliseconds(j.value("timeout_ms", ep.timeout.count()));
    ep.max_retries = j.value("max_retries", ep.max_retries);
    ep.backoff_base = std::chrono::milliseconds(j.value("backoff_ms", ep.backoff_base.count()));
    ep.max_in_flight = j.value("max_in_flight", ep.max_in_flight);
    ep.cache_enabled = j.value("cache", kind == ServiceKind::chat);
    ep.model = j.value("model", std::string{});
    return ep;
}

json endpoint_to_json(const ServiceEndpoint& ep) {
    return {{"base_url", ep.base_url},
            {"auth_token", ep.auth_token ? json("<set>") : json(nullptr)},
            {"timeout_ms", ep.timeout.count()},
            {"max_retries", ep.max_retries},
            {"backoff_ms", ep.backoff_base.count()},
            {"max_in_flight", ep.max_in_flight},
            {"cache", ep.cache_enabled},
            {"model", ep.model}};
}

AppConfig config_from_json(const json& j) {
    AppConfig cfg;
    try {
        cfg.seed = j.value("seed", cfg.seed);
        cfg.data_root = j.value("data_root", cfg.data_root.string());
        if (j.contains("templates_dir") && !j.at("templates_dir").is_null()) {
            cfg.templates_dir = j.at("templates_dir").get<std::string>();
        }
        if (j.contains("cache_dir") && !j.at("cache_dir").is_null()) {
            cfg.cache_dir = j.at("cache_dir").get<std::string>();
        }
        cfg.mock = j.value("mock", cfg.mock);
        cfg.workers = j.value("workers", cfg.workers);
        cfg.face_pool_size = j.value("face_pool_size", cfg.face_pool_size);
        if (j.contains("services")) {
            for (const auto& [name, value] : j.at("services").items()) {
                const auto kind = parse_service_kind(name);
                cfg.services[kind] = endpoint_from_json(kind, value);
            }
        }
        if (j.contains("face_match")) {
            const auto& f = j.at("face_match");
            cfg.face_match.age_bucket = f.value("age_bucket", cfg.face_match.age_bucket);
            cfg.face_match.widen = f.value("widen", cfg.face_match.widen);
            cfg.face_match.widen_step = f.value("widen_step", cfg.face_match.widen_step);
            cfg.face_match.max_widen_steps = f.value("max_widen_steps", cfg.face_match.max_widen_steps);
        }
        if (j.contains("filter")) {
            cfg.filter = j.at("filter").get<FilterConfig>();
        }
        if (j.contains("session")) {
            cfg.session = j.at("session").get<SessionConfig>();
        }
        if (j.contains("judge")) {
            const auto& g = j.at("judge");
            cfg.judge.no_guidelines = g.value("no_guidelines", cfg.judge.no_guidelines);
            cfg.judge.temperature = g.value("temperature", cfg.judge.temperature);
            if (g.contains("endpoint")) {
                cfg.judge.endpoint = endpoint_from_json(ServiceKind::chat, g.at("endpoint"));
            }
        }
        if (j.contains("report")) {
            const auto& r = j.at("report");
            cfg.report.baseline_model = r.value("baseline_model", cfg.report.baseline_model);
            cfg.report.pair_by_profile = r.value("pair_by_profile", cfg.report.pair_by_profile);
            cfg.report.significance = r.value("significance", cfg.report.significance);
        }
        if (j.contains("review")) {
            const auto& r = j.at("review");
            cfg.review.cases_per_pair = r.value("cases_per_pair", cfg.review.cases_per_pair);
            cfg.review.seed = r.value("seed", cfg.review.seed);
            cfg.review.include_non_resistant = r.value("include_non_resistant", cfg.review.include_non_resistant);
            cfg.review.tokens = r.value("tokens", cfg.review.tokens);
            if (r.contains("judgment_log")) {
                cfg.review.judgment_log = r.at("judgment_log").get<std::string>();
            }
            if (r.contains("skip_log")) {
                cfg.review.skip_log = r.at("skip_log").get<std::string>();
            }
        }
        if (j.contains("mock_options")) {
            const auto& m = j.at("mock_options");
            auto& o = cfg.mock_options;
            o.seed = m.value("seed", o.seed);
            o.low_similarity = m.value("low_similarity", o.low_similarity);
            o.identity_drift = m.value("identity_drift", o.identity_drift);
            o.gender_flip = m.value("gender_flip", o.gender_flip);
            o.nsfw = m.value("nsfw", o.nsfw);
            o.unsafe_text = m.value("unsafe_text", o.unsafe_text);
            o.weak_alliance = m.value("weak_alliance", o.weak_alliance);
            o.short_screenplay = m.value("short_screenplay", o.short_screenplay);
            o.persona_copy = m.value("persona_copy", o.persona_copy);
            o.malformed_expression = m.value("malformed_expression", o.malformed_expression);
        }
    } catch (const json::exception& e) {
        throw PreconditionError(fmt::format("invalid configuration: {}", e.what()));
    }
    cfg.filter.validate();
    cfg.session.validate();
    return cfg;
}

json config_to_json(const AppConfig& cfg) {
    json services = json::object();
    for (const auto& [kind, ep] : cfg.services) {
        services[std::string(to_string(kind))] = endpoint_to_json(ep);
    }
    return {{"seed", cfg.seed},
            {"data_root", cfg.data_root.string()},
            {"templates_dir", cfg.templates_dir ? json(cfg.templates_dir->string()) : json(nullptr)},
            {"cache_dir", cfg.cache_dir ? json(cfg.cache_dir->string()) : json(nullptr)},
            {"mock", cfg.mock},
            {"workers", cfg.workers},
            {"face_pool_size", cfg.face_pool_size},
            {"services", services},
            {"filter", cfg.filter},
            {"session", cfg.session},
            {"judge", {{"no_guidelines", cfg.judge.no_guidelines}, {"temperature", cfg.judge.temperature}}}};
}

AppConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw PreconditionError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    return config_from_json(j);
}

void apply_env_overrides(AppConfig& cfg, const EnvLookup& env) {
    for (auto kind : kServiceKinds) {
        const auto prefix = "CF_" + upper(to_string(kind));
        if (auto url = env(prefix + "_URL")) {
            auto& ep = cfg.services[kind];
            ep.kind = kind;
            ep.base_url = *url;
        }
        if (auto token = env(prefix + "_TOKEN")) {
            auto& ep = cfg.services[kind];
            ep.kind = kind;
            ep.auth_token = *token;
        }
    }
    if (auto t = env("CF_TIMEOUT_MS")) {
        const auto ms = parse_number<long long>("CF_TIMEOUT_MS", *t);
        for (auto& [kind, ep] : cfg.services) {
            ep.timeout = std::chrono::milliseconds(ms);
        }
    }
    if (auto r = env("CF_MAX_RETRIES")) {
        const auto n = parse_number<int>("CF_MAX_RETRIES", *r);
        for (auto& [kind, ep] : cfg.services) {
            ep.max_retries = n;
        }
    }
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr) {
            return std::nullopt;
        }
        return std::string(v);
    };
}

} // namespace counselforge
