// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/eval_suite.hpp"
#include "counselforge/filter_bank.hpp"
#include "counselforge/gateway.hpp"
#include "counselforge/mock_services.hpp"
#include "counselforge/profile_forge.hpp"
#include "counselforge/review_service.hpp"
#include "counselforge/session_sim.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

namespace counselforge {

struct AppConfig {
    std::uint64_t seed = 20250101;
    std::filesystem::path data_root = "run";
    std::optional<std::filesystem::path> templates_dir;
    std::optional<std::filesystem::path> cache_dir;
    bool mock = false;
    std::size_t workers = 1;
    std::size_t face_pool_size = 24;

    std::map<ServiceKind, ServiceEndpoint> services;
    FaceMatchOptions face_match;
    FilterConfig filter;
    SessionConfig session;
    JudgeOptions judge;
    ReportOptions report;
    ReviewConfig review;
    MockOptions mock_options;
};

/// Endpoint object: {base_url, auth_token, timeout_ms, max_retries, backoff_ms,
/// max_in_flight, cache, model}. Missing keys keep their defaults.
ServiceEndpoint endpoint_from_json(ServiceKind kind, const json& j);
json endpoint_to_json(const ServiceEndpoint& ep);

AppConfig config_from_json(const json& j);
json config_to_json(const AppConfig& cfg);
AppConfig load_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Applies CF_<KIND>_URL, CF_<KIND>_TOKEN, CF_TIMEOUT_MS and CF_MAX_RETRIES.
void apply_env_overrides(AppConfig& cfg, const EnvLookup& env);
EnvLookup process_env();

} // namespace counselforge
