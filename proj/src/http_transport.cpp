// SPDX-License-Identifier: Apache-2.0
#include "counselforge/errors.hpp"
#include "counselforge/gateway.hpp"

#include <httplib.h>

#include <fmt/core.h>

namespace counselforge {

namespace {

struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw PreconditionError(fmt::format("endpoint url '{}' has no scheme", url));
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

json HttpTransport::post(const ServiceEndpoint& endpoint, const json& body) {
    const auto [origin, path] = split_url(endpoint.base_url);
    httplib::Client client(origin);
    const auto ms = endpoint.timeout.count();
    client.set_connection_timeout(std::chrono::milliseconds(ms));
    client.set_read_timeout(std::chrono::milliseconds(ms));
    client.set_write_timeout(std::chrono::milliseconds(ms));
    if (endpoint.auth_token) {
        client.set_bearer_token_auth(*endpoint.auth_token);
    }

    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        throw TransportError(fmt::format("{} {}: {}", to_string(endpoint.kind), endpoint.base_url,
                                         httplib::to_string(res.error())),
                             true);
    }
    const int status = res->status;
    if (status == 429 || status >= 500) {
        throw TransportError(fmt::format("{} {} returned HTTP {}", to_string(endpoint.kind), endpoint.base_url, status),
                             true);
    }
    if (status == 422) {
        throw ContentError(fmt::format("{} refused the request: {}", to_string(endpoint.kind), res->body));
    }
    if (status < 200 || status >= 300) {
        throw ProtocolError(fmt::format("{} {} returned HTTP {}: {}", to_string(endpoint.kind), endpoint.base_url,
                                        status, res->body));
    }
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw ProtocolError(fmt::format("{} response is not JSON: {}", to_string(endpoint.kind), e.what()));
    }
}

} // namespace counselforge
