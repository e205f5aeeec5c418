// SPDX-License-Identifier: Apache-2.0
#include "counselforge/gateway.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <cmath>
#include <thread>

namespace counselforge {

namespace {

constexpr std::array<std::string_view, 7> kKindNames = {"chat",      "image_synth", "img_txt_sim", "face_embed",
                                                       "face_attr", "nsfw",        "safety"};

const json& require_field(const json& body, const char* field, ServiceKind kind) {
    if (!body.is_object() || !body.contains(field)) {
        throw ProtocolError(fmt::format("{} response is missing '{}'", to_string(kind), field));
    }
    return body.at(field);
}

double require_number(const json& body, const char* field, ServiceKind kind) {
    const auto& v = require_field(body, field, kind);
    if (!v.is_number()) {
        throw ProtocolError(fmt::format("{} response field '{}' is not a number", to_string(kind), field));
    }
    return v.get<double>();
}

std::string require_string(const json& body, const char* field, ServiceKind kind) {
    const auto& v = require_field(body, field, kind);
    if (!v.is_string()) {
        throw ProtocolError(fmt::format("{} response field '{}' is not a string", to_string(kind), field));
    }
    return v.get<std::string>();
}

} // namespace

std::string_view to_string(ServiceKind k) {
    return kKindNames.at(static_cast<std::size_t>(k));
}

ServiceKind parse_service_kind(std::string_view text) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == text) {
            return static_cast<ServiceKind>(i);
        }
    }
    throw PreconditionError(fmt::format("unknown service kind '{}'", text));
}

void ServiceEndpoint::validate() const {
    if (base_url.empty()) {
        throw PreconditionError(fmt::format("{} endpoint has no base_url", to_string(kind)));
    }
    if (timeout.count() <= 0) {
        throw PreconditionError(fmt::format("{} endpoint timeout must be positive", to_string(kind)));
    }
    if (max_retries < 0) {
        throw PreconditionError(fmt::format("{} endpoint max_retries must be >= 0", to_string(kind)));
    }
    if (max_in_flight == 0) {
        throw PreconditionError(fmt::format("{} endpoint max_in_flight must be >= 1", to_string(kind)));
    }
}

std::string canonical_dump(const json& body) {
    // nlohmann::json objects are ordered maps, so dump() is already key-sorted.
    return body.dump(-1, ' ', false, json::error_handler_t::strict);
}

std::string cache_key(ServiceKind kind, std::string_view request_bytes) {
    std::string material(to_string(kind));
    material.push_back('\n');
    material.append(request_bytes);
    return sha256_hex(material);
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
}

std::optional<json> ResponseCache::get(const std::string& key) const {
    {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(key);
        if (it != entries_.end()) {
            return it->second;
        }
    }
    if (dir_) {
        const auto path = *dir_ / (key + ".json");
        if (std::filesystem::is_regular_file(path)) {
            auto value = json::parse(read_file(path));
            std::unique_lock lock(mutex_);
            entries_.emplace(key, value);
            return value;
        }
    }
    return std::nullopt;
}

void ResponseCache::put(const std::string& key, const json& value) {
    {
        std::unique_lock lock(mutex_);
        entries_[key] = value;
    }
    if (dir_) {
        write_file(*dir_ / (key + ".json"), value.dump());
    }
}

std::size_t ResponseCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

ConcurrencyLimiter::ConcurrencyLimiter(std::size_t max_in_flight) : max_(max_in_flight == 0 ? 1 : max_in_flight) {}

void ConcurrencyLimiter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < max_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
}

void ConcurrencyLimiter::release() {
    {
        std::lock_guard lock(mutex_);
        --in_flight_;
    }
    cv_.notify_one();
}

std::size_t ConcurrencyLimiter::peak() const {
    std::lock_guard lock(mutex_);
    return peak_;
}

json to_wire(const ChatRequest& req, const std::function<std::string(const ImageRef&)>& encode_image) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        json msg = {{"role", m.role == ChatRole::user ? "user" : "assistant"}, {"content", m.content}};
        if (m.image) {
            msg["images_b64"] = json::array({encode_image(*m.image)});
        }
        messages.push_back(std::move(msg));
    }
    json body = {{"system", req.system}, {"messages", std::move(messages)}, {"temperature", req.temperature}};
    body["seed"] = req.seed ? json(*req.seed) : json(nullptr);
    return body;
}

Gateway::Gateway(std::shared_ptr<Transport> transport, std::shared_ptr<ImageStore> images)
    : transport_(std::move(transport)), images_(std::move(images)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (!transport_ || !images_) {
        throw PreconditionError("gateway needs a transport and an image store");
    }
}

void Gateway::set_endpoint(ServiceEndpoint endpoint) {
    endpoint.validate();
    std::lock_guard lock(mutex_);
    endpoints_[endpoint.kind] = std::move(endpoint);
}

const ServiceEndpoint& Gateway::endpoint(ServiceKind kind) const {
    std::lock_guard lock(mutex_);
    auto it = endpoints_.find(kind);
    if (it == endpoints_.end()) {
        throw PreconditionError(fmt::format("no {} endpoint configured", to_string(kind)));
    }
    return it->second;
}

bool Gateway::has_endpoint(ServiceKind kind) const {
    std::lock_guard lock(mutex_);
    return endpoints_.count(kind) != 0;
}

void Gateway::set_cache_enabled(ServiceKind kind, bool enabled) {
    std::lock_guard lock(mutex_);
    auto it = endpoints_.find(kind);
    if (it == endpoints_.end()) {
        throw PreconditionError(fmt::format("no {} endpoint configured", to_string(kind)));
    }
    it->second.cache_enabled = enabled;
}

void Gateway::set_cache(std::shared_ptr<ResponseCache> cache) {
    cache_ = std::move(cache);
}

void Gateway::set_sleeper(Sleeper sleeper) {
    sleeper_ = std::move(sleeper);
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

void Gateway::require_kind(const ServiceEndpoint& endpoint, ServiceKind kind) {
    if (endpoint.kind != kind) {
        throw PreconditionError(
            fmt::format("endpoint kind {} used for a {} request", to_string(endpoint.kind), to_string(kind)));
    }
}

ConcurrencyLimiter& Gateway::limiter_for(const ServiceEndpoint& endpoint) {
    std::lock_guard lock(mutex_);
    auto key = fmt::format("{}|{}", to_string(endpoint.kind), endpoint.base_url);
    auto& slot = limiters_[key];
    if (!slot) {
        slot = std::make_unique<ConcurrencyLimiter>(endpoint.max_in_flight);
    }
    return *slot;
}

std::string Gateway::image_b64(const ImageRef& ref) const {
    return base64_encode(images_->read(ref));
}

json Gateway::call(const ServiceEndpoint& endpoint, const json& body) {
    if (!endpoint.cache_enabled || !cache_) {
        return call_uncached(endpoint, body);
    }
    const auto key = cache_key(endpoint.kind, endpoint.base_url + "\n" + canonical_dump(body));
    if (auto hit = cache_->get(key)) {
        std::lock_guard lock(mutex_);
        ++stats_.cache_hits;
        return *hit;
    }
    {
        std::lock_guard lock(mutex_);
        ++stats_.cache_misses;
    }
    auto response = call_uncached(endpoint, body);
    cache_->put(key, response);
    return response;
}

json Gateway::call_uncached(const ServiceEndpoint& endpoint, const json& body) {
    auto& limiter = limiter_for(endpoint);
    for (int attempt = 0;; ++attempt) {
        {
            std::lock_guard lock(mutex_);
            ++stats_.attempts;
        }
        limiter.acquire();
        try {
            auto response = transport_->post(endpoint, body);
            limiter.release();
            return response;
        } catch (const TransportError& e) {
            limiter.release();
            if (!e.transient() || attempt >= endpoint.max_retries) {
                throw TransportError(fmt::format("{} request failed after {} attempt(s): {}", to_string(endpoint.kind),
                                                 attempt + 1, e.what()),
                                     e.transient());
            }
        } catch (...) {
            limiter.release();
            throw;
        }
        double jitter = 0.0;
        {
            std::lock_guard lock(mutex_);
            ++stats_.retries;
            jitter_state_ = splitmix64(jitter_state_);
            jitter = static_cast<double>(jitter_state_ >> 11) * 0x1.0p-53;
        }
        const double scale = std::ldexp(1.0, attempt) * (0.5 + 0.5 * jitter);
        sleeper_(std::chrono::milliseconds(
            static_cast<std::int64_t>(static_cast<double>(endpoint.backoff_base.count()) * scale)));
    }
}

std::string Gateway::complete_chat(const ChatRequest& req) {
    return complete_chat(endpoint(ServiceKind::chat), req);
}

std::string Gateway::complete_chat(const ServiceEndpoint& ep, const ChatRequest& req) {
    require_kind(ep, ServiceKind::chat);
    if (req.messages.empty()) {
        throw PreconditionError("chat request has no messages");
    }
    for (std::size_t i = 0; i < req.messages.size(); ++i) {
        const auto expected = i % 2 == 0 ? ChatRole::user : ChatRole::assistant;
        if (req.messages[i].role != expected) {
            throw PreconditionError("chat messages must alternate roles starting with user");
        }
    }
    if (!(req.temperature >= 0.0)) {
        throw PreconditionError("chat temperature must be >= 0");
    }
    const auto body = to_wire(req, [this](const ImageRef& ref) { return image_b64(ref); });
    const auto response = call(ep, body);
    return require_string(response, "content", ServiceKind::chat);
}

std::string Gateway::synthesize_face(const ImageSynthRequest& req) {
    const auto& ep = endpoint(ServiceKind::image_synth);
    if (req.positive_prompt.empty() || req.negative_prompt.empty()) {
        throw PreconditionError("image synthesis needs non-empty positive and negative prompts");
    }
    json body = {{"reference_image_b64", image_b64(req.reference_image)},
                 {"positive_prompt", req.positive_prompt},
                 {"negative_prompt", req.negative_prompt}};
    body["seed"] = req.seed ? json(*req.seed) : json(nullptr);
    const auto response = call(ep, body);
    auto bytes = base64_decode(require_string(response, "image_b64", ServiceKind::image_synth));
    if (bytes.empty()) {
        throw ProtocolError("image_synth returned an empty image");
    }
    return bytes;
}

ImageRef Gateway::synthesize_face(const ImageSynthRequest& req, const std::string& relative_path) {
    const auto bytes = synthesize_face(req);
    return images_->write(relative_path, bytes);
}

double Gateway::image_text_similarity(const ImageRef& image, const std::string& text) {
    const auto& ep = endpoint(ServiceKind::img_txt_sim);
    if (trim(text).empty()) {
        throw PreconditionError("image-text similarity needs non-empty text");
    }
    const json body = {{"image_b64", image_b64(image)}, {"text", text}};
    const double score = require_number(call(ep, body), "score", ServiceKind::img_txt_sim);
    if (!(score >= -1.0 && score <= 1.0)) {
        throw RangeError(fmt::format("similarity score {} outside [-1, 1]", score));
    }
    return score;
}

std::vector<double> Gateway::image_text_similarity(const std::vector<std::pair<ImageRef, std::string>>& batch) {
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& [image, text] : batch) {
        out.push_back(image_text_similarity(image, text));
    }
    return out;
}

UnitVector Gateway::face_embedding(const ImageRef& image) {
    const auto& ep = endpoint(ServiceKind::face_embed);
    const json body = {{"image_b64", image_b64(image)}};
    const json reply = call(ep, body);
    const auto& raw = require_field(reply, "vector", ServiceKind::face_embed);
    if (!raw.is_array() || raw.empty()) {
        throw ProtocolError("face_embed response 'vector' must be a non-empty array");
    }
    UnitVector v;
    v.components.reserve(raw.size());
    double sumsq = 0.0;
    for (const auto& x : raw) {
        if (!x.is_number()) {
            throw ProtocolError("face_embed vector contains a non-number");
        }
        const double d = x.get<double>();
        v.components.push_back(d);
        sumsq += d * d;
    }
    const double norm = std::sqrt(sumsq);
    const double deviation = std::abs(norm - 1.0);
    if (!(deviation <= 1e-3)) {
        throw NormError(fmt::format("embedding norm {} deviates from 1 by {}", norm, deviation), deviation);
    }
    if (deviation > 0.0) {
        for (auto& c : v.components) {
            c /= norm;
        }
    }
    return v;
}

AttributePrediction Gateway::face_attributes(const ImageRef& image) {
    const auto& ep = endpoint(ServiceKind::face_attr);
    const json body = {{"image_b64", image_b64(image)}};
    const auto response = call(ep, body);
    AttributePrediction p;
    try {
        p.gender = parse_gender(require_string(response, "gender", ServiceKind::face_attr));
    } catch (const PreconditionError& e) {
        throw ProtocolError(e.what());
    }
    p.gender_confidence = require_number(response, "gender_confidence", ServiceKind::face_attr);
    p.age_years = require_number(response, "age", ServiceKind::face_attr);
    if (!(p.gender_confidence >= 0.0 && p.gender_confidence <= 1.0)) {
        throw ProtocolError(fmt::format("gender_confidence {} outside [0, 1]", p.gender_confidence));
    }
    if (!(p.age_years >= 0.0)) {
        throw ProtocolError(fmt::format("age {} is negative", p.age_years));
    }
    return p;
}

ClassifierVerdict Gateway::classify(ServiceKind kind, const Payload& payload) {
    json body;
    if (kind == ServiceKind::nsfw) {
        const auto* image = std::get_if<ImageRef>(&payload);
        if (image == nullptr) {
            throw PreconditionError("nsfw classification takes an image payload");
        }
        body = {{"image_b64", image_b64(*image)}};
    } else if (kind == ServiceKind::safety) {
        const auto* text = std::get_if<std::string>(&payload);
        if (text == nullptr) {
            throw PreconditionError("safety classification takes a text payload");
        }
        body = {{"text", *text}};
    } else {
        throw PreconditionError(fmt::format("{} is not a classifier kind", to_string(kind)));
    }
    const auto response = call(endpoint(kind), body);
    ClassifierVerdict v;
    v.label = require_string(response, "label", kind);
    v.probability = require_number(response, "probability", kind);
    if (!(v.probability >= 0.0 && v.probability <= 1.0)) {
        throw ProtocolError(fmt::format("classifier probability {} outside [0, 1]", v.probability));
    }
    return v;
}

} // namespace counselforge
