// SPDX-License-Identifier: Apache-2.0
#include "counselforge/review_service.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/util.hpp"

#include <httplib.h>

#include <fmt/core.h>

#include <algorithm>
#include <fstream>
#include <thread>

namespace counselforge {

struct ReviewService::Server {
    httplib::Server http;
    std::thread thread;
};

namespace {

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.index(i)]);
    }
}

HttpReply error_reply(int status, std::string message) {
    return {status, json{{"error", std::move(message)}}, "application/json", {}};
}

void append_line(const std::filesystem::path& path, const json& value) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << value.dump() << '\n';
    if (!out) {
        throw StorageError(fmt::format("cannot append to '{}'", path.string()));
    }
}

std::optional<std::string> bearer(const httplib::Request& req) {
    const auto h = req.get_header_value("Authorization");
    constexpr std::string_view kPrefix = "Bearer ";
    if (h.size() > kPrefix.size() && h.compare(0, kPrefix.size(), kPrefix) == 0) {
        return h.substr(kPrefix.size());
    }
    return std::nullopt;
}

void send(httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    if (!reply.raw.empty()) {
        res.set_content(reply.raw, reply.content_type.c_str());
    } else {
        res.set_content(reply.body.dump(), "application/json");
    }
}

} // namespace

void to_json(json& j, const Skip& v) {
    j = json{{"case_id", v.case_id}, {"rater", v.rater}, {"reason", v.reason}};
}

void from_json(const json& j, Skip& v) {
    v.case_id = j.at("case_id").get<std::string>();
    v.rater = j.at("rater").get<std::string>();
    v.reason = j.value("reason", std::string());
}

std::vector<std::string> stratified_sample(const std::map<std::string, ResistanceType>& profiles, std::size_t count,
                                           std::uint64_t seed, bool include_non_resistant) {
    std::map<ResistanceType, std::vector<std::string>> groups;
    for (const auto& [id, type] : profiles) {
        if (is_resistant(type) || include_non_resistant) {
            groups[type].push_back(id);
        }
    }
    for (auto& [type, ids] : groups) {
        seeded_shuffle(ids, derive_seed(seed, fmt::format("stratum|{}", to_string(type))));
    }
    std::vector<std::string> out;
    for (std::size_t round = 0; out.size() < count; ++round) {
        bool any = false;
        for (const auto& [type, ids] : groups) {
            if (round < ids.size() && out.size() < count) {
                out.push_back(ids[round]);
                any = true;
            }
        }
        if (!any) {
            break;
        }
    }
    return out;
}

ReviewService::ReviewService(std::map<std::string, std::vector<TranscriptRecord>> transcripts, ReviewConfig cfg,
                             std::shared_ptr<ImageStore> images)
    : cfg_(std::move(cfg)), images_(std::move(images)) {
    if (transcripts.size() < 2) {
        throw PreconditionError("pairwise review needs transcripts from at least two models");
    }
    std::map<std::string, std::map<std::string, const TranscriptRecord*>> by_model;
    for (const auto& [model, list] : transcripts) {
        for (const auto& t : list) {
            if (!t.failed) {
                by_model[model][t.state.profile.profile_id] = &t;
            }
        }
    }
    std::vector<ReviewCase> all;
    for (auto a = by_model.begin(); a != by_model.end(); ++a) {
        for (auto b = std::next(a); b != by_model.end(); ++b) {
            std::map<std::string, ResistanceType> common;
            for (const auto& [pid, rec] : a->second) {
                if (b->second.count(pid) != 0) {
                    common[pid] = rec->state.profile.resistance;
                }
            }
            const auto picked = stratified_sample(common, cfg_.cases_per_pair,
                                                  derive_seed(cfg_.seed, fmt::format("pair|{}|{}", a->first, b->first)),
                                                  cfg_.include_non_resistant);
            for (const auto& pid : picked) {
                ReviewCase c;
                c.profile_id = pid;
                c.resistance = common.at(pid);
                c.order_seed = derive_seed(cfg_.seed, fmt::format("order|{}|{}|{}", a->first, b->first, pid));
                const bool swap = (c.order_seed & 1U) != 0;
                const auto* left = swap ? b->second.at(pid) : a->second.at(pid);
                const auto* right = swap ? a->second.at(pid) : b->second.at(pid);
                c.left_model = swap ? b->first : a->first;
                c.right_model = swap ? a->first : b->first;
                c.left = left->state.history;
                c.right = right->state.history;
                all.push_back(std::move(c));
            }
        }
    }
    seeded_shuffle(all, derive_seed(cfg_.seed, "case-order"));
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i].case_id = fmt::format("case-{:04}", i + 1);
        case_index_[all[i].case_id] = i;
    }
    cases_ = std::move(all);
    if (cfg_.judgment_log && std::filesystem::exists(*cfg_.judgment_log)) {
        replay_log(*cfg_.judgment_log);
    }
    if (cfg_.skip_log && std::filesystem::exists(*cfg_.skip_log)) {
        replay_skip_log(*cfg_.skip_log);
    }
}

ReviewService::~ReviewService() {
    stop();
}

bool ReviewService::authorized(const std::string& rater, const std::optional<std::string>& token) const {
    if (cfg_.tokens.empty()) {
        return true;
    }
    const auto it = cfg_.tokens.find(rater);
    return it != cfg_.tokens.end() && token && *token == it->second;
}

json ReviewService::blinded(const ReviewCase& c) const {
    auto side = [&](const std::vector<Turn>& turns, std::string_view name) {
        json out = json::array();
        for (std::size_t i = 0; i < turns.size(); ++i) {
            const auto& t = turns[i];
            json turn = {{"speaker", t.speaker}, {"directions", t.directions}, {"utterance", t.utterance}};
            turn["image"] = t.image ? json(fmt::format("/api/images/{}/{}/{}", c.case_id, name, i)) : json(nullptr);
            out.push_back(std::move(turn));
        }
        return json{{"turns", out}};
    };
    json dims = json::array();
    for (auto d : kAllianceDimensions) {
        dims.push_back(to_string(d));
    }
    return {{"case_id", c.case_id}, {"left", side(c.left, "left")}, {"right", side(c.right, "right")},
            {"dimensions", dims}};
}

HttpReply ReviewService::next_case(const std::string& rater, const std::optional<std::string>& token) {
    if (trim(rater).empty()) {
        return error_reply(400, "rater is required");
    }
    if (!authorized(rater, token)) {
        return error_reply(401, "unknown rater or bad token");
    }
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < cases_.size(); ++i) {
        const auto& c = cases_[i];
        if (skipped_.count({c.case_id, rater}) != 0) {
            continue;
        }
        const bool done = std::all_of(kAllianceDimensions.begin(), kAllianceDimensions.end(), [&](auto d) {
            return seen_.count({c.case_id, rater, d}) != 0;
        });
        if (!done) {
            auto body = blinded(c);
            body["position"] = i + 1;
            body["total"] = cases_.size();
            return {200, body, "application/json", {}};
        }
    }
    return error_reply(404, "queue exhausted");
}

void ReviewService::record(const Judgment& j, bool persist) {
    judgments_.push_back(j);
    seen_.insert({j.case_id, j.rater, j.dimension});
    if (persist && cfg_.judgment_log) {
        append_line(*cfg_.judgment_log, json(j));
    }
}

HttpReply ReviewService::skip(const json& body, const std::optional<std::string>& token) {
    if (!body.is_object()) {
        return error_reply(400, "body must be a JSON object");
    }
    for (const char* key : {"case_id", "rater"}) {
        if (!body.contains(key) || !body.at(key).is_string()) {
            return error_reply(400, fmt::format("field '{}' must be a string", key));
        }
    }
    if (body.contains("reason") && !body.at("reason").is_string()) {
        return error_reply(400, "field 'reason' must be a string");
    }
    Skip s{body.at("case_id").get<std::string>(), trim(body.at("rater").get<std::string>()),
           body.value("reason", std::string())};
    if (s.rater.empty()) {
        return error_reply(400, "rater is required");
    }
    if (!authorized(s.rater, token)) {
        return error_reply(401, "unknown rater or bad token");
    }
    if (case_index_.count(s.case_id) == 0) {
        return error_reply(404, fmt::format("unknown case '{}'", s.case_id));
    }
    std::lock_guard lock(mutex_);
    if (skipped_.count({s.case_id, s.rater}) != 0) {
        return error_reply(409, "case already skipped by this rater");
    }
    try {
        if (cfg_.skip_log) {
            append_line(*cfg_.skip_log, json(s));
        }
    } catch (const StorageError& e) {
        return error_reply(500, e.what());
    }
    skipped_.insert({s.case_id, s.rater});
    skips_.push_back(s);
    return {201, json{{"case_id", s.case_id}, {"skipped", true}}, "application/json", {}};
}

HttpReply ReviewService::submit(const json& body, const std::optional<std::string>& token) {
    if (!body.is_object()) {
        return error_reply(400, "body must be a JSON object");
    }
    for (const char* key : {"case_id", "rater", "dimension", "choice"}) {
        if (!body.contains(key) || !body.at(key).is_string()) {
            return error_reply(400, fmt::format("field '{}' must be a string", key));
        }
    }
    const auto case_id = body.at("case_id").get<std::string>();
    const auto rater = trim(body.at("rater").get<std::string>());
    const auto choice = body.at("choice").get<std::string>();
    if (rater.empty()) {
        return error_reply(400, "rater is required");
    }
    if (!authorized(rater, token)) {
        return error_reply(401, "unknown rater or bad token");
    }
    AllianceDimension dim{};
    try {
        dim = parse_alliance_dimension(body.at("dimension").get<std::string>());
    } catch (const PreconditionError& e) {
        return error_reply(400, e.what());
    }
    if (choice != "left" && choice != "right") {
        return error_reply(400, "choice must be 'left' or 'right'");
    }
    const auto it = case_index_.find(case_id);
    if (it == case_index_.end()) {
        return error_reply(404, fmt::format("unknown case '{}'", case_id));
    }
    const auto& c = cases_[it->second];
    std::lock_guard lock(mutex_);
    if (seen_.count({case_id, rater, dim}) != 0) {
        return error_reply(409, "judgment already recorded for this case, rater and dimension");
    }
    Judgment j{case_id, dim, c.left_model, c.right_model, choice == "left" ? c.left_model : c.right_model, rater};
    try {
        record(j, true);
    } catch (const StorageError& e) {
        return error_reply(500, e.what());
    }
    return {201, json{{"case_id", case_id}, {"dimension", to_string(dim)}, {"recorded", true}}, "application/json", {}};
}

HttpReply ReviewService::progress(const std::optional<std::string>& rater) const {
    std::lock_guard lock(mutex_);
    std::map<std::string, std::map<std::string, std::size_t>> per_rater;
    std::map<std::string, std::size_t> skipped;
    for (const auto& j : judgments_) {
        ++per_rater[j.rater][j.case_id];
    }
    for (const auto& sk : skips_) {
        per_rater[sk.rater];
        // A skipped case that was also fully judged counts once, as completed.
        const auto& by_case = per_rater[sk.rater];
        const auto it = by_case.find(sk.case_id);
        skipped[sk.rater] += it != by_case.end() && it->second == kAllianceDimensions.size() ? 0 : 1;
    }
    json raters = json::object();
    for (const auto& [r, by_case] : per_rater) {
        if (rater && *rater != r) {
            continue;
        }
        std::size_t count = 0;
        std::size_t complete = 0;
        for (const auto& [cid, n] : by_case) {
            count += n;
            complete += n == kAllianceDimensions.size() ? 1 : 0;
        }
        const std::size_t sk = skipped.count(r) != 0 ? skipped.at(r) : 0;
        raters[r] = {{"judgments", count}, {"cases_completed", complete}, {"skipped", sk},
                     {"remaining", cases_.size() - complete - sk}};
    }
    if (rater && !raters.contains(*rater)) {
        raters[*rater] = {{"judgments", 0}, {"cases_completed", 0}, {"skipped", 0}, {"remaining", cases_.size()}};
    }
    return {200, json{{"total_cases", cases_.size()}, {"raters", raters}}, "application/json", {}};
}

HttpReply ReviewService::results() const {
    std::lock_guard lock(mutex_);
    json body = {{"judgments", judgments_.size()}, {"skips", skips_.size()}};
    if (judgments_.empty()) {
        body["overall"] = nullptr;
        body["by_dimension"] = json::object();
        return {200, body, "application/json", {}};
    }
    body["overall"] = to_json_value(aggregate_win_rates(judgments_));
    json by_dim = json::object();
    for (auto d : kAllianceDimensions) {
        std::vector<Judgment> subset;
        std::copy_if(judgments_.begin(), judgments_.end(), std::back_inserter(subset),
                     [&](const Judgment& j) { return j.dimension == d; });
        if (!subset.empty()) {
            by_dim[std::string(to_string(d))] = to_json_value(aggregate_win_rates(subset));
        }
    }
    body["by_dimension"] = by_dim;

    std::map<std::pair<std::string, AllianceDimension>, std::set<std::string>> winners;
    std::map<std::pair<std::string, AllianceDimension>, std::size_t> votes;
    for (const auto& j : judgments_) {
        winners[{j.case_id, j.dimension}].insert(j.winner);
        ++votes[{j.case_id, j.dimension}];
    }
    std::size_t shared = 0;
    std::size_t agreed = 0;
    for (const auto& [key, n] : votes) {
        if (n >= 2) {
            ++shared;
            agreed += winners[key].size() == 1 ? 1 : 0;
        }
    }
    body["raw_agreement"] = {{"items_with_multiple_raters", shared},
                             {"agreeing", agreed},
                             {"rate", shared == 0 ? json(nullptr)
                                                  : json(static_cast<double>(agreed) / static_cast<double>(shared))}};
    return {200, body, "application/json", {}};
}

HttpReply ReviewService::image(const std::string& case_id, const std::string& side, std::size_t turn) const {
    const auto it = case_index_.find(case_id);
    if (it == case_index_.end() || (side != "left" && side != "right") || !images_) {
        return error_reply(404, "no such image");
    }
    const auto& c = cases_[it->second];
    const auto& turns = side == "left" ? c.left : c.right;
    if (turn >= turns.size() || !turns[turn].image) {
        return error_reply(404, "no such image");
    }
    try {
        return {200, nullptr, "image/png", images_->read(*turns[turn].image)};
    } catch (const Error&) {
        return error_reply(404, "image missing from store");
    }
}

std::vector<Judgment> ReviewService::judgments() const {
    std::lock_guard lock(mutex_);
    return judgments_;
}

std::vector<Skip> ReviewService::skips() const {
    std::lock_guard lock(mutex_);
    return skips_;
}

void ReviewService::replay_skip_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StorageError(fmt::format("cannot open '{}'", path.string()));
    }
    std::string line;
    std::size_t line_no = 0;
    std::lock_guard lock(mutex_);
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        Skip s;
        try {
            s = json::parse(line).get<Skip>();
        } catch (const std::exception& e) {
            throw SchemaError(fmt::format("skip log line {}: {}", line_no, e.what()), line_no);
        }
        if (skipped_.insert({s.case_id, s.rater}).second) {
            skips_.push_back(s);
        }
    }
}

void ReviewService::replay_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StorageError(fmt::format("cannot open '{}'", path.string()));
    }
    std::string line;
    std::size_t line_no = 0;
    std::lock_guard lock(mutex_);
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        Judgment j;
        try {
            j = json::parse(line).get<Judgment>();
            validate(j);
        } catch (const std::exception& e) {
            throw SchemaError(fmt::format("judgment log line {}: {}", line_no, e.what()), line_no);
        }
        if (seen_.count({j.case_id, j.rater, j.dimension}) == 0) {
            record(j, false);
        }
    }
}

namespace {

void install_routes(httplib::Server& http, ReviewService& svc) {
    http.Get("/api/cases/next", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.next_case(req.get_param_value("rater"), bearer(req)));
    });
    http.Post("/api/judgments", [&svc](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error&) {
            send(res, error_reply(400, "body is not JSON"));
            return;
        }
        send(res, svc.submit(body, bearer(req)));
    });
    http.Post("/api/skips", [&svc](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error&) {
            send(res, error_reply(400, "body is not JSON"));
            return;
        }
        send(res, svc.skip(body, bearer(req)));
    });
    http.Get("/api/progress", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.progress(req.has_param("rater") ? std::optional(req.get_param_value("rater"))
                                                      : std::nullopt));
    });
    http.Get("/api/results", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.results()); });
    http.Get(R"(/api/images/([\w-]+)/(left|right)/(\d+))",
             [&svc](const httplib::Request& req, httplib::Response& res) {
                 send(res, svc.image(req.matches[1], req.matches[2], std::stoul(req.matches[3])));
             });
    http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.status = 204;
    });
}

} // namespace

void ReviewService::serve(const std::string& host, int port) {
    server_ = std::make_unique<Server>();
    install_routes(server_->http, *this);
    if (!server_->http.listen(host, port)) {
        throw StorageError(fmt::format("cannot listen on {}:{}", host, port));
    }
}

int ReviewService::serve_background(const std::string& host) {
    server_ = std::make_unique<Server>();
    install_routes(server_->http, *this);
    const int port = server_->http.bind_to_any_port(host);
    if (port <= 0) {
        throw StorageError(fmt::format("cannot bind {}", host));
    }
    server_->thread = std::thread([this] { server_->http.listen_after_bind(); });
    server_->http.wait_until_ready();
    return port;
}

void ReviewService::stop() {
    if (!server_) {
        return;
    }
    server_->http.stop();
    if (server_->thread.joinable()) {
        server_->thread.join();
    }
}

} // namespace counselforge
