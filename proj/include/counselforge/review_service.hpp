// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/eval_suite.hpp"
#include "counselforge/image_store.hpp"
#include "counselforge/session_sim.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <tuple>
#include <string>
#include <vector>

namespace counselforge {

struct ReviewConfig {
    /// Cases drawn for each pair of models, spread evenly over resistance types.
    std::size_t cases_per_pair = 200;
    std::uint64_t seed = 11;
    bool include_non_resistant = false;
    /// rater id -> bearer token. Empty means no token check.
    std::map<std::string, std::string> tokens;
    std::optional<std::filesystem::path> judgment_log;
    /// Skips are kept apart from judgments; they never enter the win rates.
    std::optional<std::filesystem::path> skip_log;
};

struct Skip {
    std::string case_id;
    std::string rater;
    std::string reason;

    friend bool operator==(const Skip&, const Skip&) = default;
};

void to_json(json& j, const Skip& v);
void from_json(const json& j, Skip& v);

struct ReviewCase {
    std::string case_id;
    std::string profile_id;
    ResistanceType resistance = ResistanceType::non_resistant;
    std::string left_model;
    std::string right_model;
    std::vector<Turn> left;
    std::vector<Turn> right;
    /// Seed that decided the left/right order, kept so blinding can be reconstructed.
    std::uint64_t order_seed = 0;
};

struct HttpReply {
    int status = 200;
    json body;
    std::string content_type = "application/json";
    std::string raw;
};

/// Pairs transcripts of different models on the same profile into blinded cases and
/// records forced-choice judgments against them.
class ReviewService {
public:
    /// `transcripts` maps a model label to its finished sessions. At least two models.
    ReviewService(std::map<std::string, std::vector<TranscriptRecord>> transcripts, ReviewConfig cfg,
                  std::shared_ptr<ImageStore> images = nullptr);

    HttpReply next_case(const std::string& rater, const std::optional<std::string>& token = std::nullopt);
    HttpReply submit(const json& body, const std::optional<std::string>& token = std::nullopt);
    /// Body {case_id, rater, reason?}. The case leaves that rater's queue.
    HttpReply skip(const json& body, const std::optional<std::string>& token = std::nullopt);
    HttpReply progress(const std::optional<std::string>& rater = std::nullopt) const;
    HttpReply results() const;
    HttpReply image(const std::string& case_id, const std::string& side, std::size_t turn) const;

    [[nodiscard]] const std::vector<ReviewCase>& cases() const noexcept { return cases_; }
    [[nodiscard]] std::vector<Judgment> judgments() const;
    [[nodiscard]] std::vector<Skip> skips() const;

    /// Loads judgments written by an earlier run of the service.
    void replay_log(const std::filesystem::path& path);
    void replay_skip_log(const std::filesystem::path& path);

    /// Serves the /api routes until `stop()` is called from another thread.
    void serve(const std::string& host, int port);
    /// Binds an ephemeral port, returning it; the server runs on a background thread.
    int serve_background(const std::string& host);
    void stop();

    ~ReviewService();

private:
    bool authorized(const std::string& rater, const std::optional<std::string>& token) const;
    json blinded(const ReviewCase& c) const;
    void record(const Judgment& j, bool persist);

    std::vector<ReviewCase> cases_;
    std::map<std::string, std::size_t> case_index_;
    ReviewConfig cfg_;
    std::shared_ptr<ImageStore> images_;

    mutable std::mutex mutex_;
    std::vector<Judgment> judgments_;
    std::set<std::tuple<std::string, std::string, AllianceDimension>> seen_;
    std::vector<Skip> skips_;
    std::set<std::pair<std::string, std::string>> skipped_;

    struct Server;
    std::unique_ptr<Server> server_;
};

/// Deterministic stratified selection of up to `count` profile ids, balanced over the
/// resistance types present.
std::vector<std::string> stratified_sample(const std::map<std::string, ResistanceType>& profiles, std::size_t count,
                                           std::uint64_t seed, bool include_non_resistant);

} // namespace counselforge
