// SPDX-License-Identifier: Apache-2.0
#include "counselforge/eval_suite.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/screenplay.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cctype>
#include <set>

namespace counselforge {

namespace {

std::string ask_judge(Gateway& gateway, const JudgeOptions& options, const std::string& prompt) {
    ChatRequest req;
    req.messages.push_back({ChatRole::user, prompt, std::nullopt});
    req.temperature = options.temperature;
    return options.endpoint ? gateway.complete_chat(*options.endpoint, req) : gateway.complete_chat(req);
}

std::vector<int> bracket_numbers(std::string_view text) {
    std::vector<int> out;
    std::size_t pos = 0;
    while ((pos = text.find("[[", pos)) != std::string_view::npos) {
        std::size_t i = pos + 2;
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        bool negative = false;
        if (i < text.size() && text[i] == '-') {
            negative = true;
            ++i;
        }
        const std::size_t digits_start = i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        const std::size_t digits_end = i;
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        if (digits_end > digits_start && digits_end - digits_start <= 6 && text.substr(i, 2) == "]]") {
            int v = std::stoi(std::string(text.substr(digits_start, digits_end - digits_start)));
            out.push_back(negative ? -v : v);
        }
        pos += 1;
    }
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    return "\"" + replace_all(s, "\"", "\"\"") + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

double SkillScores::mean() const {
    double s = 0.0;
    for (double v : values) {
        s += v;
    }
    return s / static_cast<double>(values.size());
}

std::string_view to_string(AllianceDimension d) {
    switch (d) {
    case AllianceDimension::goal:
        return "goal";
    case AllianceDimension::approach:
        return "approach";
    case AllianceDimension::affective_bond:
        return "affective_bond";
    }
    return "goal";
}

AllianceDimension parse_alliance_dimension(std::string_view text) {
    for (auto d : kAllianceDimensions) {
        if (to_string(d) == text) {
            return d;
        }
    }
    throw PreconditionError(fmt::format("unknown alliance dimension '{}'", text));
}

double AllianceScores::get(AllianceDimension d) const {
    switch (d) {
    case AllianceDimension::goal:
        return goal;
    case AllianceDimension::approach:
        return approach;
    case AllianceDimension::affective_bond:
        return affective_bond;
    }
    return goal;
}

double AllianceScores::normalized_mean() const {
    int sum = 0;
    for (int s : per_question) {
        sum += s - 1;
    }
    return static_cast<double>(sum) / (4.0 * static_cast<double>(per_question.size()));
}

AllianceScores alliance_from_questions(const std::array<int, 12>& answers) {
    AllianceScores out;
    out.per_question = answers;
    std::array<int, 3> sums{};
    for (std::size_t i = 0; i < answers.size(); ++i) {
        if (answers[i] < 1 || answers[i] > 5) {
            throw RangeError(fmt::format("alliance answer {} for question {} outside 1..5", answers[i], i + 1));
        }
        sums[i / 4] += answers[i];
    }
    out.goal = sums[0] / 4.0;
    out.approach = sums[1] / 4.0;
    out.affective_bond = sums[2] / 4.0;
    return out;
}

std::optional<int> parse_rating(std::string_view text, int lo, int hi) {
    const auto all = bracket_numbers(text);
    for (auto it = all.rbegin(); it != all.rend(); ++it) {
        if (*it >= lo && *it <= hi) {
            return *it;
        }
    }
    return std::nullopt;
}

std::optional<int> parse_last_bracket_number(std::string_view text) {
    const auto all = bracket_numbers(text);
    if (all.empty()) {
        return std::nullopt;
    }
    return all.back();
}

std::string render_conversation(const std::vector<Turn>& turns) {
    std::vector<std::string> lines;
    lines.reserve(turns.size());
    for (const auto& t : turns) {
        lines.push_back(render_turn(t, true, "Counselor"));
    }
    return join(lines, "\n");
}

SkillScores score_skills(const std::vector<Turn>& turns, Gateway& gateway, const TemplateSet& templates,
                         const JudgeOptions& options) {
    const auto conversation = render_conversation(turns);
    SkillScores out;
    for (std::size_t d = 0; d < kSkillDimensions.size(); ++d) {
        const auto prompt = render_template(templates.get(fmt::format("skills_{}", kSkillDimensions[d])),
                                            {{"conversation", conversation}});
        std::optional<int> score;
        for (int attempt = 0; attempt < 2 && !score; ++attempt) {
            const auto value = parse_last_bracket_number(ask_judge(gateway, options, prompt));
            if (value && *value >= 0 && *value <= 6) {
                score = value;
            }
        }
        if (!score) {
            throw JudgeParseError(fmt::format("no valid 0-6 score for {} after one retry", kSkillDimensions[d]));
        }
        out.values[d] = *score;
    }
    return out;
}

std::vector<std::string> wai_questions(const TemplateSet& templates) {
    std::vector<std::string> out;
    for (const auto& line : split_lines(templates.get("wai_questions"))) {
        if (!trim(line).empty()) {
            out.push_back(trim(line));
        }
    }
    if (out.size() != 12) {
        throw PreconditionError(fmt::format("expected 12 alliance questions, found {}", out.size()));
    }
    return out;
}

AllianceScores score_alliance(const std::vector<Turn>& turns, Gateway& gateway, const TemplateSet& templates,
                              const JudgeOptions& options) {
    const auto questions = wai_questions(templates);
    std::vector<std::string> guidelines(questions.size());
    for (std::size_t q = 0; q < questions.size(); ++q) {
        const auto name = fmt::format("wai_guidelines/q{:02}", q + 1);
        guidelines[q] = templates.has(name) ? strip_comment_lines(templates.get(name)) : std::string{};
        if (guidelines[q].empty() && !options.no_guidelines) {
            throw PreconditionError(fmt::format(
                "guidelines for alliance question {} are empty; populate {}.txt or waive guidelines", q + 1, name));
        }
    }
    const auto conversation = render_conversation(turns);
    std::array<int, 12> answers{};
    for (std::size_t q = 0; q < questions.size(); ++q) {
        const auto prompt = render_template(
            templates.get("wai_judge"),
            {{"conversation", conversation}, {"question", questions[q]}, {"guidelines", guidelines[q]}});
        std::optional<int> rating;
        for (int attempt = 0; attempt < 2 && !rating; ++attempt) {
            rating = parse_rating(ask_judge(gateway, options, prompt), 1, 5);
        }
        if (!rating) {
            throw JudgeParseError(fmt::format("no [[1-5]] rating for alliance question {} after one retry", q + 1));
        }
        answers[q] = *rating;
    }
    return alliance_from_questions(answers);
}

LengthStats length_stats(const std::vector<Turn>& turns) {
    std::size_t count = 0;
    std::size_t total = 0;
    LengthStats out;
    for (const auto& t : turns) {
        if (t.speaker != Speaker::therapist) {
            continue;
        }
        const auto n = split_whitespace(strip_directions(t)).size();
        total += n;
        out.max_tokens_per_turn = std::max(out.max_tokens_per_turn, n);
        ++count;
    }
    if (count == 0) {
        throw PreconditionError("length statistics need at least one therapist turn");
    }
    out.avg_tokens_per_turn = static_cast<double>(total) / static_cast<double>(count);
    return out;
}

double delta_vs_nonresistant(const std::map<ResistanceType, std::vector<double>>& scores_by_type) {
    std::vector<double> resistant;
    std::vector<double> baseline;
    for (const auto& [type, scores] : scores_by_type) {
        auto& dst = is_resistant(type) ? resistant : baseline;
        dst.insert(dst.end(), scores.begin(), scores.end());
    }
    if (baseline.empty()) {
        throw MissingBaselineError("no non-resistant scores to compare against");
    }
    if (resistant.empty()) {
        throw MissingBaselineError("no resistant scores to compare");
    }
    return mean(resistant) - mean(baseline);
}

void to_json(json& j, const Judgment& v) {
    j = json{{"case_id", v.case_id}, {"dimension", to_string(v.dimension)}, {"model_a", v.model_a},
             {"model_b", v.model_b}, {"winner", v.winner},                  {"rater", v.rater}};
}

void from_json(const json& j, Judgment& v) {
    j.at("case_id").get_to(v.case_id);
    v.dimension = parse_alliance_dimension(j.at("dimension").get<std::string>());
    j.at("model_a").get_to(v.model_a);
    j.at("model_b").get_to(v.model_b);
    j.at("winner").get_to(v.winner);
    j.at("rater").get_to(v.rater);
}

void validate(const Judgment& j) {
    if (j.model_a == j.model_b) {
        throw PreconditionError(fmt::format("judgment {} compares '{}' with itself", j.case_id, j.model_a));
    }
    if (j.winner != j.model_a && j.winner != j.model_b) {
        throw PreconditionError(fmt::format("judgment {} winner '{}' is neither model", j.case_id, j.winner));
    }
}

WinRates aggregate_win_rates(const std::vector<Judgment>& judgments) {
    std::map<std::pair<std::string, std::string>, std::size_t> wins;
    std::set<std::string> models;
    WinRates out;
    for (const auto& j : judgments) {
        validate(j);
        models.insert(j.model_a);
        models.insert(j.model_b);
        const auto& loser = j.winner == j.model_a ? j.model_b : j.model_a;
        ++wins[{j.winner, loser}];
        ++out.totals[{j.model_a, j.model_b}];
        if (j.model_a != j.model_b) {
            ++out.totals[{j.model_b, j.model_a}];
        }
    }
    out.models.assign(models.begin(), models.end());
    for (const auto& [pair, total] : out.totals) {
        const auto it = wins.find(pair);
        const std::size_t w = it == wins.end() ? 0 : it->second;
        out.cells[pair] = 100.0 * static_cast<double>(w) / static_cast<double>(total);
    }
    for (const auto& m : out.models) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& o : out.models) {
            if (o == m) {
                continue;
            }
            if (auto it = out.cells.find({m, o}); it != out.cells.end()) {
                sum += it->second;
                ++n;
            }
        }
        if (n > 0) {
            out.overall[m] = sum / static_cast<double>(n);
        }
    }
    return out;
}

json to_json_value(const WinRates& rates) {
    json cells = json::object();
    for (const auto& [pair, value] : rates.cells) {
        cells[pair.first][pair.second] = {{"win_rate", value}, {"judgments", rates.totals.at(pair)}};
    }
    return {{"models", rates.models}, {"cells", cells}, {"overall", rates.overall}};
}

std::string render_win_rates(const WinRates& rates, std::string_view title) {
    std::string out = fmt::format("{}\n{:<24}", title, "");
    for (const auto& m : rates.models) {
        out += fmt::format("{:>14}", m);
    }
    out += fmt::format("{:>10}\n", "Overall");
    for (const auto& row : rates.models) {
        out += fmt::format("{:<24}", row);
        for (const auto& col : rates.models) {
            auto it = rates.cells.find({row, col});
            out += it == rates.cells.end() ? fmt::format("{:>14}", "-") : fmt::format("{:>14.2f}", it->second);
        }
        auto ov = rates.overall.find(row);
        out += ov == rates.overall.end() ? fmt::format("{:>10}\n", "-") : fmt::format("{:>10.2f}\n", ov->second);
    }
    return out;
}

std::vector<Judgment> read_judgments_csv(std::string_view csv) {
    std::vector<Judgment> out;
    const auto lines = split_lines(csv);
    std::map<std::string, std::size_t> column;
    std::size_t line_no = 0;
    for (const auto& line : lines) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = csv_split(line);
        if (column.empty()) {
            for (std::size_t i = 0; i < fields.size(); ++i) {
                column[trim(fields[i])] = i;
            }
            for (const char* c : {"case_id", "dimension", "model_a", "model_b", "winner", "rater"}) {
                if (column.count(c) == 0) {
                    throw SchemaError(fmt::format("judgment CSV lacks column '{}'", c), line_no);
                }
            }
            continue;
        }
        auto get = [&](const char* c) {
            const auto idx = column.at(c);
            if (idx >= fields.size()) {
                throw SchemaError(fmt::format("judgment CSV line {} is short", line_no), line_no);
            }
            return trim(fields[idx]);
        };
        Judgment j;
        j.case_id = get("case_id");
        try {
            j.dimension = parse_alliance_dimension(get("dimension"));
        } catch (const PreconditionError& e) {
            throw SchemaError(fmt::format("line {}: {}", line_no, e.what()), line_no);
        }
        j.model_a = get("model_a");
        j.model_b = get("model_b");
        j.winner = get("winner");
        j.rater = get("rater");
        out.push_back(std::move(j));
    }
    return out;
}

std::string write_judgments_csv(const std::vector<Judgment>& judgments) {
    std::string out = "case_id,dimension,model_a,model_b,winner,rater\n";
    for (const auto& j : judgments) {
        out += fmt::format("{},{},{},{},{},{}\n", csv_field(j.case_id), to_string(j.dimension), csv_field(j.model_a),
                           csv_field(j.model_b), csv_field(j.winner), csv_field(j.rater));
    }
    return out;
}

void to_json(json& j, const ScoreRow& v) {
    json skills = json::object();
    for (std::size_t d = 0; d < kSkillDimensions.size(); ++d) {
        skills[std::string(kSkillDimensions[d])] = v.skills.values[d];
    }
    j = json{{"session_id", v.session_id},
             {"model", v.model},
             {"profile_id", v.profile_id},
             {"resistance", v.resistance},
             {"skills", skills},
             {"alliance",
              {{"goal", v.alliance.goal},
               {"approach", v.alliance.approach},
               {"affective_bond", v.alliance.affective_bond},
               {"per_question", v.alliance.per_question}}},
             {"length", {{"avg_tokens_per_turn", v.length.avg_tokens_per_turn},
                         {"max_tokens_per_turn", v.length.max_tokens_per_turn}}}};
}

void from_json(const json& j, ScoreRow& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("model").get_to(v.model);
    j.at("profile_id").get_to(v.profile_id);
    j.at("resistance").get_to(v.resistance);
    for (std::size_t d = 0; d < kSkillDimensions.size(); ++d) {
        v.skills.values[d] = j.at("skills").at(std::string(kSkillDimensions[d])).get<double>();
    }
    v.alliance = alliance_from_questions(j.at("alliance").at("per_question").get<std::array<int, 12>>());
    v.length.avg_tokens_per_turn = j.at("length").at("avg_tokens_per_turn").get<double>();
    v.length.max_tokens_per_turn = j.at("length").at("max_tokens_per_turn").get<std::size_t>();
}

namespace {

struct Metric {
    std::string name;
    double (*get)(const ScoreRow&);
};

const std::vector<Metric>& metrics() {
    static const std::vector<Metric> m = {
        {"understanding", [](const ScoreRow& r) { return r.skills.values[0]; }},
        {"interpersonal_effectiveness", [](const ScoreRow& r) { return r.skills.values[1]; }},
        {"collaboration", [](const ScoreRow& r) { return r.skills.values[2]; }},
        {"guided_discovery", [](const ScoreRow& r) { return r.skills.values[3]; }},
        {"focus", [](const ScoreRow& r) { return r.skills.values[4]; }},
        {"goal", [](const ScoreRow& r) { return r.alliance.goal; }},
        {"approach", [](const ScoreRow& r) { return r.alliance.approach; }},
        {"affective_bond", [](const ScoreRow& r) { return r.alliance.affective_bond; }},
    };
    return m;
}

std::string pairing_key(const ScoreRow& r, bool by_profile) {
    if (!by_profile) {
        return r.profile_id;
    }
    const auto dash = r.profile_id.rfind('-');
    return dash == std::string::npos ? r.profile_id : r.profile_id.substr(0, dash);
}

} // namespace

json build_eval_report(const std::vector<ScoreRow>& rows, const ReportOptions& options) {
    if (rows.empty()) {
        throw EmptyCorpusError("no scored sessions");
    }
    std::map<std::string, std::vector<const ScoreRow*>> by_model;
    for (const auto& r : rows) {
        by_model[r.model].push_back(&r);
    }
    json report = {{"token_counting", "whitespace"},
                   {"significance_level", options.significance},
                   {"pairing", options.pair_by_profile ? "profile" : "session"}};
    json models = json::object();
    for (const auto& [model, list] : by_model) {
        json m = {{"sessions", list.size()}};
        for (const auto& metric : metrics()) {
            std::vector<double> all;
            std::map<ResistanceType, std::vector<double>> by_type;
            for (const auto* r : list) {
                const double v = metric.get(*r);
                all.push_back(v);
                by_type[r->resistance].push_back(v);
            }
            json entry = {{"mean", mean(all)}};
            json types = json::object();
            for (const auto& [type, values] : by_type) {
                types[std::string(to_string(type))] = mean(values);
            }
            entry["by_type"] = types;
            try {
                entry["delta_vs_non_resistant"] = delta_vs_nonresistant(by_type);
            } catch (const MissingBaselineError&) {
                entry["delta_vs_non_resistant"] = nullptr;
            }
            m[metric.name] = entry;
        }
        std::vector<double> avg;
        std::vector<double> mx;
        for (const auto* r : list) {
            avg.push_back(r->length.avg_tokens_per_turn);
            mx.push_back(static_cast<double>(r->length.max_tokens_per_turn));
        }
        m["length"] = {{"avg_tokens_per_turn", mean(avg)}, {"max_tokens_per_turn", mean(mx)}};
        models[model] = m;
    }
    report["models"] = models;

    json tests = json::object();
    if (!options.baseline_model.empty() && by_model.count(options.baseline_model) != 0) {
        for (const auto& [model, list] : by_model) {
            if (model == options.baseline_model) {
                continue;
            }
            json per_metric = json::object();
            for (const auto& metric : metrics()) {
                std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> grouped;
                for (const auto* r : list) {
                    grouped[pairing_key(*r, options.pair_by_profile)].first.push_back(metric.get(*r));
                }
                for (const auto* r : by_model.at(options.baseline_model)) {
                    grouped[pairing_key(*r, options.pair_by_profile)].second.push_back(metric.get(*r));
                }
                std::vector<double> a;
                std::vector<double> b;
                for (const auto& [key, pair] : grouped) {
                    if (!pair.first.empty() && !pair.second.empty()) {
                        a.push_back(mean(pair.first));
                        b.push_back(mean(pair.second));
                    }
                }
                try {
                    const auto r = paired_t_test(a, b);
                    per_metric[metric.name] = {{"t", r.t},
                                               {"p", r.p_two_sided},
                                               {"df", r.df},
                                               {"significant", r.p_two_sided < options.significance}};
                } catch (const Error& e) {
                    per_metric[metric.name] = {{"error", e.what()}};
                }
            }
            tests[model] = per_metric;
        }
    }
    report["t_tests"] = tests;

    std::vector<double> lengths;
    std::vector<double> scores;
    for (const auto& r : rows) {
        lengths.push_back(r.length.avg_tokens_per_turn);
        scores.push_back(r.skills.mean());
    }
    try {
        report["length_score_correlation"] = {{"r", pearson_r(lengths, scores)}, {"n", rows.size()}};
    } catch (const Error& e) {
        report["length_score_correlation"] = {{"error", e.what()}, {"n", rows.size()}};
    }
    return report;
}

std::string render_eval_report(const json& report) {
    std::string out = fmt::format("{:<18}", "Model");
    for (const auto& metric : metrics()) {
        out += fmt::format("{:>16}", metric.name.substr(0, 15));
    }
    out += fmt::format("{:>10}{:>10}\n", "AvgTok", "MaxTok");
    for (const auto& [model, m] : report.at("models").items()) {
        out += fmt::format("{:<18}", model);
        for (const auto& metric : metrics()) {
            const auto& e = m.at(metric.name);
            const auto& d = e.at("delta_vs_non_resistant");
            out += d.is_null() ? fmt::format("{:>16.3f}", e.at("mean").get<double>())
                               : fmt::format("{:>8.3f} ({:+.3f})", e.at("mean").get<double>(), d.get<double>());
        }
        out += fmt::format("{:>10.2f}{:>10.2f}\n", m.at("length").at("avg_tokens_per_turn").get<double>(),
                           m.at("length").at("max_tokens_per_turn").get<double>());
    }
    out += "Tokens are whitespace-delimited. Deltas are resistant minus non-resistant.\n";
    return out;
}

} // namespace counselforge
