// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any FAIL.
#include "support.hpp"

#include "counselforge/corpus.hpp"
#include "counselforge/errors.hpp"
#include "counselforge/eval_suite.hpp"
#include "counselforge/pipeline.hpp"
#include "counselforge/session_sim.hpp"
#include "counselforge/statistics.hpp"

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <memory>
#include <regex>
#include <set>
#include <sstream>

using namespace cftest;

namespace {

using Clock = std::chrono::steady_clock;
using big = boost::multiprecision::cpp_dec_float_50;

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects failed expectations inside one criterion.
struct Checker {
    std::vector<std::string> failures;
    std::size_t checks = 0;

    void expect(bool ok, const std::string& what) {
        ++checks;
        if (!ok && failures.size() < 8) {
            failures.push_back(what);
        }
        if (!ok && failures.size() == 8) {
            failures.emplace_back("...");
        }
    }
    [[nodiscard]] Outcome outcome(const std::string& ok_detail) const {
        if (failures.empty()) {
            return {true, ok_detail};
        }
        return {false, join(failures, "; ")};
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

AppConfig mock_config(const std::filesystem::path& root) {
    AppConfig cfg;
    cfg.mock = true;
    cfg.data_root = root;
    cfg.judge.no_guidelines = true;
    return cfg;
}

std::filesystem::path seed_profiles() {
    return source_dir() / "data/seed_profiles.jsonl";
}

// Shared with the export check so the golden corpus is built once more at most.
std::filesystem::path g_golden_corpus;

// ---------------------------------------------------------------------------
Outcome golden_pipeline(const std::filesystem::path& work) {
    Checker c;
    const auto t0 = Clock::now();
    std::vector<GoldenArtifacts> runs;
    for (const char* name : {"run1", "run2"}) {
        auto rt = make_runtime(mock_config(work / name));
        runs.push_back(golden_run(*rt, seed_profiles()));
    }
    const double elapsed = seconds_since(t0);
    c.expect(runs[0].profiles == 48, fmt::format("profiles {}", runs[0].profiles));
    const auto corpus_a = read_file(runs[0].corpus);
    const auto corpus_b = read_file(runs[1].corpus);
    const auto report_a = read_file(runs[0].report);
    const auto report_b = read_file(runs[1].report);
    c.expect(corpus_a == corpus_b, "corpus differs between runs");
    c.expect(report_a == report_b, "filter report differs between runs");
    c.expect(!corpus_a.empty(), "empty corpus");
    c.expect(runs[0].filter_report.errors.empty(), "filter errors in golden run");
    c.expect(elapsed < 60.0, fmt::format("took {:.1f} s", elapsed));
    g_golden_corpus = runs[0].corpus;
    return c.outcome(fmt::format("48 profiles, kept {} of {}, corpus sha256 {}..., {:.2f} s for two runs",
                                 runs[0].filter_report.kept, runs[0].filter_report.input,
                                 sha256_hex(corpus_a).substr(0, 12), elapsed));
}

// ---------------------------------------------------------------------------
FilterContext context_for(Harness& h) {
    FilterContext ctx;
    ctx.gateway = h.gateway.get();
    ctx.templates = &h.templates;
    ctx.judge.no_guidelines = true;
    return ctx;
}

Outcome filter_boundaries() {
    Checker c;
    const FilterConfig cfg;
    auto expect_pattern = [&](const std::string& what, const std::vector<double>& values,
                              const std::vector<bool>& expected, const std::function<bool(double)>& run) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const bool got = run(values[i]);
            c.expect(got == expected[i], fmt::format("{} at {}: {} (want {})", what, values[i], got ? "pass" : "reject",
                                                     expected[i] ? "pass" : "reject"));
        }
    };

    expect_pattern("similarity", {0.19, 0.20, 0.21}, {false, true, true}, [&](double s) {
        Harness h;
        install_passing_services(*h.transport);
        h.transport->on(ServiceKind::img_txt_sim, [s](const json&) { return json{{"score", s}}; });
        return run_stage(FilterStage::img_txt, make_dialogue("d", 8, h.images.get()), cfg, context_for(h)).passed;
    });

    expect_pattern("identity", {0.29, 0.30, 0.31}, {false, true, true}, [&](double s) {
        Harness h;
        h.transport->on(ServiceKind::face_embed, [s](const json& body) {
            return embedding_with_cosine(image_key(body).rfind("img/", 0) == 0 ? s : 1.0);
        });
        return run_stage(FilterStage::identity, make_dialogue("d", 8, h.images.get()), cfg, context_for(h)).passed;
    });

    // Only the word limit can trip with this tagger.
    const FunctionTagger alternating("alt", [](std::string_view text) {
        std::vector<TaggedToken> out;
        for (const auto& w : split_whitespace(text)) {
            out.push_back({w, out.size() % 2 == 0 ? PosTag::noun : PosTag::verb});
        }
        return out;
    });
    expect_pattern("words", {100, 101}, {true, false}, [&](double n) {
        auto d = make_dialogue("d", 8);
        d.turns[3].utterance = join(std::vector<std::string>(static_cast<std::size_t>(n), "word"), " ");
        return filter_basic(d, cfg, alternating).passed;
    });
    expect_pattern("exchanges", {3, 4, 20, 21}, {false, true, true, false}, [&](double n) {
        return filter_basic(make_dialogue("d", 2 * static_cast<std::size_t>(n)), cfg, alternating).passed;
    });

    const LexiconTagger lexicon;
    expect_pattern("pos run", {3, 4}, {true, false}, [&](double n) {
        const std::vector<std::string> nouns = {"table", "chair", "lamp", "desk"};
        auto d = make_dialogue("d", 8);
        std::vector<std::string> words(nouns.begin(), nouns.begin() + static_cast<std::ptrdiff_t>(n));
        d.turns[2].utterance = "The " + join(words, " ") + " is here.";
        return filter_basic(d, cfg, lexicon).passed;
    });

    expect_pattern("alliance mean", {0.25, 0.30, 0.35}, {false, true, true},
                   [&](double m) { return alliance_verdict(m, cfg).passed; });
    // Through the judge: answer sums give means of k/48 on either side of 0.3.
    expect_pattern("alliance via judge (k/48)", {12, 14, 15, 17}, {false, false, true, true}, [&](double k) {
        Harness h;
        auto n = std::make_shared<int>(0);
        const int extra = static_cast<int>(k);
        h.transport->on(ServiceKind::chat, [n, extra](const json&) {
            // Twelve answers of 1 plus `extra` points spread one per question, then wrapping.
            const int q = (*n)++;
            const int add = extra / 12 + (q < extra % 12 ? 1 : 0);
            return json{{"content", fmt::format("Rating: [[{}]]", 1 + add)}};
        });
        const auto v = run_stage(FilterStage::alliance, make_dialogue("d", 8, h.images.get()), cfg, context_for(h));
        c.expect(v.score && std::abs(*v.score - k / 48.0) < 1e-15, fmt::format("judge mean for k={}", k));
        return v.passed;
    });

    expect_pattern("nsfw", {0.50, 0.51}, {true, false}, [&](double p) {
        Harness h;
        h.transport->on(ServiceKind::nsfw, [p](const json&) { return json{{"label", "x"}, {"probability", p}}; });
        return run_stage(FilterStage::nsfw, make_dialogue("d", 8, h.images.get()), cfg, context_for(h)).passed;
    });
    return c.outcome(fmt::format("{} boundary cases", c.checks));
}

// ---------------------------------------------------------------------------
// Low-discrepancy Bernoulli schedule: dialogue i fails stage k when frac(phase + i * alpha) < p.
bool scheduled(std::size_t stage, std::size_t i, double p) {
    static const std::array<double, 8> primes = {2, 3, 5, 7, 11, 13, 17, 19};
    const double alpha = std::fmod(std::sqrt(primes[stage]), 1.0);
    const double phase = std::fmod(0.5 * std::sqrt(primes[(stage + 3) % 8]), 1.0);
    const double x = std::fmod(phase + static_cast<double>(i) * alpha, 1.0);
    return x < p;
}

std::size_t index_of(const std::string& text, const std::regex& re) {
    std::smatch m;
    if (!std::regex_search(text, m, re)) {
        throw std::runtime_error("no dialogue index in '" + text.substr(0, 80) + "'");
    }
    return std::stoul(m[1]);
}

Outcome reject_rate_replay() {
    Checker c;
    const auto t0 = Clock::now();
    constexpr std::size_t n = 3000;
    const std::map<FilterStage, double> target = {
        {FilterStage::img_txt, 2.95},   {FilterStage::identity, 66.05}, {FilterStage::gender, 15.39},
        {FilterStage::basic, 1.03},     {FilterStage::copy_paste, 1.36}, {FilterStage::alliance, 10.01},
        {FilterStage::nsfw, 0.0},       {FilterStage::safety, 1.09}};
    auto fails = [&](FilterStage s, std::size_t i) {
        return scheduled(static_cast<std::size_t>(s), i, target.at(s) / 100.0);
    };

    Harness h;
    install_passing_services(*h.transport);
    const std::regex img_re(R"(img/x(\d+)/)");
    const std::regex text_re(R"(session x(\d+)\.)");
    h.transport->on(ServiceKind::img_txt_sim, [&](const json& body) {
        return json{{"score", fails(FilterStage::img_txt, index_of(image_key(body), img_re)) ? 0.1 : 0.35}};
    });
    h.transport->on(ServiceKind::face_embed, [&](const json& body) {
        const auto key = image_key(body);
        if (key.rfind("img/", 0) != 0) {
            return embedding_with_cosine(1.0);
        }
        const bool drift = fails(FilterStage::identity, index_of(key, img_re)) && contains(key, "/3.png");
        return embedding_with_cosine(drift ? 0.1 : 0.8);
    });
    h.transport->on(ServiceKind::face_attr, [&](const json& body) {
        const auto key = image_key(body);
        const bool flip = fails(FilterStage::gender, index_of(key, img_re)) && contains(key, "/5.png");
        return json{{"gender", flip ? "man" : "woman"}, {"gender_confidence", 0.9}, {"age", 29.0}};
    });
    h.transport->on(ServiceKind::chat, [&](const json& body) {
        const auto prompt = body.at("messages").back().at("content").get<std::string>();
        const bool weak = fails(FilterStage::alliance, index_of(prompt, text_re));
        return json{{"content", weak ? "Rating: [[1]]" : "Rating: [[4]]"}};
    });
    h.transport->on(ServiceKind::safety, [](const json& body) {
        const bool bad = contains(body.at("text").get<std::string>(), "hurt myself");
        return json{{"label", bad ? "needs_intervention" : "casual"}, {"probability", 0.9}};
    });

    std::vector<Dialogue> corpus;
    corpus.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto d = make_dialogue(fmt::format("x{:04}", i), 8, h.images.get());
        d.turns[0].utterance = fmt::format("Welcome to session x{:04}. How are you feeling?", i);
        if (fails(FilterStage::basic, i)) {
            d.turns[2].utterance = join(std::vector<std::string>(101, "okay"), " ");
        }
        if (fails(FilterStage::copy_paste, i)) {
            d.turns[3].utterance = "Well, " + d.profile.source.distorted_thoughts;
        }
        if (fails(FilterStage::safety, i)) {
            d.turns[7].utterance = "Sometimes I want to hurt myself.";
        }
        corpus.push_back(std::move(d));
    }
    const auto result = run_pipeline(corpus, {}, context_for(h));
    std::vector<std::string> parts;
    for (auto stage : kFilterStages) {
        const auto& sc = result.report.stages.at(stage);
        const double rate = 100.0 * sc.reject_rate();
        parts.push_back(fmt::format("{} {:.2f}", to_string(stage), rate));
        c.expect(std::abs(rate - target.at(stage)) <= 1.5,
                 fmt::format("{} rate {:.2f} vs {:.2f}", to_string(stage), rate, target.at(stage)));
        c.expect(sc.errored == 0, fmt::format("{} errored {}", to_string(stage), sc.errored));
    }
    const double elapsed = seconds_since(t0);
    c.expect(elapsed < 300.0, fmt::format("took {:.1f} s", elapsed));
    return c.outcome(fmt::format("N={} rates% [{}] within 1.5 points, {:.1f} s", n, join(parts, ", "), elapsed));
}

// ---------------------------------------------------------------------------
struct Script {
    std::vector<bool> end;
    std::vector<bool> pattern;
    std::size_t max_turns = 20;
    bool immediate = false;
};

// Closed-form expectation. Client turn k (0-based) lands at utterance 2k + 2 after the
// greeting. A rule firing at k ends the session at length 2k + 2 if that fits the cap.
std::pair<std::size_t, TerminationReason> oracle(const Script& s) {
    for (std::size_t k = 0; 2 * k + 2 <= s.max_turns; ++k) {
        const bool dis = s.end[k] || s.pattern[k];
        const bool prev = k > 0 && (s.end[k - 1] || s.pattern[k - 1]);
        if (s.immediate && s.end[k]) {
            return {2 * k + 2, TerminationReason::client_end_marker};
        }
        if (dis && prev) {
            return {2 * k + 2, TerminationReason::disengage_limit};
        }
    }
    return {s.max_turns, TerminationReason::max_turns};
}

Outcome termination_state_machine() {
    Checker c;
    Rng rng(4242);
    std::size_t matched = 0;
    std::map<TerminationReason, std::size_t> reasons;
    for (int trial = 0; trial < 1000; ++trial) {
        Script s;
        s.max_turns = 2 + rng.index(27);
        s.immediate = rng.bernoulli(0.2);
        const double p_end = 0.05 + 0.5 * rng.uniform();
        for (std::size_t k = 0; k < 20; ++k) {
            s.end.push_back(rng.bernoulli(p_end));
            s.pattern.push_back(rng.bernoulli(0.1));
        }
        auto calls = std::make_shared<std::size_t>(0);
        Harness h;
        h.images->write("faces/ref.png", "reference");
        h.transport->on(ServiceKind::chat, [&s, calls](const json& body) {
            if (classify_chat_request(body) != MockChatKind::client) {
                return json{{"content", "What would help most right now?"}};
            }
            const auto k = (*calls)++;
            std::string text = s.pattern[k] ? "[looks down] Can we stop talking about this?" : "[nods] It was a rough week.";
            if (s.end[k]) {
                text += " [/END]";
            }
            return json{{"content", "Client: " + text}};
        });
        SessionConfig cfg;
        cfg.synthesize_images = false;
        cfg.max_turns = s.max_turns;
        cfg.end_marker_immediate = s.immediate;
        cfg.disengage_patterns = {"stop talking about"};
        const auto rec = run_session(sample_profile(), *h.gateway, h.templates, cfg);
        const auto [len, reason] = oracle(s);
        const bool ok = !rec.failed && rec.state.terminated && rec.state.termination_reason == reason &&
                        rec.state.history.size() == len && *calls == count_client_turns(rec.state.history);
        matched += ok ? 1 : 0;
        ++reasons[reason];
        c.expect(ok, fmt::format("trial {}: got {} turns ({}{}), want {} ({})", trial, rec.state.history.size(),
                                 rec.state.termination_reason ? to_string(*rec.state.termination_reason) : "none",
                                 rec.failed ? ", failed: " + rec.failure : "", len, to_string(reason)));
    }
    return c.outcome(fmt::format("{}/1000 match the replay oracle (end marker {}, disengage {}, cap {})", matched,
                                 reasons[TerminationReason::client_end_marker],
                                 reasons[TerminationReason::disengage_limit], reasons[TerminationReason::max_turns]));
}

// ---------------------------------------------------------------------------
Outcome direction_invisibility() {
    Checker c;
    Harness h(true);
    h.transport->set_recording(true);
    h.images->write("faces/ref.png", make_reference_face("ref", Gender::woman, 29, 1));
    std::vector<ClientProfile> profiles;
    for (std::size_t i = 0; i < 50; ++i) {
        for (auto type : kResistanceTypes) {
            profiles.push_back(sample_profile(fmt::format("s{:03}-{}", i, to_string(type)), type));
        }
    }
    const std::array<TherapistVariant, 3> variants = {TherapistVariant::base, TherapistVariant::planning,
                                                      TherapistVariant::planning_ec};
    std::size_t sessions = 0;
    std::size_t failed = 0;
    std::size_t directed_client_turns = 0;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        std::vector<ClientProfile> subset;
        for (std::size_t i = v; i < profiles.size(); i += variants.size()) {
            subset.push_back(profiles[i]);
        }
        SessionConfig cfg;
        cfg.variant = variants[v];
        for (const auto& rec : run_sessions(subset, *h.gateway, h.templates, cfg)) {
            ++sessions;
            failed += rec.failed ? 1 : 0;
            for (const auto& t : rec.state.history) {
                directed_client_turns += t.speaker == Speaker::client && !t.directions.empty() ? 1 : 0;
            }
        }
    }
    const std::regex bracketed(R"(\[[^\]]*\])");
    std::size_t payloads = 0;
    std::size_t leaks = 0;
    for (const auto& body : h.transport->requests(ServiceKind::chat)) {
        if (classify_chat_request(body) != MockChatKind::therapist) {
            continue;
        }
        ++payloads;
        std::string text;
        for (const auto& msg : body.at("messages")) {
            if (msg.at("content").is_string()) {
                text += msg.at("content").get<std::string>() + "\n";
            }
        }
        std::smatch m;
        if (std::regex_search(text, m, bracketed)) {
            ++leaks;
            const auto at = static_cast<std::size_t>(m.position(0));
            c.expect(false, "bracketed span '" + m.str(0) + "' near '" +
                                text.substr(at > 60 ? at - 60 : 0, 120) + "'");
        }
    }
    c.expect(sessions == 200, fmt::format("{} sessions", sessions));
    c.expect(failed == 0, fmt::format("{} sessions failed", failed));
    c.expect(payloads > 0, "no therapist payloads");
    c.expect(directed_client_turns > 0, "no client directions to hide");
    return c.outcome(fmt::format("{} sessions, {} therapist payloads, {} directed client turns, {} bracketed spans",
                                 sessions, payloads, directed_client_turns, leaks));
}

// ---------------------------------------------------------------------------
// Regularized incomplete beta by Lentz's continued fraction, in long double.
long double betacf(long double a, long double b, long double x) {
    const long double tiny = 1e-300L;
    long double qab = a + b;
    long double qap = a + 1.0L;
    long double qam = a - 1.0L;
    long double cc = 1.0L;
    long double d = 1.0L - qab * x / qap;
    if (std::fabs(d) < tiny) {
        d = tiny;
    }
    d = 1.0L / d;
    long double h = d;
    for (int m = 1; m < 10000; ++m) {
        const long double m2 = 2.0L * m;
        long double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0L + aa * d;
        d = std::fabs(d) < tiny ? tiny : d;
        cc = 1.0L + aa / cc;
        cc = std::fabs(cc) < tiny ? tiny : cc;
        d = 1.0L / d;
        h *= d * cc;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0L + aa * d;
        d = std::fabs(d) < tiny ? tiny : d;
        cc = 1.0L + aa / cc;
        cc = std::fabs(cc) < tiny ? tiny : cc;
        d = 1.0L / d;
        const long double del = d * cc;
        h *= del;
        if (std::fabs(del - 1.0L) < 1e-18L) {
            break;
        }
    }
    return h;
}

long double ibeta(long double a, long double b, long double x) {
    if (x <= 0.0L) {
        return 0.0L;
    }
    if (x >= 1.0L) {
        return 1.0L;
    }
    const long double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                            b * std::log(1.0L - x);
    const long double bt = std::exp(lbt);
    if (x < (a + 1.0L) / (a + b + 2.0L)) {
        return bt * betacf(a, b, x) / a;
    }
    return 1.0L - bt * betacf(b, a, 1.0L - x) / b;
}

struct RefT {
    big t;
    long double p;
};

RefT reference_t(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    big sum = 0;
    std::vector<big> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = big(a[i]) - big(b[i]);
        sum += d[i];
    }
    const big md = sum / n;
    big ss = 0;
    for (const auto& x : d) {
        ss += (x - md) * (x - md);
    }
    const big sd = sqrt(ss / (n - 1));
    const big t = md / (sd / sqrt(big(n)));
    const long double df = static_cast<long double>(n - 1);
    const long double tl = static_cast<long double>(t);
    return {t, ibeta(df / 2.0L, 0.5L, df / (df + tl * tl))};
}

big reference_r(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    big sx = 0;
    big sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const big mx = sx / n;
    const big my = sy / n;
    big sxy = 0;
    big sxx = 0;
    big syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (big(x[i]) - mx) * (big(y[i]) - my);
        sxx += (big(x[i]) - mx) * (big(x[i]) - mx);
        syy += (big(y[i]) - my) * (big(y[i]) - my);
    }
    return sxy / sqrt(sxx * syy);
}

Outcome statistics_oracles() {
    Checker c;
    Rng rng(99);
    double worst_t = 0.0;
    double worst_p = 0.0;
    double worst_r = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + rng.index(60);
        std::vector<double> a(n);
        std::vector<double> b(n);
        const double shift = rng.normal() * 0.5;
        for (std::size_t i = 0; i < n; ++i) {
            b[i] = 1.0 + 5.0 * rng.uniform();
            a[i] = b[i] + shift + rng.normal();
        }
        const auto got = paired_t_test(a, b);
        const auto ref = reference_t(a, b);
        const double dt = std::abs(got.t - static_cast<double>(ref.t));
        const double dp = std::abs(got.p_two_sided - static_cast<double>(ref.p));
        worst_t = std::max(worst_t, dt);
        worst_p = std::max(worst_p, dp);
        c.expect(dt <= 1e-9, fmt::format("trial {} |dt| {:.3g}", trial, dt));
        c.expect(dp <= 1e-7, fmt::format("trial {} |dp| {:.3g}", trial, dp));
        c.expect(got.df == n - 1, "df");

        std::vector<double> len(n);
        std::vector<double> score(n);
        for (std::size_t i = 0; i < n; ++i) {
            len[i] = 10.0 + 40.0 * rng.uniform();
            score[i] = 0.05 * len[i] + rng.normal();
        }
        const double dr = std::abs(pearson_r(len, score) - static_cast<double>(reference_r(len, score)));
        worst_r = std::max(worst_r, dr);
        c.expect(dr <= 1e-12, fmt::format("trial {} |dr| {:.3g}", trial, dr));
    }
    const auto hand = paired_t_test({1, 2, 3}, {0, 0, 0});
    const double dh = std::abs(hand.t - 2.0 * std::sqrt(3.0));
    c.expect(dh <= 1e-12, fmt::format("d=[1,2,3] t={:.17g}", hand.t));
    return c.outcome(fmt::format("100 instances, max |dt| {:.2g}, |dp| {:.2g}, |dr| {:.2g}; d=[1,2,3] t-2*sqrt(3)={:.1g}",
                                 worst_t, worst_p, worst_r, dh));
}

// ---------------------------------------------------------------------------
// Judgments for one table: every row model beats every column model in `cells` percent
// of 10,000 comparisons.
std::vector<Judgment> judgments_for(const std::map<std::pair<std::string, std::string>, double>& cells,
                                    AllianceDimension dim) {
    std::vector<Judgment> out;
    std::size_t case_no = 0;
    for (const auto& [pair, percent] : cells) {
        const auto wins = static_cast<std::size_t>(std::llround(percent * 100.0));
        for (std::size_t k = 0; k < 10000; ++k) {
            Judgment j;
            j.case_id = fmt::format("{}-{}", to_string(dim), ++case_no);
            j.dimension = dim;
            j.model_a = pair.first;
            j.model_b = pair.second;
            j.winner = k < wins ? pair.first : pair.second;
            j.rater = k % 2 == 0 ? "expert-1" : "expert-2";
            out.push_back(std::move(j));
        }
    }
    return out;
}

Outcome win_rate_replay(const std::filesystem::path& work) {
    Checker c;
    const std::string text_base = "text-base-8b";
    const std::string text_cbt = "text-cbt-8b";
    const std::string vlm_pec = "vlm-plan-ec-8b";
    struct Table {
        AllianceDimension dim;
        std::map<std::pair<std::string, std::string>, double> cells;
        std::map<std::string, double> overall;
    };
    // Cells from the winning side of each pair; the reverse cell is its complement.
    const std::vector<Table> tables = {
        {AllianceDimension::goal,
         {{{vlm_pec, text_base}, 65.95}, {{vlm_pec, text_cbt}, 56.57}, {{text_cbt, text_base}, 57.87}},
         {{vlm_pec, 61.26}, {text_cbt, 50.65}, {text_base, 38.09}}},
        {AllianceDimension::approach,
         {{{vlm_pec, text_base}, 65.23}, {{vlm_pec, text_cbt}, 56.03}, {{text_cbt, text_base}, 55.28}},
         {{vlm_pec, 60.63}, {text_cbt, 49.62}, {text_base, 39.75}}},
        {AllianceDimension::affective_bond,
         {{{vlm_pec, text_base}, 59.81}, {{vlm_pec, text_cbt}, 57.54}, {{text_cbt, text_base}, 50.65}},
         {{vlm_pec, 58.67}, {text_cbt, 46.55}, {text_base, 44.77}}},
    };
    std::vector<std::string> shown;
    for (const auto& table : tables) {
        const auto js = judgments_for(table.cells, table.dim);
        // Replay through the persisted log format and through CSV.
        const auto log = work / fmt::format("judgments-{}.jsonl", to_string(table.dim));
        std::string text;
        for (const auto& j : js) {
            text += json(j).dump() + "\n";
        }
        write_file(log, text);
        std::vector<Judgment> replayed;
        for (const auto& line : split_lines(read_file(log))) {
            replayed.push_back(json::parse(line).get<Judgment>());
        }
        c.expect(replayed == js, "log replay changed judgments");
        c.expect(read_judgments_csv(write_judgments_csv(js)) == js, "csv round trip changed judgments");
        const auto rates = aggregate_win_rates(replayed);
        for (const auto& [model, want] : table.overall) {
            const double got = rates.overall.at(model);
            c.expect(std::abs(got - want) <= 0.01,
                     fmt::format("{} {} overall {:.3f} vs {:.2f}", to_string(table.dim), model, got, want));
        }
        for (const auto& [pair, want] : table.cells) {
            c.expect(std::abs(rates.cells.at(pair) - want) < 1e-9, "cell mismatch");
            c.expect(std::abs(rates.cells.at({pair.second, pair.first}) - (100.0 - want)) < 1e-9, "vlm_pec cell");
        }
        shown.push_back(fmt::format("{} {:.3f}", to_string(table.dim), rates.overall.at(vlm_pec)));
    }
    return c.outcome("top model overall: " + join(shown, ", ") + " (targets 61.26, 60.63, 58.67 +-0.01)");
}

// ---------------------------------------------------------------------------
// Reference for parse_rating: try the pattern at every "[[" and keep the last in range.
std::optional<int> reference_rating(const std::string& text, int lo, int hi) {
    static const std::regex re(R"(^\[\[\s*(-?)(\d{1,6})\s*\]\])");
    std::optional<int> last;
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        if (text[i] != '[' || text[i + 1] != '[') {
            continue;
        }
        std::smatch m;
        const std::string rest = text.substr(i);
        if (std::regex_search(rest, m, re)) {
            const int v = (m[1].length() > 0 ? -1 : 1) * std::stoi(m[2]);
            if (v >= lo && v <= hi) {
                last = v;
            }
        }
    }
    return last;
}

Outcome alliance_arithmetic() {
    Checker c;
    Rng rng(12);
    for (int trial = 0; trial < 10000; ++trial) {
        std::array<int, 12> answers{};
        for (auto& a : answers) {
            a = 1 + static_cast<int>(rng.index(5));
        }
        const auto s = alliance_from_questions(answers);
        const std::array<double, 3> got = {s.goal, s.approach, s.affective_bond};
        long total = 0;
        for (std::size_t dim = 0; dim < 3; ++dim) {
            long sum = 0;
            for (std::size_t q = 0; q < 4; ++q) {
                sum += answers[4 * dim + q];
            }
            total += sum;
            // sum / 4 is exact in binary, so equality is the rational check.
            c.expect(got[dim] * 4.0 == static_cast<double>(sum), fmt::format("trial {} dim {}", trial, dim));
            c.expect(got[dim] >= 1.0 && got[dim] <= 5.0, "dimension outside [1, 5]");
        }
        const double want = static_cast<double>(total - 12) / 48.0;
        c.expect(std::abs(s.normalized_mean() - want) <= 1e-12, fmt::format("trial {} normalized", trial));
    }

    const std::vector<std::string> noise = {"The counselor ", "rating ", "[", "]", "[[", "]]", " ", "\n", "4", "7",
                                            "[x]", "[[ ", " ]]", "-", "2.5", "Rating: ", "[[[", "]]]", "score"};
    std::size_t with_value = 0;
    for (int trial = 0; trial < 500; ++trial) {
        std::string text;
        const std::size_t parts = 1 + rng.index(12);
        for (std::size_t p = 0; p < parts; ++p) {
            switch (rng.index(3)) {
            case 0:
                text += rng.pick(noise);
                break;
            case 1: {
                const int v = static_cast<int>(rng.index(12)) - 3;
                const std::string pad1(rng.index(3), ' ');
                const std::string pad2(rng.index(3), ' ');
                text += "[[" + pad1 + std::to_string(v) + pad2 + "]]";
                break;
            }
            default:
                text += fmt::format("[[{}]]", 1 + rng.index(5));
            }
        }
        const auto got = parse_rating(text, 1, 5);
        const auto want = reference_rating(text, 1, 5);
        with_value += want ? 1 : 0;
        c.expect(got == want, fmt::format("fuzz {} on '{}'", trial, replace_all(text, "\n", "\\n")));
    }
    // Last-match rule on fixed cases.
    c.expect(parse_rating("[[2]] ... final answer [[4]]", 1, 5) == 4, "last match");
    c.expect(parse_rating("[[2]] then [[9]]", 1, 5) == 2, "out of range skipped");
    return c.outcome(fmt::format("10000 assignments exact; 500 parser fuzz cases agree ({} with a rating)", with_value));
}

// ---------------------------------------------------------------------------
Outcome stats_anchor() {
    Checker c;
    // Reconstruction consistent with the published summary: 3,073 dialogues, 31,652
    // exchanges and 29,224 client images. 1,567 dialogues have ten client turns and the
    // rest nine; 2,428 of them end with a closing therapist turn.
    std::vector<DatasetRecord> corpus;
    corpus.reserve(3073);
    for (std::size_t i = 0; i < 3073; ++i) {
        DatasetRecord r;
        r.dialogue_id = fmt::format("r{:04}", i);
        const std::size_t clients = i < 1567 ? 10 : 9;
        const bool closing = i < 2428;
        for (std::size_t k = 0; k < clients; ++k) {
            r.turns.push_back(therapist_turn("How did that feel?"));
            r.turns.push_back(client_turn("Hard.", {"sighs"}, fmt::format("images/{}/{}.png", r.dialogue_id, 2 * k + 1)));
        }
        if (closing) {
            r.turns.push_back(therapist_turn("Thank you for today."));
        }
        corpus.push_back(std::move(r));
    }
    const auto s = compute_stats(corpus);
    const auto rounded_turns = std::round(s.avg_turns * 10.0) / 10.0;
    const auto rounded_images = std::round(s.avg_images_per_dialogue * 100.0) / 100.0;
    c.expect(s.n_dialogues == 3073, fmt::format("n {}", s.n_dialogues));
    c.expect(rounded_turns == 10.3, fmt::format("avg turns {:.4f}", s.avg_turns));
    c.expect(rounded_images == 9.51, fmt::format("avg images {:.4f}", s.avg_images_per_dialogue));
    c.expect(s.avg_images_per_dialogue <= s.avg_turns, "images exceed turns");

    // Golden mini-corpus against a recount straight from the JSON.
    std::size_t n = 0;
    std::size_t exchanges = 0;
    std::size_t images = 0;
    for (const auto& line : split_lines(read_file(g_golden_corpus))) {
        if (trim(line).empty()) {
            continue;
        }
        const auto j = json::parse(line);
        ++n;
        exchanges += (j.at("turns").size() + 1) / 2;
        for (const auto& t : j.at("turns")) {
            images += t.contains("image") && !t.at("image").is_null() ? 1 : 0;
        }
    }
    const auto g = compute_stats(g_golden_corpus);
    c.expect(n > 0 && g.n_dialogues == n, "golden count");
    c.expect(n > 0 && g.avg_turns == static_cast<double>(exchanges) / static_cast<double>(n), "golden turns");
    c.expect(n > 0 && g.avg_images_per_dialogue == static_cast<double>(images) / static_cast<double>(n),
             "golden images");
    return c.outcome(fmt::format("reconstructed {} / {:.1f} / {:.2f}; golden {} / {:.3f} / {:.3f} matches recount",
                                 s.n_dialogues, s.avg_turns, s.avg_images_per_dialogue, g.n_dialogues, g.avg_turns,
                                 g.avg_images_per_dialogue));
}

// ---------------------------------------------------------------------------
Outcome export_contract() {
    Checker c;
    const auto corpus = read_corpus(g_golden_corpus);
    TemplateSet templates;
    std::size_t therapist_turns = 0;
    for (const auto& r : corpus) {
        for (const auto& t : r.turns) {
            therapist_turns += t.speaker == Speaker::therapist ? 1 : 0;
        }
    }
    const std::string history_start = "Below is a conversation between the client and the psychotherapist.\n";
    const std::string history_end = "\n\nBased on their body language";
    std::vector<std::string> counts;
    for (auto variant : {TherapistVariant::base, TherapistVariant::planning, TherapistVariant::planning_ec}) {
        const auto text = export_training_jsonl(corpus, variant, templates);
        c.expect(text == export_training_jsonl(corpus, variant, templates), "export not deterministic");
        std::size_t records = 0;
        for (const auto& line : split_lines(text)) {
            const auto j = json::parse(line);
            ++records;
            for (const char* key : {"id", "dialogue_id", "variant", "image", "input", "target"}) {
                c.expect(j.contains(key) && j.at(key).is_string(), std::string("missing ") + key);
            }
            c.expect(j.at("turn_index").is_number_unsigned(), "turn_index");
            const auto input = j.at("input").get<std::string>();
            const auto target = j.at("target").get<std::string>();
            const bool has_caption = contains(input, "Client Emotional State:");
            c.expect(has_caption == (variant == TherapistVariant::planning_ec), "caption block presence");
            const auto did = j.at("dialogue_id").get<std::string>();
            const auto rec = std::find_if(corpus.begin(), corpus.end(),
                                          [&](const DatasetRecord& r) { return r.dialogue_id == did; });
            c.expect(rec != corpus.end(), "unknown dialogue id");
            if (rec != corpus.end()) {
                const bool plan_present = contains(input, rec->profile.source.cbt_plan);
                c.expect(plan_present == (variant != TherapistVariant::base),
                         fmt::format("plan block presence for {}", to_string(variant)));
                const auto idx = j.at("turn_index").get<std::size_t>();
                c.expect(idx < rec->turns.size() && rec->turns[idx].speaker == Speaker::therapist,
                         "record does not point at a therapist turn");
            }
            const auto a = input.find(history_start);
            const auto b = input.find(history_end);
            c.expect(a != std::string::npos && b != std::string::npos && b >= a, "history section not found");
            if (a != std::string::npos && b != std::string::npos && b >= a) {
                const auto history = input.substr(a + history_start.size(), b - a - history_start.size());
                c.expect(history.find('[') == std::string::npos && history.find(']') == std::string::npos,
                         "bracket in history");
            }
            c.expect(target.find('[') == std::string::npos, "bracket in target");
            c.expect(!j.at("image").get<std::string>().empty(), "image ref");
        }
        c.expect(records == therapist_turns,
                 fmt::format("{}: {} records for {} therapist turns", to_string(variant), records, therapist_turns));
        counts.push_back(fmt::format("{} {}", to_string(variant), records));
    }
    return c.outcome(fmt::format("{} dialogues, {} therapist turns; records {}", corpus.size(), therapist_turns,
                                 join(counts, ", ")));
}

} // namespace

int main() {
    TempDir work("cf-acceptance");
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"golden_pipeline", [&] { return golden_pipeline(work.path); }},
        {"filter_boundaries", filter_boundaries},
        {"reject_rate_replay", reject_rate_replay},
        {"termination_state_machine", termination_state_machine},
        {"direction_invisibility", direction_invisibility},
        {"statistics_oracles", statistics_oracles},
        {"win_rate_replay", [&] { return win_rate_replay(work.path); }},
        {"alliance_arithmetic", alliance_arithmetic},
        {"stats_anchor", stats_anchor},
        {"export_contract", export_contract},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " acceptance criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
