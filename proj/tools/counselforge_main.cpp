// SPDX-License-Identifier: Apache-2.0
// counselforge command line: corpus building, filtering, simulation, scoring and review.
#include "counselforge/config.hpp"
#include "counselforge/corpus.hpp"
#include "counselforge/errors.hpp"
#include "counselforge/eval_suite.hpp"
#include "counselforge/pipeline.hpp"
#include "counselforge/review_service.hpp"
#include "counselforge/util.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <csignal>
#include <fstream>
#include <iostream>

using namespace counselforge;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool mock = false;
    std::string data_root;
    std::string templates;
    std::optional<std::size_t> workers;
};

AppConfig resolve(const Globals& g) {
    AppConfig cfg = g.config.empty() ? AppConfig{} : load_config(g.config);
    apply_env_overrides(cfg, process_env());
    if (g.seed) {
        cfg.seed = *g.seed;
    }
    if (g.mock) {
        cfg.mock = true;
    }
    if (!g.data_root.empty()) {
        cfg.data_root = g.data_root;
    }
    if (!g.templates.empty()) {
        cfg.templates_dir = g.templates;
    }
    if (g.workers) {
        cfg.workers = *g.workers;
    }
    return cfg;
}

void print_summary(std::string_view stage, const StageSummary& s) {
    fmt::print("{}: {} in, {} out, {} failures\n", stage, s.input, s.output, s.failures.size());
    for (const auto& [id, msg] : s.failures) {
        fmt::print("  {}: {}\n", id, msg);
    }
}

std::map<std::string, std::vector<TranscriptRecord>> load_transcripts(const Runtime& rt,
                                                                      const std::vector<std::string>& paths) {
    std::map<std::string, std::vector<TranscriptRecord>> by_model;
    for (const auto& p : paths) {
        for (auto& t : read_jsonl<TranscriptRecord>(rt.path(p))) {
            by_model[t.model].push_back(std::move(t));
        }
    }
    return by_model;
}

ReviewService* g_review = nullptr;

void on_signal(int) {
    if (g_review != nullptr) {
        g_review->stop();
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"counselforge: multimodal counseling corpus builder and evaluation harness"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_option("--seed", g.seed, "Base seed for every deterministic choice");
    app.add_flag("--mock", g.mock, "Route all services to the bundled deterministic mocks");
    app.add_option("--data-root", g.data_root, "Directory holding images and relative artifact paths");
    app.add_option("--templates", g.templates, "Directory overriding the embedded prompt templates");
    app.add_option("--workers", g.workers, "Parallel dialogues or sessions");

    // forge
    auto* forge = app.add_subcommand("forge", "Build face pools and client profiles");
    forge->require_subcommand(1);
    auto* forge_profiles_cmd = forge->add_subcommand("profiles", "Assign faces and resistance types to profiles");
    std::string source;
    std::string faces = "faces/manifest.jsonl";
    std::string profiles_out = "profiles.jsonl";
    bool eval_only = false;
    std::string counts = "200,200,200,200";
    forge_profiles_cmd->add_option("--source", source, "Source profiles (JSONL)")->required();
    forge_profiles_cmd->add_option("--faces", faces, "Face pool manifest (JSONL)");
    forge_profiles_cmd->add_option("--out", profiles_out, "Output profiles (JSONL)");
    forge_profiles_cmd->add_flag("--eval-only", eval_only, "Synthesize evaluation profiles from the source examples");
    forge_profiles_cmd->add_option("--counts", counts, "Evaluation profiles per type: cognitive,emotional,behavioral,non");

    auto* forge_faces_cmd = forge->add_subcommand("faces", "Create a reference face pool");
    std::size_t face_count = 24;
    forge_faces_cmd->add_option("--count", face_count, "Number of reference faces");
    forge_faces_cmd->add_option("--out", faces, "Manifest to write (JSONL)");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate text");
    gen->require_subcommand(1);
    auto* gen_sp = gen->add_subcommand("screenplays", "Generate one screenplay per profile");
    std::string gen_in = "profiles.jsonl";
    std::string gen_out = "screenplays.jsonl";
    gen_sp->add_option("--profiles", gen_in, "Client profiles (JSONL)");
    gen_sp->add_option("--out", gen_out, "Screenplay records (JSONL)");

    // synth
    auto* synth = app.add_subcommand("synth", "Synthesize images");
    synth->require_subcommand(1);
    auto* synth_faces_cmd = synth->add_subcommand("faces", "Synthesize one image per client turn");
    std::string synth_in = "screenplays.jsonl";
    std::string synth_out = "dialogues.jsonl";
    std::string synth_manifest = "images/manifest.jsonl";
    synth_faces_cmd->add_option("--screenplays", synth_in, "Screenplay records (JSONL)");
    synth_faces_cmd->add_option("--out", synth_out, "Dialogue records with images (JSONL)");
    synth_faces_cmd->add_option("--manifest", synth_manifest, "Image manifest (JSONL)");

    // filter
    auto* filter = app.add_subcommand("filter", "Run the quality and safety filters");
    std::string filter_in = "dialogues.jsonl";
    FilterOutputs filter_out{"corpus.jsonl", "filter_report.json", "filter_report.txt", "rejected.jsonl"};
    std::string f_corpus = filter_out.corpus.string();
    std::string f_report = filter_out.report_json.string();
    std::string f_text = filter_out.report_text.string();
    std::string f_rejected = filter_out.rejected.string();
    std::optional<double> identity_min;
    bool filter_no_guidelines = false;
    filter->add_option("--in", filter_in, "Dialogue records (JSONL)");
    filter->add_option("--out", f_corpus, "Kept corpus (JSONL)");
    filter->add_option("--report", f_report, "Report (JSON)");
    filter->add_option("--report-text", f_text, "Report (text)");
    filter->add_option("--rejected", f_rejected, "Rejected dialogues with verdicts (JSONL)");
    filter->add_option("--identity-min", identity_min, "Identity cosine threshold");
    filter->add_flag("--no-guidelines", filter_no_guidelines, "Score alliance without per-question guidelines");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run counseling sessions");
    std::string sim_profiles = "profiles.jsonl";
    std::string sim_variant = "planning_ec";
    std::string sim_out = "sessions";
    std::optional<std::size_t> sim_max_turns;
    std::string sim_label;
    sim->add_option("--profiles", sim_profiles, "Client profiles (JSONL)");
    sim->add_option("--variant", sim_variant, "base | planning | planning_ec");
    sim->add_option("--out", sim_out, "Output directory, or a .jsonl file");
    sim->add_option("--max-turns", sim_max_turns, "Session cap");
    sim->add_option("--label", sim_label, "Model label stored with transcripts");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Score transcripts");
    std::vector<std::string> eval_in;
    std::string eval_scores = "scores.jsonl";
    std::string eval_report = "eval_report.json";
    std::string baseline;
    bool pair_by_profile = false;
    bool eval_no_guidelines = false;
    eval->add_option("--transcripts", eval_in, "Transcript files (JSONL)")->required();
    eval->add_option("--scores", eval_scores, "Per-session scores (JSONL)");
    eval->add_option("--report", eval_report, "Aggregate report (JSON)");
    eval->add_option("--baseline", baseline, "Model the t-tests compare against");
    eval->add_flag("--pair-by-profile", pair_by_profile, "Pair t-tests by source profile instead of session");
    eval->add_flag("--no-guidelines", eval_no_guidelines, "Score alliance without per-question guidelines");

    // stats
    auto* stats = app.add_subcommand("stats", "Corpus statistics");
    std::string stats_in = "corpus.jsonl";
    std::string turn_unit = "exchange";
    stats->add_option("--corpus", stats_in, "Corpus (JSONL)");
    stats->add_option("--turn-unit", turn_unit, "utterance | exchange");

    // export
    auto* exp = app.add_subcommand("export", "Export instruction-tuning records");
    std::string exp_in = "corpus.jsonl";
    std::string exp_variant = "base";
    std::string exp_out = "train.jsonl";
    exp->add_option("--corpus", exp_in, "Corpus (JSONL)");
    exp->add_option("--variant", exp_variant, "base | planning | planning_ec");
    exp->add_option("--out", exp_out, "Output (JSONL)");

    // serve-review
    auto* serve = app.add_subcommand("serve-review", "Serve blinded pairwise review over HTTP");
    std::vector<std::string> serve_in;
    std::string bind = "127.0.0.1";
    int port = 8080;
    std::optional<std::size_t> cases_per_pair;
    std::string judgment_log = "judgments.jsonl";
    std::string skip_log = "skips.jsonl";
    serve->add_option("--transcripts", serve_in, "Transcript files from at least two models")->required();
    serve->add_option("--bind", bind, "Address to bind");
    serve->add_option("--port", port, "Port");
    serve->add_option("--cases-per-pair", cases_per_pair, "Cases drawn per model pair");
    serve->add_option("--log", judgment_log, "Append-only judgment log (JSONL)");
    serve->add_option("--skip-log", skip_log, "Append-only log of skipped cases (JSONL)");

    // judgments
    auto* judg = app.add_subcommand("judgments", "Convert a judgment log and print win rates");
    std::string judg_log;
    std::string judg_csv_in;
    std::string judg_csv_out;
    judg->add_option("--log", judg_log, "Judgment log (JSONL)");
    judg->add_option("--csv", judg_csv_in, "Judgments (CSV)");
    judg->add_option("--to-csv", judg_csv_out, "Write the judgments as CSV");

    // golden
    auto* golden = app.add_subcommand("golden", "forge, gen, synth and filter in one run");
    std::string golden_profiles = "data/seed_profiles.jsonl";
    golden->add_option("--seed-profiles", golden_profiles, "Source profiles (JSONL)");
    bool golden_no_guidelines = false;
    golden->add_flag("--no-guidelines", golden_no_guidelines, "Judge alliance without the guideline files");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = resolve(g);
        if (filter->parsed()) {
            if (identity_min) {
                cfg.filter.identity_min = *identity_min;
            }
            cfg.judge.no_guidelines = cfg.judge.no_guidelines || filter_no_guidelines;
            cfg.filter.validate();
        }
        if (eval->parsed()) {
            cfg.judge.no_guidelines = cfg.judge.no_guidelines || eval_no_guidelines;
            if (!baseline.empty()) {
                cfg.report.baseline_model = baseline;
            }
            cfg.report.pair_by_profile = cfg.report.pair_by_profile || pair_by_profile;
        }
        if (golden->parsed()) {
            cfg.judge.no_guidelines = cfg.judge.no_guidelines || golden_no_guidelines;
        }
        if (sim->parsed()) {
            cfg.session.variant = parse_variant(sim_variant);
            if (sim_max_turns) {
                cfg.session.max_turns = *sim_max_turns;
            }
            if (!sim_label.empty()) {
                cfg.session.model_label = sim_label;
            }
            cfg.session.validate();
        }
        auto rt = make_runtime(cfg);

        if (forge_faces_cmd->parsed()) {
            const auto pool = forge_faces(*rt, face_count, faces);
            fmt::print("wrote {} faces to {}\n", pool.size(), rt->path(faces).string());
        } else if (forge_profiles_cmd->parsed()) {
            const auto list = eval_only ? forge_eval_profiles(*rt, source, faces, EvalCounts::parse(counts), profiles_out)
                                        : forge_profiles(*rt, source, faces, profiles_out);
            fmt::print("wrote {} profiles to {}\n", list.size(), rt->path(profiles_out).string());
        } else if (gen_sp->parsed()) {
            print_summary("gen screenplays", gen_screenplays(*rt, gen_in, gen_out));
        } else if (synth_faces_cmd->parsed()) {
            print_summary("synth faces", synth_faces(*rt, synth_in, synth_out, synth_manifest));
        } else if (filter->parsed()) {
            const FilterOutputs out{f_corpus, f_report, f_text, f_rejected};
            const auto report = filter_corpus(*rt, filter_in, out);
            fmt::print("{}", render_filter_report(report));
        } else if (sim->parsed()) {
            std::filesystem::path out = sim_out;
            if (out.extension() != ".jsonl") {
                out /= fmt::format("transcripts-{}.jsonl", rt->config.session.label());
            }
            print_summary("simulate", simulate(*rt, sim_profiles, out));
            fmt::print("transcripts: {}\n", rt->path(out).string());
        } else if (eval->parsed()) {
            std::vector<std::filesystem::path> paths(eval_in.begin(), eval_in.end());
            const auto report = evaluate(*rt, paths, eval_scores, eval_report);
            fmt::print("{}", render_eval_report(report));
        } else if (stats->parsed()) {
            const auto s = compute_stats(rt->path(stats_in), parse_turn_unit(turn_unit));
            fmt::print("{}\n", to_json_value(s).dump(2));
        } else if (exp->parsed()) {
            const auto corpus = read_corpus(rt->path(exp_in));
            write_file(rt->path(exp_out), export_training_jsonl(corpus, parse_variant(exp_variant), rt->templates));
            fmt::print("exported {} dialogues to {}\n", corpus.size(), rt->path(exp_out).string());
        } else if (serve->parsed()) {
            auto review_cfg = rt->config.review;
            if (cases_per_pair) {
                review_cfg.cases_per_pair = *cases_per_pair;
            }
            review_cfg.judgment_log = rt->path(judgment_log);
            review_cfg.skip_log = rt->path(skip_log);
            ReviewService service(load_transcripts(*rt, serve_in), review_cfg, rt->images);
            g_review = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            fmt::print("serving {} cases on http://{}:{}/api\n", service.cases().size(), bind, port);
            std::fflush(stdout);
            service.serve(bind, port);
            g_review = nullptr;
        } else if (judg->parsed()) {
            std::vector<Judgment> js;
            if (!judg_log.empty()) {
                for (const auto& line : split_lines(read_file(rt->path(judg_log)))) {
                    if (!trim(line).empty()) {
                        js.push_back(json::parse(line).get<Judgment>());
                    }
                }
            }
            if (!judg_csv_in.empty()) {
                for (auto& j : read_judgments_csv(read_file(rt->path(judg_csv_in)))) {
                    js.push_back(std::move(j));
                }
            }
            if (js.empty()) {
                throw PreconditionError("no judgments given; pass --log or --csv");
            }
            if (!judg_csv_out.empty()) {
                write_file(rt->path(judg_csv_out), write_judgments_csv(js));
            }
            const auto all = aggregate_win_rates(js);
            fmt::print("{}\n", render_win_rates(all, "All dimensions"));
            for (auto d : kAllianceDimensions) {
                std::vector<Judgment> subset;
                for (const auto& j : js) {
                    if (j.dimension == d) {
                        subset.push_back(j);
                    }
                }
                if (!subset.empty()) {
                    fmt::print("{}\n", render_win_rates(aggregate_win_rates(subset), to_string(d)));
                }
            }
        } else if (golden->parsed()) {
            const auto art = golden_run(*rt, golden_profiles);
            fmt::print("{} profiles\n{}", art.profiles, render_filter_report(art.filter_report));
            fmt::print("corpus sha256 {}\nreport sha256 {}\n", sha256_hex(read_file(art.corpus)),
                       sha256_hex(read_file(art.report)));
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
