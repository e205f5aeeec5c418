// SPDX-License-Identifier: Apache-2.0
#include "counselforge/pipeline.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/eval_suite.hpp"
#include "counselforge/face_synth.hpp"
#include "counselforge/profile_forge.hpp"
#include "counselforge/screenplay.hpp"

#include <fmt/core.h>

#include <fstream>

namespace counselforge {

std::filesystem::path Runtime::path(const std::filesystem::path& relative) const {
    return relative.is_absolute() ? relative : config.data_root / relative;
}

FilterContext Runtime::filter_context() const {
    FilterContext ctx;
    ctx.gateway = gateway.get();
    ctx.templates = &templates;
    ctx.tagger = &tagger;
    ctx.judge = config.judge;
    return ctx;
}

std::unique_ptr<Runtime> make_runtime(const AppConfig& config) {
    auto rt = std::make_unique<Runtime>();
    rt->config = config;
    std::filesystem::create_directories(config.data_root);
    rt->images = std::make_shared<FsImageStore>(config.data_root);
    if (config.mock) {
        rt->mock = make_bundled_transport(config.mock_options);
        rt->transport = rt->mock;
    } else {
        rt->transport = std::make_shared<HttpTransport>();
    }
    rt->gateway = std::make_unique<Gateway>(rt->transport, rt->images);
    if (config.mock) {
        use_mock_endpoints(*rt->gateway, true);
    } else {
        for (const auto& [kind, ep] : config.services) {
            ep.validate();
            rt->gateway->set_endpoint(ep);
        }
    }
    rt->gateway->set_cache(config.cache_dir ? std::make_shared<ResponseCache>(*config.cache_dir)
                                            : std::make_shared<ResponseCache>());
    if (config.templates_dir) {
        rt->templates = TemplateSet(*config.templates_dir);
    }
    return rt;
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StorageError(fmt::format("cannot open '{}'", path.string()));
    }
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            out.push_back(json::parse(line).get<T>());
        } catch (const json::exception& e) {
            throw SchemaError(fmt::format("{} line {}: {}", path.filename().string(), line_no, e.what()), line_no);
        } catch (const PreconditionError& e) {
            throw SchemaError(fmt::format("{} line {}: {}", path.filename().string(), line_no, e.what()), line_no);
        }
    }
    return out;
}

template std::vector<ClientProfile> read_jsonl<ClientProfile>(const std::filesystem::path&);
template std::vector<DatasetRecord> read_jsonl<DatasetRecord>(const std::filesystem::path&);
template std::vector<TranscriptRecord> read_jsonl<TranscriptRecord>(const std::filesystem::path&);
template std::vector<ScoreRow> read_jsonl<ScoreRow>(const std::filesystem::path&);

json to_json_value(const StageSummary& s) {
    json failures = json::array();
    for (const auto& [id, message] : s.failures) {
        failures.push_back({{"id", id}, {"error", message}});
    }
    return {{"input", s.input}, {"output", s.output}, {"failures", failures}};
}

std::vector<FaceIdentity> forge_faces(Runtime& rt, std::size_t count, const std::filesystem::path& manifest) {
    auto pool = build_face_pool(*rt.gateway, count, rt.config.seed);
    write_face_manifest(rt.path(manifest), pool);
    return pool;
}

std::vector<ClientProfile> forge_profiles(Runtime& rt, const std::filesystem::path& sources,
                                          const std::filesystem::path& manifest, const std::filesystem::path& out) {
    const auto profiles = build_corpus_profiles(read_source_profiles(sources), read_face_manifest(rt.path(manifest)),
                                                rt.config.seed, rt.config.face_match);
    write_jsonl(rt.path(out), profiles);
    return profiles;
}

std::vector<ClientProfile> forge_eval_profiles(Runtime& rt, const std::filesystem::path& examples,
                                               const std::filesystem::path& manifest, const EvalCounts& counts,
                                               const std::filesystem::path& out) {
    auto generator = chat_profile_generator(*rt.gateway, rt.templates, read_source_profiles(examples));
    const auto profiles = build_eval_profiles(generator, read_face_manifest(rt.path(manifest)), counts,
                                              rt.config.seed, rt.config.face_match);
    write_jsonl(rt.path(out), profiles);
    return profiles;
}

namespace {

std::string model_of(const Gateway& gateway, ServiceKind kind) {
    return gateway.has_endpoint(kind) ? gateway.endpoint(kind).model : std::string{};
}

} // namespace

StageSummary gen_screenplays(Runtime& rt, const std::filesystem::path& profiles, const std::filesystem::path& out) {
    const auto list = read_jsonl<ClientProfile>(rt.path(profiles));
    StageSummary summary;
    summary.input = list.size();
    CorpusWriter writer(rt.path(out));
    for (const auto& profile : list) {
        GenerationOptions options;
        options.seed = static_cast<std::int64_t>(derive_seed(rt.config.seed, "screenplay|" + profile.profile_id) >> 33);
        try {
            const auto req = screenplay_request(profile, rt.templates, options);
            const auto raw = generate_screenplay(profile, *rt.gateway, rt.templates, options);
            auto parsed = parse_screenplay(raw, profile.profile_id);
            DatasetRecord rec;
            rec.dialogue_id = profile.profile_id;
            rec.profile = profile;
            rec.turns = std::move(parsed.screenplay.turns);
            rec.provenance.prompt_hashes["screenplay"] = sha256_hex(req.system + "\n" + req.messages.back().content);
            rec.provenance.prompt_hashes["screenplay_reply"] = sha256_hex(raw);
            rec.provenance.seeds["screenplay"] = static_cast<std::uint64_t>(*options.seed);
            rec.provenance.seeds["run"] = rt.config.seed;
            rec.provenance.service_versions["chat"] = model_of(*rt.gateway, ServiceKind::chat);
            writer.write(rec);
            ++summary.output;
        } catch (const Error& e) {
            summary.failures.emplace_back(profile.profile_id, e.what());
        }
    }
    writer.close();
    return summary;
}

StageSummary synth_faces(Runtime& rt, const std::filesystem::path& screenplays, const std::filesystem::path& out,
                         const std::filesystem::path& manifest) {
    StageSummary summary;
    CorpusWriter writer(rt.path(out));
    std::string manifest_text;
    for_each_record(rt.path(screenplays), [&](const DatasetRecord& in) {
        ++summary.input;
        auto rec = in;
        try {
            const auto result = synthesize_dialogue_images(*rt.gateway, rt.templates, rec.profile, rec.dialogue_id,
                                                           rec.turns, rt.config.seed);
            for (const auto& row : result.rows) {
                manifest_text += json(row).dump();
                manifest_text += '\n';
            }
            for (auto idx : result.flagged_turns) {
                summary.failures.emplace_back(rec.dialogue_id,
                                              fmt::format("turn {} expression prompts did not parse", idx));
            }
            rec.provenance.seeds["images"] = rt.config.seed;
            rec.provenance.service_versions["image_synth"] = model_of(*rt.gateway, ServiceKind::image_synth);
            writer.write(rec);
            ++summary.output;
        } catch (const Error& e) {
            summary.failures.emplace_back(rec.dialogue_id, e.what());
        }
    });
    writer.close();
    write_file(rt.path(manifest), manifest_text);
    return summary;
}

FilterReport filter_corpus(Runtime& rt, const std::filesystem::path& dialogues, const FilterOutputs& out) {
    const auto records = read_corpus(rt.path(dialogues));
    std::vector<Dialogue> input;
    input.reserve(records.size());
    for (const auto& r : records) {
        input.push_back({r.dialogue_id, r.profile, r.turns});
    }
    const auto result = run_pipeline(input, rt.config.filter, rt.filter_context(), rt.config.workers);

    CorpusWriter kept(rt.path(out.corpus));
    std::string rejected;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& outcome = result.outcomes[i];
        if (outcome.kept) {
            auto rec = records[i];
            rec.filter_verdicts = outcome.verdicts;
            for (auto kind : {ServiceKind::img_txt_sim, ServiceKind::face_embed, ServiceKind::face_attr,
                              ServiceKind::nsfw, ServiceKind::safety}) {
                rec.provenance.service_versions[std::string(to_string(kind))] = model_of(*rt.gateway, kind);
            }
            kept.write(rec);
        } else {
            json row = {{"dialogue_id", outcome.dialogue_id}, {"verdicts", outcome.verdicts}};
            row["error"] = outcome.error ? json(*outcome.error) : json(nullptr);
            rejected += row.dump();
            rejected += '\n';
        }
    }
    kept.close();
    write_file(rt.path(out.rejected), rejected);
    write_file(rt.path(out.report_json), to_json_value(result.report).dump(2) + "\n");
    write_file(rt.path(out.report_text), render_filter_report(result.report));
    return result.report;
}

StageSummary simulate(Runtime& rt, const std::filesystem::path& profiles, const std::filesystem::path& out) {
    const auto list = read_jsonl<ClientProfile>(rt.path(profiles));
    const auto records = run_sessions(list, *rt.gateway, rt.templates, rt.config.session, rt.config.workers);
    StageSummary summary;
    summary.input = list.size();
    for (const auto& r : records) {
        if (r.failed) {
            summary.failures.emplace_back(r.session_id, r.failure);
        } else {
            ++summary.output;
        }
    }
    write_jsonl(rt.path(out), records);
    return summary;
}

json evaluate(Runtime& rt, const std::vector<std::filesystem::path>& transcripts,
              const std::filesystem::path& scores_out, const std::filesystem::path& report_out) {
    std::vector<ScoreRow> rows;
    std::size_t failed = 0;
    json unscored = json::array();
    for (const auto& path : transcripts) {
        for (const auto& t : read_jsonl<TranscriptRecord>(rt.path(path))) {
            if (t.failed) {
                ++failed;
                continue;
            }
            try {
                ScoreRow row;
                row.session_id = t.session_id;
                row.model = t.model;
                row.profile_id = t.state.profile.profile_id;
                row.resistance = t.state.profile.resistance;
                row.skills = score_skills(t.state.history, *rt.gateway, rt.templates, rt.config.judge);
                row.alliance = score_alliance(t.state.history, *rt.gateway, rt.templates, rt.config.judge);
                row.length = length_stats(t.state.history);
                rows.push_back(std::move(row));
            } catch (const Error& e) {
                unscored.push_back({{"session_id", t.session_id}, {"error", e.what()}});
            }
        }
    }
    write_jsonl(rt.path(scores_out), rows);
    auto report = build_eval_report(rows, rt.config.report);
    report["failed_sessions_excluded"] = failed;
    report["unscored"] = unscored;
    write_file(rt.path(report_out), report.dump(2) + "\n");
    return report;
}

GoldenArtifacts golden_run(Runtime& rt, const std::filesystem::path& seed_profiles) {
    forge_faces(rt, rt.config.face_pool_size, "faces/manifest.jsonl");
    const auto profiles = forge_profiles(rt, seed_profiles, "faces/manifest.jsonl", "profiles.jsonl");
    gen_screenplays(rt, "profiles.jsonl", "screenplays.jsonl");
    synth_faces(rt, "screenplays.jsonl", "dialogues.jsonl", "images/manifest.jsonl");
    FilterOutputs out{"corpus.jsonl", "filter_report.json", "filter_report.txt", "rejected.jsonl"};
    GoldenArtifacts art;
    art.filter_report = filter_corpus(rt, "dialogues.jsonl", out);
    art.corpus = rt.path(out.corpus);
    art.report = rt.path(out.report_json);
    art.profiles = profiles.size();
    return art;
}

} // namespace counselforge
