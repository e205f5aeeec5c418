// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/config.hpp"
#include "counselforge/corpus.hpp"
#include "counselforge/filter_bank.hpp"
#include "counselforge/gateway.hpp"
#include "counselforge/mock_services.hpp"
#include "counselforge/pos_tagger.hpp"
#include "counselforge/session_sim.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/util.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace counselforge {

/// Everything a pipeline stage needs: configuration, services and templates.
struct Runtime {
    AppConfig config;
    std::shared_ptr<Transport> transport;
    std::shared_ptr<MockTransport> mock;
    std::shared_ptr<FsImageStore> images;
    std::unique_ptr<Gateway> gateway;
    TemplateSet templates;
    LexiconTagger tagger;

    [[nodiscard]] std::filesystem::path path(const std::filesystem::path& relative) const;
    [[nodiscard]] FilterContext filter_context() const;
};

/// With `config.mock` the gateway talks to the bundled in-process services;
/// otherwise every configured endpoint goes over HTTP.
std::unique_ptr<Runtime> make_runtime(const AppConfig& config);

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += json(r).dump();
        out += '\n';
    }
    write_file(path, out);
}

/// Reads a JSONL file of T, raising SchemaError with the 1-based line on bad rows.
template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path);

extern template std::vector<ClientProfile> read_jsonl<ClientProfile>(const std::filesystem::path&);
extern template std::vector<DatasetRecord> read_jsonl<DatasetRecord>(const std::filesystem::path&);
extern template std::vector<TranscriptRecord> read_jsonl<TranscriptRecord>(const std::filesystem::path&);
extern template std::vector<ScoreRow> read_jsonl<ScoreRow>(const std::filesystem::path&);

std::vector<FaceIdentity> forge_faces(Runtime& rt, std::size_t count, const std::filesystem::path& manifest);

std::vector<ClientProfile> forge_profiles(Runtime& rt, const std::filesystem::path& sources,
                                          const std::filesystem::path& manifest, const std::filesystem::path& out);

std::vector<ClientProfile> forge_eval_profiles(Runtime& rt, const std::filesystem::path& examples,
                                               const std::filesystem::path& manifest, const EvalCounts& counts,
                                               const std::filesystem::path& out);

struct StageSummary {
    std::size_t input = 0;
    std::size_t output = 0;
    std::vector<std::pair<std::string, std::string>> failures;
};

json to_json_value(const StageSummary& s);

/// Writes one DatasetRecord per profile whose screenplay parsed.
StageSummary gen_screenplays(Runtime& rt, const std::filesystem::path& profiles, const std::filesystem::path& out);

/// Attaches a synthesized image to every client turn. Records with turns whose
/// expression prompts could not be parsed are kept with those turns imageless.
StageSummary synth_faces(Runtime& rt, const std::filesystem::path& screenplays, const std::filesystem::path& out,
                         const std::filesystem::path& manifest);

struct FilterOutputs {
    std::filesystem::path corpus;
    std::filesystem::path report_json;
    std::filesystem::path report_text;
    std::filesystem::path rejected;
};

FilterReport filter_corpus(Runtime& rt, const std::filesystem::path& dialogues, const FilterOutputs& out);

StageSummary simulate(Runtime& rt, const std::filesystem::path& profiles, const std::filesystem::path& out);

/// Scores every finished transcript and writes the rows plus a report.
json evaluate(Runtime& rt, const std::vector<std::filesystem::path>& transcripts,
              const std::filesystem::path& scores_out, const std::filesystem::path& report_out);

struct GoldenArtifacts {
    std::filesystem::path corpus;
    std::filesystem::path report;
    FilterReport filter_report;
    std::size_t profiles = 0;
};

/// faces -> profiles -> screenplays -> images -> filter, entirely under `rt.config.data_root`.
GoldenArtifacts golden_run(Runtime& rt, const std::filesystem::path& seed_profiles);

} // namespace counselforge
