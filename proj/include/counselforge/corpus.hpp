// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/filter_bank.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/types.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace counselforge {

struct Provenance {
    std::map<std::string, std::string> prompt_hashes;
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, std::string> service_versions;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct DatasetRecord {
    std::string dialogue_id;
    ClientProfile profile;
    std::vector<Turn> turns;
    std::vector<FilterVerdict> filter_verdicts;
    Provenance provenance;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

void to_json(json& j, const Provenance& v);
void from_json(const json& j, Provenance& v);
void to_json(json& j, const DatasetRecord& v);
void from_json(const json& j, DatasetRecord& v);

/// Throws SchemaError naming `line_no` when `line` is not a valid record.
DatasetRecord parse_record_line(std::string_view line, std::size_t line_no);

/// Streams records to a JSONL file, one compact object per line.
class CorpusWriter {
public:
    explicit CorpusWriter(const std::filesystem::path& path);
    void write(const DatasetRecord& record);
    void close();
    [[nodiscard]] std::size_t written() const noexcept { return written_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t written_ = 0;
};

/// Reads records one line at a time, so memory stays flat in corpus size.
class CorpusReader {
public:
    explicit CorpusReader(const std::filesystem::path& path);
    std::optional<DatasetRecord> next();
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::ifstream in_;
    std::size_t line_ = 0;
};

void write_corpus(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_corpus(const std::filesystem::path& path);
void for_each_record(const std::filesystem::path& path, const std::function<void(const DatasetRecord&)>& fn);

struct CorpusStats {
    std::size_t n_dialogues = 0;
    double avg_turns = 0.0;
    double avg_images_per_dialogue = 0.0;
    TurnUnit turn_unit = TurnUnit::exchange;
};

/// Running totals, so statistics can be taken over a stream.
class StatsAccumulator {
public:
    explicit StatsAccumulator(TurnUnit unit = TurnUnit::exchange) : unit_(unit) {}
    void add(const std::vector<Turn>& turns);
    /// Adds a dialogue known only by its counts.
    void add_counts(std::size_t turns, std::size_t images);
    [[nodiscard]] CorpusStats result() const;

private:
    TurnUnit unit_;
    std::size_t n_ = 0;
    std::size_t turns_ = 0;
    std::size_t images_ = 0;
};

std::size_t count_images(const std::vector<Turn>& turns);

CorpusStats compute_stats(const std::vector<DatasetRecord>& corpus, TurnUnit unit = TurnUnit::exchange);
CorpusStats compute_stats(const std::filesystem::path& corpus_path, TurnUnit unit = TurnUnit::exchange);
json to_json_value(const CorpusStats& stats);

struct TrainingRecord {
    std::string id;
    std::string dialogue_id;
    std::size_t turn_index = 0;
    TherapistVariant variant = TherapistVariant::base;
    std::string image;
    std::string input;
    std::string target;
};

void to_json(json& j, const TrainingRecord& v);

/// One record per therapist turn, with the prompt that turn would have been generated from.
std::vector<TrainingRecord> export_training(const std::vector<DatasetRecord>& corpus, TherapistVariant variant,
                                            const TemplateSet& templates);

/// The training records serialized as JSONL.
std::string export_training_jsonl(const std::vector<DatasetRecord>& corpus, TherapistVariant variant,
                                  const TemplateSet& templates);

} // namespace counselforge
