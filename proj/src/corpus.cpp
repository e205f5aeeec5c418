// SPDX-License-Identifier: Apache-2.0
#include "counselforge/corpus.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/screenplay.hpp"
#include "counselforge/session_sim.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

namespace counselforge {

void to_json(json& j, const Provenance& v) {
    j = json{{"prompt_hashes", v.prompt_hashes}, {"seeds", v.seeds}, {"service_versions", v.service_versions}};
}

void from_json(const json& j, Provenance& v) {
    j.at("prompt_hashes").get_to(v.prompt_hashes);
    j.at("seeds").get_to(v.seeds);
    j.at("service_versions").get_to(v.service_versions);
}

void to_json(json& j, const DatasetRecord& v) {
    j = json{{"dialogue_id", v.dialogue_id},
             {"profile", v.profile},
             {"turns", v.turns},
             {"filter_verdicts", v.filter_verdicts},
             {"provenance", v.provenance}};
}

void from_json(const json& j, DatasetRecord& v) {
    j.at("dialogue_id").get_to(v.dialogue_id);
    j.at("profile").get_to(v.profile);
    j.at("turns").get_to(v.turns);
    j.at("filter_verdicts").get_to(v.filter_verdicts);
    j.at("provenance").get_to(v.provenance);
}

DatasetRecord parse_record_line(std::string_view line, std::size_t line_no) {
    try {
        return json::parse(line).get<DatasetRecord>();
    } catch (const json::exception& e) {
        throw SchemaError(fmt::format("corpus line {}: {}", line_no, e.what()), line_no);
    } catch (const PreconditionError& e) {
        throw SchemaError(fmt::format("corpus line {}: {}", line_no, e.what()), line_no);
    }
}

CorpusWriter::CorpusWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) {
        throw StorageError(fmt::format("cannot open '{}' for writing", path.string()));
    }
}

void CorpusWriter::write(const DatasetRecord& record) {
    out_ << json(record).dump() << '\n';
    if (!out_) {
        throw StorageError(fmt::format("write to '{}' failed", path_.string()));
    }
    ++written_;
}

void CorpusWriter::close() {
    out_.close();
}

CorpusReader::CorpusReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) {
        throw StorageError(fmt::format("cannot open '{}' for reading", path.string()));
    }
}

std::optional<DatasetRecord> CorpusReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        if (!trim(line).empty()) {
            return parse_record_line(line, line_);
        }
    }
    return std::nullopt;
}

void write_corpus(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
    CorpusWriter w(path);
    for (const auto& r : records) {
        w.write(r);
    }
    w.close();
}

std::vector<DatasetRecord> read_corpus(const std::filesystem::path& path) {
    std::vector<DatasetRecord> out;
    for_each_record(path, [&](const DatasetRecord& r) { out.push_back(r); });
    return out;
}

void for_each_record(const std::filesystem::path& path, const std::function<void(const DatasetRecord&)>& fn) {
    CorpusReader reader(path);
    while (auto r = reader.next()) {
        fn(*r);
    }
}

std::size_t count_images(const std::vector<Turn>& turns) {
    std::size_t n = 0;
    for (const auto& t : turns) {
        if (t.speaker == Speaker::client && t.image) {
            ++n;
        }
    }
    return n;
}

void StatsAccumulator::add(const std::vector<Turn>& turns) {
    add_counts(count_turns(turns, unit_), count_images(turns));
}

void StatsAccumulator::add_counts(std::size_t turns, std::size_t images) {
    ++n_;
    turns_ += turns;
    images_ += images;
}

CorpusStats StatsAccumulator::result() const {
    if (n_ == 0) {
        throw EmptyCorpusError("corpus statistics need at least one dialogue");
    }
    return {n_, static_cast<double>(turns_) / static_cast<double>(n_),
            static_cast<double>(images_) / static_cast<double>(n_), unit_};
}

CorpusStats compute_stats(const std::vector<DatasetRecord>& corpus, TurnUnit unit) {
    StatsAccumulator acc(unit);
    for (const auto& r : corpus) {
        acc.add(r.turns);
    }
    return acc.result();
}

CorpusStats compute_stats(const std::filesystem::path& corpus_path, TurnUnit unit) {
    StatsAccumulator acc(unit);
    for_each_record(corpus_path, [&](const DatasetRecord& r) { acc.add(r.turns); });
    return acc.result();
}

json to_json_value(const CorpusStats& stats) {
    return {{"n_dialogues", stats.n_dialogues},
            {"avg_turns", stats.avg_turns},
            {"avg_images_per_dialogue", stats.avg_images_per_dialogue},
            {"turn_unit", to_string(stats.turn_unit)}};
}

void to_json(json& j, const TrainingRecord& v) {
    j = json{{"id", v.id},           {"dialogue_id", v.dialogue_id}, {"turn_index", v.turn_index},
             {"variant", v.variant}, {"image", v.image},             {"input", v.input},
             {"target", v.target}};
}

std::vector<TrainingRecord> export_training(const std::vector<DatasetRecord>& corpus, TherapistVariant variant,
                                            const TemplateSet& templates) {
    std::vector<TrainingRecord> out;
    SessionConfig cfg;
    cfg.variant = variant;
    for (const auto& record : corpus) {
        SessionState state;
        state.profile = record.profile;
        if (variant != TherapistVariant::base) {
            const auto& s = record.profile.source;
            if (trim(s.cbt_technique).empty() || trim(s.cbt_plan).empty()) {
                throw MissingPlanError(fmt::format("dialogue {} has no plan for the {} variant", record.dialogue_id,
                                                   to_string(variant)));
            }
            state.plan = CbtPlan{s.cbt_technique, s.cbt_plan};
        }
        for (std::size_t i = 0; i < record.turns.size(); ++i) {
            const auto& turn = record.turns[i];
            if (turn.speaker != Speaker::therapist) {
                continue;
            }
            state.history.assign(record.turns.begin(), record.turns.begin() + static_cast<std::ptrdiff_t>(i));
            state.captions.clear();
            for (std::size_t k = i; k-- > 0;) {
                if (record.turns[k].speaker == Speaker::client) {
                    const auto& dirs = record.turns[k].directions;
                    state.captions.push_back({k, dirs.empty() ? std::string("N/A") : join(dirs, ", ")});
                    break;
                }
            }
            const auto req = therapist_request(state, templates, cfg);
            TrainingRecord tr;
            tr.id = fmt::format("{}#{}", record.dialogue_id, i);
            tr.dialogue_id = record.dialogue_id;
            tr.turn_index = i;
            tr.variant = variant;
            tr.image = req.messages.back().image ? req.messages.back().image->path : std::string{};
            tr.input = req.messages.back().content;
            tr.target = strip_directions(turn);
            out.push_back(std::move(tr));
        }
    }
    return out;
}

std::string export_training_jsonl(const std::vector<DatasetRecord>& corpus, TherapistVariant variant,
                                  const TemplateSet& templates) {
    std::string out;
    for (const auto& r : export_training(corpus, variant, templates)) {
        out += json(r).dump();
        out += '\n';
    }
    return out;
}

} // namespace counselforge
