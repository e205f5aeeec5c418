// SPDX-License-Identifier: Apache-2.0
#include "counselforge/profile_forge.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/mock_services.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <cmath>
#include <fstream>

namespace counselforge {

FaceIdentity assign_face(const SourceProfile& profile, const std::vector<FaceIdentity>& pool, std::uint64_t seed,
                         double age_bucket) {
    if (pool.empty()) {
        throw PreconditionError("face pool is empty");
    }
    std::vector<const FaceIdentity*> eligible;
    for (const auto& face : pool) {
        if (face.predicted_gender == profile.gender &&
            std::abs(face.predicted_age - static_cast<double>(profile.age)) <= age_bucket) {
            eligible.push_back(&face);
        }
    }
    if (eligible.empty()) {
        throw NoMatchError(fmt::format("no {} face within {} years of age {}", to_string(profile.gender), age_bucket,
                                       profile.age));
    }
    Rng rng(seed);
    return *eligible[rng.index(eligible.size())];
}

FaceIdentity assign_face(const SourceProfile& profile, const std::vector<FaceIdentity>& pool, std::uint64_t seed,
                         const FaceMatchOptions& options) {
    double bucket = options.age_bucket;
    for (int step = 0;; ++step) {
        try {
            return assign_face(profile, pool, seed, bucket);
        } catch (const NoMatchError&) {
            if (!options.widen || step >= options.max_widen_steps) {
                throw;
            }
            bucket += options.widen_step;
        }
    }
}

std::vector<ClientProfile> augment_resistance(const SourceProfile& profile, const FaceIdentity& face,
                                              const std::string& base_id) {
    validate(profile);
    std::vector<ClientProfile> out;
    out.reserve(kResistanceTypes.size());
    for (auto type : kResistanceTypes) {
        out.push_back(ClientProfile{fmt::format("{}-{}", base_id, to_string(type)), profile, face, type});
    }
    return out;
}

std::vector<ClientProfile> build_corpus_profiles(const std::vector<SourceProfile>& sources,
                                                 const std::vector<FaceIdentity>& pool, std::uint64_t seed,
                                                 const FaceMatchOptions& options) {
    std::vector<ClientProfile> out;
    out.reserve(4 * sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto base_id = fmt::format("p{:04}", i);
        const auto face = assign_face(sources[i], pool, derive_seed(seed, "face|" + base_id), options);
        for (auto& p : augment_resistance(sources[i], face, base_id)) {
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::size_t EvalCounts::total() const {
    std::size_t n = 0;
    for (auto c : per_type) {
        n += c;
    }
    return n;
}

EvalCounts EvalCounts::parse(std::string_view text) {
    EvalCounts counts{{0, 0, 0, 0}};
    std::size_t i = 0;
    std::string item;
    auto flush = [&] {
        if (i >= 4) {
            throw PreconditionError("counts take at most four values");
        }
        const auto t = trim(item);
        if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
            throw PreconditionError(fmt::format("invalid count '{}'", t));
        }
        counts.per_type[i++] = static_cast<std::size_t>(std::stoull(t));
        item.clear();
    };
    for (char c : text) {
        if (c == ',') {
            flush();
        } else {
            item.push_back(c);
        }
    }
    flush();
    return counts;
}

std::vector<ClientProfile> build_eval_profiles(const ProfileGenerator& generator,
                                               const std::vector<FaceIdentity>& pool, const EvalCounts& counts,
                                               std::uint64_t seed, const FaceMatchOptions& options) {
    std::size_t sources = 0;
    for (auto c : counts.per_type) {
        sources = std::max(sources, c);
    }
    std::vector<ClientProfile> out;
    out.reserve(counts.total());
    for (std::size_t k = 0; k < sources; ++k) {
        const auto source = generator(k);
        validate(source);
        const auto base_id = fmt::format("eval-{:04}", k);
        const auto face = assign_face(source, pool, derive_seed(seed, "face|" + base_id), options);
        for (std::size_t t = 0; t < kResistanceTypes.size(); ++t) {
            if (counts.per_type[t] > k) {
                const auto type = kResistanceTypes[t];
                out.push_back(ClientProfile{fmt::format("{}-{}", base_id, to_string(type)), source, face, type});
            }
        }
    }
    return out;
}

ProfileGenerator chat_profile_generator(Gateway& gateway, const TemplateSet& templates,
                                        std::vector<SourceProfile> examples) {
    if (examples.empty()) {
        throw PreconditionError("profile generation needs at least one example profile");
    }
    return [&gateway, &templates, examples = std::move(examples)](std::size_t index) {
        const auto& example = examples[index % examples.size()];
        ChatRequest req;
        req.messages.push_back(
            {ChatRole::user,
             render_template(templates.get("profile_synthesis"),
                             {{"example profile", json(example).dump(2)}, {"variation index", std::to_string(index)}}),
             std::nullopt});
        const auto reply = gateway.complete_chat(req);
        SourceProfile profile;
        try {
            const auto start = reply.find('{');
            const auto end = reply.rfind('}');
            if (start == std::string::npos || end == std::string::npos || end < start) {
                throw GenerationError("no JSON object in reply");
            }
            profile = json::parse(reply.substr(start, end - start + 1)).get<SourceProfile>();
            validate(profile);
        } catch (const GenerationError&) {
            throw;
        } catch (const std::exception& e) {
            throw GenerationError(fmt::format("generated profile {} is invalid: {}", index, e.what()));
        }
        return profile;
    };
}

bool face_consistent(const ClientProfile& profile, double age_bucket) {
    return profile.face.predicted_gender == profile.source.gender &&
           std::abs(profile.face.predicted_age - static_cast<double>(profile.source.age)) <= age_bucket;
}

std::vector<FaceIdentity> read_face_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw StorageError(fmt::format("cannot open face manifest '{}'", path.string()));
    }
    std::vector<FaceIdentity> pool;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            const auto row = json::parse(line);
            FaceIdentity face;
            face.image = ImageRef{row.at("image_path").get<std::string>()};
            face.predicted_gender = parse_gender(row.at("predicted_gender").get<std::string>());
            face.gender_confidence = row.value("gender_confidence", 1.0);
            face.predicted_age = row.at("predicted_age").get<double>();
            pool.push_back(std::move(face));
        } catch (const std::exception& e) {
            throw SchemaError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()), line_no);
        }
    }
    return pool;
}

void write_face_manifest(const std::filesystem::path& path, const std::vector<FaceIdentity>& pool) {
    std::string out;
    for (const auto& face : pool) {
        const json row = {{"image_path", face.image.path},
                          {"predicted_gender", to_string(face.predicted_gender)},
                          {"gender_confidence", face.gender_confidence},
                          {"predicted_age", face.predicted_age}};
        out += row.dump();
        out.push_back('\n');
    }
    write_file(path, out);
}

std::vector<SourceProfile> read_source_profiles(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw StorageError(fmt::format("cannot open source profiles '{}'", path.string()));
    }
    std::vector<SourceProfile> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            auto profile = json::parse(line).get<SourceProfile>();
            validate(profile);
            out.push_back(std::move(profile));
        } catch (const std::exception& e) {
            throw SchemaError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()), line_no);
        }
    }
    return out;
}

std::vector<FaceIdentity> build_face_pool(Gateway& gateway, std::size_t count, std::uint64_t seed,
                                          const std::string& subdir) {
    std::vector<FaceIdentity> pool;
    pool.reserve(count);
    Rng rng(derive_seed(seed, "face-pool"));
    for (std::size_t i = 0; i < count; ++i) {
        const auto identity = fmt::format("face-{:04}", i);
        const auto gender = i % 2 == 0 ? Gender::woman : Gender::man;
        const int age = 18 + static_cast<int>(rng.index(53));
        const auto ref =
            gateway.images().write(fmt::format("{}/{}.png", subdir, identity), make_reference_face(identity, gender, age, seed));
        const auto attrs = gateway.face_attributes(ref);
        pool.push_back(FaceIdentity{ref, attrs.gender, attrs.gender_confidence, attrs.age_years});
    }
    return pool;
}

} // namespace counselforge
