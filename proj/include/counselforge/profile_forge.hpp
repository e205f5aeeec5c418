// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/gateway.hpp"
#include "counselforge/templates.hpp"
#include "counselforge/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace counselforge {

struct FaceMatchOptions {
    double age_bucket = 5.0;
    /// On NoMatch, retry with the bucket grown by `widen_step` up to `max_widen_steps` times.
    bool widen = true;
    double widen_step = 5.0;
    int max_widen_steps = 20;
};

/// Picks uniformly among pool faces with the profile's gender and an age within the bucket.
/// Throws NoMatchError when none qualify.
FaceIdentity assign_face(const SourceProfile& profile, const std::vector<FaceIdentity>& pool, std::uint64_t seed,
                         double age_bucket = 5.0);

/// assign_face with automatic bucket widening per `options`.
FaceIdentity assign_face(const SourceProfile& profile, const std::vector<FaceIdentity>& pool, std::uint64_t seed,
                         const FaceMatchOptions& options);

/// One ClientProfile per resistance type, ids `<base_id>-<type>`.
std::vector<ClientProfile> augment_resistance(const SourceProfile& profile, const FaceIdentity& face,
                                              const std::string& base_id);

/// Corpus profiles: each source gets one face and all four resistance variants.
std::vector<ClientProfile> build_corpus_profiles(const std::vector<SourceProfile>& sources,
                                                 const std::vector<FaceIdentity>& pool, std::uint64_t seed,
                                                 const FaceMatchOptions& options = {});

struct EvalCounts {
    /// Indexed like kResistanceTypes.
    std::array<std::size_t, 4> per_type{200, 200, 200, 200};

    [[nodiscard]] std::size_t total() const;
    /// Parses "c,e,b,n" or a single number applied to the first type.
    static EvalCounts parse(std::string_view text);
};

using ProfileGenerator = std::function<SourceProfile(std::size_t index)>;

/// Evaluation profiles: generator(k) supplies the k-th source profile, which receives a face
/// and one variant per type whose count exceeds k. Ids are `eval-<k>-<type>`.
std::vector<ClientProfile> build_eval_profiles(const ProfileGenerator& generator,
                                               const std::vector<FaceIdentity>& pool, const EvalCounts& counts,
                                               std::uint64_t seed, const FaceMatchOptions& options = {});

/// Generator that asks the chat service for new profiles modeled on `examples`.
/// Invalid replies raise GenerationError.
ProfileGenerator chat_profile_generator(Gateway& gateway, const TemplateSet& templates,
                                        std::vector<SourceProfile> examples);

/// Checks gender match and age bucket for a stored profile.
bool face_consistent(const ClientProfile& profile, double age_bucket);

std::vector<FaceIdentity> read_face_manifest(const std::filesystem::path& path);
void write_face_manifest(const std::filesystem::path& path, const std::vector<FaceIdentity>& pool);
std::vector<SourceProfile> read_source_profiles(const std::filesystem::path& path);

/// Writes a reference-face pool of `count` images through the gateway's image store and
/// fills predictions from the face_attr service.
std::vector<FaceIdentity> build_face_pool(Gateway& gateway, std::size_t count, std::uint64_t seed,
                                          const std::string& subdir = "faces");

} // namespace counselforge
