// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace counselforge {

// Hashing and encoding

std::string sha256_hex(std::string_view data);
/// First eight bytes of the SHA-256 digest, big-endian. Stable across platforms.
std::uint64_t stable_hash64(std::string_view data);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// Portable randomness. std::uniform_*_distribution is implementation-defined,
// so anything that must reproduce byte-for-byte goes through these helpers.

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, n) by rejection; n must be positive.
    std::size_t index(std::size_t n);
    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform();
    bool bernoulli(double p) { return uniform() < p; }
    /// Standard normal via Box-Muller.
    double normal();

    template <typename Container>
    const auto& pick(const Container& c) {
        return c[index(c.size())];
    }

private:
    std::mt19937_64 engine_;
};

// Strings

std::string trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string collapse_spaces(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
std::string to_lower(std::string_view s);
bool contains(std::string_view haystack, std::string_view needle);

// Files

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

} // namespace counselforge
