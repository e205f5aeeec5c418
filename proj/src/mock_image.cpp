// SPDX-License-Identifier: Apache-2.0
#include "counselforge/mock_image.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/util.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>

namespace counselforge {

namespace {

constexpr std::array<unsigned char, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>(v & 0xFF));
}

std::uint32_t get_u32(std::string_view s, std::size_t pos) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + 3]));
}

void put_chunk(std::string& out, std::string_view type, std::string_view data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type);
    body.append(data);
    out.append(body);
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

} // namespace

std::string encode_mock_png(const ImageMeta& meta, std::uint64_t pixel_seed, int side) {
    if (side <= 0) {
        throw PreconditionError("image side must be positive");
    }
    std::string out(kSignature.begin(), kSignature.end());

    std::string ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(side));
    put_u32(ihdr, static_cast<std::uint32_t>(side));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);

    for (const auto& [key, value] : meta) {
        std::string text = key;
        text.push_back('\0');
        text.append(value);
        put_chunk(out, "tEXt", text);
    }

    Rng rng(pixel_seed);
    std::string raw;
    raw.reserve(static_cast<std::size_t>(side) * (3 * static_cast<std::size_t>(side) + 1));
    for (int y = 0; y < side; ++y) {
        raw.push_back(0); // filter: none
        for (int x = 0; x < 3 * side; ++x) {
            raw.push_back(static_cast<char>(rng.next() & 0xFF));
        }
    }
    // Stored deflate blocks keep the bytes independent of the zlib build.
    uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(packed_size, '\0');
    if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), Z_NO_COMPRESSION) != Z_OK) {
        throw StorageError("zlib failed to pack image data");
    }
    packed.resize(packed_size);
    put_chunk(out, "IDAT", packed);
    put_chunk(out, "IEND", {});
    return out;
}

ImageMeta decode_png_text(std::string_view bytes) {
    if (bytes.size() < kSignature.size() ||
        !std::equal(kSignature.begin(), kSignature.end(), bytes.begin(),
                    [](unsigned char a, char b) { return a == static_cast<unsigned char>(b); })) {
        throw ProtocolError("payload is not a PNG image");
    }
    ImageMeta meta;
    std::size_t pos = kSignature.size();
    while (pos + 12 <= bytes.size()) {
        const auto len = get_u32(bytes, pos);
        if (pos + 12 + len > bytes.size()) {
            throw ProtocolError("truncated PNG chunk");
        }
        const auto type = bytes.substr(pos + 4, 4);
        const auto data = bytes.substr(pos + 8, len);
        if (type == "tEXt") {
            const auto nul = data.find('\0');
            if (nul != std::string_view::npos) {
                meta[std::string(data.substr(0, nul))] = std::string(data.substr(nul + 1));
            }
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    return meta;
}

} // namespace counselforge
