// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace counselforge {

using ImageMeta = std::map<std::string, std::string>;

/// Small RGB PNG whose pixels derive from `pixel_seed` and whose metadata is carried
/// in tEXt chunks. The mock services use the metadata to stay mutually consistent.
std::string encode_mock_png(const ImageMeta& meta, std::uint64_t pixel_seed, int side = 8);

/// Reads the tEXt chunks back. Throws ProtocolError on anything that is not a PNG.
ImageMeta decode_png_text(std::string_view bytes);

} // namespace counselforge
