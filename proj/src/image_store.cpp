// SPDX-License-Identifier: Apache-2.0
#include "counselforge/image_store.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

namespace counselforge {

namespace fs = std::filesystem;

FsImageStore::FsImageStore(fs::path root) : root_(std::move(root)) {}

fs::path FsImageStore::resolve(const ImageRef& ref) const {
    const fs::path rel(ref.path);
    if (ref.path.empty() || rel.is_absolute()) {
        return rel;
    }
    for (const auto& part : rel) {
        if (part == "..") {
            throw StorageError(fmt::format("image ref '{}' escapes the store root", ref.path));
        }
    }
    return root_ / rel;
}

std::string FsImageStore::read(const ImageRef& ref) const {
    const auto path = resolve(ref);
    if (!fs::is_regular_file(path)) {
        throw MissingImageError(fmt::format("image '{}' not found under '{}'", ref.path, root_.string()));
    }
    return read_file(path);
}

ImageRef FsImageStore::write(const std::string& relative_path, std::string_view bytes) {
    ImageRef ref{relative_path};
    write_file(resolve(ref), bytes);
    return ref;
}

bool FsImageStore::exists(const ImageRef& ref) const {
    return !ref.path.empty() && fs::is_regular_file(resolve(ref));
}

std::string MemoryImageStore::read(const ImageRef& ref) const {
    std::lock_guard lock(mutex_);
    auto it = images_.find(ref.path);
    if (it == images_.end()) {
        throw MissingImageError(fmt::format("image '{}' not found in memory store", ref.path));
    }
    return it->second;
}

ImageRef MemoryImageStore::write(const std::string& relative_path, std::string_view bytes) {
    std::lock_guard lock(mutex_);
    images_[relative_path] = std::string(bytes);
    return ImageRef{relative_path};
}

bool MemoryImageStore::exists(const ImageRef& ref) const {
    std::lock_guard lock(mutex_);
    return images_.count(ref.path) != 0;
}

std::size_t MemoryImageStore::size() const {
    std::lock_guard lock(mutex_);
    return images_.size();
}

} // namespace counselforge
