// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "counselforge/types.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

namespace counselforge {

/// Where image bytes live. Refs are relative paths so a corpus can be moved as a directory.
class ImageStore {
public:
    virtual ~ImageStore() = default;

    [[nodiscard]] virtual std::string read(const ImageRef& ref) const = 0;
    virtual ImageRef write(const std::string& relative_path, std::string_view bytes) = 0;
    [[nodiscard]] virtual bool exists(const ImageRef& ref) const = 0;
};

class FsImageStore final : public ImageStore {
public:
    explicit FsImageStore(std::filesystem::path root);

    [[nodiscard]] std::string read(const ImageRef& ref) const override;
    ImageRef write(const std::string& relative_path, std::string_view bytes) override;
    [[nodiscard]] bool exists(const ImageRef& ref) const override;

    [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }

private:
    [[nodiscard]] std::filesystem::path resolve(const ImageRef& ref) const;

    std::filesystem::path root_;
};

class MemoryImageStore final : public ImageStore {
public:
    [[nodiscard]] std::string read(const ImageRef& ref) const override;
    ImageRef write(const std::string& relative_path, std::string_view bytes) override;
    [[nodiscard]] bool exists(const ImageRef& ref) const override;

    [[nodiscard]] std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::string> images_;
};

} // namespace counselforge
