// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace counselforge {

/// Named prompt templates. Defaults are compiled in from templates/; a directory
/// given at construction overrides any template it contains by relative name
/// (without the .txt suffix, e.g. "wai_guidelines/q01").
class TemplateSet {
public:
    TemplateSet();
    explicit TemplateSet(const std::filesystem::path& override_dir);

    /// Template text with trailing newlines removed. Throws PreconditionError when unknown.
    [[nodiscard]] const std::string& get(std::string_view name) const;
    [[nodiscard]] bool has(std::string_view name) const;

    /// Sets or replaces a template in memory.
    void set(std::string name, std::string text);

    /// Names in sorted order.
    [[nodiscard]] std::vector<std::string> names() const;

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

using TemplateValues = std::vector<std::pair<std::string, std::string>>;

/// Replaces each `{key}` with its value. Only keys listed in `values` are touched,
/// so literal braces elsewhere in a template survive unchanged.
std::string render_template(std::string_view text, const TemplateValues& values);

/// Drops lines whose first non-blank character is '#', then trims.
std::string strip_comment_lines(std::string_view text);

namespace detail {
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_templates();
}

} // namespace counselforge
