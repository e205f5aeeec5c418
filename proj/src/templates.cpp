// SPDX-License-Identifier: Apache-2.0
#include "counselforge/templates.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

namespace counselforge {

namespace {

std::string strip_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) {
        s.pop_back();
    }
    return s;
}

} // namespace

TemplateSet::TemplateSet() {
    for (const auto& [name, text] : detail::embedded_templates()) {
        templates_.emplace(std::string(name), strip_trailing_newlines(std::string(text)));
    }
}

TemplateSet::TemplateSet(const std::filesystem::path& override_dir) : TemplateSet() {
    namespace fs = std::filesystem;
    if (!fs::is_directory(override_dir)) {
        throw PreconditionError(fmt::format("template directory '{}' does not exist", override_dir.string()));
    }
    for (const auto& entry : fs::recursive_directory_iterator(override_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") {
            continue;
        }
        auto rel = fs::relative(entry.path(), override_dir);
        rel.replace_extension();
        templates_[rel.generic_string()] = strip_trailing_newlines(read_file(entry.path()));
    }
}

const std::string& TemplateSet::get(std::string_view name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) {
        throw PreconditionError(fmt::format("unknown template '{}'", name));
    }
    return it->second;
}

bool TemplateSet::has(std::string_view name) const {
    return templates_.find(name) != templates_.end();
}

void TemplateSet::set(std::string name, std::string text) {
    templates_[std::move(name)] = std::move(text);
}

std::vector<std::string> TemplateSet::names() const {
    std::vector<std::string> out;
    out.reserve(templates_.size());
    for (const auto& [name, _] : templates_) {
        out.push_back(name);
    }
    return out;
}

std::string render_template(std::string_view text, const TemplateValues& values) {
    // Single left-to-right pass so substituted values are never re-scanned.
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            bool matched = false;
            for (const auto& [key, value] : values) {
                const std::size_t len = key.size() + 2;
                if (text.size() - i >= len && text[i + len - 1] == '}' && text.substr(i + 1, key.size()) == key) {
                    out.append(value);
                    i += len;
                    matched = true;
                    break;
                }
            }
            if (matched) {
                continue;
            }
        }
        out.push_back(text[i]);
        ++i;
    }
    return out;
}

std::string strip_comment_lines(std::string_view text) {
    std::vector<std::string> kept;
    for (auto& line : split_lines(text)) {
        const auto t = trim(line);
        if (!t.empty() && t.front() == '#') {
            continue;
        }
        kept.push_back(line);
    }
    return trim(join(kept, "\n"));
}

} // namespace counselforge
