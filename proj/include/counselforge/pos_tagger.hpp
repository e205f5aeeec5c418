// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace counselforge {

enum class PosTag { noun, verb, aux, adj, adv, pron, det, adp, conj, part, num, intj, punct };

std::string_view to_string(PosTag tag);

struct TaggedToken {
    std::string text;
    PosTag tag = PosTag::noun;
};

class PosTagger {
public:
    virtual ~PosTagger() = default;
    /// Throws TaggerError when the text cannot be tagged.
    [[nodiscard]] virtual std::vector<TaggedToken> tag(std::string_view text) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

/// Coarse rule and lexicon tagger. Closed-class words come from a word list, open-class
/// words from suffix rules, and anything unrecognized is a noun.
class LexiconTagger final : public PosTagger {
public:
    [[nodiscard]] std::vector<TaggedToken> tag(std::string_view text) const override;
    [[nodiscard]] std::string name() const override { return "lexicon-v1"; }

    [[nodiscard]] static PosTag tag_word(std::string_view word);
};

/// Wraps any callable, e.g. a remote tagging service.
class FunctionTagger final : public PosTagger {
public:
    using Fn = std::function<std::vector<TaggedToken>(std::string_view)>;
    FunctionTagger(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

    [[nodiscard]] std::vector<TaggedToken> tag(std::string_view text) const override { return fn_(text); }
    [[nodiscard]] std::string name() const override { return name_; }

private:
    std::string name_;
    Fn fn_;
};

/// Splits on whitespace and peels punctuation off word edges. A run of adjacent punctuation
/// characters is one token.
std::vector<std::string> pos_tokenize(std::string_view text);

/// Length of the longest run of identical consecutive tags.
std::size_t longest_tag_run(const std::vector<TaggedToken>& tokens);

} // namespace counselforge
