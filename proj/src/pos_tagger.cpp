// SPDX-License-Identifier: Apache-2.0
#include "counselforge/pos_tagger.hpp"

#include "counselforge/util.hpp"

#include <array>
#include <cctype>
#include <unordered_map>

namespace counselforge {

namespace {

bool is_word_char(unsigned char c) {
    return std::isalnum(c) != 0 || c == '\'' || c == '-' || c >= 0x80;
}

const std::unordered_map<std::string_view, PosTag>& lexicon() {
    static const auto table = [] {
        std::unordered_map<std::string_view, PosTag> t;
        auto add = [&t](PosTag tag, std::initializer_list<std::string_view> words) {
            for (auto w : words) {
                t.emplace(w, tag);
            }
        };
        add(PosTag::det, {"a", "an", "the", "this", "that", "these", "those", "my", "your", "his", "her", "its",
                          "our", "their", "some", "any", "no", "every", "each", "all", "both", "either", "neither",
                          "another", "such", "what", "which", "whose", "much", "many", "few", "several", "more",
                          "most", "less", "least"});
        add(PosTag::pron,
            {"i",       "me",         "you",       "he",       "him",        "she",      "it",       "we",
             "us",      "they",       "them",      "myself",   "yourself",   "himself",  "herself",  "itself",
             "ourselves", "themselves", "mine",    "yours",    "hers",       "ours",     "theirs",   "who",
             "whom",    "someone",    "something", "anyone",   "anything",   "everyone", "everything", "nobody",
             "nothing", "everybody",  "somebody",  "i'm",      "i've",       "i'll",     "i'd",      "you're",
             "you've",  "you'll",     "you'd",     "he's",     "she's",      "it's",     "we're",    "we've",
             "we'll",   "they're",    "they've",   "they'll",  "that's",     "there's",  "what's",   "who's",
             "here's",  "whatever",   "whoever"});
        add(PosTag::aux, {"am",     "is",      "are",     "was",     "were",     "be",       "been",    "being",
                          "do",     "does",    "did",     "have",    "has",      "had",      "having",  "will",
                          "would",  "shall",   "should",  "can",     "could",    "may",      "might",   "must",
                          "cannot", "don't",   "doesn't", "didn't",  "isn't",    "aren't",   "wasn't",  "weren't",
                          "haven't", "hasn't", "hadn't",  "won't",   "wouldn't", "can't",    "couldn't", "shouldn't",
                          "mustn't"});
        add(PosTag::adp, {"in",     "on",      "at",      "by",     "for",    "with",   "about",  "against",
                          "between", "into",   "through", "during", "before", "after",  "above",  "below",
                          "to",     "from",    "up",      "down",   "of",     "off",    "over",   "under",
                          "around", "among",   "without", "within", "along",  "across", "behind", "beyond",
                          "like",   "near",    "since",   "toward", "towards", "upon"});
        add(PosTag::conj, {"and", "but", "or", "nor", "so", "yet", "because", "although", "though", "while", "if",
                           "unless", "until", "whether", "than", "as", "when", "where", "how", "why"});
        add(PosTag::part, {"not"});
        add(PosTag::adv, {"very",     "really",    "just",     "also",      "too",      "quite",    "rather",
                          "still",    "even",      "ever",     "never",     "always",   "often",    "sometimes",
                          "usually",  "already",   "soon",     "now",       "here",     "there",    "then",
                          "maybe",    "perhaps",   "honestly", "actually",  "probably", "definitely", "certainly",
                          "almost",   "again",     "away",     "back",      "only",     "however",  "anyway",
                          "instead",  "later",     "today",    "tonight",   "yesterday", "tomorrow", "once",
                          "twice",    "pretty",    "enough",   "else",      "first",    "together", "right",
                          "lately",   "slowly",    "completely"});
        add(PosTag::intj, {"yes", "yeah", "okay", "ok", "oh", "hmm", "um", "uh", "well", "hello", "hi", "please",
                           "sure", "wow", "thanks", "alright"});
        add(PosTag::adj, {"good",   "bad",    "fine",    "big",      "small",      "little",   "great",  "new",
                          "old",    "different", "same", "hard",     "easy",       "happy",    "sad",    "angry",
                          "afraid", "tired",  "true",    "false",    "real",       "clear",    "important", "possible",
                          "wrong",  "worth",  "whole",   "better",   "worse",      "best",     "worst",  "nice",
                          "open",   "honest", "close",   "lighter",  "heavy",      "calm",     "tense",  "anxious",
                          "difficult", "manageable", "willing", "able", "strong",   "weak",     "own",    "other",
                          "last",   "next",   "high",    "low",      "long",       "short",    "free",   "safe",
                          "alone",  "ready",  "busy",    "worried",  "scared",     "upset",    "useless", "stupid",
                          "perfect", "enough", "lonely", "awkward",  "nervous",    "stressed", "small"});
        add(PosTag::verb,
            {"feel",     "felt",     "think",    "thought",  "know",       "knew",      "want",     "wanted",
             "guess",    "try",      "tried",    "see",      "saw",        "say",       "said",     "tell",
             "told",     "talk",     "make",     "made",     "get",        "got",       "go",       "went",
             "come",     "came",     "take",     "took",     "give",       "gave",      "look",     "seem",
             "keep",     "kept",     "let",      "help",     "need",       "believe",   "mean",     "work",
             "works",    "change",   "move",     "write",    "notice",     "hear",      "cry",      "hurt",
             "hurts",    "describe", "happen",   "happens",  "show",       "shows",     "leave",    "stop",
             "start",    "find",     "found",    "understand", "agree",    "disagree",  "explore",  "share",
             "ask",      "sit",      "breathe",  "stay",     "remember",   "forget",    "care",     "love",
             "hate",     "worry",    "doubt",    "matter",   "matters",    "sound",     "sounds",   "seems",
             "feels",    "thinks",   "knows",    "wants",    "goes",       "put",       "run",      "use",
             "call",     "fail",     "fails",    "lose",     "lost",       "finish",    "judge",    "judges",
             "expect",   "expects",  "hope",     "brings",     "bring",     "came",     "describe",
             "handle",   "manage",   "messed",   "deserve",  "disappoint", "prove",     "speak",    "sleep",
             "eat",      "wake",     "sent",     "send",     "read",       "gets",      "keeps",    "makes",
             "takes",    "thinks",   "laugh",    "laughs",   "hates",      "likes",     "needs",    "believes"});
        return t;
    }();
    return table;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

} // namespace

std::string_view to_string(PosTag tag) {
    static constexpr std::array<std::string_view, 13> names = {"NOUN", "VERB", "AUX",  "ADJ",  "ADV", "PRON", "DET",
                                                               "ADP",  "CONJ", "PART", "NUM",  "INTJ", "PUNCT"};
    return names.at(static_cast<std::size_t>(tag));
}

std::vector<std::string> pos_tokenize(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& chunk : split_whitespace(text)) {
        std::size_t b = 0;
        std::size_t e = chunk.size();
        while (b < e && !is_word_char(static_cast<unsigned char>(chunk[b]))) {
            ++b;
        }
        while (e > b && !is_word_char(static_cast<unsigned char>(chunk[e - 1]))) {
            --e;
        }
        if (b > 0) {
            out.push_back(chunk.substr(0, b));
        }
        if (e > b) {
            out.push_back(chunk.substr(b, e - b));
        }
        if (e > b && e < chunk.size()) {
            out.push_back(chunk.substr(e));
        }
    }
    return out;
}

PosTag LexiconTagger::tag_word(std::string_view raw) {
    if (raw.empty()) {
        return PosTag::punct;
    }
    if (!is_word_char(static_cast<unsigned char>(raw.front()))) {
        return PosTag::punct;
    }
    auto word = replace_all(to_lower(raw), "\xE2\x80\x99", "'");
    bool digits = true;
    for (char c : word) {
        if (std::isdigit(static_cast<unsigned char>(c)) == 0 && c != '.' && c != ',') {
            digits = false;
            break;
        }
    }
    if (digits) {
        return PosTag::num;
    }
    static const std::array<std::string_view, 16> number_words = {
        "one",   "two",   "three", "four", "five",  "six",     "seven",    "eight",
        "nine",  "ten",   "zero",  "hundred", "twenty", "thirty", "thousand", "million"};
    for (auto n : number_words) {
        if (word == n) {
            return PosTag::num;
        }
    }
    const auto& lex = lexicon();
    if (auto it = lex.find(word); it != lex.end()) {
        return it->second;
    }
    if (ends_with(word, "n't")) {
        return PosTag::aux;
    }
    if (ends_with(word, "'s")) {
        const auto stem = word.substr(0, word.size() - 2);
        if (auto it = lex.find(stem); it != lex.end() && it->second == PosTag::pron) {
            return PosTag::pron;
        }
        return PosTag::noun;
    }
    if (ends_with(word, "'m") || ends_with(word, "'re") || ends_with(word, "'ve") || ends_with(word, "'ll") ||
        ends_with(word, "'d")) {
        return PosTag::pron;
    }
    if (word.size() > 4 && ends_with(word, "ly")) {
        return PosTag::adv;
    }
    if (word.size() > 4 && (ends_with(word, "ing") || ends_with(word, "ed"))) {
        return PosTag::verb;
    }
    for (auto suffix : {"tion", "sion", "ment", "ness", "ity", "ship", "ance", "ence", "ism", "ist"}) {
        if (ends_with(word, suffix)) {
            return PosTag::noun;
        }
    }
    // Short stems are usually plain nouns (table, olive).
    for (std::string_view suffix : {"ous", "ful", "ive", "able", "ible", "less", "ish", "ical"}) {
        if (word.size() >= suffix.size() + 3 && ends_with(word, suffix)) {
            return PosTag::adj;
        }
    }
    return PosTag::noun;
}

std::vector<TaggedToken> LexiconTagger::tag(std::string_view text) const {
    std::vector<TaggedToken> out;
    for (auto& token : pos_tokenize(text)) {
        const auto tag = tag_word(token);
        out.push_back({std::move(token), tag});
    }
    return out;
}

std::size_t longest_tag_run(const std::vector<TaggedToken>& tokens) {
    std::size_t best = 0;
    std::size_t run = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        run = (i > 0 && tokens[i].tag == tokens[i - 1].tag) ? run + 1 : 1;
        best = std::max(best, run);
    }
    return best;
}

} // namespace counselforge
