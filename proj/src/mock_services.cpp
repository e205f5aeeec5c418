// SPDX-License-Identifier: Apache-2.0
#include "counselforge/mock_services.hpp"

#include "counselforge/errors.hpp"
#include "counselforge/mock_image.hpp"
#include "counselforge/util.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace counselforge {

// ---------------------------------------------------------------- MockTransport

void MockTransport::on(ServiceKind kind, Handler handler) {
    std::lock_guard lock(mutex_);
    handlers_[kind] = std::move(handler);
}

json MockTransport::post(const ServiceEndpoint& endpoint, const json& body) {
    Handler handler;
    {
        std::lock_guard lock(mutex_);
        ++calls_[endpoint.kind];
        if (recording_) {
            log_[endpoint.kind].push_back(body);
        }
        auto& pending = pending_failures_[endpoint.kind];
        if (pending.first > 0) {
            --pending.first;
            throw TransportError(fmt::format("injected {} failure", to_string(endpoint.kind)), pending.second);
        }
        auto it = handlers_.find(endpoint.kind);
        if (it == handlers_.end()) {
            throw TransportError(fmt::format("no mock handler for {}", to_string(endpoint.kind)), false);
        }
        handler = it->second;
    }
    return handler(body);
}

void MockTransport::fail_next(ServiceKind kind, int count, bool transient) {
    std::lock_guard lock(mutex_);
    pending_failures_[kind] = {count, transient};
}

std::size_t MockTransport::calls(ServiceKind kind) const {
    std::lock_guard lock(mutex_);
    auto it = calls_.find(kind);
    return it == calls_.end() ? 0 : it->second;
}

std::size_t MockTransport::total_calls() const {
    std::lock_guard lock(mutex_);
    std::size_t total = 0;
    for (const auto& [_, n] : calls_) {
        total += n;
    }
    return total;
}

void MockTransport::reset_counts() {
    std::lock_guard lock(mutex_);
    calls_.clear();
    log_.clear();
}

void MockTransport::set_recording(bool on) {
    std::lock_guard lock(mutex_);
    recording_ = on;
}

std::vector<json> MockTransport::requests(ServiceKind kind) const {
    std::lock_guard lock(mutex_);
    auto it = log_.find(kind);
    return it == log_.end() ? std::vector<json>{} : it->second;
}

// ---------------------------------------------------------------- vocabulary

const std::vector<ExpressionCue>& expression_cues() {
    static const std::vector<ExpressionCue> cues = {
        {"looking away", "downcast expression with eyes looking away", "trusting expression with a gentle smile",
         "looking away, withdrawn"},
        {"looking down", "sad expression with lowered gaze", "confident expression with steady eye contact",
         "looking down, slightly defensive"},
        {"arms crossed", "guarded expression with tight lips and a furrowed brow",
         "open relaxed expression with soft eyes", "guarded, slightly defensive"},
        {"frown", "frowning expression with knitted brows", "cheerful expression with a broad smile",
         "frowning, skeptical"},
        {"eyebrow", "skeptical expression with one raised eyebrow", "accepting expression with a warm smile",
         "skeptical, questioning"},
        {"shaking head", "doubtful expression with pursed lips", "agreeable expression with bright eyes",
         "doubtful, unconvinced"},
        {"trembling", "distressed expression with quivering lips", "calm expression with relaxed features",
         "distressed, close to tears"},
        {"welling", "tearful expression with glassy eyes", "joyful expression with a wide grin", "tearful, sad"},
        {"shrug", "indifferent expression with a flat mouth", "engaged expression with raised eyebrows",
         "indifferent, disengaged"},
        {"fidget", "anxious expression with darting eyes", "serene expression with a steady gaze",
         "anxious, restless"},
        {"sigh", "tired expression with heavy eyelids", "energetic expression with bright eyes", "tired, resigned"},
        {"avoiding eye contact", "evasive expression with eyes turned aside", "direct expression with open eye contact",
         "evasive, avoidant"},
        {"nodding", "attentive expression with a small hopeful smile", "dismissive expression with narrowed eyes",
         "attentive, hopeful"},
        {"smiling", "faint smile with slightly uncertain eyes", "stern expression with pressed lips",
         "cautiously relieved"},
        {"leaning forward", "interested expression with wide open eyes", "bored expression with drooping eyelids",
         "interested, engaged"},
        {"eye contact", "calm expression with steady eye contact", "nervous expression with averted eyes",
         "calm, open"},
    };
    return cues;
}

namespace {

const ExpressionCue kNeutralCue = {"", "neutral expression with a slightly tense jaw",
                                   "joyful expression with a wide smile", "neutral, a little tense"};

const ExpressionCue& cue_for(std::string_view direction_text) {
    const auto lower = to_lower(direction_text);
    for (const auto& cue : expression_cues()) {
        if (contains(lower, cue.keyword)) {
            return cue;
        }
    }
    return kNeutralCue;
}

const std::array<std::string_view, 8> kWomenNames = {"Emma", "Sofia", "Hannah", "Grace",
                                                     "Maya", "Chloe", "Nora",   "Lucy"};
const std::array<std::string_view, 8> kMenNames = {"Liam", "Noah", "Ethan", "Lucas",
                                                   "Owen", "Caleb", "Mason", "Adam"};
const std::array<std::string_view, 10> kOccupations = {
    "nurse",   "software developer", "teacher",  "accountant", "graphic designer",
    "student", "sales associate",    "engineer", "librarian",  "chef"};

std::string section_after(const std::string& text, std::string_view marker, std::string_view end_marker = {}) {
    const auto start = text.find(marker);
    if (start == std::string::npos) {
        return {};
    }
    const auto from = start + marker.size();
    if (end_marker.empty()) {
        return text.substr(from);
    }
    const auto end = text.find(end_marker, from);
    return text.substr(from, end == std::string::npos ? std::string::npos : end - from);
}

std::string line_after(const std::string& text, std::string_view marker) {
    auto rest = section_after(text, marker);
    const auto nl = rest.find('\n');
    return trim(nl == std::string::npos ? rest : rest.substr(0, nl));
}

std::string field_from_info(const std::string& info, std::string_view key) {
    // info looks like "Name: X, Age: N, Gender: g, Occupation: o"
    const auto pos = info.find(key);
    if (pos == std::string::npos) {
        return {};
    }
    const auto from = pos + key.size();
    const auto comma = info.find(", ", from);
    return trim(info.substr(from, comma == std::string::npos ? std::string::npos : comma - from));
}

ResistanceType resistance_from_prompt(const std::string& text) {
    if (contains(text, "Cognitive resistance")) {
        return ResistanceType::cognitive;
    }
    if (contains(text, "Emotional resistance")) {
        return ResistanceType::emotional;
    }
    if (contains(text, "Behavioral resistance")) {
        return ResistanceType::behavioral;
    }
    return ResistanceType::non_resistant;
}

std::string last_user_content(const json& body) {
    const auto& messages = body.at("messages");
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->value("role", "") == "user") {
            return it->value("content", "");
        }
    }
    return {};
}

double round_to(double v, double scale) {
    return std::round(v * scale) / scale;
}

ImageMeta meta_of(const json& body, const char* field) {
    return decode_png_text(base64_decode(body.at(field).get<std::string>()));
}

std::vector<double> unit_from_seed(std::uint64_t seed, std::size_t dim) {
    Rng rng(seed);
    std::vector<double> v(dim);
    double sumsq = 0.0;
    for (auto& c : v) {
        c = 2.0 * rng.uniform() - 1.0;
        sumsq += c * c;
    }
    const double norm = std::sqrt(sumsq);
    for (auto& c : v) {
        c /= norm;
    }
    return v;
}

} // namespace

const std::vector<std::string_view>& mock_therapist_lines() {
    static const std::vector<std::string_view> lines = {
        "What brings you here today, and how have things been lately?",
        "It sounds like this has been weighing on you for a while.",
        "Can you tell me more about what goes through your mind when that happens?",
        "I noticed you looked away just now. What came up for you?",
        "That makes sense. What evidence do you have for that thought?",
        "Would you be willing to look at this from a different angle with me?",
        "You said you are fine, but your face seemed tense. Is something else on your mind?",
        "It is okay to disagree with me. I want to hear your honest view.",
        "How would a close friend describe the same situation?",
        "What would it mean for you if that thought were not completely true?",
        "Let us try a small experiment this week. Does that feel manageable?",
        "I appreciate you sharing that. It takes courage to talk about it.",
        "What is one small step that might help you feel a bit better?",
        "How strongly do you believe that thought right now?",
        "Could we write down the thought and look at it together?",
        "I hear a lot of pressure in what you are saying.",
        "When did you first notice feeling this way?",
        "What usually happens right after that thought shows up?",
    };
    return lines;
}

const std::vector<std::string_view>& mock_client_lines(ResistanceType type) {
    static const std::vector<std::string_view> cognitive = {
        "I guess so, but I really think my view is just realistic.",
        "That sounds nice in theory, but it does not work for me.",
        "I have thought about this a lot, and I still believe it is true.",
        "Maybe, but how do you know that is the case?",
        "I do not see how looking at it differently would change anything.",
        "Honestly, the facts are pretty clear to me.",
    };
    static const std::vector<std::string_view> emotional = {
        "I do not really want to talk about that part.",
        "It just hurts to think about it.",
        "Why does everyone keep asking me that?",
        "I am fine. It is not a big deal.",
        "I feel like I am going to cry if we keep going.",
        "Can we please move on to something else?",
    };
    static const std::vector<std::string_view> behavioral = {
        "I do not know.",
        "Maybe. I will see.",
        "I tried that before and it did not help.",
        "I guess I could try, but I probably will not have time.",
        "Sure, whatever you think.",
        "Can we talk about something else?",
    };
    static const std::vector<std::string_view> open = {
        "Yes, that actually makes a lot of sense to me.",
        "I never thought about it that way before.",
        "I think I can try writing the thought down this week.",
        "It helps to hear that. I feel a little lighter.",
        "Okay, I am willing to give it a try.",
        "That is a good point. Maybe I am being too hard on myself.",
    };
    switch (type) {
    case ResistanceType::cognitive:
        return cognitive;
    case ResistanceType::emotional:
        return emotional;
    case ResistanceType::behavioral:
        return behavioral;
    case ResistanceType::non_resistant:
        break;
    }
    return open;
}

const std::vector<std::string_view>& mock_directions(ResistanceType type) {
    static const std::vector<std::string_view> cognitive = {"frowning", "raising an eyebrow",
                                                            "slightly defensive, arms crossed", "shaking head slowly"};
    static const std::vector<std::string_view> emotional = {"looking away", "voice trembling",
                                                            "looking down, slightly defensive", "eyes welling up"};
    static const std::vector<std::string_view> behavioral = {"shrugs", "fidgeting with sleeves", "sighs",
                                                             "leaning back, avoiding eye contact"};
    static const std::vector<std::string_view> open = {"nodding slowly", "smiling faintly", "leaning forward",
                                                       "relaxed, making eye contact"};
    switch (type) {
    case ResistanceType::cognitive:
        return cognitive;
    case ResistanceType::emotional:
        return emotional;
    case ResistanceType::behavioral:
        return behavioral;
    case ResistanceType::non_resistant:
        break;
    }
    return open;
}

MockChatKind classify_chat_request(const json& body) {
    const auto system = body.value("system", std::string{});
    if (contains(system, "create a dialogue for the FIRST COUNSELING SESSION")) {
        return MockChatKind::screenplay;
    }
    if (contains(system, "playing the role of a client")) {
        return MockChatKind::client;
    }
    const auto content = last_user_content(body);
    if (contains(content, "Contrasting Facial Expression Description")) {
        return MockChatKind::expression;
    }
    if (contains(content, "Types of CBT Techniques")) {
        return MockChatKind::planning;
    }
    if (contains(content, "emotional state. Clearly describe")) {
        return MockChatKind::caption;
    }
    if (contains(content, "[Question]") && contains(content, "[[rating]]")) {
        return MockChatKind::wai;
    }
    if (contains(content, "rate the counselor on the following dimension")) {
        return MockChatKind::skills;
    }
    if (contains(content, "intake profile modeled on the example")) {
        return MockChatKind::profile_synthesis;
    }
    if (contains(content, "respond as a psychotherapist")) {
        return MockChatKind::therapist;
    }
    return MockChatKind::unknown;
}

// ---------------------------------------------------------------- BundledMocks

BundledMocks::BundledMocks(MockOptions options) : options_(options) {}

double BundledMocks::draw(std::string_view label, std::string_view content) const {
    std::string material = fmt::format("{}|{}|", options_.seed, label);
    material.append(content);
    return static_cast<double>(stable_hash64(material) >> 11) * 0x1.0p-53;
}

json BundledMocks::chat(const json& body) const {
    const auto system = body.value("system", std::string{});
    const auto query = last_user_content(body);
    std::string content;
    switch (classify_chat_request(body)) {
    case MockChatKind::screenplay:
        content = screenplay(system, query);
        break;
    case MockChatKind::expression:
        content = expression(query, body.contains("seed") && !body.at("seed").is_null() ? body.at("seed").dump() : std::string{});
        break;
    case MockChatKind::client:
        content = client(system, query);
        break;
    case MockChatKind::therapist:
        content = therapist(query);
        break;
    case MockChatKind::caption:
        content = caption(body.at("messages").back());
        break;
    case MockChatKind::planning:
        content = planning(query);
        break;
    case MockChatKind::wai:
        content = wai(query);
        break;
    case MockChatKind::skills:
        content = skills(query);
        break;
    case MockChatKind::profile_synthesis:
        content = profile_synthesis(query);
        break;
    case MockChatKind::unknown:
        content = system;
        break;
    }
    return {{"content", content}};
}

std::string BundledMocks::screenplay(const std::string& /*system*/, const std::string& query) const {
    const auto info = line_after(query, "### Personal Information ###:");
    const auto name = field_from_info(info, "Name: ");
    const auto distorted = line_after(query, "### Distorted Thoughts ###:");
    const auto type = resistance_from_prompt(query);
    const auto& therapist_lines = mock_therapist_lines();
    const auto& client_lines = mock_client_lines(type);
    const auto& directions = mock_directions(type);

    Rng rng(stable_hash64(fmt::format("{}|screenplay|{}", options_.seed, query)));
    std::vector<std::string> lines;
    lines.push_back(fmt::format("Therapist: Hello {}, welcome. What would you like to talk about today?", name));

    if (draw("short", query) < options_.short_screenplay) {
        lines.push_back(fmt::format("Client: [{}] {}", rng.pick(directions), rng.pick(client_lines)));
        lines.push_back(fmt::format("Therapist: {}", rng.pick(therapist_lines)));
        return join(lines, "\n");
    }

    const std::size_t client_turns = 4 + rng.index(6);
    const bool copy = draw("copy", query) < options_.persona_copy && split_whitespace(distorted).size() >= 8;
    const std::size_t copy_turn = rng.index(client_turns);
    for (std::size_t k = 0; k < client_turns; ++k) {
        std::string utterance(rng.pick(client_lines));
        if (copy && k == copy_turn) {
            utterance = fmt::format("Well, {}", distorted);
        } else if (rng.uniform() < 0.15) {
            const auto space = utterance.find(' ');
            if (space != std::string::npos) {
                utterance.insert(space, " [pauses]");
            }
        }
        lines.push_back(fmt::format("Client: [{}] {}", rng.pick(directions), utterance));
        lines.push_back(fmt::format("Therapist: {}", rng.pick(therapist_lines)));
    }
    if (rng.uniform() < 0.5) {
        lines.pop_back();
    }
    return join(lines, "\n");
}

std::string BundledMocks::expression(const std::string& query, const std::string& seed) const {
    const auto utterance = trim(section_after(query, "### Client's Utterance ###"));
    std::string direction_text;
    std::size_t pos = 0;
    while ((pos = utterance.find('[', pos)) != std::string::npos) {
        const auto close = utterance.find(']', pos);
        if (close == std::string::npos) {
            break;
        }
        direction_text += utterance.substr(pos + 1, close - pos - 1) + " ";
        pos = close + 1;
    }
    const auto& cue = cue_for(direction_text.empty() ? utterance : direction_text);
    auto first = fmt::format("- Facial Expression Description: {}", cue.target);
    if (draw("malformed-expression", query + "|" + seed) < options_.malformed_expression) {
        return first + "\n" + first;
    }
    return fmt::format("{}\n- Contrasting Facial Expression Description: {}", first, cue.contrast);
}

std::string BundledMocks::client(const std::string& system, const std::string& query) const {
    const auto type = resistance_from_prompt(system);
    const auto name = field_from_info(query, "Name: ");
    const auto history = section_after(query, "### Counseling Dialogue History ###:");
    std::size_t client_turns = 0;
    for (const auto& line : split_lines(history)) {
        if (line.rfind("Client:", 0) == 0) {
            ++client_turns;
        }
    }
    const std::size_t k = client_turns + 1;
    const auto key = fmt::format("{}|{}|{}", name, to_string(type), k);
    const bool resistant = is_resistant(type);
    const double u = draw("client-end", key);
    const bool end = resistant ? (k >= 3 && u < 0.3) : (k >= 5 && u < 0.45);

    Rng rng(stable_hash64(fmt::format("{}|client|{}", options_.seed, key)));
    auto out = fmt::format("Client: [{}] {}", rng.pick(mock_directions(type)), rng.pick(mock_client_lines(type)));
    if (end) {
        out += " [/END]";
    }
    return out;
}

std::string BundledMocks::therapist(const std::string& query) const {
    const auto history = section_after(query, "Below is a conversation between the client and the psychotherapist.");
    Rng rng(stable_hash64(fmt::format("{}|therapist|{}", options_.seed, history)));
    const auto& lines = mock_therapist_lines();
    bool planned = false;
    for (auto technique : kCbtTechniques) {
        if (contains(query, technique)) {
            planned = true;
            break;
        }
    }
    std::string out(rng.pick(lines));
    if (!planned) {
        // Without a plan the mock therapist rambles, like untuned models do.
        out += " ";
        out += rng.pick(lines);
        out += " ";
        out += rng.pick(lines);
    }
    return out;
}

std::string BundledMocks::caption(const json& message) const {
    if (!message.contains("images_b64") || message.at("images_b64").empty()) {
        return "";
    }
    const auto meta = decode_png_text(base64_decode(message.at("images_b64").at(0).get<std::string>()));
    auto it = meta.find("prompt");
    if (it == meta.end()) {
        return std::string(kNeutralCue.caption);
    }
    for (const auto& cue : expression_cues()) {
        if (it->second.size() >= cue.target.size() &&
            it->second.compare(it->second.size() - cue.target.size(), cue.target.size(), cue.target) == 0) {
            return std::string(cue.caption);
        }
    }
    return std::string(kNeutralCue.caption);
}

std::string BundledMocks::planning(const std::string& query) const {
    const auto technique = kCbtTechniques[stable_hash64(fmt::format("{}|plan|{}", options_.seed, query)) % 12];
    return fmt::format("CBT technique:\n{}\n\nCounseling planning:\n"
                       "1. Build rapport and explore the client's main concern.\n"
                       "2. Use {} to examine the distorted thought together.\n"
                       "3. Agree on a small homework task framed as an experiment.",
                       technique, technique);
}

std::string BundledMocks::wai(const std::string& query) const {
    const auto conversation = section_after(query, "[Start of Counseling]", "[End of Counseling]");
    const auto question = section_after(query, "[Question]", "[Start of Guidelines]");
    const bool weak = draw("wai-dialogue", conversation) < options_.weak_alliance;
    const double u = draw("wai-question", conversation + question);
    const int rating = weak ? 1 + static_cast<int>(u * 2.0) : 3 + static_cast<int>(u * 3.0);
    return fmt::format("The scale runs from [[1]] to [[5]]. Weighing the evidence in the dialogue, "
                       "my rating is [[{}]].",
                       rating);
}

std::string BundledMocks::skills(const std::string& query) const {
    const auto conversation = section_after(query, "[Start of Counseling]", "[End of Counseling]");
    const bool weak = draw("wai-dialogue", conversation) < options_.weak_alliance;
    const double u = draw("skill", query);
    const int score = weak ? static_cast<int>(u * 3.0) : 2 + static_cast<int>(u * 5.0);
    return fmt::format("The counselor shows the skill to some degree. Score: [[{}]]", score);
}

std::string BundledMocks::profile_synthesis(const std::string& query) const {
    const auto example_text = trim(section_after(query, "### Example Profile ###", "### Variation Index ###"));
    const auto index_text = trim(section_after(query, "### Variation Index ###"));
    json profile = json::parse(example_text);
    Rng rng(stable_hash64(fmt::format("{}|synth-profile|{}|{}", options_.seed, example_text, index_text)));
    const bool woman = profile.value("gender", "woman") == "woman";
    profile["name"] = std::string(woman ? rng.pick(kWomenNames) : rng.pick(kMenNames));
    profile["age"] = 20 + static_cast<int>(rng.index(45));
    profile["occupation"] = std::string(rng.pick(kOccupations));
    return profile.dump();
}

json BundledMocks::image_synth(const json& body) const {
    const auto reference = meta_of(body, "reference_image_b64");
    const auto positive = body.at("positive_prompt").get<std::string>();
    const auto negative = body.at("negative_prompt").get<std::string>();
    const auto seed = body.at("seed").is_null() ? std::uint64_t{0} : body.at("seed").get<std::uint64_t>();
    ImageMeta meta;
    meta["identity"] = reference.count("identity") ? reference.at("identity") : "unknown";
    meta["gender"] = reference.count("gender") ? reference.at("gender") : "woman";
    meta["age"] = reference.count("age") ? reference.at("age") : "30";
    meta["kind"] = "synth";
    meta["prompt"] = positive;
    meta["seed"] = std::to_string(seed);
    const auto pixel_seed = stable_hash64(fmt::format("{}|{}|{}|{}", meta["identity"], positive, negative, seed));
    return {{"image_b64", base64_encode(encode_mock_png(meta, pixel_seed))}};
}

json BundledMocks::img_txt_sim(const json& body) const {
    const auto image = body.at("image_b64").get<std::string>();
    const auto text = body.at("text").get<std::string>();
    const auto key = sha256_hex(image) + text;
    const double u = draw("sim-value", key);
    const double score = draw("sim-low", key) < options_.low_similarity ? 0.05 + 0.14 * u : 0.21 + 0.25 * u;
    return {{"score", round_to(score, 1e4)}};
}

json BundledMocks::face_embed(const json& body) const {
    const auto bytes = base64_decode(body.at("image_b64").get<std::string>());
    const auto meta = decode_png_text(bytes);
    const auto identity = meta.count("identity") ? meta.at("identity") : sha256_hex(bytes);
    const auto dim = options_.embedding_dim;
    auto base = unit_from_seed(stable_hash64("embed|" + identity), dim);
    const bool synth = meta.count("kind") && meta.at("kind") == "synth";
    if (!synth) {
        return {{"vector", base}};
    }
    const auto image_key = sha256_hex(bytes);
    if (draw("identity-drift", image_key) < options_.identity_drift) {
        return {{"vector", unit_from_seed(stable_hash64("drift|" + image_key), dim)}};
    }
    auto noise = unit_from_seed(stable_hash64("noise|" + image_key), dim);
    double sumsq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        base[i] += 0.35 * noise[i];
        sumsq += base[i] * base[i];
    }
    // Slightly off unit length on purpose; the gateway renormalizes small deviations.
    const double scale = 1.0002 / std::sqrt(sumsq);
    for (auto& c : base) {
        c *= scale;
    }
    return {{"vector", base}};
}

json BundledMocks::face_attr(const json& body) const {
    const auto bytes = base64_decode(body.at("image_b64").get<std::string>());
    const auto meta = decode_png_text(bytes);
    const auto key = sha256_hex(bytes);
    std::string gender = meta.count("gender") ? meta.at("gender") : "woman";
    const bool synth = meta.count("kind") && meta.at("kind") == "synth";
    if (synth && draw("gender-flip", key) < options_.gender_flip) {
        gender = gender == "woman" ? "man" : "woman";
    }
    const double age = meta.count("age") ? std::stod(meta.at("age")) : 30.0;
    return {{"gender", gender},
            {"gender_confidence", round_to(0.9 + 0.09 * draw("gender-conf", key), 1e3)},
            {"age", round_to(age + 4.0 * draw("age-noise", key) - 2.0, 10.0)}};
}

json BundledMocks::nsfw(const json& body) const {
    const auto key = sha256_hex(body.at("image_b64").get<std::string>());
    const double u = draw("nsfw-value", key);
    const double p = draw("nsfw", key) < options_.nsfw ? 0.6 + 0.35 * u : 0.01 + 0.2 * u;
    const double rounded = round_to(p, 1e4);
    return {{"label", rounded > 0.5 ? "nsfw" : "safe"}, {"probability", rounded}};
}

json BundledMocks::safety(const json& body) const {
    const auto text = body.at("text").get<std::string>();
    const double u = draw("safety-value", text);
    if (draw("safety", text) < options_.unsafe_text) {
        return {{"label", "needs_intervention"}, {"probability", round_to(0.8 + 0.19 * u, 1e4)}};
    }
    return {{"label", "casual"}, {"probability", round_to(0.9 + 0.09 * u, 1e4)}};
}

json BundledMocks::handle(ServiceKind kind, const json& body) const {
    switch (kind) {
    case ServiceKind::chat:
        return chat(body);
    case ServiceKind::image_synth:
        return image_synth(body);
    case ServiceKind::img_txt_sim:
        return img_txt_sim(body);
    case ServiceKind::face_embed:
        return face_embed(body);
    case ServiceKind::face_attr:
        return face_attr(body);
    case ServiceKind::nsfw:
        return nsfw(body);
    case ServiceKind::safety:
        return safety(body);
    }
    throw PreconditionError("unknown service kind");
}

void BundledMocks::install(MockTransport& transport) const {
    for (auto kind : kServiceKinds) {
        transport.on(kind, [self = *this, kind](const json& body) { return self.handle(kind, body); });
    }
}

std::shared_ptr<MockTransport> make_bundled_transport(const MockOptions& options) {
    auto transport = std::make_shared<MockTransport>();
    BundledMocks(options).install(*transport);
    return transport;
}

void use_mock_endpoints(Gateway& gateway, bool cache_chat) {
    for (auto kind : kServiceKinds) {
        ServiceEndpoint ep;
        ep.kind = kind;
        ep.base_url = fmt::format("mock://{}", to_string(kind));
        ep.timeout = std::chrono::milliseconds(1000);
        ep.max_retries = 3;
        ep.backoff_base = std::chrono::milliseconds(0);
        ep.cache_enabled = kind == ServiceKind::chat ? cache_chat : false;
        ep.model = "counselforge-mock/1";
        gateway.set_endpoint(ep);
    }
}

std::string make_reference_face(const std::string& identity, Gender gender, int age, std::uint64_t seed) {
    ImageMeta meta = {{"identity", identity},
                      {"gender", std::string(to_string(gender))},
                      {"age", std::to_string(age)},
                      {"kind", "reference"}};
    return encode_mock_png(meta, splitmix64(seed ^ stable_hash64(identity)));
}

} // namespace counselforge
