#pragma once

// Canonical two-speaker dialogue model: turns, line-delimited JSON
// serialization, validation, and turn merging. Everything downstream
// (diarization, metrics, simulation) builds on these types.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tutorbench {

enum class Speaker { Student, Tutor };

inline const char* to_string(Speaker s) {
    return s == Speaker::Student ? "student" : "tutor";
}

inline Speaker other(Speaker s) {
    return s == Speaker::Student ? Speaker::Tutor : Speaker::Student;
}

enum class Provenance { HumanHuman, HumanAI, Simulated };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::HumanHuman: return "human_human";
        case Provenance::HumanAI: return "human_ai";
        default: return "simulated";
    }
}

struct Turn {
    Speaker speaker = Speaker::Tutor;
    std::string text;
    int index = 0;
    std::optional<double> start_s;
    std::optional<double> end_s;

    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    std::string id;
    Provenance provenance = Provenance::Simulated;
    std::map<std::string, std::string> metadata;
    std::vector<Turn> turns;

    bool operator==(const Dialogue&) const = default;
};

// Parse failure tied to a physical line of the input document
// (the header line is line 1).
class ParseError : public std::runtime_error {
  public:
    ParseError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what),
          line_(line) {}
    int line() const { return line_; }

  private:
    int line_;
};

namespace detail {

inline bool is_unicode_space(char32_t c) {
    if (c == 0x20 || (c >= 0x09 && c <= 0x0D)) return true;
    if (c == 0x85 || c == 0xA0 || c == 0x1680) return true;
    if (c >= 0x2000 && c <= 0x200A) return true;
    return c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F ||
           c == 0x3000;
}

// Decodes one UTF-8 code point starting at i; advances i. Invalid bytes
// are passed through one at a time so malformed input never throws.
inline char32_t next_codepoint(std::string_view s, std::size_t& i) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = b0;
    if ((b0 & 0x80) == 0x00) {
        len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return b0;
    }
    if (i + len > s.size()) {
        ++i;
        return b0;
    }
    for (int k = 1; k < len; ++k) {
        unsigned char bk = static_cast<unsigned char>(s[i + k]);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += len;
    return cp;
}

}  // namespace detail

// Number of maximal non-whitespace runs after splitting on Unicode
// whitespace. Punctuation stays attached to its token.
inline int word_count(std::string_view text) {
    int count = 0;
    bool in_word = false;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = detail::next_codepoint(text, i);
        if (detail::is_unicode_space(cp)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

inline bool is_blank(std::string_view text) { return word_count(text) == 0; }

// Concatenates consecutive same-speaker turns with a single space and
// drops whitespace-only turns. Indices are reassigned contiguously, so
// the result strictly alternates speakers. Word content is preserved.
inline Dialogue merge_consecutive_turns(const Dialogue& d) {
    Dialogue out;
    out.id = d.id;
    out.provenance = d.provenance;
    out.metadata = d.metadata;
    for (const Turn& t : d.turns) {
        if (is_blank(t.text)) continue;
        if (!out.turns.empty() && out.turns.back().speaker == t.speaker) {
            Turn& prev = out.turns.back();
            prev.text += ' ';
            prev.text += t.text;
            prev.end_s = t.end_s;
        } else {
            out.turns.push_back(t);
        }
    }
    for (std::size_t i = 0; i < out.turns.size(); ++i)
        out.turns[i].index = static_cast<int>(i);
    return out;
}

inline bool is_canonical(const Dialogue& d) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        if (d.turns[i].index != static_cast<int>(i)) return false;
        if (is_blank(d.turns[i].text)) return false;
        if (i > 0 && d.turns[i].speaker == d.turns[i - 1].speaker) return false;
    }
    return true;
}

struct Violation {
    std::optional<int> turn_index;
    std::string message;
};

// Reports every invariant violation instead of failing on the first.
inline std::vector<Violation> validate(const Dialogue& d) {
    std::vector<Violation> out;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Turn& t = d.turns[i];
        if (t.index != static_cast<int>(i))
            out.push_back({static_cast<int>(i),
                           "non-contiguous indices: turn at position " +
                               std::to_string(i) + " has index " +
                               std::to_string(t.index)});
        if (is_blank(t.text))
            out.push_back({static_cast<int>(i), "empty text"});
        if (t.start_s && *t.start_s < 0.0)
            out.push_back({static_cast<int>(i), "negative start_s"});
        if (t.start_s && t.end_s && *t.end_s < *t.start_s)
            out.push_back({static_cast<int>(i),
                           "timestamp inversion: end_s < start_s"});
    }
    return out;
}

namespace detail {

inline std::optional<Speaker> parse_speaker(std::string_view s) {
    if (s == "student") return Speaker::Student;
    if (s == "tutor") return Speaker::Tutor;
    return std::nullopt;
}

inline std::optional<Provenance> parse_provenance(std::string_view s) {
    if (s == "human_human") return Provenance::HumanHuman;
    if (s == "human_ai") return Provenance::HumanAI;
    if (s == "simulated") return Provenance::Simulated;
    return std::nullopt;
}

}  // namespace detail

// Dialogue file format: one header line {"id","provenance","metadata"}
// followed by one JSON object per turn, UTF-8 with LF line endings.
inline Dialogue parse_dialogue(std::string_view bytes) {
    using nlohmann::json;
    Dialogue d;
    int line_no = 0;
    bool have_header = false;
    std::size_t pos = 0;
    while (pos <= bytes.size()) {
        std::size_t nl = bytes.find('\n', pos);
        std::string_view line = bytes.substr(
            pos, nl == std::string_view::npos ? bytes.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? bytes.size() + 1 : nl + 1;
        ++line_no;
        if (line.empty() ||
            line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (nl == std::string_view::npos) break;
            continue;
        }
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(line_no, "malformed JSON");
        if (!j.is_object())
            throw ParseError(line_no, "expected a JSON object");
        if (!have_header) {
            if (!j.contains("id") || !j["id"].is_string())
                throw ParseError(line_no, "header missing string field \"id\"");
            d.id = j["id"].get<std::string>();
            if (!j.contains("provenance") || !j["provenance"].is_string())
                throw ParseError(line_no,
                                 "header missing string field \"provenance\"");
            auto prov =
                detail::parse_provenance(j["provenance"].get<std::string>());
            if (!prov)
                throw ParseError(line_no,
                                 "unknown provenance \"" +
                                     j["provenance"].get<std::string>() +
                                     "\"");
            d.provenance = *prov;
            if (j.contains("metadata")) {
                if (!j["metadata"].is_object())
                    throw ParseError(line_no, "metadata must be an object");
                for (auto& [k, v] : j["metadata"].items()) {
                    if (!v.is_string())
                        throw ParseError(line_no, "metadata value for \"" + k +
                                                      "\" must be a string");
                    d.metadata[k] = v.get<std::string>();
                }
            }
            have_header = true;
        } else {
            Turn t;
            if (!j.contains("speaker") || !j["speaker"].is_string())
                throw ParseError(line_no, "turn missing string field \"speaker\"");
            auto sp = detail::parse_speaker(j["speaker"].get<std::string>());
            if (!sp)
                throw ParseError(line_no,
                                 "unknown speaker label \"" +
                                     j["speaker"].get<std::string>() + "\"");
            t.speaker = *sp;
            if (!j.contains("text") || !j["text"].is_string())
                throw ParseError(line_no, "turn missing string field \"text\"");
            t.text = j["text"].get<std::string>();
            if (is_blank(t.text))
                throw ParseError(line_no, "turn text is empty");
            if (j.contains("start_s")) {
                if (!j["start_s"].is_number())
                    throw ParseError(line_no, "start_s must be a number");
                t.start_s = j["start_s"].get<double>();
            }
            if (j.contains("end_s")) {
                if (!j["end_s"].is_number())
                    throw ParseError(line_no, "end_s must be a number");
                t.end_s = j["end_s"].get<double>();
            }
            if (t.start_s && *t.start_s < 0.0)
                throw ParseError(line_no, "start_s is negative");
            if (t.start_s && t.end_s && *t.end_s < *t.start_s)
                throw ParseError(line_no, "end_s precedes start_s");
            t.index = static_cast<int>(d.turns.size());
            d.turns.push_back(std::move(t));
        }
        if (nl == std::string_view::npos) break;
    }
    if (!have_header) throw ParseError(1, "empty dialogue: no header line");
    if (d.turns.empty()) throw ParseError(line_no, "empty dialogue: no turns");
    return d;
}

// Deterministic serialization: keys sorted, LF endings, shortest
// round-trip float form. parse(serialize(d)) == d for valid dialogues.
inline std::string serialize_dialogue(const Dialogue& d) {
    using nlohmann::json;
    std::string out;
    json header;
    header["id"] = d.id;
    header["provenance"] = to_string(d.provenance);
    header["metadata"] = json::object();
    for (const auto& [k, v] : d.metadata) header["metadata"][k] = v;
    out += header.dump();
    out += '\n';
    for (const Turn& t : d.turns) {
        json j;
        j["speaker"] = to_string(t.speaker);
        j["text"] = t.text;
        if (t.start_s) j["start_s"] = *t.start_s;
        if (t.end_s) j["end_s"] = *t.end_s;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace tutorbench
