#pragma once

// LLM-judge mediated measurements: end-of-conversation detection,
// student-background fact extraction and coverage scoring, and the
// coding-skill-probe check. Every judge interaction demands a strict
// machine-readable object; a malformed response is re-asked with an
// error-explaining reprompt and never silently becomes a metric value.

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tutorbench/agents.hpp"
#include "tutorbench/dialogue.hpp"

namespace tutorbench {

enum class FactCategory {
    Background,
    Goals,
    Skills,
    Motivation,
    Interests,
    Constraints,
    Other
};

inline const char* to_string(FactCategory c) {
    switch (c) {
        case FactCategory::Background: return "background";
        case FactCategory::Goals: return "goals";
        case FactCategory::Skills: return "skills";
        case FactCategory::Motivation: return "motivation";
        case FactCategory::Interests: return "interests";
        case FactCategory::Constraints: return "constraints";
        default: return "other";
    }
}

inline std::optional<FactCategory> parse_fact_category(std::string_view s) {
    if (s == "background") return FactCategory::Background;
    if (s == "goals") return FactCategory::Goals;
    if (s == "skills") return FactCategory::Skills;
    if (s == "motivation") return FactCategory::Motivation;
    if (s == "interests") return FactCategory::Interests;
    if (s == "constraints") return FactCategory::Constraints;
    if (s == "other") return FactCategory::Other;
    return std::nullopt;
}

struct Fact {
    std::string fact_id;
    std::string statement;
    FactCategory category = FactCategory::Other;
    bool operator==(const Fact&) const = default;
};

// The enumerated student facts from a reference conversation; the
// denominator for the background-coverage benchmark.
struct FactChecklist {
    std::string source_dialogue_id;
    std::vector<Fact> facts;
    bool operator==(const FactChecklist&) const = default;
};

inline nlohmann::json fact_checklist_to_json(const FactChecklist& c) {
    nlohmann::json j;
    j["source_dialogue_id"] = c.source_dialogue_id;
    j["facts"] = nlohmann::json::array();
    for (const Fact& f : c.facts)
        j["facts"].push_back({{"fact_id", f.fact_id},
                              {"statement", f.statement},
                              {"category", to_string(f.category)}});
    return j;
}

inline FactChecklist fact_checklist_from_json(const nlohmann::json& j) {
    FactChecklist c;
    c.source_dialogue_id = j.value("source_dialogue_id", "");
    for (const auto& fj : j.at("facts")) {
        Fact f;
        f.fact_id = fj.at("fact_id").get<std::string>();
        f.statement = fj.at("statement").get<std::string>();
        auto cat = parse_fact_category(fj.value("category", "other"));
        f.category = cat.value_or(FactCategory::Other);
        c.facts.push_back(std::move(f));
    }
    return c;
}

struct CoverageVerdict {
    std::vector<std::pair<std::string, bool>> flags;  // fact_id -> covered
    double coverage = 0.0;  // recomputed from flags, exactly
    int attempts = 1;
};

struct WrapupVerdict {
    bool wrapped = false;
    std::optional<int> turn_index;
    int attempts = 1;
};

struct CodingVerdict {
    bool is_coding_project = false;
    std::optional<bool> probed_before_technical_work;
    int attempts = 1;
};

struct JudgeResponse {
    std::string raw_text;
    nlohmann::json parsed;
    int attempts = 1;
};

class JudgeError : public std::runtime_error {
  public:
    JudgeError(const std::string& what, int attempts, std::string last_raw)
        : std::runtime_error(what),
          attempts_(attempts),
          last_raw_(std::move(last_raw)) {}
    int attempts() const { return attempts_; }
    const std::string& last_raw() const { return last_raw_; }

  private:
    int attempts_;
    std::string last_raw_;
};

struct JudgeOptions {
    int max_reasks = 3;  // re-asks after the first attempt, then hard failure
};

// Accepts a bare JSON object or one wrapped in prose / code fences.
inline std::optional<nlohmann::json> extract_json_object(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
    auto first = text.find('{');
    auto last = text.rfind('}');
    if (first == std::string::npos || last == std::string::npos || last < first)
        return std::nullopt;
    j = nlohmann::json::parse(text.substr(first, last - first + 1), nullptr,
                              false);
    if (!j.is_discarded() && j.is_object()) return j;
    return std::nullopt;
}

// Validator returns an error description, or nullopt when the object
// conforms to the query's schema.
using SchemaValidator =
    std::function<std::optional<std::string>(const nlohmann::json&)>;

inline JudgeResponse ask_judge(Agent& judge, const std::string& prompt,
                               const SchemaValidator& validate,
                               const JudgeOptions& opts = {}) {
    std::vector<Message> history{{Role::System, judge.config().system_prompt},
                                 {Role::User, prompt}};
    std::string last_raw;
    std::string last_error = "no response";
    int attempts = 0;
    for (int attempt = 1; attempt <= 1 + opts.max_reasks; ++attempt) {
        attempts = attempt;
        last_raw = judge.next_turn(history);
        auto parsed = extract_json_object(last_raw);
        std::optional<std::string> err;
        if (!parsed)
            err = "the reply is not a JSON object";
        else
            err = validate(*parsed);
        if (!err) return {last_raw, *parsed, attempts};
        last_error = *err;
        history.push_back({Role::Assistant, last_raw});
        history.push_back(
            {Role::User,
             "Your previous reply was invalid: " + *err +
                 ". Respond again with only the JSON object described in the "
                 "format instructions, and nothing else."});
    }
    throw JudgeError("judge response invalid after " +
                         std::to_string(attempts) +
                         " attempts: " + last_error,
                     attempts, last_raw);
}

// --- prompt templates ---
// Plain text with {dialogue}, {checklist} and {format_instructions}
// placeholders, plus the QUERY_TYPE / BEGIN-END markers that make the
// prompts machine-parseable for offline judges.

struct JudgePrompts {
    std::string fact_extraction;
    std::string coverage;
    std::string wrapup;
    std::string coding_probe;
};

namespace judge_formats {

inline constexpr const char* fact_extraction =
    R"(Respond with only this JSON object and nothing else:
{"facts": [{"fact_id": "<short unique id>", "statement": "<one fact the student reveals about themselves>", "category": "background"|"goals"|"skills"|"motivation"|"interests"|"constraints"|"other"}, ...]}
Use an empty array when the student reveals nothing.)";

inline constexpr const char* coverage =
    R"(Respond with only this JSON object and nothing else:
{"facts": [{"fact_id": "<id from the checklist>", "covered": true|false}, ...]}
Include every checklist fact exactly once, in any order.)";

inline constexpr const char* wrapup =
    R"(Respond with only this JSON object and nothing else:
{"wrapped": true|false, "turn_index": <index of the earliest wrap-up tutor turn, or null>})";

inline constexpr const char* coding_probe =
    R"(Respond with only this JSON object and nothing else:
{"is_coding_project": true|false, "probed_before_technical_work": true|false|null}
Use null for the second field when the project does not involve coding.)";

}  // namespace judge_formats

inline JudgePrompts default_judge_prompts() {
    JudgePrompts p;
    p.fact_extraction =
        "You are cataloguing what a student reveals about themselves in a "
        "tutoring conversation.\nList every concrete fact the student "
        "states about their background, goals, skills, motivation, "
        "interests, or constraints.\n\nQUERY_TYPE: fact_extraction\n\n"
        "BEGIN DIALOGUE\n{dialogue}END DIALOGUE\n\n{format_instructions}\n";
    p.coverage =
        "You are checking which facts about a student were uncovered during "
        "a tutoring conversation.\nA fact counts as covered when the "
        "conversation elicits or states that information.\n\n"
        "QUERY_TYPE: fact_coverage\n\nBEGIN CHECKLIST\n{checklist}END "
        "CHECKLIST\n\nBEGIN DIALOGUE\n{dialogue}END DIALOGUE\n\n"
        "{format_instructions}\n";
    p.wrapup =
        "You are deciding whether the tutor has indicated that the "
        "discussion is over, for example by assigning work and asking the "
        "student to report back.\nOnly tutor turns can wrap up the "
        "conversation.\n\nQUERY_TYPE: wrapup_detection\n\nBEGIN DIALOGUE\n"
        "{dialogue}END DIALOGUE\n\n{format_instructions}\n";
    p.coding_probe =
        "You are checking whether this project involves coding and, if so, "
        "whether the tutor probes the student's coding proficiency before "
        "technical work starts.\n\nQUERY_TYPE: coding_probe\n\n"
        "BEGIN DIALOGUE\n{dialogue}END DIALOGUE\n\n{format_instructions}\n";
    return p;
}

inline JudgePrompts load_judge_prompts(const std::filesystem::path& dir) {
    auto read = [&](const char* name) {
        std::ifstream in(dir / name, std::ios::binary);
        if (!in.good())
            throw std::runtime_error("cannot read judge prompt template " +
                                     (dir / name).string());
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    JudgePrompts p;
    p.fact_extraction = read("fact_extraction.txt");
    p.coverage = read("coverage.txt");
    p.wrapup = read("wrapup.txt");
    p.coding_probe = read("coding_probe.txt");
    return p;
}

namespace detail {

inline void replace_all(std::string& s, const std::string& key,
                        const std::string& value) {
    std::size_t pos = 0;
    while ((pos = s.find(key, pos)) != std::string::npos) {
        s.replace(pos, key.size(), value);
        pos += value.size();
    }
}

inline std::string render_checklist_lines(const FactChecklist& c) {
    std::string out;
    for (const Fact& f : c.facts) {
        std::string flat = f.statement;
        for (char& ch : flat)
            if (ch == '\n' || ch == '\t') ch = ' ';
        out += f.fact_id;
        out += '\t';
        out += flat;
        out += '\n';
    }
    return out;
}

}  // namespace detail

inline std::string render_judge_prompt(std::string prompt_template,
                                       const Dialogue& d,
                                       const std::string& format_instructions,
                                       const FactChecklist* checklist = nullptr) {
    detail::replace_all(prompt_template, "{dialogue}",
                        judgewire::render_dialogue_lines(d));
    detail::replace_all(prompt_template, "{format_instructions}",
                        format_instructions);
    if (checklist)
        detail::replace_all(prompt_template, "{checklist}",
                            detail::render_checklist_lines(*checklist));
    return prompt_template;
}

// --- the four judge-mediated operations ---

struct ChecklistExtraction {
    FactChecklist checklist;
    bool empty_flagged = false;  // judge returned no facts
    int attempts = 1;
};

inline ChecklistExtraction extract_fact_checklist(
    const Dialogue& reference, Agent& judge,
    const JudgePrompts& prompts = default_judge_prompts(),
    const JudgeOptions& opts = {}) {
    if (reference.provenance == Provenance::Simulated)
        throw std::invalid_argument(
            "extract_fact_checklist: reference must be a human_human or "
            "human_ai dialogue");
    auto validator = [](const nlohmann::json& j) -> std::optional<std::string> {
        if (!j.contains("facts") || !j["facts"].is_array())
            return "missing \"facts\" array";
        std::set<std::string> ids;
        for (const auto& f : j["facts"]) {
            if (!f.is_object()) return "facts entries must be objects";
            if (!f.contains("fact_id") || !f["fact_id"].is_string() ||
                f["fact_id"].get<std::string>().empty())
                return "each fact needs a non-empty string fact_id";
            if (!f.contains("statement") || !f["statement"].is_string() ||
                f["statement"].get<std::string>().empty())
                return "each fact needs a non-empty string statement";
            if (!f.contains("category") || !f["category"].is_string() ||
                !parse_fact_category(f["category"].get<std::string>()))
                return "each fact needs a valid category";
            if (!ids.insert(f["fact_id"].get<std::string>()).second)
                return "duplicate fact_id \"" +
                       f["fact_id"].get<std::string>() + "\"";
        }
        return std::nullopt;
    };
    std::string prompt = render_judge_prompt(
        prompts.fact_extraction, reference, judge_formats::fact_extraction);
    JudgeResponse res = ask_judge(judge, prompt, validator, opts);
    ChecklistExtraction out;
    out.attempts = res.attempts;
    out.checklist.source_dialogue_id = reference.id;
    std::set<std::string> seen_statements;
    for (const auto& f : res.parsed["facts"]) {
        Fact fact;
        fact.fact_id = f["fact_id"].get<std::string>();
        fact.statement = f["statement"].get<std::string>();
        fact.category =
            *parse_fact_category(f["category"].get<std::string>());
        if (!seen_statements.insert(fact.statement).second) continue;
        out.checklist.facts.push_back(std::move(fact));
    }
    out.empty_flagged = out.checklist.facts.empty();
    return out;
}

// SingleQuery sends the whole checklist with the dialogue in one ask
// (one call per dialogue); PerFact issues one ask per checklist entry,
// available for ablation.
enum class CoverageMode { SingleQuery, PerFact };

// The judge marks each fact; coverage is recomputed from the flags and
// never taken from any arithmetic the judge reports about itself.
inline CoverageVerdict score_fact_coverage(
    const Dialogue& d, const FactChecklist& checklist, Agent& judge,
    const JudgePrompts& prompts = default_judge_prompts(),
    const JudgeOptions& opts = {},
    CoverageMode mode = CoverageMode::SingleQuery) {
    if (checklist.facts.empty())
        throw std::invalid_argument("score_fact_coverage: empty checklist");
    if (mode == CoverageMode::PerFact) {
        CoverageVerdict v;
        v.attempts = 0;
        int covered = 0;
        for (const Fact& fact : checklist.facts) {
            FactChecklist single;
            single.source_dialogue_id = checklist.source_dialogue_id;
            single.facts = {fact};
            CoverageVerdict one = score_fact_coverage(
                d, single, judge, prompts, opts, CoverageMode::SingleQuery);
            v.attempts += one.attempts;
            v.flags.push_back(one.flags.front());
            if (one.flags.front().second) ++covered;
        }
        v.coverage = static_cast<double>(covered) /
                     static_cast<double>(checklist.facts.size());
        return v;
    }
    std::set<std::string> expected;
    for (const Fact& f : checklist.facts) expected.insert(f.fact_id);
    auto validator =
        [&expected](const nlohmann::json& j) -> std::optional<std::string> {
        if (!j.contains("facts") || !j["facts"].is_array())
            return "missing \"facts\" array";
        std::set<std::string> seen;
        for (const auto& f : j["facts"]) {
            if (!f.is_object() || !f.contains("fact_id") ||
                !f["fact_id"].is_string())
                return "each entry needs a string fact_id";
            if (!f.contains("covered") || !f["covered"].is_boolean())
                return "each entry needs a boolean covered flag";
            std::string id = f["fact_id"].get<std::string>();
            if (!expected.count(id))
                return "unknown fact_id \"" + id + "\"";
            if (!seen.insert(id).second)
                return "duplicate fact_id \"" + id + "\"";
        }
        if (seen.size() != expected.size())
            return "expected " + std::to_string(expected.size()) +
                   " facts, got " + std::to_string(seen.size());
        return std::nullopt;
    };
    std::string prompt = render_judge_prompt(
        prompts.coverage, d, judge_formats::coverage, &checklist);
    JudgeResponse res = ask_judge(judge, prompt, validator, opts);
    std::map<std::string, bool> by_id;
    for (const auto& f : res.parsed["facts"])
        by_id[f["fact_id"].get<std::string>()] = f["covered"].get<bool>();
    CoverageVerdict v;
    v.attempts = res.attempts;
    int covered = 0;
    for (const Fact& f : checklist.facts) {
        bool flag = by_id.at(f.fact_id);
        v.flags.emplace_back(f.fact_id, flag);
        if (flag) ++covered;
    }
    v.coverage =
        static_cast<double>(covered) / static_cast<double>(checklist.facts.size());
    return v;
}

inline WrapupVerdict detect_wrapup(
    const Dialogue& prefix, Agent& judge,
    const JudgePrompts& prompts = default_judge_prompts(),
    const JudgeOptions& opts = {}) {
    bool has_tutor_turn = false;
    for (const Turn& t : prefix.turns)
        if (t.speaker == Speaker::Tutor) has_tutor_turn = true;
    if (!has_tutor_turn)
        throw std::invalid_argument(
            "detect_wrapup: prefix needs at least one tutor turn");
    auto validator =
        [&prefix](const nlohmann::json& j) -> std::optional<std::string> {
        if (!j.contains("wrapped") || !j["wrapped"].is_boolean())
            return "missing boolean \"wrapped\"";
        if (!j["wrapped"].get<bool>()) return std::nullopt;
        if (!j.contains("turn_index") || !j["turn_index"].is_number_integer())
            return "wrapped=true requires an integer turn_index";
        int idx = j["turn_index"].get<int>();
        if (idx < 0 || idx >= static_cast<int>(prefix.turns.size()))
            return "turn_index " + std::to_string(idx) + " out of range";
        if (prefix.turns[idx].speaker != Speaker::Tutor)
            return "turn_index " + std::to_string(idx) +
                   " is not a tutor turn";
        return std::nullopt;
    };
    std::string prompt =
        render_judge_prompt(prompts.wrapup, prefix, judge_formats::wrapup);
    JudgeResponse res = ask_judge(judge, prompt, validator, opts);
    WrapupVerdict v;
    v.attempts = res.attempts;
    v.wrapped = res.parsed["wrapped"].get<bool>();
    if (v.wrapped) v.turn_index = res.parsed["turn_index"].get<int>();
    return v;
}

inline CodingVerdict check_coding_probe(
    const Dialogue& d, Agent& judge,
    const JudgePrompts& prompts = default_judge_prompts(),
    const JudgeOptions& opts = {}) {
    auto validator = [](const nlohmann::json& j) -> std::optional<std::string> {
        if (!j.contains("is_coding_project") ||
            !j["is_coding_project"].is_boolean())
            return "missing boolean \"is_coding_project\"";
        if (!j.contains("probed_before_technical_work"))
            return "missing \"probed_before_technical_work\"";
        const auto& p = j["probed_before_technical_work"];
        if (j["is_coding_project"].get<bool>()) {
            if (!p.is_boolean())
                return "coding projects require a boolean probe verdict";
        } else if (!p.is_null() && !p.is_boolean()) {
            return "probe verdict must be boolean or null";
        }
        return std::nullopt;
    };
    std::string prompt = render_judge_prompt(prompts.coding_probe, d,
                                             judge_formats::coding_probe);
    JudgeResponse res = ask_judge(judge, prompt, validator, opts);
    CodingVerdict v;
    v.attempts = res.attempts;
    v.is_coding_project = res.parsed["is_coding_project"].get<bool>();
    if (v.is_coding_project)
        v.probed_before_technical_work =
            res.parsed["probed_before_technical_work"].get<bool>();
    return v;
}

// One checklist per reference conversation, extracted once and cached
// by content hash so the coverage denominator stays fixed across a
// campaign. Safe for concurrent read/insert.
class ChecklistCache {
  public:
    explicit ChecklistCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    static std::string content_key(const Dialogue& reference,
                                   const std::string& judge_model_id) {
        std::uint64_t h = fnv1a64(serialize_dialogue(reference));
        h = mix_seed(h, fnv1a64(judge_model_id));
        h = mix_seed(h, fnv1a64("checklist-v1"));
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(h));
        return buf;
    }

    FactChecklist get_or_extract(const Dialogue& reference, Agent& judge,
                                 const JudgePrompts& prompts = default_judge_prompts(),
                                 const JudgeOptions& opts = {}) {
        std::string key = content_key(reference, judge.config().model_id);
        {
            std::lock_guard lock(m_);
            auto it = mem_.find(key);
            if (it != mem_.end()) return it->second;
        }
        auto path = dir_ / (key + ".json");
        if (std::filesystem::exists(path)) {
            std::ifstream in(path, std::ios::binary);
            auto j = nlohmann::json::parse(
                std::string(std::istreambuf_iterator<char>(in), {}), nullptr,
                false);
            if (!j.is_discarded()) {
                FactChecklist c = fact_checklist_from_json(j);
                std::lock_guard lock(m_);
                mem_[key] = c;
                return c;
            }
        }
        FactChecklist c =
            extract_fact_checklist(reference, judge, prompts, opts).checklist;
        auto tmp = dir_ / (key + ".tmp");
        {
            std::ofstream out(tmp, std::ios::binary);
            out << fact_checklist_to_json(c).dump(2) << "\n";
        }
        std::filesystem::rename(tmp, path);
        std::lock_guard lock(m_);
        mem_[key] = c;
        return c;
    }

  private:
    std::filesystem::path dir_;
    std::mutex m_;
    std::map<std::string, FactChecklist> mem_;
};

}  // namespace tutorbench
