#pragma once

// The six per-dialogue benchmarks: student talk time, average words
// per tutor turn, mean questions per interrogative turn, turns before
// wrap-up, background coverage, and the coding-skill probe check. The
// first three are pure text functions; the last three take values
// produced by the judging module.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tutorbench/dialogue.hpp"

namespace tutorbench {

class MetricError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fraction of all words uttered by the student.
inline double student_talk_time(const Dialogue& d) {
    long total = 0, student = 0;
    for (const Turn& t : d.turns) {
        int w = word_count(t.text);
        total += w;
        if (t.speaker == Speaker::Student) student += w;
    }
    if (total == 0) throw MetricError("dialogue has zero words");
    return static_cast<double>(student) / static_cast<double>(total);
}

inline double avg_words_per_tutor_turn(const Dialogue& d) {
    long words = 0, turns = 0;
    for (const Turn& t : d.turns) {
        if (t.speaker != Speaker::Tutor) continue;
        words += word_count(t.text);
        ++turns;
    }
    if (turns == 0) throw MetricError("dialogue has zero tutor turns");
    return static_cast<double>(words) / static_cast<double>(turns);
}

enum class QuestionScope { TutorOnly, AllTurns };

inline int question_mark_count(std::string_view text) {
    int n = 0;
    for (char c : text)
        if (c == '?') ++n;
    return n;
}

// An interrogative turn contains at least one '?'. Returns the mean
// '?' count over interrogative turns, or nullopt when there are none.
// Defaults to tutor turns only (the benchmark characterizes tutor
// questioning style); the student-inclusive variant is a scope switch.
inline std::optional<double> mean_questions_per_interrogative_turn(
    const Dialogue& d, QuestionScope scope = QuestionScope::TutorOnly) {
    long questions = 0, interrogative_turns = 0;
    for (const Turn& t : d.turns) {
        if (scope == QuestionScope::TutorOnly && t.speaker != Speaker::Tutor)
            continue;
        int q = question_mark_count(t.text);
        if (q > 0) {
            questions += q;
            ++interrogative_turns;
        }
    }
    if (interrogative_turns == 0) return std::nullopt;
    return static_cast<double>(questions) /
           static_cast<double>(interrogative_turns);
}

// Count of turns strictly before the wrap-up turn (the wrap-up turn
// itself is excluded); absent wrap-up propagates.
inline std::optional<int> turns_before_wrapup(
    const Dialogue& d, std::optional<int> wrapup_turn_index) {
    if (!wrapup_turn_index) return std::nullopt;
    if (*wrapup_turn_index < 0 ||
        *wrapup_turn_index >= static_cast<int>(d.turns.size()))
        throw MetricError("wrap-up turn index " +
                          std::to_string(*wrapup_turn_index) +
                          " out of range");
    return *wrapup_turn_index;
}

template <class T>
struct MaybeValue {
    std::optional<T> value;
    std::string absence_reason;  // set iff value is absent

    static MaybeValue present(T v) { return {v, {}}; }
    static MaybeValue absent(std::string reason) {
        return {std::nullopt, std::move(reason)};
    }
};

// Judge-mediated values feeding a MetricReport; reasons explain every
// absence (no judge configured, turn cap hit, malformed output, ...).
struct JudgedValues {
    MaybeValue<int> wrapup_turn_index =
        MaybeValue<int>::absent("no end-detection result");
    MaybeValue<double> background_coverage =
        MaybeValue<double>::absent("no judge configured");
    MaybeValue<bool> coding_check =
        MaybeValue<bool>::absent("no judge configured");
    std::string judge_id;
};

struct MetricReport {
    std::string dialogue_id;
    MaybeValue<double> student_talk_time;
    MaybeValue<double> avg_words_per_tutor_turn;
    MaybeValue<double> mean_questions_per_interrogative_turn;
    MaybeValue<int> turns_before_wrapup;
    MaybeValue<double> background_coverage;
    MaybeValue<bool> coding_check;
    // conventions and configuration identifiers recorded with the run
    std::map<std::string, std::string> config;
};

// Assembles all six metrics. Canonicalizes defensively (words-per-turn
// is meaningless over consecutive same-speaker turns) and notes when
// that changed the turn count. Per-metric failures become
// absent-with-reason, never a batch failure.
inline MetricReport compute_report(const Dialogue& dialogue,
                                   const JudgedValues& judged,
                                   QuestionScope scope = QuestionScope::TutorOnly) {
    Dialogue d = merge_consecutive_turns(dialogue);
    MetricReport r;
    r.dialogue_id = d.id;
    r.config["question_scope"] =
        scope == QuestionScope::TutorOnly ? "tutor_only" : "all_turns";
    r.config["wrapup_convention"] = "excludes_wrapup_turn";
    if (d.turns.size() != dialogue.turns.size())
        r.config["canonicalized"] =
            std::to_string(dialogue.turns.size()) + "_turns_to_" +
            std::to_string(d.turns.size());
    if (!judged.judge_id.empty()) r.config["judge_id"] = judged.judge_id;
    // the cleaning configuration a dialogue was produced under travels
    // with it; reports record it so values stay interpretable
    for (const auto& [k, v] : d.metadata)
        if (k.rfind("cleaning_", 0) == 0) r.config[k] = v;

    try {
        r.student_talk_time =
            MaybeValue<double>::present(student_talk_time(d));
    } catch (const MetricError& e) {
        r.student_talk_time = MaybeValue<double>::absent(e.what());
    }
    try {
        r.avg_words_per_tutor_turn =
            MaybeValue<double>::present(avg_words_per_tutor_turn(d));
    } catch (const MetricError& e) {
        r.avg_words_per_tutor_turn = MaybeValue<double>::absent(e.what());
    }
    if (auto q = mean_questions_per_interrogative_turn(d, scope))
        r.mean_questions_per_interrogative_turn =
            MaybeValue<double>::present(*q);
    else
        r.mean_questions_per_interrogative_turn =
            MaybeValue<double>::absent("no interrogative turns");

    if (judged.wrapup_turn_index.value) {
        try {
            auto n = turns_before_wrapup(d, judged.wrapup_turn_index.value);
            r.turns_before_wrapup = MaybeValue<int>::present(*n);
        } catch (const MetricError& e) {
            r.turns_before_wrapup = MaybeValue<int>::absent(e.what());
        }
    } else {
        r.turns_before_wrapup =
            MaybeValue<int>::absent(judged.wrapup_turn_index.absence_reason);
    }
    if (judged.background_coverage.value &&
        (*judged.background_coverage.value < 0.0 ||
         *judged.background_coverage.value > 1.0))
        r.background_coverage =
            MaybeValue<double>::absent("coverage outside [0, 1]");
    else
        r.background_coverage = judged.background_coverage;
    r.coding_check = judged.coding_check;
    return r;
}

// --- serialization: JSON object per dialogue, CSV with the benchmark
// columns in their canonical order ---

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{
        "student_talk_time",
        "avg_words_per_tutor_turn",
        "mean_questions_per_interrogative_turn",
        "turns_before_wrapup",
        "background_coverage",
        "coding_check"};
    return names;
}

namespace detail {

template <class T>
void put_metric(nlohmann::json& j, const std::string& name,
                const MaybeValue<T>& m) {
    if (m.value) {
        j[name] = *m.value;
    } else {
        j[name] = nullptr;
        j["absence_reasons"][name] = m.absence_reason;
    }
}

}  // namespace detail

inline nlohmann::json metric_report_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["dialogue_id"] = r.dialogue_id;
    detail::put_metric(j, "student_talk_time", r.student_talk_time);
    detail::put_metric(j, "avg_words_per_tutor_turn",
                       r.avg_words_per_tutor_turn);
    detail::put_metric(j, "mean_questions_per_interrogative_turn",
                       r.mean_questions_per_interrogative_turn);
    detail::put_metric(j, "turns_before_wrapup", r.turns_before_wrapup);
    detail::put_metric(j, "background_coverage", r.background_coverage);
    detail::put_metric(j, "coding_check", r.coding_check);
    j["config"] = r.config;
    return j;
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.dialogue_id = j.at("dialogue_id").get<std::string>();
    auto reason = [&](const char* name) -> std::string {
        if (j.contains("absence_reasons") &&
            j["absence_reasons"].contains(name))
            return j["absence_reasons"][name].get<std::string>();
        return "absent";
    };
    auto num = [&](const char* name) {
        return j.contains(name) && j[name].is_number()
                   ? MaybeValue<double>::present(j[name].get<double>())
                   : MaybeValue<double>::absent(reason(name));
    };
    r.student_talk_time = num("student_talk_time");
    r.avg_words_per_tutor_turn = num("avg_words_per_tutor_turn");
    r.mean_questions_per_interrogative_turn =
        num("mean_questions_per_interrogative_turn");
    r.turns_before_wrapup =
        j.contains("turns_before_wrapup") && j["turns_before_wrapup"].is_number()
            ? MaybeValue<int>::present(j["turns_before_wrapup"].get<int>())
            : MaybeValue<int>::absent(reason("turns_before_wrapup"));
    r.background_coverage = num("background_coverage");
    r.coding_check =
        j.contains("coding_check") && j["coding_check"].is_boolean()
            ? MaybeValue<bool>::present(j["coding_check"].get<bool>())
            : MaybeValue<bool>::absent(reason("coding_check"));
    if (j.contains("config"))
        for (auto& [k, v] : j["config"].items())
            r.config[k] = v.get<std::string>();
    return r;
}

// Shortest round-trip decimal form, used everywhere a number lands in
// a CSV cell so outputs stay byte-deterministic.
inline std::string format_number(double v) {
    nlohmann::json j = v;
    return j.dump();
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string metric_reports_to_csv(std::span<const MetricReport> reports) {
    std::string out = "dialogue_id";
    for (const auto& name : metric_names()) out += "," + name;
    out += '\n';
    for (const auto& r : reports) {
        out += csv_escape(r.dialogue_id);
        auto cell = [&](const auto& m) {
            out += ',';
            if (m.value) {
                using V = std::decay_t<decltype(*m.value)>;
                if constexpr (std::is_same_v<V, bool>)
                    out += *m.value ? "true" : "false";
                else if constexpr (std::is_same_v<V, int>)
                    out += std::to_string(*m.value);
                else
                    out += format_number(*m.value);
            }
        };
        cell(r.student_talk_time);
        cell(r.avg_words_per_tutor_turn);
        cell(r.mean_questions_per_interrogative_turn);
        cell(r.turns_before_wrapup);
        cell(r.background_coverage);
        cell(r.coding_check);
        out += '\n';
    }
    return out;
}

// Numeric view of one metric across reports (coding_check maps to 0/1
// so it aggregates as a rate). Returns dialogue ids and values for the
// reports where the metric is present.
inline void collect_metric_samples(std::span<const MetricReport> reports,
                                   const std::string& metric,
                                   std::vector<std::string>& ids,
                                   std::vector<double>& values) {
    for (const auto& r : reports) {
        std::optional<double> v;
        if (metric == "student_talk_time")
            v = r.student_talk_time.value;
        else if (metric == "avg_words_per_tutor_turn")
            v = r.avg_words_per_tutor_turn.value;
        else if (metric == "mean_questions_per_interrogative_turn")
            v = r.mean_questions_per_interrogative_turn.value;
        else if (metric == "turns_before_wrapup") {
            if (r.turns_before_wrapup.value)
                v = static_cast<double>(*r.turns_before_wrapup.value);
        } else if (metric == "background_coverage")
            v = r.background_coverage.value;
        else if (metric == "coding_check") {
            if (r.coding_check.value) v = *r.coding_check.value ? 1.0 : 0.0;
        } else
            throw std::invalid_argument("unknown metric \"" + metric + "\"");
        if (v) {
            ids.push_back(r.dialogue_id);
            values.push_back(*v);
        }
    }
}

}  // namespace tutorbench
