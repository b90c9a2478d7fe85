#pragma once

// Campaign orchestration: the per-dialogue student-tutor loop with
// judge-based end detection, personas x runs execution with bounded
// parallelism, per-cell persistence with resumability, scoring and
// aggregation, and cross-condition statistical comparison.
//
// With deterministic agents and a fixed campaign seed the whole output
// tree is byte-reproducible across parallelism settings and across
// interrupt/resume, because each cell depends only on its derived seed
// and scoring runs sequentially over the sorted cells afterwards.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tutorbench/agents.hpp"
#include "tutorbench/dialogue.hpp"
#include "tutorbench/judging.hpp"
#include "tutorbench/metrics.hpp"
#include "tutorbench/stats.hpp"

namespace tutorbench {

struct PersonaSpec {
    std::string persona_id;
    std::string system_prompt;
    std::optional<FactChecklist> fact_sheet;
    std::string reference_dialogue_id;
};

struct SimulationConfig {
    AgentConfig tutor;
    AgentConfig student;
    AgentConfig end_judge;
    std::optional<AgentConfig> eval_judge;
    std::vector<PersonaSpec> personas;
    int runs_per_persona = 10;
    int max_turns = 200;
    int min_turns_before_end_check = 6;
    int end_check_every_k_turns = 2;
    int parallelism = 1;
    std::uint64_t campaign_seed = 0;
    std::string campaign_id = "campaign";
    std::filesystem::path output_dir;
    bool student_opens = false;
    // cheap pre-filter that forces an immediate end check; the judge
    // still makes the call
    std::vector<std::string> closing_keywords;
};

inline std::vector<std::string> validate_simulation_config(
    const SimulationConfig& c) {
    std::vector<std::string> errors;
    auto append = [&](std::vector<std::string> more) {
        for (auto& e : more) errors.push_back(std::move(e));
    };
    append(validate_agent_config(c.tutor, "tutor"));
    append(validate_agent_config(c.student, "student"));
    append(validate_agent_config(c.end_judge, "end_judge"));
    if (c.eval_judge)
        append(validate_agent_config(*c.eval_judge, "eval_judge"));
    if (c.personas.empty()) errors.push_back("personas must be non-empty");
    std::set<std::string> ids;
    for (const auto& p : c.personas) {
        if (p.persona_id.empty())
            errors.push_back("persona with empty persona_id");
        else if (!ids.insert(p.persona_id).second)
            errors.push_back("duplicate persona_id \"" + p.persona_id + "\"");
    }
    if (c.runs_per_persona <= 0)
        errors.push_back("runs_per_persona must be positive");
    if (c.max_turns <= 0) errors.push_back("max_turns must be positive");
    if (c.min_turns_before_end_check < 0)
        errors.push_back("min_turns_before_end_check must be >= 0");
    if (c.max_turns < c.min_turns_before_end_check)
        errors.push_back("max_turns must be >= min_turns_before_end_check");
    if (c.end_check_every_k_turns <= 0)
        errors.push_back("end_check_every_k_turns must be positive");
    if (c.parallelism <= 0) errors.push_back("parallelism must be positive");
    if (c.campaign_id.empty()) errors.push_back("campaign_id must be non-empty");
    return errors;
}

enum class EndReason { JudgeWrapUp, TurnCap, AgentFailure };

inline const char* to_string(EndReason r) {
    switch (r) {
        case EndReason::JudgeWrapUp: return "judge_wrapup";
        case EndReason::TurnCap: return "turn_cap";
        default: return "agent_failure";
    }
}

struct DialogueOutcome {
    Dialogue dialogue;
    EndReason end_reason = EndReason::TurnCap;
    std::optional<int> wrapup_turn_index;
    std::vector<double> turn_latencies_s;
    std::map<std::string, int> attempts_used;  // role -> total attempts
    std::string failure_message;
};

namespace detail {

inline std::string run_file_stem(int run_index) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04d", run_index);
    return buf;
}

inline std::uint64_t cell_seed(const SimulationConfig& cfg,
                               const PersonaSpec& persona, int run_index) {
    std::uint64_t s = mix_seed(cfg.campaign_seed, fnv1a64(persona.persona_id));
    return mix_seed(s, static_cast<std::uint64_t>(run_index));
}

inline std::string student_system_prompt(const SimulationConfig& cfg,
                                         const PersonaSpec& persona) {
    std::string prompt = persona.system_prompt.empty()
                             ? cfg.student.system_prompt
                             : persona.system_prompt;
    if (persona.fact_sheet && !persona.fact_sheet->facts.empty()) {
        prompt += "\n\nFacts about you:";
        for (const Fact& f : persona.fact_sheet->facts)
            prompt += "\n- " + f.statement;
    }
    return prompt;
}

inline bool contains_closing_keyword(const std::string& text,
                                     const std::vector<std::string>& keywords) {
    const auto& kws =
        keywords.empty() ? detail::default_closing_keywords() : keywords;
    std::string low = detail::lower(text);
    for (const auto& kw : kws)
        if (low.find(kw) != std::string::npos) return true;
    return false;
}

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good())
        throw std::runtime_error("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace detail

inline std::filesystem::path campaign_dir(const SimulationConfig& cfg) {
    return cfg.output_dir / cfg.campaign_id;
}

inline std::filesystem::path dialogue_cell_path(const SimulationConfig& cfg,
                                                const PersonaSpec& persona,
                                                int run_index) {
    return campaign_dir(cfg) / "dialogues" / persona.persona_id /
           (detail::run_file_stem(run_index) + ".jsonl");
}

// Serialized dialogue with the outcome recorded in metadata; the file
// is the spec'd dialogue format, so any tool can read it back.
inline std::string serialize_outcome(const DialogueOutcome& o) {
    Dialogue d = o.dialogue;
    d.metadata["end_reason"] = to_string(o.end_reason);
    if (o.wrapup_turn_index)
        d.metadata["wrapup_turn_index"] = std::to_string(*o.wrapup_turn_index);
    if (!o.failure_message.empty())
        d.metadata["failure_message"] = o.failure_message;
    return serialize_dialogue(d);
}

// Lenient cell loader for resumption: tolerates zero-turn dialogues
// that the strict parser rejects (agent failure before any turn).
inline DialogueOutcome load_outcome(const std::string& bytes) {
    DialogueOutcome o;
    try {
        o.dialogue = parse_dialogue(bytes);
    } catch (const ParseError&) {
        using nlohmann::json;
        auto nl = bytes.find('\n');
        json header = json::parse(bytes.substr(0, nl));
        o.dialogue.id = header.at("id").get<std::string>();
        o.dialogue.provenance =
            detail::parse_provenance(header.at("provenance").get<std::string>())
                .value_or(Provenance::Simulated);
        if (header.contains("metadata"))
            for (auto& [k, v] : header["metadata"].items())
                o.dialogue.metadata[k] = v.get<std::string>();
    }
    auto& md = o.dialogue.metadata;
    std::string reason = md.count("end_reason") ? md.at("end_reason") : "";
    if (reason == "judge_wrapup")
        o.end_reason = EndReason::JudgeWrapUp;
    else if (reason == "agent_failure")
        o.end_reason = EndReason::AgentFailure;
    else
        o.end_reason = EndReason::TurnCap;
    if (md.count("wrapup_turn_index"))
        o.wrapup_turn_index = std::atoi(md.at("wrapup_turn_index").c_str());
    if (md.count("failure_message")) o.failure_message = md.at("failure_message");
    return o;
}

// One simulated conversation: the opener speaks from its system prompt
// alone, then turns alternate crosswise until the end judge detects a
// wrap-up, the turn cap is hit, or an agent fails for good. The
// completed (or partial) dialogue is persisted before returning.
inline DialogueOutcome run_dialogue(const SimulationConfig& cfg,
                                    const PersonaSpec& persona, int run_index) {
    std::uint64_t seed = detail::cell_seed(cfg, persona, run_index);
    AgentConfig student_cfg = cfg.student;
    student_cfg.system_prompt = detail::student_system_prompt(cfg, persona);
    auto tutor = make_agent(cfg.tutor, mix_seed(seed, 1));
    auto student = make_agent(student_cfg, mix_seed(seed, 2));
    auto end_judge = make_agent(cfg.end_judge, mix_seed(seed, 3));

    DialogueOutcome o;
    Dialogue& d = o.dialogue;
    d.id = persona.persona_id + "-r" + detail::run_file_stem(run_index);
    d.provenance = Provenance::Simulated;
    d.metadata["persona_id"] = persona.persona_id;
    d.metadata["run_index"] = std::to_string(run_index);
    d.metadata["seed"] = std::to_string(seed);
    if (!cfg.tutor.model_id.empty())
        d.metadata["tutor_model"] = cfg.tutor.model_id;
    if (!cfg.student.model_id.empty())
        d.metadata["student_model"] = cfg.student.model_id;

    Speaker current = cfg.student_opens ? Speaker::Student : Speaker::Tutor;
    int turns_since_check = 0;
    o.end_reason = EndReason::TurnCap;
    try {
        while (static_cast<int>(d.turns.size()) < cfg.max_turns) {
            Agent& agent = current == Speaker::Tutor ? *tutor : *student;
            auto t0 = std::chrono::steady_clock::now();
            std::string text =
                agent.next_turn(build_history(d, current,
                                              agent.config().system_prompt));
            o.turn_latencies_s.push_back(
                std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count());
            o.attempts_used[current == Speaker::Tutor ? "tutor" : "student"] +=
                agent.last_attempts();
            if (is_blank(text))
                throw AgentError("agent produced a blank turn");
            Turn t;
            t.speaker = current;
            t.text = std::move(text);
            t.index = static_cast<int>(d.turns.size());
            d.turns.push_back(std::move(t));
            bool tutor_spoke = current == Speaker::Tutor;
            current = other(current);
            ++turns_since_check;
            if (static_cast<int>(d.turns.size()) >= cfg.max_turns) break;
            if (!tutor_spoke) continue;
            if (static_cast<int>(d.turns.size()) <
                cfg.min_turns_before_end_check)
                continue;
            bool keyword_hit = detail::contains_closing_keyword(
                d.turns.back().text, cfg.closing_keywords);
            if (!keyword_hit &&
                turns_since_check < cfg.end_check_every_k_turns)
                continue;
            auto verdict = detect_wrapup(d, *end_judge);
            o.attempts_used["end_judge"] += verdict.attempts;
            turns_since_check = 0;
            if (verdict.wrapped) {
                o.end_reason = EndReason::JudgeWrapUp;
                o.wrapup_turn_index = verdict.turn_index;
                break;
            }
        }
    } catch (const std::exception& e) {
        o.end_reason = EndReason::AgentFailure;
        o.failure_message = e.what();
    }
    detail::write_file_atomic(dialogue_cell_path(cfg, persona, run_index),
                              serialize_outcome(o));
    return o;
}

struct FailureRecord {
    std::string persona_id;
    int run_index = 0;
    std::string dialogue_id;
    std::string kind;  // agent_failure | judge_failure | metric_absent
    std::string detail;
};

struct MetricAggregate {
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n = 0;
    bool degenerate = false;  // n < 2: no interval
};

struct EvalReport {
    std::string campaign_id;
    std::vector<MetricReport> per_dialogue;
    std::map<std::string, MetricAggregate> aggregates;
    // metric -> (dialogue ids, values) for the dialogues where present
    std::map<std::string,
             std::pair<std::vector<std::string>, std::vector<double>>>
        samples;
    nlohmann::json config_snapshot;
    std::vector<FailureRecord> failures;
    std::vector<std::string> incomplete_cells;
    bool complete = true;
};

inline nlohmann::json simulation_config_to_json(const SimulationConfig& c) {
    nlohmann::json j;
    j["campaign_id"] = c.campaign_id;
    j["campaign_seed"] = c.campaign_seed;
    j["runs_per_persona"] = c.runs_per_persona;
    j["max_turns"] = c.max_turns;
    j["min_turns_before_end_check"] = c.min_turns_before_end_check;
    j["end_check_every_k_turns"] = c.end_check_every_k_turns;
    j["student_opens"] = c.student_opens;
    if (!c.closing_keywords.empty()) j["closing_keywords"] = c.closing_keywords;
    j["tutor"] = agent_config_to_json(c.tutor);
    j["student"] = agent_config_to_json(c.student);
    j["end_judge"] = agent_config_to_json(c.end_judge);
    if (c.eval_judge) j["eval_judge"] = agent_config_to_json(*c.eval_judge);
    j["personas"] = nlohmann::json::array();
    for (const auto& p : c.personas) {
        nlohmann::json pj;
        pj["persona_id"] = p.persona_id;
        pj["system_prompt"] = p.system_prompt;
        if (!p.reference_dialogue_id.empty())
            pj["reference_dialogue_id"] = p.reference_dialogue_id;
        if (p.fact_sheet) pj["fact_sheet"] = fact_checklist_to_json(*p.fact_sheet);
        j["personas"].push_back(pj);
    }
    return j;
}

inline SimulationConfig simulation_config_from_json(
    const nlohmann::json& j, std::vector<std::string>& errors) {
    SimulationConfig c;
    if (!j.is_object()) {
        errors.push_back("campaign config must be a JSON object");
        return c;
    }
    c.campaign_id = j.value("campaign_id", "campaign");
    c.campaign_seed = j.value("campaign_seed", std::uint64_t{0});
    c.runs_per_persona = j.value("runs_per_persona", 10);
    c.max_turns = j.value("max_turns", 200);
    c.min_turns_before_end_check = j.value("min_turns_before_end_check", 6);
    c.end_check_every_k_turns = j.value("end_check_every_k_turns", 2);
    c.parallelism = j.value("parallelism", 1);
    c.student_opens = j.value("student_opens", false);
    if (j.contains("output_dir"))
        c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("closing_keywords"))
        for (const auto& kw : j["closing_keywords"])
            if (kw.is_string())
                c.closing_keywords.push_back(kw.get<std::string>());
    for (const char* role : {"tutor", "student", "end_judge"}) {
        if (!j.contains(role)) {
            errors.push_back(std::string("missing agent config \"") + role +
                             "\"");
            continue;
        }
        AgentConfig ac = agent_config_from_json(j[role], role, errors);
        if (role == std::string("tutor"))
            c.tutor = ac;
        else if (role == std::string("student"))
            c.student = ac;
        else
            c.end_judge = ac;
    }
    if (j.contains("eval_judge"))
        c.eval_judge = agent_config_from_json(j["eval_judge"], "eval_judge",
                                              errors);
    if (j.contains("personas") && j["personas"].is_array()) {
        for (const auto& pj : j["personas"]) {
            PersonaSpec p;
            p.persona_id = pj.value("persona_id", "");
            p.system_prompt = pj.value("system_prompt", "");
            p.reference_dialogue_id = pj.value("reference_dialogue_id", "");
            if (pj.contains("fact_sheet")) {
                try {
                    p.fact_sheet = fact_checklist_from_json(pj["fact_sheet"]);
                } catch (const std::exception& e) {
                    errors.push_back("persona \"" + p.persona_id +
                                     "\": bad fact_sheet: " + e.what());
                }
            }
            c.personas.push_back(std::move(p));
        }
    }
    for (auto& e : validate_simulation_config(c)) errors.push_back(std::move(e));
    // nested agent validations already ran; drop duplicates
    std::sort(errors.begin(), errors.end());
    errors.erase(std::unique(errors.begin(), errors.end()), errors.end());
    return c;
}

namespace detail {

inline void score_outcome(const SimulationConfig& cfg,
                          const PersonaSpec& persona, int run_index,
                          const DialogueOutcome& outcome, Agent* eval_judge,
                          std::vector<MetricReport>& reports,
                          std::vector<FailureRecord>& failures) {
    JudgedValues jv;
    if (eval_judge) jv.judge_id = eval_judge->config().model_id;
    switch (outcome.end_reason) {
        case EndReason::JudgeWrapUp:
            if (outcome.wrapup_turn_index)
                jv.wrapup_turn_index =
                    MaybeValue<int>::present(*outcome.wrapup_turn_index);
            else
                jv.wrapup_turn_index =
                    MaybeValue<int>::absent("wrap-up index missing");
            break;
        case EndReason::TurnCap:
            jv.wrapup_turn_index =
                MaybeValue<int>::absent("turn cap reached before wrap-up");
            break;
        case EndReason::AgentFailure:
            jv.wrapup_turn_index = MaybeValue<int>::absent(
                "agent failure: " + outcome.failure_message);
            failures.push_back({persona.persona_id, run_index,
                                outcome.dialogue.id, "agent_failure",
                                outcome.failure_message});
            break;
    }
    if (!eval_judge) {
        jv.background_coverage =
            MaybeValue<double>::absent("no eval judge configured");
        jv.coding_check = MaybeValue<bool>::absent("no eval judge configured");
    } else {
        if (!persona.fact_sheet || persona.fact_sheet->facts.empty()) {
            jv.background_coverage =
                MaybeValue<double>::absent("persona has no fact sheet");
        } else if (outcome.dialogue.turns.empty()) {
            jv.background_coverage =
                MaybeValue<double>::absent("dialogue has no turns");
        } else {
            try {
                auto verdict = score_fact_coverage(
                    outcome.dialogue, *persona.fact_sheet, *eval_judge);
                jv.background_coverage =
                    MaybeValue<double>::present(verdict.coverage);
            } catch (const std::exception& e) {
                jv.background_coverage = MaybeValue<double>::absent(
                    std::string("judge failure: ") + e.what());
                failures.push_back({persona.persona_id, run_index,
                                    outcome.dialogue.id, "judge_failure",
                                    e.what()});
            }
        }
        if (outcome.dialogue.turns.empty()) {
            jv.coding_check =
                MaybeValue<bool>::absent("dialogue has no turns");
        } else {
            try {
                auto verdict =
                    check_coding_probe(outcome.dialogue, *eval_judge);
                if (verdict.is_coding_project)
                    jv.coding_check = MaybeValue<bool>::present(
                        *verdict.probed_before_technical_work);
                else
                    jv.coding_check =
                        MaybeValue<bool>::absent("not a coding project");
            } catch (const std::exception& e) {
                jv.coding_check = MaybeValue<bool>::absent(
                    std::string("judge failure: ") + e.what());
                failures.push_back({persona.persona_id, run_index,
                                    outcome.dialogue.id, "judge_failure",
                                    e.what()});
            }
        }
    }
    MetricReport report = compute_report(outcome.dialogue, jv);
    auto note_absent = [&](const char* metric, const std::string& reason) {
        failures.push_back({persona.persona_id, run_index, outcome.dialogue.id,
                            "metric_absent",
                            std::string(metric) + ": " + reason});
    };
    if (!report.student_talk_time.value)
        note_absent("student_talk_time",
                    report.student_talk_time.absence_reason);
    if (!report.avg_words_per_tutor_turn.value)
        note_absent("avg_words_per_tutor_turn",
                    report.avg_words_per_tutor_turn.absence_reason);
    if (!report.mean_questions_per_interrogative_turn.value)
        note_absent("mean_questions_per_interrogative_turn",
                    report.mean_questions_per_interrogative_turn.absence_reason);
    if (!report.turns_before_wrapup.value)
        note_absent("turns_before_wrapup",
                    report.turns_before_wrapup.absence_reason);
    if (!report.background_coverage.value)
        note_absent("background_coverage",
                    report.background_coverage.absence_reason);
    if (!report.coding_check.value)
        note_absent("coding_check", report.coding_check.absence_reason);
    reports.push_back(std::move(report));
}

inline nlohmann::json failure_to_json(const FailureRecord& f) {
    return {{"persona_id", f.persona_id},
            {"run_index", f.run_index},
            {"dialogue_id", f.dialogue_id},
            {"kind", f.kind},
            {"detail", f.detail}};
}

}  // namespace detail

// progress(done, total) is called after every finished cell; returning
// false stops scheduling new cells (in-flight ones complete), leaving a
// valid, resumable campaign directory.
using ProgressFn = std::function<bool(int done, int total)>;

inline EvalReport run_campaign(const SimulationConfig& cfg,
                               const ProgressFn& progress = {}) {
    {
        auto errors = validate_simulation_config(cfg);
        if (!errors.empty())
            throw std::invalid_argument("invalid campaign config: " +
                                        errors.front());
    }
    auto t_start = std::chrono::system_clock::now();
    std::filesystem::create_directories(campaign_dir(cfg) / "dialogues");
    std::filesystem::create_directories(campaign_dir(cfg) / "reports");

    struct Cell {
        int persona_idx;
        int run_index;
    };
    std::vector<Cell> cells;
    for (int p = 0; p < static_cast<int>(cfg.personas.size()); ++p)
        for (int r = 0; r < cfg.runs_per_persona; ++r)
            cells.push_back({p, r});
    const int total = static_cast<int>(cells.size());

    std::atomic<int> next_cell{0};
    std::atomic<int> done{0};
    std::atomic<bool> stop{false};
    std::mutex progress_mutex;
    auto worker = [&] {
        while (!stop.load()) {
            int i = next_cell.fetch_add(1);
            if (i >= total) break;
            const Cell& cell = cells[i];
            const PersonaSpec& persona = cfg.personas[cell.persona_idx];
            auto path = dialogue_cell_path(cfg, persona, cell.run_index);
            if (!std::filesystem::exists(path))
                run_dialogue(cfg, persona, cell.run_index);
            int d = done.fetch_add(1) + 1;
            if (progress) {
                std::lock_guard lock(progress_mutex);
                if (!progress(d, total)) stop.store(true);
            }
        }
    };
    {
        int n_threads = std::min(cfg.parallelism, total);
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    EvalReport report;
    report.campaign_id = cfg.campaign_id;
    report.config_snapshot = simulation_config_to_json(cfg);

    std::unique_ptr<Agent> eval_judge;
    if (cfg.eval_judge)
        eval_judge = make_agent(*cfg.eval_judge, mix_seed(cfg.campaign_seed, 4));

    double latency_total = 0.0;
    long latency_turns = 0;
    for (const Cell& cell : cells) {
        const PersonaSpec& persona = cfg.personas[cell.persona_idx];
        auto path = dialogue_cell_path(cfg, persona, cell.run_index);
        if (!std::filesystem::exists(path)) {
            report.incomplete_cells.push_back(persona.persona_id + "/" +
                                              detail::run_file_stem(
                                                  cell.run_index));
            report.complete = false;
            continue;
        }
        DialogueOutcome outcome = load_outcome(detail::read_file(path));
        for (double s : outcome.turn_latencies_s) {
            latency_total += s;
            ++latency_turns;
        }
        detail::score_outcome(cfg, persona, cell.run_index, outcome,
                              eval_judge.get(), report.per_dialogue,
                              report.failures);
    }

    for (const auto& metric : metric_names()) {
        std::vector<std::string> ids;
        std::vector<double> values;
        collect_metric_samples(report.per_dialogue, metric, ids, values);
        if (values.empty()) continue;
        report.samples[metric] = {ids, values};
        MetricAggregate agg;
        agg.n = static_cast<int>(values.size());
        if (values.size() >= 2) {
            auto ci = stats::mean_ci_t(values, 0.95);
            agg.mean = ci.mean;
            agg.ci_low = ci.ci_low;
            agg.ci_high = ci.ci_high;
        } else {
            agg.mean = agg.ci_low = agg.ci_high = values.front();
            agg.degenerate = true;
        }
        report.aggregates[metric] = agg;
    }

    // reports/metrics.jsonl + metrics.csv (cell order)
    std::string jsonl, csv_body;
    for (const auto& r : report.per_dialogue) {
        jsonl += metric_report_to_json(r).dump();
        jsonl += '\n';
    }
    detail::write_file_atomic(campaign_dir(cfg) / "reports" / "metrics.jsonl",
                              jsonl);
    detail::write_file_atomic(
        campaign_dir(cfg) / "reports" / "metrics.csv",
        metric_reports_to_csv(report.per_dialogue));

    // reports/aggregate.json
    nlohmann::json agg_json;
    agg_json["campaign_id"] = report.campaign_id;
    agg_json["complete"] = report.complete;
    agg_json["incomplete_cells"] = report.incomplete_cells;
    agg_json["confidence"] = 0.95;
    agg_json["aggregates"] = nlohmann::json::object();
    for (const auto& [name, agg] : report.aggregates)
        agg_json["aggregates"][name] = {{"mean", agg.mean},
                                        {"ci_low", agg.ci_low},
                                        {"ci_high", agg.ci_high},
                                        {"n", agg.n},
                                        {"degenerate", agg.degenerate}};
    agg_json["samples"] = nlohmann::json::object();
    for (const auto& [name, s] : report.samples)
        agg_json["samples"][name] = {{"dialogue_ids", s.first},
                                     {"values", s.second}};
    agg_json["config_snapshot"] = report.config_snapshot;
    agg_json["failure_count"] = report.failures.size();
    detail::write_file_atomic(campaign_dir(cfg) / "reports" / "aggregate.json",
                              agg_json.dump(2) + "\n");

    // failures.jsonl (cell order, deterministic)
    std::string failure_lines;
    for (const auto& f : report.failures) {
        failure_lines += detail::failure_to_json(f).dump();
        failure_lines += '\n';
    }
    detail::write_file_atomic(campaign_dir(cfg) / "failures.jsonl",
                              failure_lines);

    // wall-clock only ever lands in the sidecar manifest
    nlohmann::json manifest;
    manifest["started_at_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(
            t_start.time_since_epoch())
            .count();
    manifest["finished_at_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    manifest["mean_turn_latency_s"] =
        latency_turns ? latency_total / latency_turns : 0.0;
    manifest["parallelism"] = cfg.parallelism;
    manifest["cells_total"] = total;
    manifest["cells_completed"] = total -
                                  static_cast<int>(report.incomplete_cells.size());
    detail::write_file_atomic(campaign_dir(cfg) / "run_manifest.json",
                              manifest.dump(2) + "\n");
    return report;
}

// --- cross-condition comparison (the Fig. 5 style analysis) ---

struct LabeledSamples {
    std::string label;
    std::vector<std::string> dialogue_ids;
    std::vector<double> values;
};

struct ComparisonResult {
    std::string metric;
    double alpha = 0.05;
    stats::AnovaResult anova;
    stats::TukeyResult tukey;
    std::vector<LabeledSamples> conditions;
};

inline LabeledSamples samples_for_metric(const EvalReport& report,
                                         const std::string& label,
                                         const std::string& metric) {
    LabeledSamples s;
    s.label = label;
    auto it = report.samples.find(metric);
    if (it != report.samples.end()) {
        s.dialogue_ids = it->second.first;
        s.values = it->second.second;
    }
    return s;
}

inline ComparisonResult compare_conditions(
    const std::vector<LabeledSamples>& conditions, const std::string& metric,
    double alpha = 0.05) {
    if (conditions.size() < 2)
        throw std::invalid_argument(
            "compare_conditions: need at least 2 conditions");
    std::vector<stats::SampleGroup> groups;
    for (const auto& c : conditions) {
        if (c.values.empty())
            throw std::invalid_argument("metric \"" + metric +
                                        "\" is absent everywhere in condition \"" +
                                        c.label + "\"");
        if (c.values.size() < 2)
            throw std::invalid_argument("condition \"" + c.label +
                                        "\" has fewer than 2 samples");
        groups.push_back({c.label, c.values});
    }
    ComparisonResult r;
    r.metric = metric;
    r.alpha = alpha;
    r.anova = stats::one_way_anova(groups);
    r.tukey = stats::tukey_hsd(groups, alpha);
    r.conditions = conditions;
    return r;
}

inline nlohmann::json comparison_to_json(const ComparisonResult& r) {
    nlohmann::json j;
    j["metric"] = r.metric;
    j["alpha"] = r.alpha;
    j["p_value_correction"] = "none; each metric is compared independently";
    j["anova"] = {{"f_stat", r.anova.f_stat},
                  {"p_value", r.anova.p_value},
                  {"df_between", r.anova.df_between},
                  {"df_within", r.anova.df_within},
                  {"group_means", r.anova.group_means},
                  {"grand_mean", r.anova.grand_mean},
                  {"degenerate", r.anova.degenerate},
                  {"variance_ratio_warning", r.anova.variance_ratio_warning}};
    j["tukey"] = nlohmann::json::object();
    j["tukey"]["ms_within"] = r.tukey.ms_within;
    j["tukey"]["df_within"] = r.tukey.df_within;
    j["tukey"]["pairs"] = nlohmann::json::array();
    for (const auto& p : r.tukey.pairs)
        j["tukey"]["pairs"].push_back({{"label_a", p.label_a},
                                       {"label_b", p.label_b},
                                       {"mean_diff", p.mean_diff},
                                       {"q_stat", p.q_stat},
                                       {"p_value", p.p_value},
                                       {"significant", p.significant},
                                       {"degenerate", p.degenerate}});
    return j;
}

inline std::string comparison_pairs_csv(const ComparisonResult& r) {
    std::string out = "label_a,label_b,diff,q,p,significant\n";
    for (const auto& p : r.tukey.pairs) {
        out += csv_escape(p.label_a) + "," + csv_escape(p.label_b) + "," +
               format_number(p.mean_diff) + "," + format_number(p.q_stat) +
               "," + format_number(p.p_value) + "," +
               (p.significant ? "true" : "false") + "\n";
    }
    return out;
}

// Tidy long-format rows for external plotting.
inline std::string comparison_long_csv(const ComparisonResult& r) {
    std::string out = "condition,dialogue_id,metric,value\n";
    for (const auto& c : r.conditions) {
        for (std::size_t i = 0; i < c.values.size(); ++i) {
            std::string id =
                i < c.dialogue_ids.size() ? c.dialogue_ids[i] : "";
            out += csv_escape(c.label) + "," + csv_escape(id) + "," +
                   csv_escape(r.metric) + "," + format_number(c.values[i]) +
                   "\n";
        }
    }
    return out;
}

// Reads the aggregate.json a campaign wrote; enough comes back for
// comparisons and baseline views.
inline EvalReport load_eval_report(const std::filesystem::path& aggregate_path) {
    auto j = nlohmann::json::parse(detail::read_file(aggregate_path));
    EvalReport r;
    r.campaign_id = j.at("campaign_id").get<std::string>();
    r.complete = j.value("complete", true);
    if (j.contains("incomplete_cells"))
        for (const auto& c : j["incomplete_cells"])
            r.incomplete_cells.push_back(c.get<std::string>());
    if (j.contains("aggregates"))
        for (auto& [name, a] : j["aggregates"].items())
            r.aggregates[name] = {a.value("mean", 0.0), a.value("ci_low", 0.0),
                                  a.value("ci_high", 0.0), a.value("n", 0),
                                  a.value("degenerate", false)};
    if (j.contains("samples")) {
        for (auto& [name, s] : j["samples"].items()) {
            std::vector<std::string> ids;
            std::vector<double> values;
            for (const auto& id : s["dialogue_ids"])
                ids.push_back(id.get<std::string>());
            for (const auto& v : s["values"]) values.push_back(v.get<double>());
            r.samples[name] = {std::move(ids), std::move(values)};
        }
    }
    if (j.contains("config_snapshot")) r.config_snapshot = j["config_snapshot"];
    return r;
}

}  // namespace tutorbench
