// tutorbench CLI: diarize transcripts, compute the six benchmarks, run
// simulation campaigns, and compare conditions.
//
// Exit codes: 0 success, 1 partial/runtime failure, 2 usage/config error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tutorbench/tutorbench.hpp"

namespace fs = std::filesystem;
using namespace tutorbench;

namespace {

struct GlobalOpts {
    std::string config;
    std::string output;
    std::optional<std::int64_t> seed;
    bool quiet = false;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good())
        throw std::runtime_error("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out.good())
        throw std::runtime_error("cannot write " + path.string());
}

int usage_error(const std::string& message) {
    std::cerr << "error: " << message << "\n";
    return 2;
}

// ---------------------------------------------------------------- diarize

struct DiarizeOpts {
    std::vector<std::string> segment_files;
    std::string tracks_file;
    std::string utterances_file;
    std::string id = "session";
    double merge_gap_s = 1.0;
    double fallback_window_s = 2.0;
    bool keep_backchannels = false;
    std::string backchannel_lexicon_file;
    int max_backchannel_words = 3;
    std::string provenance = "human_human";
};

int cmd_diarize(const GlobalOpts& g, const DiarizeOpts& o) {
    if (g.output.empty())
        return usage_error("diarize requires --output DIR");
    auto prov = detail::parse_provenance(o.provenance);
    if (!prov)
        return usage_error("unknown provenance \"" + o.provenance + "\"");

    std::vector<WordSegment> segments;
    for (const auto& file : o.segment_files) {
        try {
            auto parsed = parse_segments(slurp(file));
            segments.insert(segments.end(), parsed.begin(), parsed.end());
        } catch (const ParseError& e) {
            return usage_error(file + ": " + e.what());
        } catch (const std::exception& e) {
            return usage_error(e.what());
        }
    }
    TrackAssignment assignment;
    try {
        assignment = parse_track_assignment(slurp(o.tracks_file));
    } catch (const std::exception& e) {
        return usage_error(o.tracks_file + ": " + std::string(e.what()));
    }

    std::map<std::string, std::vector<WordSegment>> by_track;
    for (auto& s : segments) by_track[s.track_id].push_back(s);
    for (const auto& track : {assignment.tutor_track, assignment.student_track})
        if (!by_track.count(track))
            return usage_error("assignment names track \"" + track +
                               "\" but no segments carry it");

    std::vector<ActivityMask> masks;
    for (const auto& [track, segs] : by_track)
        masks.push_back(build_activity_mask(segs, o.merge_gap_s));

    std::vector<RawUtterance> utterances;
    try {
        utterances = parse_utterances(slurp(o.utterances_file));
    } catch (const ParseError& e) {
        return usage_error(o.utterances_file + ": " + e.what());
    } catch (const std::exception& e) {
        return usage_error(e.what());
    }
    std::stable_sort(utterances.begin(), utterances.end(),
                     [](const RawUtterance& a, const RawUtterance& b) {
                         return a.start_s < b.start_s;
                     });

    DiarizeOptions opts;
    opts.fallback_window_s = o.fallback_window_s;
    opts.time_origin_s = compute_trim_offsets(masks).lead_s;
    opts.dialogue_id = o.id;
    opts.provenance = *prov;
    DiarizeResult result = diarize(utterances, masks, assignment, opts);

    if (!o.keep_backchannels) {
        std::set<std::string> lexicon = default_backchannel_lexicon();
        if (!o.backchannel_lexicon_file.empty()) {
            lexicon.clear();
            std::istringstream in(slurp(o.backchannel_lexicon_file));
            std::string line;
            while (std::getline(in, line))
                if (!is_blank(line)) lexicon.insert(line);
        }
        result.dialogue = remove_backchannels(result.dialogue, lexicon,
                                              o.max_backchannel_words);
        result.dialogue.metadata["cleaning_backchannels"] =
            "removed lexicon=" + std::to_string(lexicon.size()) +
            " max_words=" + std::to_string(o.max_backchannel_words);
    } else {
        result.dialogue.metadata["cleaning_backchannels"] = "kept";
    }
    result.dialogue.metadata["cleaning_merge_gap_s"] =
        format_number(o.merge_gap_s);
    result.dialogue.metadata["cleaning_fallback_window_s"] =
        format_number(o.fallback_window_s);

    auto violations = validate(result.dialogue);
    if (!violations.empty()) {
        for (const auto& v : violations)
            std::cerr << "error: output dialogue invalid: " << v.message
                      << "\n";
        return 1;
    }

    fs::path out_dir(g.output);
    write_file(out_dir / (o.id + ".dialogue.jsonl"),
               serialize_dialogue(result.dialogue));
    write_file(out_dir / (o.id + ".unattributed.jsonl"),
               serialize_unattributed(result.unattributed));

    int words = 0;
    for (const auto& t : result.dialogue.turns) words += word_count(t.text);
    if (!g.quiet)
        std::cout << o.id << ": " << result.dialogue.turns.size()
                  << " turns, " << words << " words, "
                  << result.unattributed.size() << " unattributed\n";
    return 0;
}

// ---------------------------------------------------------------- metrics

struct MetricsOpts {
    std::vector<std::string> inputs;
    bool aggregate = false;
    bool baselines = false;
    std::string baseline_file;
    std::string judge_config_file;
    std::string checklist_file;
    bool include_student_questions = false;
};

std::vector<fs::path> collect_dialogue_files(
    const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    for (const auto& input : inputs) {
        fs::path p(input);
        if (fs::is_directory(p)) {
            for (const auto& entry : fs::recursive_directory_iterator(p))
                if (entry.is_regular_file() &&
                    entry.path().extension() == ".jsonl" &&
                    entry.path().string().find(".unattributed.") ==
                        std::string::npos)
                    files.push_back(entry.path());
        } else if (fs::is_regular_file(p)) {
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

int cmd_metrics(const GlobalOpts& g, const MetricsOpts& o) {
    if (g.output.empty())
        return usage_error("metrics requires --output DIR");
    auto files = collect_dialogue_files(o.inputs);
    if (files.empty()) return usage_error("no dialogues found");

    std::unique_ptr<Agent> judge;
    std::optional<FactChecklist> checklist;
    if (!o.judge_config_file.empty()) {
        std::vector<std::string> errors;
        nlohmann::json j =
            nlohmann::json::parse(slurp(o.judge_config_file), nullptr, false);
        if (j.is_discarded())
            return usage_error(o.judge_config_file + ": malformed JSON");
        AgentConfig cfg = agent_config_from_json(j, "judge", errors);
        if (!errors.empty()) {
            for (const auto& e : errors) std::cerr << "error: " << e << "\n";
            return 2;
        }
        judge = make_agent(cfg);
    }
    if (!o.checklist_file.empty()) {
        try {
            checklist = fact_checklist_from_json(
                nlohmann::json::parse(slurp(o.checklist_file)));
        } catch (const std::exception& e) {
            return usage_error(o.checklist_file + ": " + std::string(e.what()));
        }
    }

    QuestionScope scope = o.include_student_questions
                              ? QuestionScope::AllTurns
                              : QuestionScope::TutorOnly;
    std::vector<MetricReport> reports;
    for (const auto& file : files) {
        Dialogue d;
        try {
            d = parse_dialogue(slurp(file));
        } catch (const ParseError& e) {
            return usage_error(file.string() + ": " + e.what());
        }
        JudgedValues jv;
        if (judge) {
            jv.judge_id = judge->config().model_id;
            bool has_tutor = false;
            for (const auto& t : d.turns)
                if (t.speaker == Speaker::Tutor) has_tutor = true;
            if (has_tutor) {
                try {
                    auto v = detect_wrapup(d, *judge);
                    if (v.wrapped)
                        jv.wrapup_turn_index =
                            MaybeValue<int>::present(*v.turn_index);
                    else
                        jv.wrapup_turn_index =
                            MaybeValue<int>::absent("no wrap-up detected");
                } catch (const std::exception& e) {
                    jv.wrapup_turn_index = MaybeValue<int>::absent(
                        std::string("judge failure: ") + e.what());
                }
            } else {
                jv.wrapup_turn_index =
                    MaybeValue<int>::absent("dialogue has no tutor turns");
            }
            if (checklist && !checklist->facts.empty()) {
                try {
                    jv.background_coverage = MaybeValue<double>::present(
                        score_fact_coverage(d, *checklist, *judge).coverage);
                } catch (const std::exception& e) {
                    jv.background_coverage = MaybeValue<double>::absent(
                        std::string("judge failure: ") + e.what());
                }
            } else {
                jv.background_coverage =
                    MaybeValue<double>::absent("no checklist provided");
            }
            try {
                auto v = check_coding_probe(d, *judge);
                if (v.is_coding_project)
                    jv.coding_check = MaybeValue<bool>::present(
                        *v.probed_before_technical_work);
                else
                    jv.coding_check =
                        MaybeValue<bool>::absent("not a coding project");
            } catch (const std::exception& e) {
                jv.coding_check = MaybeValue<bool>::absent(
                    std::string("judge failure: ") + e.what());
            }
        }
        reports.push_back(compute_report(d, jv, scope));
    }

    std::string jsonl;
    for (const auto& r : reports) {
        jsonl += metric_report_to_json(r).dump();
        jsonl += '\n';
    }
    fs::path out_dir(g.output);
    write_file(out_dir / "metrics.jsonl", jsonl);

    std::string csv = metric_reports_to_csv(reports);
    std::map<std::string, MetricAggregate> aggregates;
    for (const auto& metric : metric_names()) {
        std::vector<std::string> ids;
        std::vector<double> values;
        collect_metric_samples(reports, metric, ids, values);
        if (values.empty()) continue;
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
        aggregates[metric] = agg;
    }
    if (o.aggregate) {
        auto row = [&](const std::string& label, auto getter) {
            std::string line = label;
            for (const auto& metric : metric_names()) {
                line += ',';
                auto it = aggregates.find(metric);
                if (it != aggregates.end()) line += getter(it->second);
            }
            return line + "\n";
        };
        csv += row("mean", [](const MetricAggregate& a) {
            return format_number(a.mean);
        });
        csv += row("ci_low_95", [](const MetricAggregate& a) {
            return a.degenerate ? std::string() : format_number(a.ci_low);
        });
        csv += row("ci_high_95", [](const MetricAggregate& a) {
            return a.degenerate ? std::string() : format_number(a.ci_high);
        });
        csv += row("n", [](const MetricAggregate& a) {
            return std::to_string(a.n);
        });
    }
    write_file(out_dir / "metrics.csv", csv);

    if (o.baselines) {
        std::vector<BaselineRow> table;
        try {
            table = o.baseline_file.empty()
                        ? default_baseline_table()
                        : load_baseline_table(o.baseline_file);
        } catch (const std::exception& e) {
            return usage_error(e.what());
        }
        std::cout << "metric | corpus | baseline | population | note\n";
        for (const auto& row : table) {
            std::string corpus = "-";
            auto it = aggregates.find(row.metric);
            if (it != aggregates.end())
                corpus = format_number(it->second.mean) + " (n=" +
                         std::to_string(it->second.n) + ")";
            std::string band =
                row.lo == row.hi
                    ? format_number(row.lo)
                    : format_number(row.lo) + "-" + format_number(row.hi);
            std::cout << row.metric << " | " << corpus << " | " << band
                      << " | " << to_string(row.population) << " | "
                      << row.source_note << "\n";
        }
    }
    if (!g.quiet)
        std::cout << reports.size() << " dialogues scored -> "
                  << (out_dir / "metrics.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const GlobalOpts& g, bool resume) {
    if (g.config.empty())
        return usage_error("simulate requires --config CAMPAIGN.json");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(slurp(g.config));
    } catch (const std::exception& e) {
        return usage_error(g.config + ": " + std::string(e.what()));
    }
    std::vector<std::string> errors;
    SimulationConfig cfg = simulation_config_from_json(j, errors);
    if (!g.output.empty()) cfg.output_dir = g.output;
    if (g.seed) cfg.campaign_seed = static_cast<std::uint64_t>(*g.seed);
    if (cfg.output_dir.empty())
        errors.push_back("no output directory (config output_dir or --output)");
    if (!errors.empty()) {
        for (const auto& e : errors)
            std::cerr << "config error: " << e << "\n";
        return 2;
    }

    auto dialogues_dir = campaign_dir(cfg) / "dialogues";
    if (!resume && fs::exists(dialogues_dir) &&
        !fs::is_empty(dialogues_dir)) {
        std::cerr << "error: " << campaign_dir(cfg).string()
                  << " already holds dialogues; pass --resume to continue "
                     "it\n";
        return 2;
    }

    ProgressFn progress;
    if (!g.quiet)
        progress = [](int done, int total) {
            std::cout << "cells " << done << "/" << total << " completed\n";
            return true;
        };
    EvalReport report = run_campaign(cfg, progress);

    bool agent_failures = false;
    for (const auto& f : report.failures)
        if (f.kind == "agent_failure") agent_failures = true;
    if (!report.complete || agent_failures) {
        std::cerr << "campaign incomplete or degraded; see "
                  << (campaign_dir(cfg) / "failures.jsonl").string() << "\n";
        return 1;
    }
    if (!g.quiet)
        std::cout << "campaign " << cfg.campaign_id << ": "
                  << report.per_dialogue.size() << " dialogues -> "
                  << (campaign_dir(cfg) / "reports" / "aggregate.json").string()
                  << "\n";
    return 0;
}

// ---------------------------------------------------------------- compare

struct CompareOpts {
    std::vector<std::string> reports;
    std::string metric;
    double alpha = 0.05;
};

int cmd_compare(const GlobalOpts& g, const CompareOpts& o) {
    if (g.output.empty())
        return usage_error("compare requires --output DIR");
    if (o.reports.size() < 2)
        return usage_error("compare requires at least 2 report paths");
    std::vector<LabeledSamples> conditions;
    for (const auto& arg : o.reports) {
        std::string label, path;
        auto eq = arg.find('=');
        if (eq != std::string::npos) {
            label = arg.substr(0, eq);
            path = arg.substr(eq + 1);
        } else {
            path = arg;
        }
        EvalReport report;
        try {
            report = load_eval_report(path);
        } catch (const std::exception& e) {
            return usage_error(path + ": " + std::string(e.what()));
        }
        if (label.empty()) label = report.campaign_id;
        auto samples = samples_for_metric(report, label, o.metric);
        if (samples.values.empty())
            return usage_error("metric \"" + o.metric +
                               "\" absent from report \"" + label + "\"");
        conditions.push_back(std::move(samples));
    }
    ComparisonResult result;
    try {
        result = compare_conditions(conditions, o.metric, o.alpha);
    } catch (const std::exception& e) {
        return usage_error(e.what());
    }

    if (!g.quiet) {
        std::cout << "metric: " << result.metric << "\n";
        std::cout << "anova: F=" << format_number(result.anova.f_stat)
                  << " df=(" << result.anova.df_between << ","
                  << result.anova.df_within
                  << ") p=" << format_number(result.anova.p_value) << "\n";
        if (result.anova.variance_ratio_warning)
            std::cout << "note: group variances differ by more than 10x\n";
        std::cout << "pair | diff | q | p | significant@"
                  << format_number(o.alpha) << "\n";
        for (const auto& p : result.tukey.pairs)
            std::cout << p.label_a << " vs " << p.label_b << " | "
                      << format_number(p.mean_diff) << " | "
                      << format_number(p.q_stat) << " | "
                      << format_number(p.p_value) << " | "
                      << (p.significant ? "yes" : "no") << "\n";
    }

    fs::path out_dir(g.output);
    write_file(out_dir / "comparison.json",
               comparison_to_json(result).dump(2) + "\n");
    write_file(out_dir / "comparison_pairs.csv", comparison_pairs_csv(result));
    write_file(out_dir / "comparison_long.csv", comparison_long_csv(result));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "tutorbench: diarize tutoring transcripts, score the six "
        "conversational benchmarks, run simulated student-tutor campaigns, "
        "and compare conditions"};
    app.set_version_flag("--version", std::string("tutorbench ") + version);
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config,
                   "Campaign or tool configuration file (JSON)");
    app.add_option("--output", g.output, "Output directory");
    app.add_option("--seed", g.seed, "Campaign seed override");
    app.add_flag("--quiet", g.quiet, "Suppress progress and summary output");

    DiarizeOpts d;
    auto* sub_diarize = app.add_subcommand(
        "diarize", "Turn per-track word segments plus an undiarized "
                   "utterance stream into a clean dialogue file");
    sub_diarize->add_option("--segments", d.segment_files,
                            "Per-track word segment files (JSONL)")
        ->required();
    sub_diarize->add_option("--tracks", d.tracks_file,
                            "Track assignment file (JSON)")
        ->required();
    sub_diarize->add_option("--utterances", d.utterances_file,
                            "Undiarized utterance stream (JSONL)")
        ->required();
    sub_diarize->add_option("--id", d.id, "Dialogue id for the output file");
    sub_diarize->add_option("--merge-gap-s", d.merge_gap_s,
                            "Bridge activity-mask gaps up to this many seconds");
    sub_diarize->add_option("--fallback-window-s", d.fallback_window_s,
                            "Nearest-boundary window for zero-overlap "
                            "utterances");
    sub_diarize->add_flag("--keep-backchannels", d.keep_backchannels,
                          "Skip backchannel removal");
    sub_diarize->add_option("--backchannel-lexicon", d.backchannel_lexicon_file,
                            "Backchannel phrases, one per line");
    sub_diarize->add_option("--max-backchannel-words", d.max_backchannel_words,
                            "Length guard for backchannel removal");
    sub_diarize->add_option("--provenance", d.provenance,
                            "human_human, human_ai, or simulated");

    MetricsOpts m;
    auto* sub_metrics = app.add_subcommand(
        "metrics", "Compute the six benchmarks over dialogue files");
    sub_metrics->add_option("--input", m.inputs,
                            "Dialogue files or directories")
        ->required();
    sub_metrics->add_flag("--aggregate", m.aggregate,
                          "Append mean and 95% CI rows to the CSV");
    sub_metrics->add_flag("--baselines", m.baselines,
                          "Print corpus values next to the reference table");
    sub_metrics->add_option("--baseline-file", m.baseline_file,
                            "Baseline table override (JSON)");
    sub_metrics->add_option("--judge", m.judge_config_file,
                            "Judge agent config (JSON) for the judge-mediated "
                            "metrics");
    sub_metrics->add_option("--checklist", m.checklist_file,
                            "Fact checklist (JSON) for coverage scoring");
    sub_metrics->add_flag("--include-student-questions",
                          m.include_student_questions,
                          "Count student turns in the questions metric");

    bool resume = false;
    auto* sub_simulate = app.add_subcommand(
        "simulate", "Run a personas x runs simulation campaign from --config");
    sub_simulate->add_flag("--resume", resume,
                           "Continue a partial campaign in place");

    CompareOpts c;
    auto* sub_compare = app.add_subcommand(
        "compare", "ANOVA + Tukey HSD across campaign reports");
    sub_compare->add_option("reports", c.reports,
                            "Aggregate reports as LABEL=PATH or PATH")
        ->required();
    sub_compare->add_option("--metric", c.metric, "Benchmark to compare")
        ->required();
    sub_compare->add_option("--alpha", c.alpha, "Significance level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sub_diarize->parsed()) return cmd_diarize(g, d);
        if (sub_metrics->parsed()) return cmd_metrics(g, m);
        if (sub_simulate->parsed()) return cmd_simulate(g, resume);
        if (sub_compare->parsed()) return cmd_compare(g, c);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
