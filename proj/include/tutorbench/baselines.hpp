#pragma once

// Reference values for the six benchmarks, shipped as editable data:
// human-tutor anchors and the typical off-the-shelf LLM bands used by
// the side-by-side comparison view. These are reference points for
// orientation, not assertions about any particular corpus.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace tutorbench {

enum class BaselinePopulation { HumanTutor, OffTheShelfLLM };

inline const char* to_string(BaselinePopulation p) {
    return p == BaselinePopulation::HumanTutor ? "human_tutor"
                                               : "off_the_shelf_llm";
}

struct BaselineRow {
    std::string metric;
    BaselinePopulation population = BaselinePopulation::HumanTutor;
    double lo = 0.0;
    double hi = 0.0;  // lo == hi for point values
    std::string source_note;
};

inline std::vector<BaselineRow> default_baseline_table() {
    return {
        {"student_talk_time", BaselinePopulation::HumanTutor, 0.30, 0.30,
         "human tutoring reference corpus: students speak about 30% of the words"},
        {"avg_words_per_tutor_turn", BaselinePopulation::HumanTutor, 72.0, 72.0,
         "human tutoring reference corpus: tutors average 72 words per turn"},
        {"mean_questions_per_interrogative_turn", BaselinePopulation::HumanTutor,
         1.5, 1.5,
         "human tutoring reference corpus: 1-2 questions per interrogative turn,"
         " 1.5 on average"},
        {"turns_before_wrapup", BaselinePopulation::HumanTutor, 150.0, 160.0,
         "human tutoring reference corpus: sessions run 150-160 turns"},
        {"background_coverage", BaselinePopulation::OffTheShelfLLM, 0.40, 0.45,
         "off-the-shelf model reference band: 40-45% of known student facts"
         " uncovered"},
        {"coding_check", BaselinePopulation::OffTheShelfLLM, 0.50, 0.80,
         "off-the-shelf model reference band: 50-80% of coding projects get a"
         " proficiency probe"},
    };
}

inline nlohmann::json baseline_table_to_json(
    const std::vector<BaselineRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"metric", r.metric},
                     {"population", to_string(r.population)},
                     {"lo", r.lo},
                     {"hi", r.hi},
                     {"source_note", r.source_note}});
    return j;
}

inline std::vector<BaselineRow> baseline_table_from_json(
    const nlohmann::json& j) {
    std::vector<BaselineRow> rows;
    for (const auto& rj : j) {
        BaselineRow r;
        r.metric = rj.at("metric").get<std::string>();
        r.population = rj.value("population", "human_tutor") ==
                               std::string("off_the_shelf_llm")
                           ? BaselinePopulation::OffTheShelfLLM
                           : BaselinePopulation::HumanTutor;
        r.lo = rj.at("lo").get<double>();
        r.hi = rj.at("hi").get<double>();
        r.source_note = rj.value("source_note", "");
        if (r.source_note.empty())
            throw std::runtime_error("baseline row for \"" + r.metric +
                                     "\" lacks a source note");
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<BaselineRow> load_baseline_table(
    const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good())
        throw std::runtime_error("cannot read baseline file " + path.string());
    return baseline_table_from_json(nlohmann::json::parse(
        std::string(std::istreambuf_iterator<char>(in), {})));
}

}  // namespace tutorbench
