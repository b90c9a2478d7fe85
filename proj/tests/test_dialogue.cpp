#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>

#include "tutorbench/dialogue.hpp"

using namespace tutorbench;

namespace {

Dialogue random_dialogue(std::mt19937_64& rng, int n_turns,
                         bool alternating = false) {
    static const std::vector<std::string> words{
        "project", "model", "data",  "idea",  "plan",  "code",
        "paper",   "draft", "topic", "how",   "why",   "ok",
        "result",  "step",  "goal?", "note.", "test,", "chart"};
    std::uniform_int_distribution<int> n_words(1, 12);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::uniform_int_distribution<int> coin(0, 1);
    Dialogue d;
    d.id = "fixture";
    d.provenance = Provenance::Simulated;
    Speaker sp = Speaker::Tutor;
    for (int i = 0; i < n_turns; ++i) {
        Turn t;
        t.speaker = alternating ? sp : (coin(rng) ? Speaker::Tutor
                                                  : Speaker::Student);
        sp = other(sp);
        int nw = n_words(rng);
        for (int w = 0; w < nw; ++w) {
            if (w) t.text += ' ';
            t.text += words[pick(rng)];
        }
        t.index = i;
        d.turns.push_back(t);
    }
    return d;
}

// Independent re-merge used as an oracle: group runs of equal speakers
// and join, computed with a different traversal than the library's.
std::vector<std::pair<Speaker, std::string>> brute_force_merge(
    const Dialogue& d) {
    std::vector<std::pair<Speaker, std::string>> out;
    std::size_t i = 0;
    while (i < d.turns.size()) {
        if (is_blank(d.turns[i].text)) {
            ++i;
            continue;
        }
        Speaker sp = d.turns[i].speaker;
        std::string text;
        while (i < d.turns.size() &&
               (d.turns[i].speaker == sp || is_blank(d.turns[i].text))) {
            if (is_blank(d.turns[i].text)) {
                ++i;
                continue;
            }
            if (!text.empty()) text += ' ';
            text += d.turns[i].text;
            ++i;
        }
        out.emplace_back(sp, text);
    }
    return out;
}

}  // namespace

TEST_CASE("parse a two-turn document") {
    std::string doc =
        R"({"id":"d1","provenance":"human_human","metadata":{}})"
        "\n"
        R"({"speaker":"tutor","text":"Hi."})"
        "\n"
        R"({"speaker":"student","text":"Hello."})"
        "\n";
    Dialogue d = parse_dialogue(doc);
    REQUIRE(d.turns.size() == 2);
    CHECK(d.id == "d1");
    CHECK(d.provenance == Provenance::HumanHuman);
    CHECK(d.turns[0].index == 0);
    CHECK(d.turns[0].speaker == Speaker::Tutor);
    CHECK(d.turns[1].index == 1);
    CHECK(d.turns[1].speaker == Speaker::Student);
}

TEST_CASE("unknown speaker label reports the line") {
    std::string doc =
        R"({"id":"d1","provenance":"simulated","metadata":{}})"
        "\n"
        R"({"speaker":"teacher","text":"Hi."})"
        "\n";
    try {
        parse_dialogue(doc);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("teacher") != std::string::npos);
    }
}

TEST_CASE("parse rejects malformed and empty documents") {
    CHECK_THROWS_AS(parse_dialogue(""), ParseError);
    CHECK_THROWS_AS(parse_dialogue("{not json}\n"), ParseError);
    // header but no turns
    CHECK_THROWS_AS(
        parse_dialogue(R"({"id":"x","provenance":"simulated"})" "\n"),
        ParseError);
    // timestamp inversion
    CHECK_THROWS_AS(
        parse_dialogue(
            R"({"id":"x","provenance":"simulated"})" "\n"
            R"({"speaker":"tutor","text":"hi","start_s":5.0,"end_s":1.0})" "\n"),
        ParseError);
}

TEST_CASE("metadata keys preserved through round trip") {
    std::string doc =
        R"({"id":"d2","provenance":"simulated","metadata":{"zeta":"1","alpha":"x","custom_key":"kept"}})"
        "\n"
        R"({"speaker":"tutor","text":"Hi."})"
        "\n";
    Dialogue d = parse_dialogue(doc);
    CHECK(d.metadata.at("custom_key") == "kept");
    Dialogue d2 = parse_dialogue(serialize_dialogue(d));
    CHECK(d2 == d);
}

TEST_CASE("round trip is lossless for canonical dialogues") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 25; ++trial) {
        Dialogue d = merge_consecutive_turns(random_dialogue(rng, 50));
        d.metadata["seed"] = std::to_string(trial);
        std::string s = serialize_dialogue(d);
        Dialogue back = parse_dialogue(s);
        CHECK(back == d);
        CHECK(serialize_dialogue(back) == s);
    }
}

TEST_CASE("serialize(parse(x)) is canonical and stable") {
    std::string doc =
        R"({"id":"d3","provenance":"human_ai","metadata":{"k":"v"}})"
        "\n"
        R"({"speaker":"tutor","text":"One.","start_s":0.5,"end_s":1.25})"
        "\n"
        R"({"speaker":"student","text":"Two."})"
        "\n";
    std::string once = serialize_dialogue(parse_dialogue(doc));
    std::string twice = serialize_dialogue(parse_dialogue(once));
    CHECK(once == twice);
}

TEST_CASE("merge concatenates consecutive same-speaker turns") {
    Dialogue d;
    d.id = "m";
    d.turns = {{Speaker::Tutor, "Hi.", 0, {}, {}},
               {Speaker::Tutor, "Ready?", 1, {}, {}},
               {Speaker::Student, "Yes.", 2, {}, {}}};
    Dialogue m = merge_consecutive_turns(d);
    REQUIRE(m.turns.size() == 2);
    CHECK(m.turns[0].text == "Hi. Ready?");
    CHECK(m.turns[0].speaker == Speaker::Tutor);
    CHECK(m.turns[1].text == "Yes.");
    CHECK(m.turns[0].index == 0);
    CHECK(m.turns[1].index == 1);
}

TEST_CASE("merge keeps an already-alternating dialogue intact") {
    std::mt19937_64 rng(1);
    Dialogue d = random_dialogue(rng, 20, /*alternating=*/true);
    CHECK(merge_consecutive_turns(d) == d);
}

TEST_CASE("merge is idempotent and conserves words") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        Dialogue d = random_dialogue(rng, 100);
        Dialogue m1 = merge_consecutive_turns(d);
        CHECK(merge_consecutive_turns(m1) == m1);
        CHECK(is_canonical(m1));

        int before = 0, after = 0;
        for (const auto& t : d.turns) before += word_count(t.text);
        for (const auto& t : m1.turns) after += word_count(t.text);
        CHECK(before == after);

        auto oracle = brute_force_merge(d);
        REQUIRE(oracle.size() == m1.turns.size());
        for (std::size_t i = 0; i < oracle.size(); ++i) {
            CHECK(oracle[i].first == m1.turns[i].speaker);
            CHECK(oracle[i].second == m1.turns[i].text);
        }
    }
}

TEST_CASE("merge drops whitespace-only turns") {
    Dialogue d;
    d.id = "w";
    d.turns = {{Speaker::Tutor, "Hello.", 0, {}, {}},
               {Speaker::Student, "  \t ", 1, {}, {}},
               {Speaker::Tutor, "Still me.", 2, {}, {}}};
    Dialogue m = merge_consecutive_turns(d);
    REQUIRE(m.turns.size() == 1);
    CHECK(m.turns[0].text == "Hello. Still me.");
}

TEST_CASE("merge carries the time span") {
    Dialogue d;
    d.id = "t";
    d.turns = {{Speaker::Tutor, "a", 0, 1.0, 2.0},
               {Speaker::Tutor, "b", 1, 2.5, 3.5},
               {Speaker::Student, "c", 2, 4.0, 5.0}};
    Dialogue m = merge_consecutive_turns(d);
    REQUIRE(m.turns.size() == 2);
    CHECK(m.turns[0].start_s == 1.0);
    CHECK(m.turns[0].end_s == 3.5);
}

TEST_CASE("word_count examples") {
    CHECK(word_count("") == 0);
    CHECK(word_count("Hi! What are you hoping to build?") == 7);
    CHECK(word_count("a  b\tc\n") == 3);
    CHECK(word_count("   \t\n") == 0);
    // U+00A0 no-break space and U+3000 ideographic space split words
    CHECK(word_count("a\xC2\xA0 b") == 2);
    CHECK(word_count("\xE3\x80\x80x\xE3\x80\x80y") == 2);
}

TEST_CASE("word_count is additive over a space join") {
    std::mt19937_64 rng(5);
    Dialogue d = random_dialogue(rng, 40);
    for (std::size_t i = 0; i + 1 < d.turns.size(); i += 2) {
        const std::string& a = d.turns[i].text;
        const std::string& b = d.turns[i + 1].text;
        CHECK(word_count(a + " " + b) == word_count(a) + word_count(b));
    }
}

TEST_CASE("validate reports every violation") {
    Dialogue ok;
    ok.id = "v";
    ok.turns = {{Speaker::Tutor, "Hi.", 0, {}, {}},
                {Speaker::Student, "Hello.", 1, {}, {}}};
    CHECK(validate(ok).empty());

    Dialogue bad;
    bad.id = "v2";
    bad.turns = {{Speaker::Tutor, "Hi.", 0, 5.0, 1.0},
                 {Speaker::Student, "  ", 2, {}, {}}};
    auto violations = validate(bad);
    REQUIRE(violations.size() == 3);
    bool saw_inversion = false, saw_empty = false, saw_indices = false;
    for (const auto& v : violations) {
        if (v.message.find("inversion") != std::string::npos) {
            saw_inversion = true;
            CHECK(v.turn_index == 0);
        }
        if (v.message.find("empty") != std::string::npos) saw_empty = true;
        if (v.message.find("non-contiguous") != std::string::npos)
            saw_indices = true;
    }
    CHECK(saw_inversion);
    CHECK(saw_empty);
    CHECK(saw_indices);
}
