#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include <atomic>
#include <thread>

#include "tutorbench/agents.hpp"
#include "tutorbench/metrics.hpp"

using namespace tutorbench;
using nlohmann::json;

namespace {

AgentConfig scripted(std::vector<std::string> lines) {
    AgentConfig c;
    c.kind = AgentKind::Scripted;
    c.script = std::move(lines);
    return c;
}

AgentConfig mock_cfg(std::uint64_t seed) {
    AgentConfig c;
    c.kind = AgentKind::StochasticMock;
    c.seed = seed;
    return c;
}

struct StubServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit StubServer(httplib::Server::Handler handler) {
        server.Post("/v1/chat/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
    std::string url() const {
        return "http://127.0.0.1:" + std::to_string(port) +
               "/v1/chat/completions";
    }
};

std::string completion_body(const std::string& content) {
    json j;
    j["choices"] = json::array();
    j["choices"].push_back({{"message", {{"role", "assistant"},
                                         {"content", content}}}});
    return j.dump();
}

}  // namespace

TEST_CASE("scripted agent replays then errors") {
    auto agent = make_agent(scripted({"Hello", "Bye"}));
    std::vector<Message> h{{Role::System, "sp"}};
    CHECK(agent->next_turn(h) == "Hello");
    CHECK(agent->next_turn(h) == "Bye");
    CHECK_THROWS_AS(agent->next_turn(h), AgentError);
}

TEST_CASE("stochastic mock is deterministic on identical history") {
    std::vector<Message> h{{Role::System, "sp"}, {Role::User, "question here"}};
    auto a1 = make_agent(mock_cfg(7));
    auto a2 = make_agent(mock_cfg(7));
    CHECK(a1->next_turn(h) == a2->next_turn(h));
    CHECK(a1->next_turn(h) == a1->next_turn(h));
    auto a3 = make_agent(mock_cfg(8));
    CHECK(a1->next_turn(h) != a3->next_turn(h));
    // different history length or last message changes the draw
    std::vector<Message> h2 = h;
    h2.push_back({Role::Assistant, "reply"});
    h2.push_back({Role::User, "other text"});
    CHECK(a1->next_turn(h) != a1->next_turn(h2));
}

TEST_CASE("mock instance salt changes output, same salt does not") {
    std::vector<Message> h{{Role::System, "sp"}};
    auto a = make_agent(mock_cfg(7), 1);
    auto b = make_agent(mock_cfg(7), 1);
    auto c = make_agent(mock_cfg(7), 2);
    CHECK(a->next_turn(h) == b->next_turn(h));
    CHECK(a->next_turn(h) != c->next_turn(h));
}

TEST_CASE("mock word and question distributions hit their targets") {
    AgentConfig c = mock_cfg(99);
    c.mock.words_mean = 25.0;
    c.mock.words_sd_within = 3.0;
    c.mock.question_weights = {0.0, 1.0};  // always exactly one '?'
    auto agent = make_agent(c);
    double words_sum = 0.0;
    int n = 400;
    for (int i = 0; i < n; ++i) {
        std::vector<Message> h{{Role::System, "sp"},
                               {Role::User, "msg " + std::to_string(i)}};
        std::string text = agent->next_turn(h);
        words_sum += word_count(text);
        CHECK(question_mark_count(text) == 1);
    }
    CHECK(words_sum / n == Catch::Approx(25.0).margin(0.5));
}

TEST_CASE("mock clamps word count at one") {
    AgentConfig c = mock_cfg(5);
    c.mock.words_mean = -10.0;
    c.mock.words_sd_within = 1.0;
    auto agent = make_agent(c);
    std::vector<Message> h{{Role::System, "sp"}};
    CHECK(word_count(agent->next_turn(h)) == 1);
}

TEST_CASE("build_history projects both perspectives") {
    Dialogue d;
    d.id = "h";
    d.turns = {{Speaker::Tutor, "T0", 0, {}, {}},
               {Speaker::Student, "S1", 1, {}, {}}};
    auto tutor_view = build_history(d, Speaker::Tutor, "sys");
    REQUIRE(tutor_view.size() == 3);
    CHECK(tutor_view[0] == Message{Role::System, "sys"});
    CHECK(tutor_view[1] == Message{Role::Assistant, "T0"});
    CHECK(tutor_view[2] == Message{Role::User, "S1"});
    auto student_view = build_history(d, Speaker::Student, "sys");
    CHECK(student_view[1] == Message{Role::User, "T0"});
    CHECK(student_view[2] == Message{Role::Assistant, "S1"});
}

TEST_CASE("history round-trips the turn order from either perspective") {
    Dialogue d;
    d.id = "long";
    for (int i = 0; i < 150; ++i)
        d.turns.push_back({i % 2 ? Speaker::Student : Speaker::Tutor,
                           "turn " + std::to_string(i), i, {}, {}});
    for (Speaker view : {Speaker::Tutor, Speaker::Student}) {
        auto h = build_history(d, view, "sys");
        REQUIRE(h.size() == d.turns.size() + 1);
        for (std::size_t i = 1; i < h.size(); ++i) {
            Speaker sp = h[i].role == Role::Assistant ? view : other(view);
            CHECK(sp == d.turns[i - 1].speaker);
            CHECK(h[i].content == d.turns[i - 1].text);
        }
    }
}

TEST_CASE("backoff schedule is non-decreasing") {
    RetryPolicy p{5, 0.25, 2.0};
    CHECK(backoff_delay_s(p, 1) == 0.0);
    CHECK(backoff_delay_s(p, 2) == 0.25);
    CHECK(backoff_delay_s(p, 3) == 0.5);
    CHECK(backoff_delay_s(p, 4) == 1.0);
    double prev = 0.0;
    for (int a = 1; a <= 6; ++a) {
        double d = backoff_delay_s(p, a);
        CHECK(d >= prev);
        prev = d;
    }
}

TEST_CASE("remote agent round trip with exact wire format") {
    std::atomic<int> calls{0};
    json seen_body;
    std::string seen_auth;
    std::mutex m;
    StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        {
            std::lock_guard lock(m);
            seen_body = json::parse(req.body);
            if (req.has_header("Authorization"))
                seen_auth = req.get_header_value("Authorization");
        }
        res.set_content(completion_body("stubbed reply"), "application/json");
    });

    setenv("TB_TEST_TOKEN", "sekrit", 1);
    AgentConfig c;
    c.kind = AgentKind::RemoteChat;
    c.endpoint_url = stub.url();
    c.model_id = "stub-model";
    c.credential_env = "TB_TEST_TOKEN";
    c.temperature = 0.25;
    c.max_output_tokens = 99;
    auto agent = make_agent(c);
    std::vector<Message> h{{Role::System, "sys"},
                           {Role::User, "hello there"}};
    CHECK(agent->next_turn(h) == "stubbed reply");
    CHECK(agent->last_attempts() == 1);
    CHECK(calls == 1);
    std::lock_guard lock(m);
    CHECK(seen_body["model"] == "stub-model");
    CHECK(seen_body["temperature"] == 0.25);
    CHECK(seen_body["max_tokens"] == 99);
    REQUIRE(seen_body["messages"].size() == 2);
    CHECK(seen_body["messages"][0]["role"] == "system");
    CHECK(seen_body["messages"][1]["role"] == "user");
    CHECK(seen_body["messages"][1]["content"] == "hello there");
    CHECK(seen_auth == "Bearer sekrit");
}

TEST_CASE("remote agent retries on server errors then succeeds") {
    std::atomic<int> calls{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        int n = ++calls;
        if (n <= 2) {
            res.status = 500;
            res.set_content("boom", "text/plain");
        } else {
            res.set_content(completion_body("third time lucky"),
                            "application/json");
        }
    });
    AgentConfig c;
    c.kind = AgentKind::RemoteChat;
    c.endpoint_url = stub.url();
    c.model_id = "retry-model";
    c.retry = {3, 0.01, 1.5};
    auto agent = make_agent(c);
    std::vector<Message> h{{Role::System, "s"}, {Role::User, "u"}};
    CHECK(agent->next_turn(h) == "third time lucky");
    CHECK(agent->last_attempts() == 3);
    CHECK(calls == 3);
}

TEST_CASE("remote agent reports status and body excerpt on failure") {
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        res.status = 429;
        res.set_content("rate limited, slow down", "text/plain");
    });
    AgentConfig c;
    c.kind = AgentKind::RemoteChat;
    c.endpoint_url = stub.url();
    c.model_id = "left-behind";
    c.retry = {2, 0.01, 1.0};
    auto agent = make_agent(c);
    std::vector<Message> h{{Role::System, "s"}, {Role::User, "u"}};
    try {
        agent->next_turn(h);
        FAIL("expected AgentError");
    } catch (const AgentError& e) {
        CHECK(e.status() == 429);
        CHECK(e.attempts() == 2);
        CHECK(e.body_excerpt().find("rate limited") != std::string::npos);
    }
}

TEST_CASE("empty model output is retried and then fails") {
    std::atomic<int> calls{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.set_content(completion_body("  "), "application/json");
    });
    AgentConfig c;
    c.kind = AgentKind::RemoteChat;
    c.endpoint_url = stub.url();
    c.model_id = "empty-model";
    c.retry = {2, 0.01, 1.0};
    auto agent = make_agent(c);
    std::vector<Message> h{{Role::System, "s"}, {Role::User, "u"}};
    CHECK_THROWS_WITH(agent->next_turn(h),
                      Catch::Matchers::ContainsSubstring("empty model output"));
    CHECK(calls == 2);
}

TEST_CASE("per-endpoint rate limit caps concurrent requests") {
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        int now = ++in_flight;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {}
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        --in_flight;
        res.set_content(completion_body("ok"), "application/json");
    });
    AgentConfig c;
    c.kind = AgentKind::RemoteChat;
    c.endpoint_url = stub.url();
    c.model_id = "capped";
    c.max_concurrent_requests = 2;
    std::vector<std::thread> workers;
    for (int i = 0; i < 8; ++i) {
        workers.emplace_back([&] {
            auto agent = make_agent(c);
            std::vector<Message> h{{Role::System, "s"}, {Role::User, "u"}};
            CHECK(agent->next_turn(h) == "ok");
        });
    }
    for (auto& w : workers) w.join();
    CHECK(peak.load() <= 2);
}

TEST_CASE("agent config validation lists every problem") {
    AgentConfig c;
    c.kind = AgentKind::RemoteChat;  // missing endpoint + model
    c.temperature = -1.0;
    c.retry.max_attempts = 0;
    auto errors = validate_agent_config(c, "tutor");
    CHECK(errors.size() == 4);
    for (const auto& e : errors)
        CHECK(e.rfind("tutor: ", 0) == 0);
}

TEST_CASE("agent config json round trip") {
    AgentConfig c = mock_cfg(42);
    c.system_prompt = "be a student";
    c.mock.words_mean = 18.5;
    c.mock.words_sd_between = 2.0;
    c.mock.question_weights = {0.5, 0.3, 0.2};
    std::vector<std::string> errors;
    AgentConfig back =
        agent_config_from_json(agent_config_to_json(c), "a", errors);
    CHECK(errors.empty());
    CHECK(back.kind == AgentKind::StochasticMock);
    CHECK(back.seed == c.seed);
    CHECK(back.system_prompt == c.system_prompt);
    CHECK(back.mock.words_mean == 18.5);
    CHECK(back.mock.words_sd_between == 2.0);
    CHECK(back.mock.question_weights == c.mock.question_weights);

    std::vector<std::string> errs2;
    agent_config_from_json(json{{"kind", "nope"}}, "x", errs2);
    CHECK_FALSE(errs2.empty());
}

TEST_CASE("scripted agent loads a script file, one turn per line") {
    auto path = std::filesystem::temp_directory_path() /
                ("tb_script_" + std::to_string(::getpid()) + ".txt");
    std::ofstream(path) << "First line.\nSecond line.\n\n";
    std::vector<std::string> errors;
    AgentConfig c = agent_config_from_json(
        json{{"kind", "scripted"}, {"script_path", path.string()}}, "a",
        errors);
    CHECK(errors.empty());
    REQUIRE(c.script.size() == 2);
    CHECK(c.script[1] == "Second line.");

    std::vector<std::string> errs2;
    agent_config_from_json(
        json{{"kind", "scripted"}, {"script_path", "/no/such/file"}}, "a",
        errs2);
    CHECK_FALSE(errs2.empty());
    std::filesystem::remove(path);
}

TEST_CASE("keyword judge answers wrap-up queries from the prompt") {
    Dialogue d;
    d.id = "kw";
    d.turns = {{Speaker::Tutor, "Let's begin.", 0, {}, {}},
               {Speaker::Student, "Ready.", 1, {}, {}},
               {Speaker::Tutor, "Do part 1 and report back.", 2, {}, {}}};
    std::string prompt = std::string(judgewire::query_type_prefix) +
                         "wrapup_detection\n" + judgewire::dialogue_begin +
                         "\n" + judgewire::render_dialogue_lines(d) +
                         judgewire::dialogue_end + "\n";
    AgentConfig c;
    c.kind = AgentKind::KeywordJudge;
    auto judge = make_agent(c);
    std::vector<Message> h{{Role::System, ""}, {Role::User, prompt}};
    json verdict = json::parse(judge->next_turn(h));
    CHECK(verdict["wrapped"] == true);
    CHECK(verdict["turn_index"] == 2);
}
