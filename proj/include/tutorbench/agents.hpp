#pragma once

// Uniform conversational-agent abstraction. Every student, tutor,
// judge, and optional cleaner is an Agent: a remote chat endpoint, a
// scripted replay, a seeded stochastic mock, or the offline
// keyword-rule judge used for hermetic campaigns and tests.

#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "tutorbench/dialogue.hpp"

namespace tutorbench {

enum class Role { System, User, Assistant };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        default: return "assistant";
    }
}

struct Message {
    Role role = Role::User;
    std::string content;
    bool operator==(const Message&) const = default;
};

struct RetryPolicy {
    int max_attempts = 3;
    double base_backoff_s = 0.5;
    double backoff_multiplier = 2.0;
};

// Delay before retry attempt `attempt` (1-based; attempt 1 has no
// delay). Non-decreasing because the multiplier is >= 1.
inline double backoff_delay_s(const RetryPolicy& p, int attempt) {
    if (attempt <= 1) return 0.0;
    double d = p.base_backoff_s;
    for (int i = 2; i < attempt; ++i) d *= p.backoff_multiplier;
    return d;
}

enum class AgentKind { RemoteChat, Scripted, StochasticMock, KeywordJudge };

inline const char* to_string(AgentKind k) {
    switch (k) {
        case AgentKind::RemoteChat: return "remote_chat";
        case AgentKind::Scripted: return "scripted";
        case AgentKind::StochasticMock: return "stochastic_mock";
        default: return "keyword_judge";
    }
}

// Output model for the stochastic mock: per-turn word count from a
// normal distribution (clamped >= 1 word), plus an optional
// per-instance mean offset so campaigns get dialogue-level variance;
// question marks per turn from a categorical distribution.
struct MockTextModel {
    double words_mean = 20.0;
    double words_sd_within = 4.0;
    double words_sd_between = 0.0;
    std::vector<double> question_weights{0.7, 0.3};  // P(0 '?'), P(1 '?'), ...
    std::vector<std::string> lexicon;                // empty -> builtin
};

struct AgentConfig {
    AgentKind kind = AgentKind::StochasticMock;
    std::string endpoint_url;    // RemoteChat
    std::string model_id;
    std::string system_prompt;
    std::string credential_env;  // env var naming the bearer token
    double temperature = 0.7;
    int max_output_tokens = 1024;
    double request_timeout_s = 60.0;
    RetryPolicy retry;
    int max_concurrent_requests = 4;
    std::optional<std::uint64_t> seed;     // mocks
    std::vector<std::string> script;       // Scripted
    MockTextModel mock;
    std::vector<std::string> judge_keywords;  // KeywordJudge (empty -> builtin)
};

inline std::vector<std::string> validate_agent_config(const AgentConfig& c,
                                                      const std::string& where) {
    std::vector<std::string> errors;
    auto err = [&](const std::string& m) { errors.push_back(where + ": " + m); };
    switch (c.kind) {
        case AgentKind::RemoteChat:
            if (c.endpoint_url.empty()) err("remote_chat requires endpoint_url");
            if (c.model_id.empty()) err("remote_chat requires model_id");
            break;
        case AgentKind::Scripted:
            if (c.script.empty()) err("scripted agent requires a script");
            break;
        case AgentKind::StochasticMock:
            if (!c.seed) err("stochastic_mock requires a seed");
            break;
        case AgentKind::KeywordJudge:
            break;
    }
    if (c.temperature < 0.0) err("temperature must be >= 0");
    if (c.max_output_tokens <= 0) err("max_output_tokens must be positive");
    if (c.request_timeout_s <= 0.0) err("request_timeout_s must be positive");
    if (c.retry.max_attempts <= 0) err("retry.max_attempts must be positive");
    if (c.retry.base_backoff_s <= 0.0) err("retry.base_backoff_s must be positive");
    if (c.retry.backoff_multiplier < 1.0)
        err("retry.backoff_multiplier must be >= 1");
    if (c.max_concurrent_requests <= 0)
        err("max_concurrent_requests must be positive");
    if (!c.mock.question_weights.empty()) {
        double sum = 0.0;
        for (double w : c.mock.question_weights) {
            if (w < 0.0) err("mock.question_weights must be non-negative");
            sum += w;
        }
        if (sum <= 0.0) err("mock.question_weights must not all be zero");
    }
    return errors;
}

class AgentError : public std::runtime_error {
  public:
    AgentError(const std::string& what, int status = 0,
               std::string body_excerpt = {}, int attempts = 0)
        : std::runtime_error(what),
          status_(status),
          body_excerpt_(std::move(body_excerpt)),
          attempts_(attempts) {}
    int status() const { return status_; }
    const std::string& body_excerpt() const { return body_excerpt_; }
    int attempts() const { return attempts_; }

  private:
    int status_;
    std::string body_excerpt_;
    int attempts_;
};

class Agent {
  public:
    virtual ~Agent() = default;
    virtual std::string next_turn(const std::vector<Message>& history) = 0;
    const AgentConfig& config() const { return config_; }
    // attempts used by the most recent next_turn call
    int last_attempts() const { return last_attempts_; }

  protected:
    explicit Agent(AgentConfig cfg) : config_(std::move(cfg)) {}
    AgentConfig config_;
    int last_attempts_ = 1;
};

// System prompt first, then the perspective speaker's turns as
// Assistant and the other speaker's as User, order preserved. This is
// the crosswise projection that lets one transcript drive both agents.
inline std::vector<Message> build_history(const Dialogue& d, Speaker perspective,
                                          const std::string& system_prompt) {
    std::vector<Message> h;
    h.reserve(d.turns.size() + 1);
    h.push_back({Role::System, system_prompt});
    for (const Turn& t : d.turns)
        h.push_back({t.speaker == perspective ? Role::Assistant : Role::User,
                     t.text});
    return h;
}

// --- deterministic hashing / sampling for mocks ---

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
    return (rng() >> 11) * 0x1.0p-53;
}

// Box-Muller on explicit uniforms: bit-stable, unlike
// std::normal_distribution whose algorithm is implementation-defined.
inline double normal_draw(std::mt19937_64& rng) {
    double u1 = uniform01(rng), u2 = uniform01(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline std::size_t categorical_draw(std::mt19937_64& rng,
                                    const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = uniform01(rng) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (x < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
}

inline const std::vector<std::string>& mock_lexicon() {
    static const std::vector<std::string> words{
        "project", "model",  "data",    "idea",   "plan",    "code",
        "paper",   "draft",  "topic",   "result", "step",    "goal",
        "note",    "test",   "chart",   "story",  "method",  "figure",
        "sample",  "review", "outline", "source", "summary", "detail"};
    return words;
}

}  // namespace detail

// --- per-endpoint concurrent-request cap, enforced harness-wide ---

class RateLimiter {
  public:
    explicit RateLimiter(int cap) : cap_(cap) {}

    class Slot {
      public:
        explicit Slot(RateLimiter& l) : limiter_(&l) {
            std::unique_lock lock(l.m_);
            l.cv_.wait(lock, [&] { return l.in_flight_ < l.cap_; });
            ++l.in_flight_;
        }
        ~Slot() {
            std::lock_guard lock(limiter_->m_);
            --limiter_->in_flight_;
            limiter_->cv_.notify_one();
        }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

      private:
        RateLimiter* limiter_;
    };

    void tighten(int cap) {
        std::lock_guard lock(m_);
        cap_ = std::min(cap_, cap);
    }
    int cap() const {
        std::lock_guard lock(m_);
        return cap_;
    }

  private:
    friend class Slot;
    mutable std::mutex m_;
    std::condition_variable cv_;
    int cap_;
    int in_flight_ = 0;
};

// One limiter per endpoint URL; the tightest cap ever requested wins.
inline RateLimiter& endpoint_limiter(const std::string& endpoint_url, int cap) {
    static std::mutex registry_mutex;
    static std::map<std::string, std::unique_ptr<RateLimiter>> registry;
    std::lock_guard lock(registry_mutex);
    auto it = registry.find(endpoint_url);
    if (it == registry.end())
        it = registry.emplace(endpoint_url, std::make_unique<RateLimiter>(cap))
                 .first;
    else
        it->second->tighten(cap);
    return *it->second;
}

namespace detail {

struct EndpointParts {
    std::string base;  // scheme://host[:port]
    std::string path;  // "/..." (never empty)
};

inline EndpointParts split_endpoint(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw AgentError("endpoint_url lacks a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

// JSON POST {model, messages, temperature, max_tokens}; the reply text
// is the first choice's message content. One bearer token header when
// the configured environment variable is set; no other auth schemes.
class RemoteChatAgent : public Agent {
  public:
    explicit RemoteChatAgent(AgentConfig cfg) : Agent(std::move(cfg)) {}

    std::string next_turn(const std::vector<Message>& history) override {
        using nlohmann::json;
        json body;
        body["model"] = config_.model_id;
        body["messages"] = json::array();
        for (const Message& m : history)
            body["messages"].push_back(
                {{"role", to_string(m.role)}, {"content", m.content}});
        body["temperature"] = config_.temperature;
        body["max_tokens"] = config_.max_output_tokens;
        const std::string payload = body.dump();

        auto parts = detail::split_endpoint(config_.endpoint_url);
        RateLimiter& limiter = endpoint_limiter(
            config_.endpoint_url, config_.max_concurrent_requests);

        std::string last_error = "no attempt made";
        int last_status = 0;
        std::string last_body;
        for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
            last_attempts_ = attempt;
            double delay = backoff_delay_s(config_.retry, attempt);
            if (delay > 0.0)
                std::this_thread::sleep_for(
                    std::chrono::duration<double>(delay));
            RateLimiter::Slot slot(limiter);
            httplib::Client client(parts.base);
            client.set_connection_timeout(
                std::chrono::duration<double>(config_.request_timeout_s));
            client.set_read_timeout(
                std::chrono::duration<double>(config_.request_timeout_s));
            httplib::Headers headers;
            if (!config_.credential_env.empty()) {
                if (const char* token =
                        std::getenv(config_.credential_env.c_str()))
                    headers.emplace("Authorization",
                                    std::string("Bearer ") + token);
            }
            auto res = client.Post(parts.path, headers, payload,
                                   "application/json");
            if (!res) {
                last_error = "transport error: " +
                             httplib::to_string(res.error());
                continue;
            }
            last_status = res->status;
            last_body = res->body.substr(0, 200);
            if (res->status < 200 || res->status >= 300) {
                last_error = "endpoint returned status " +
                             std::to_string(res->status);
                continue;
            }
            json j = json::parse(res->body, nullptr, false);
            if (j.is_discarded() || !j.contains("choices") ||
                !j["choices"].is_array() || j["choices"].empty()) {
                last_error = "response body is not a chat completion";
                continue;
            }
            const auto& choice = j["choices"][0];
            if (!choice.contains("message") ||
                !choice["message"].contains("content") ||
                !choice["message"]["content"].is_string()) {
                last_error = "response lacks message content";
                continue;
            }
            std::string content =
                choice["message"]["content"].get<std::string>();
            if (is_blank(content)) {
                last_error = "empty model output";
                continue;
            }
            return content;
        }
        throw AgentError("agent \"" + config_.model_id + "\" failed after " +
                             std::to_string(config_.retry.max_attempts) +
                             " attempts: " + last_error,
                         last_status, last_body, config_.retry.max_attempts);
    }
};

// Replays a fixed script one line per call; errors once exhausted. The
// cursor belongs to this instance, so every dialogue needs its own.
class ScriptedAgent : public Agent {
  public:
    explicit ScriptedAgent(AgentConfig cfg) : Agent(std::move(cfg)) {}

    std::string next_turn(const std::vector<Message>&) override {
        last_attempts_ = 1;
        if (cursor_ >= config_.script.size())
            throw AgentError("script exhausted after " +
                             std::to_string(config_.script.size()) + " turns");
        return config_.script[cursor_++];
    }

  private:
    std::size_t cursor_ = 0;
};

// Deterministic function of (seed, history length, hash of the last
// message): same inputs, bit-identical output.
class StochasticMockAgent : public Agent {
  public:
    StochasticMockAgent(AgentConfig cfg, std::uint64_t instance_salt)
        : Agent(std::move(cfg)) {
        base_seed_ = mix_seed(config_.seed.value_or(0), instance_salt);
        if (config_.mock.words_sd_between > 0.0) {
            std::mt19937_64 rng(mix_seed(base_seed_, 0x0ff5e7u));
            mean_offset_ =
                detail::normal_draw(rng) * config_.mock.words_sd_between;
        }
    }

    std::string next_turn(const std::vector<Message>& history) override {
        last_attempts_ = 1;
        std::uint64_t h =
            fnv1a64(history.empty() ? std::string_view{}
                                    : std::string_view(history.back().content));
        std::mt19937_64 rng(
            mix_seed(mix_seed(base_seed_, history.size()), h));
        const MockTextModel& m = config_.mock;
        double target = m.words_mean + mean_offset_ +
                        detail::normal_draw(rng) * m.words_sd_within;
        int n_words = std::max(1, static_cast<int>(std::llround(target)));
        int n_questions = static_cast<int>(
            detail::categorical_draw(rng, m.question_weights));
        n_questions = std::min(n_questions, n_words);
        const auto& lexicon =
            m.lexicon.empty() ? detail::mock_lexicon() : m.lexicon;
        std::vector<std::string> words(n_words);
        for (int i = 0; i < n_words; ++i)
            words[i] = lexicon[rng() % lexicon.size()];
        // '?' attaches to word ends so the word count stays exact
        std::vector<int> ends(n_words);
        for (int i = 0; i < n_words; ++i) ends[i] = i;
        for (int i = 0; i < n_questions; ++i) {
            std::size_t j = i + rng() % (n_words - i);
            std::swap(ends[i], ends[j]);
        }
        for (int i = 0; i < n_questions; ++i) words[ends[i]] += '?';
        if (n_questions == 0 || words[n_words - 1].back() != '?')
            words[n_words - 1] += '.';
        std::string text;
        for (int i = 0; i < n_words; ++i) {
            if (i) text += ' ';
            text += words[i];
        }
        if (!text.empty()) text[0] = static_cast<char>(
            std::toupper(static_cast<unsigned char>(text[0])));
        return text;
    }

  private:
    std::uint64_t base_seed_ = 0;
    double mean_offset_ = 0.0;
};

// Markers for the machine-readable judge prompts. The judging module
// renders them; the keyword judge (and any test double) parses them.
namespace judgewire {

inline constexpr const char* query_type_prefix = "QUERY_TYPE: ";
inline constexpr const char* dialogue_begin = "BEGIN DIALOGUE";
inline constexpr const char* dialogue_end = "END DIALOGUE";
inline constexpr const char* checklist_begin = "BEGIN CHECKLIST";
inline constexpr const char* checklist_end = "END CHECKLIST";

struct PromptTurn {
    int index = 0;
    std::string speaker;
    std::string text;
};

struct PromptView {
    std::string query_type;
    std::vector<PromptTurn> turns;
    std::vector<std::pair<std::string, std::string>> facts;  // id, statement
};

inline std::string render_dialogue_lines(const Dialogue& d) {
    std::string out;
    for (const Turn& t : d.turns) {
        std::string flat = t.text;
        for (char& c : flat)
            if (c == '\n' || c == '\t') c = ' ';
        out += std::to_string(t.index);
        out += '\t';
        out += to_string(t.speaker);
        out += '\t';
        out += flat;
        out += '\n';
    }
    return out;
}

inline PromptView parse_prompt(const std::string& prompt) {
    PromptView v;
    std::size_t pos = 0;
    bool in_dialogue = false, in_checklist = false;
    while (pos <= prompt.size()) {
        std::size_t nl = prompt.find('\n', pos);
        std::string line = prompt.substr(
            pos, nl == std::string::npos ? prompt.size() - pos : nl - pos);
        pos = nl == std::string::npos ? prompt.size() + 1 : nl + 1;
        if (line.rfind(query_type_prefix, 0) == 0)
            v.query_type = line.substr(std::string(query_type_prefix).size());
        else if (line == dialogue_begin)
            in_dialogue = true;
        else if (line == dialogue_end)
            in_dialogue = false;
        else if (line == checklist_begin)
            in_checklist = true;
        else if (line == checklist_end)
            in_checklist = false;
        else if (in_dialogue) {
            auto t1 = line.find('\t');
            auto t2 = line.find('\t', t1 + 1);
            if (t1 == std::string::npos || t2 == std::string::npos) continue;
            PromptTurn t;
            t.index = std::atoi(line.substr(0, t1).c_str());
            t.speaker = line.substr(t1 + 1, t2 - t1 - 1);
            t.text = line.substr(t2 + 1);
            v.turns.push_back(std::move(t));
        } else if (in_checklist) {
            auto t1 = line.find('\t');
            if (t1 == std::string::npos) continue;
            v.facts.emplace_back(line.substr(0, t1), line.substr(t1 + 1));
        }
        if (nl == std::string::npos) break;
    }
    return v;
}

}  // namespace judgewire

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::set<std::string> word_set(std::string_view text) {
    std::set<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.insert(cur);
    return out;
}

inline const std::vector<std::string>& default_closing_keywords() {
    static const std::vector<std::string> kw{
        "report back",        "good luck",        "see you next",
        "next session",       "wrap up",          "wrapping up",
        "that's all for today", "when you're done", "work on this"};
    return kw;
}

}  // namespace detail

// Deterministic rule-based judge. It understands the judging module's
// prompt wire format and answers every query type with schema-valid
// JSON, which makes campaigns runnable without any network: end
// detection by closing-keyword scan, fact coverage by word inclusion,
// fact extraction by first-person sentence mining, and the coding
// probe by keyword positions.
class KeywordJudgeAgent : public Agent {
  public:
    explicit KeywordJudgeAgent(AgentConfig cfg) : Agent(std::move(cfg)) {}

    std::string next_turn(const std::vector<Message>& history) override {
        last_attempts_ = 1;
        std::string prompt;
        for (auto it = history.rbegin(); it != history.rend(); ++it) {
            if (it->role == Role::User) {
                prompt = it->content;
                break;
            }
        }
        auto view = judgewire::parse_prompt(prompt);
        if (view.query_type == "wrapup_detection") return wrapup(view);
        if (view.query_type == "fact_coverage") return coverage(view);
        if (view.query_type == "fact_extraction") return extraction(view);
        if (view.query_type == "coding_probe") return coding(view);
        throw AgentError("keyword judge: unrecognized query type \"" +
                         view.query_type + "\"");
    }

  private:
    const std::vector<std::string>& keywords() const {
        return config_.judge_keywords.empty()
                   ? detail::default_closing_keywords()
                   : config_.judge_keywords;
    }

    std::string wrapup(const judgewire::PromptView& v) const {
        for (const auto& t : v.turns) {
            if (t.speaker != "tutor") continue;
            std::string low = detail::lower(t.text);
            for (const auto& kw : keywords()) {
                if (low.find(kw) != std::string::npos) {
                    nlohmann::json j{{"wrapped", true}, {"turn_index", t.index}};
                    return j.dump();
                }
            }
        }
        return nlohmann::json{{"wrapped", false},
                              {"turn_index", nullptr}}.dump();
    }

    std::string coverage(const judgewire::PromptView& v) const {
        std::set<std::string> seen;
        for (const auto& t : v.turns) {
            auto ws = detail::word_set(t.text);
            seen.insert(ws.begin(), ws.end());
        }
        nlohmann::json facts = nlohmann::json::array();
        for (const auto& [id, statement] : v.facts) {
            bool covered = true;
            bool any_long = false;
            for (const auto& w : detail::word_set(statement)) {
                if (w.size() < 4) continue;
                any_long = true;
                if (!seen.count(w)) {
                    covered = false;
                    break;
                }
            }
            if (!any_long) {
                covered = false;
                for (const auto& w : detail::word_set(statement))
                    if (seen.count(w)) covered = true;
            }
            facts.push_back({{"fact_id", id}, {"covered", covered}});
        }
        return nlohmann::json{{"facts", facts}}.dump();
    }

    std::string extraction(const judgewire::PromptView& v) const {
        nlohmann::json facts = nlohmann::json::array();
        int n = 0;
        for (const auto& t : v.turns) {
            if (t.speaker != "student") continue;
            std::size_t start = 0;
            for (std::size_t i = 0; i <= t.text.size(); ++i) {
                bool end = i == t.text.size() || t.text[i] == '.' ||
                           t.text[i] == '!' || t.text[i] == '?';
                if (!end) continue;
                std::string sentence = t.text.substr(start, i - start);
                if (i < t.text.size()) sentence += t.text[i];
                start = i + 1;
                std::string low = " " + detail::lower(sentence) + " ";
                bool first_person = low.find(" i ") != std::string::npos ||
                                    low.find(" i'") != std::string::npos ||
                                    low.find(" my ") != std::string::npos;
                if (!first_person) continue;
                while (!sentence.empty() && sentence.front() == ' ')
                    sentence.erase(sentence.begin());
                if (sentence.empty()) continue;
                facts.push_back({{"fact_id", "f" + std::to_string(++n)},
                                 {"statement", sentence},
                                 {"category", categorize(low)}});
            }
        }
        return nlohmann::json{{"facts", facts}}.dump();
    }

    static std::string categorize(const std::string& low) {
        auto has = [&](std::initializer_list<const char*> words) {
            for (const char* w : words)
                if (low.find(w) != std::string::npos) return true;
            return false;
        };
        if (has({"want", "goal", "build", "make", "plan"})) return "goals";
        if (has({"experience", "know", "code", "coding", "python", "trained"}))
            return "skills";
        if (has({"grade", "school", "class", "year"})) return "background";
        if (has({"excited", "love", "because", "motivat"})) return "motivation";
        if (has({"interest", "curious", "like"})) return "interests";
        if (has({"only", "cannot", "can't", "busy", "deadline"}))
            return "constraints";
        return "other";
    }

    std::string coding(const judgewire::PromptView& v) const {
        static const std::vector<std::string> coding_kw{
            "code", "coding", "python", "program", "software",
            "script", "javascript", "algorithm"};
        static const std::vector<std::string> probe_kw{
            "experience", "familiar", "background", "comfortable", "skill"};
        static const std::vector<std::string> tech_kw{
            "```", "write the", "let's write", "import ", "def ",
            "install", "run the"};
        auto contains_any = [](const std::string& low,
                               const std::vector<std::string>& kws) {
            for (const auto& kw : kws)
                if (low.find(kw) != std::string::npos) return true;
            return false;
        };
        bool is_coding = false;
        std::optional<int> probe_idx, tech_idx;
        for (const auto& t : v.turns) {
            std::string low = detail::lower(t.text);
            bool coding_here = contains_any(low, coding_kw);
            if (coding_here) is_coding = true;
            if (!probe_idx && t.speaker == "tutor" && coding_here &&
                contains_any(low, probe_kw))
                probe_idx = t.index;
            if (!tech_idx && contains_any(low, tech_kw)) tech_idx = t.index;
        }
        nlohmann::json j;
        j["is_coding_project"] = is_coding;
        if (!is_coding)
            j["probed_before_technical_work"] = nullptr;
        else
            j["probed_before_technical_work"] =
                probe_idx.has_value() && (!tech_idx || *probe_idx < *tech_idx);
        return j.dump();
    }
};

// instance_salt derives per-dialogue behavior from one config (mock
// agents mix it into their seed); scripted cursors start fresh.
inline std::unique_ptr<Agent> make_agent(const AgentConfig& cfg,
                                         std::uint64_t instance_salt = 0) {
    auto errors = validate_agent_config(cfg, "agent");
    if (!errors.empty()) throw AgentError("invalid agent config: " + errors[0]);
    switch (cfg.kind) {
        case AgentKind::RemoteChat:
            return std::make_unique<RemoteChatAgent>(cfg);
        case AgentKind::Scripted:
            return std::make_unique<ScriptedAgent>(cfg);
        case AgentKind::StochasticMock:
            return std::make_unique<StochasticMockAgent>(cfg, instance_salt);
        default:
            return std::make_unique<KeywordJudgeAgent>(cfg);
    }
}

// Adapts an Agent to the one-prompt callable shape used by hooks like
// the transcript cleaner: each call sends the prompt as a single user
// message on a fresh history under the agent's own system prompt.
inline std::function<std::string(const std::string&)> single_prompt_fn(
    Agent& agent) {
    return [&agent](const std::string& prompt) {
        return agent.next_turn({{Role::System, agent.config().system_prompt},
                                {Role::User, prompt}});
    };
}

// --- config (de)serialization ---

inline nlohmann::json agent_config_to_json(const AgentConfig& c) {
    nlohmann::json j;
    j["kind"] = to_string(c.kind);
    if (!c.endpoint_url.empty()) j["endpoint_url"] = c.endpoint_url;
    if (!c.model_id.empty()) j["model_id"] = c.model_id;
    j["system_prompt"] = c.system_prompt;
    if (!c.credential_env.empty()) j["credential_env"] = c.credential_env;
    j["temperature"] = c.temperature;
    j["max_output_tokens"] = c.max_output_tokens;
    j["request_timeout_s"] = c.request_timeout_s;
    j["retry"] = {{"max_attempts", c.retry.max_attempts},
                  {"base_backoff_s", c.retry.base_backoff_s},
                  {"backoff_multiplier", c.retry.backoff_multiplier}};
    j["max_concurrent_requests"] = c.max_concurrent_requests;
    if (c.seed) j["seed"] = *c.seed;
    if (!c.script.empty()) j["script"] = c.script;
    if (c.kind == AgentKind::StochasticMock) {
        j["mock"] = {{"words_mean", c.mock.words_mean},
                     {"words_sd_within", c.mock.words_sd_within},
                     {"words_sd_between", c.mock.words_sd_between},
                     {"question_weights", c.mock.question_weights}};
        if (!c.mock.lexicon.empty()) j["mock"]["lexicon"] = c.mock.lexicon;
    }
    if (!c.judge_keywords.empty()) j["judge_keywords"] = c.judge_keywords;
    return j;
}

// Collects every problem instead of stopping at the first; `where`
// prefixes messages so campaign validation can name the failing agent.
inline AgentConfig agent_config_from_json(const nlohmann::json& j,
                                          const std::string& where,
                                          std::vector<std::string>& errors) {
    AgentConfig c;
    auto err = [&](const std::string& m) { errors.push_back(where + ": " + m); };
    if (!j.is_object()) {
        err("agent config must be an object");
        return c;
    }
    std::string kind = j.value("kind", "");
    if (kind == "remote_chat")
        c.kind = AgentKind::RemoteChat;
    else if (kind == "scripted")
        c.kind = AgentKind::Scripted;
    else if (kind == "stochastic_mock")
        c.kind = AgentKind::StochasticMock;
    else if (kind == "keyword_judge")
        c.kind = AgentKind::KeywordJudge;
    else
        err("unknown agent kind \"" + kind + "\"");
    c.endpoint_url = j.value("endpoint_url", "");
    c.model_id = j.value("model_id", "");
    c.system_prompt = j.value("system_prompt", "");
    c.credential_env = j.value("credential_env", "");
    c.temperature = j.value("temperature", 0.7);
    c.max_output_tokens = j.value("max_output_tokens", 1024);
    c.request_timeout_s = j.value("request_timeout_s", 60.0);
    if (j.contains("retry")) {
        const auto& r = j["retry"];
        c.retry.max_attempts = r.value("max_attempts", 3);
        c.retry.base_backoff_s = r.value("base_backoff_s", 0.5);
        c.retry.backoff_multiplier = r.value("backoff_multiplier", 2.0);
    }
    c.max_concurrent_requests = j.value("max_concurrent_requests", 4);
    if (j.contains("seed")) {
        if (j["seed"].is_number_unsigned() || j["seed"].is_number_integer())
            c.seed = j["seed"].get<std::uint64_t>();
        else
            err("seed must be an integer");
    }
    if (j.contains("script")) {
        if (j["script"].is_array()) {
            for (const auto& line : j["script"]) {
                if (line.is_string())
                    c.script.push_back(line.get<std::string>());
                else
                    err("script entries must be strings");
            }
        } else {
            err("script must be an array of strings");
        }
    }
    if (j.contains("script_path")) {
        // script file: UTF-8, one turn per line
        if (!j["script_path"].is_string()) {
            err("script_path must be a string");
        } else {
            std::ifstream in(j["script_path"].get<std::string>(),
                             std::ios::binary);
            if (!in.good()) {
                err("cannot read script_path \"" +
                    j["script_path"].get<std::string>() + "\"");
            } else {
                std::string line;
                while (std::getline(in, line)) {
                    if (!line.empty() && line.back() == '\r') line.pop_back();
                    if (!is_blank(line)) c.script.push_back(line);
                }
            }
        }
    }
    if (j.contains("mock")) {
        const auto& m = j["mock"];
        c.mock.words_mean = m.value("words_mean", 20.0);
        c.mock.words_sd_within = m.value("words_sd_within", 4.0);
        c.mock.words_sd_between = m.value("words_sd_between", 0.0);
        if (m.contains("question_weights")) {
            c.mock.question_weights.clear();
            for (const auto& w : m["question_weights"]) {
                if (w.is_number())
                    c.mock.question_weights.push_back(w.get<double>());
                else
                    err("mock.question_weights entries must be numbers");
            }
        }
        if (m.contains("lexicon"))
            for (const auto& w : m["lexicon"])
                if (w.is_string()) c.mock.lexicon.push_back(w.get<std::string>());
    }
    if (j.contains("judge_keywords"))
        for (const auto& kw : j["judge_keywords"])
            if (kw.is_string())
                c.judge_keywords.push_back(kw.get<std::string>());
    for (const auto& e : validate_agent_config(c, where)) errors.push_back(e);
    return c;
}

}  // namespace tutorbench
