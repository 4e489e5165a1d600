#include "rollgen/provider.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "httplib.h"

using json = nlohmann::json;

namespace rollgen {

void token_provider::check_context(const generation_context & ctx) const {
    const std::size_t used = count_prompt_tokens(ctx.prompt) + ctx.tokens.size();
    if (used >= max_context_length()) {
        throw context_overflow("context of " + std::to_string(used) + " tokens reaches the limit of " +
                               std::to_string(max_context_length()));
    }
}

token_id provider_profile::id_of(std::string_view text) const {
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
        if (vocabulary[i] == text) {
            return static_cast<token_id>(i);
        }
    }
    throw std::invalid_argument("token '" + std::string(text) + "' is not in the vocabulary");
}

//
// scripted_model / scripted_provider
//

scripted_model::scripted_model(std::vector<rule> rules, token_distribution fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {
    for (auto & r : rules_) {
        if (r.kind == rule::match::regex) {
            r.compiled = std::regex(r.pattern, std::regex::ECMAScript);
        }
    }
}

const token_distribution & scripted_model::lookup(std::string_view generated_text) const {
    for (const auto & r : rules_) {
        if (r.kind == rule::match::exact) {
            if (generated_text == r.pattern) {
                return r.dist;
            }
        } else if (std::regex_search(generated_text.begin(), generated_text.end(), r.compiled)) {
            return r.dist;
        }
    }
    return fallback_;
}

scripted_provider::scripted_provider(provider_profile profile, std::vector<entry> models)
    : profile_(std::move(profile)), models_(std::move(models)) {
    if (profile_.eos < 0 || static_cast<std::size_t>(profile_.eos) >= profile_.vocabulary.size()) {
        throw std::invalid_argument("scripted provider: eos token outside the vocabulary");
    }
    if (models_.empty()) {
        throw std::invalid_argument("scripted provider: no models");
    }
}

namespace {

token_distribution parse_scripted_dist(const json & j, const provider_profile & profile) {
    if (!j.is_object() || j.empty()) {
        throw std::invalid_argument("scripted provider: a distribution must be a non-empty object");
    }
    std::vector<token_distribution::entry> entries;
    for (const auto & [text, p] : j.items()) {
        entries.push_back({profile.id_of(text), p.get<double>()});
    }
    return token_distribution::from_entries(std::move(entries), profile.vocabulary.size());
}

} // namespace

scripted_provider scripted_provider::from_json(const json & j) {
    provider_profile profile;
    profile.vocabulary         = j.at("vocab").get<std::vector<std::string>>();
    profile.eos                = profile.id_of(j.at("eos").get<std::string>());
    profile.max_context_length = j.value("max_context_length", profile.max_context_length);

    std::vector<entry> models;
    for (const auto & m : j.at("models")) {
        std::vector<scripted_model::rule> rules;
        for (const auto & r : m.value("rules", json::array())) {
            scripted_model::rule rule;
            if (r.contains("exact")) {
                rule.kind    = scripted_model::rule::match::exact;
                rule.pattern = r.at("exact").get<std::string>();
            } else {
                rule.kind    = scripted_model::rule::match::regex;
                rule.pattern = r.at("regex").get<std::string>();
            }
            rule.dist = parse_scripted_dist(r.at("dist"), profile);
            rules.push_back(std::move(rule));
        }
        token_distribution fallback = m.contains("fallback")
                                          ? parse_scripted_dist(m.at("fallback"), profile)
                                          : token_distribution::one_hot(profile.eos, profile.vocabulary.size());
        std::optional<std::string> prompt;
        if (m.contains("prompt")) {
            prompt = m.at("prompt").get<std::string>();
        }
        models.push_back(entry{std::move(prompt), scripted_model(std::move(rules), std::move(fallback))});
    }
    return scripted_provider(std::move(profile), std::move(models));
}

scripted_provider scripted_provider::load(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open scripted provider file '" + path + "'");
    }
    return from_json(json::parse(in));
}

token_distribution scripted_provider::next_distribution(const generation_context & ctx) {
    check_context(ctx);
    for (const auto & m : models_) {
        if (!m.prompt || *m.prompt == ctx.prompt) {
            return m.model.lookup(ctx.generated_text);
        }
    }
    throw std::invalid_argument("scripted provider: no model for this prompt");
}

std::string scripted_provider::token_text(token_id id) const {
    return id == profile_.eos ? std::string() : profile_.vocabulary.at(static_cast<std::size_t>(id));
}

std::size_t scripted_provider::count_prompt_tokens(std::string_view prompt) const {
    std::size_t words = 0;
    bool in_word = false;
    for (const char c : prompt) {
        const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!space && !in_word) {
            ++words;
        }
        in_word = !space;
    }
    return words;
}

//
// remote_provider
//

remote_provider::remote_provider(std::string url, remote_options options) : options_(std::move(options)) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw std::invalid_argument("remote provider: url needs a scheme, got '" + url + "'");
    }
    const auto slash = url.find('/', scheme + 3);
    scheme_host_     = url.substr(0, slash);
    std::string path = slash == std::string::npos ? std::string() : url.substr(slash);
    while (!path.empty() && path.back() == '/') {
        path.pop_back();
    }
    constexpr std::string_view openai_suffix = "/v1/completions";
    if (path.size() >= openai_suffix.size() &&
        path.compare(path.size() - openai_suffix.size(), openai_suffix.size(), openai_suffix) == 0) {
        openai_ = true;
        path_   = path;
    } else {
        path_ = path + "/completion";
    }
    if (options_.top_n == 0) {
        throw std::invalid_argument("remote provider: top_n must be positive");
    }
    eos_ = intern(options_.eos_text);
}

token_id remote_provider::intern(const std::string & text) {
    std::lock_guard<std::mutex> lock(vocab_mutex_);
    if (auto it = ids_.find(text); it != ids_.end()) {
        return it->second;
    }
    const auto id = static_cast<token_id>(vocab_.size());
    vocab_.push_back(text);
    ids_.emplace(text, id);
    return id;
}

std::string remote_provider::token_text(token_id id) const {
    if (id == eos_) {
        return {};
    }
    std::lock_guard<std::mutex> lock(vocab_mutex_);
    return vocab_.at(static_cast<std::size_t>(id));
}

std::size_t remote_provider::count_prompt_tokens(std::string_view prompt) const {
    return (prompt.size() + 3) / 4;
}

std::vector<std::pair<std::string, double>> remote_provider::parse_candidates(const json & body) {
    std::vector<std::pair<std::string, double>> out;

    if (auto it = body.find("completion_probabilities"); it != body.end() && it->is_array() && !it->empty()) {
        const json & step = it->front();
        if (auto top = step.find("top_logprobs"); top != step.end()) {
            for (const auto & c : *top) {
                out.emplace_back(c.at("token").get<std::string>(), c.at("logprob").get<double>());
            }
        } else if (auto probs = step.find("probs"); probs != step.end()) {
            // older llama.cpp servers report probabilities instead of log-probabilities
            for (const auto & c : *probs) {
                const double p = c.at("prob").get<double>();
                if (p > 0.0) {
                    out.emplace_back(c.at("tok_str").get<std::string>(), std::log(p));
                }
            }
        }
    } else if (auto choices = body.find("choices"); choices != body.end() && choices->is_array() && !choices->empty()) {
        const json & logprobs = choices->front().at("logprobs");
        const json & top      = logprobs.at("top_logprobs");
        if (top.is_array() && !top.empty()) {
            for (const auto & [text, lp] : top.front().items()) {
                out.emplace_back(text, lp.get<double>());
            }
        }
    }

    if (out.empty()) {
        throw infrastructure_error("completion response carries no log-probabilities");
    }
    return out;
}

token_distribution remote_provider::next_distribution(const generation_context & ctx) {
    check_context(ctx);

    std::string text(ctx.prompt);
    text += ctx.generated_text;

    json request;
    if (openai_) {
        request = {{"prompt", text}, {"max_tokens", 1}, {"logprobs", options_.top_n}, {"temperature", 0}};
    } else {
        request = {{"prompt", text},
                   {"n_predict", 1},
                   {"n_probs", options_.top_n},
                   {"temperature", 0},
                   {"cache_prompt", true}};
    }
    const std::string payload = request.dump();

    httplib::Client client(scheme_host_);
    client.set_connection_timeout(std::chrono::milliseconds(options_.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(options_.timeout_ms));

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50 << (attempt - 1)));
        }
        auto res = client.Post(path_, payload, "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            if (res->body.find("context") != std::string::npos) {
                throw context_overflow("server rejected the context: " + res->body);
            }
            throw infrastructure_error("completion request failed with status " + std::to_string(res->status));
        }

        json body;
        try {
            body = json::parse(res->body);
        } catch (const json::parse_error & e) {
            throw infrastructure_error(std::string("completion response is not JSON: ") + e.what());
        }

        std::vector<std::pair<token_id, double>> logprobs;
        for (const auto & [token, lp] : parse_candidates(body)) {
            const token_id id = intern(token);
            bool seen = false;
            for (const auto & [existing, _] : logprobs) {
                seen = seen || existing == id;
            }
            if (!seen) {
                logprobs.emplace_back(id, lp);
            }
        }
        std::size_t vocab_size;
        {
            std::lock_guard<std::mutex> lock(vocab_mutex_);
            vocab_size = vocab_.size();
        }
        return token_distribution::from_logprobs(logprobs, vocab_size);
    }
    throw infrastructure_error("completion endpoint unreachable after retries: " + last_error);
}

std::unique_ptr<token_provider> make_provider(std::string_view spec, const remote_options & options) {
    if (spec.starts_with("scripted:")) {
        return std::make_unique<scripted_provider>(scripted_provider::load(std::string(spec.substr(9))));
    }
    if (spec.starts_with("remote:")) {
        return std::make_unique<remote_provider>(std::string(spec.substr(7)), options);
    }
    throw std::invalid_argument("provider must be scripted:<file> or remote:<url>, got '" + std::string(spec) + "'");
}

} // namespace rollgen
