#pragma once

#include "rollgen/decoding.hpp"
#include "rollgen/report.hpp"

#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace rollgen {

// What the provider sees for one step: the prompt, then the generated tokens.
struct generation_context {
    std::string_view prompt;
    std::span<const token_id> tokens;
    std::string_view generated_text;
};

// The context no longer fits the model window.
class context_overflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Token-probability source. Implementations must tolerate concurrent calls.
class token_provider {
public:
    virtual ~token_provider() = default;

    virtual token_distribution next_distribution(const generation_context & ctx) = 0;

    virtual token_id eos_token() const = 0;
    virtual std::string token_text(token_id id) const = 0;
    virtual std::size_t max_context_length() const = 0;
    virtual std::size_t count_prompt_tokens(std::string_view prompt) const = 0;

    // Number of surfaced candidates per step; 0 means the full vocabulary.
    virtual std::size_t support_size() const { return 0; }

protected:
    void check_context(const generation_context & ctx) const;
};

struct provider_profile {
    std::vector<std::string> vocabulary;  // token id = index
    token_id eos = 0;
    std::size_t max_context_length = 4096;

    token_id id_of(std::string_view text) const;  // throws std::invalid_argument when absent
};

//
// Deterministic stand-in for a language model: ordered rules keyed on the
// generated text. The first matching rule wins; otherwise the fallback applies.
//
class scripted_model {
public:
    struct rule {
        enum class match { exact, regex };
        match kind = match::exact;
        std::string pattern;
        std::regex compiled;
        token_distribution dist;
    };

    scripted_model(std::vector<rule> rules, token_distribution fallback);

    const token_distribution & lookup(std::string_view generated_text) const;
    std::span<const rule> rules() const { return rules_; }

private:
    std::vector<rule> rules_;
    token_distribution fallback_;
};

class scripted_provider : public token_provider {
public:
    struct entry {
        std::optional<std::string> prompt;  // exact prompt, or any prompt when absent
        scripted_model model;
    };

    scripted_provider(provider_profile profile, std::vector<entry> models);

    // JSON layout documented in docs/scripted-provider.md.
    static scripted_provider from_json(const nlohmann::json & j);
    static scripted_provider load(const std::string & path);

    token_distribution next_distribution(const generation_context & ctx) override;
    token_id eos_token() const override { return profile_.eos; }
    std::string token_text(token_id id) const override;
    std::size_t max_context_length() const override { return profile_.max_context_length; }
    // Whitespace-separated words.
    std::size_t count_prompt_tokens(std::string_view prompt) const override;

    const provider_profile & profile() const { return profile_; }

private:
    provider_profile profile_;
    std::vector<entry> models_;
};

struct remote_options {
    std::size_t top_n = 20;
    std::string eos_text = "</s>";
    std::size_t max_context_length = 4096;
    int timeout_ms = 30000;
    int max_retries = 3;
};

//
// Client for a completion server that reports top-N log-probabilities of the
// next token. Two response shapes are accepted:
//
//   llama.cpp  POST <base>/completion   {"completion_probabilities":[{"top_logprobs":[{"id","token","logprob"}]}]}
//   OpenAI     POST <...>/v1/completions {"choices":[{"logprobs":{"top_logprobs":[{"<text>": logprob}]}}]}
//
// The surfaced candidates are renormalized; every other token gets 0.
// Token ids are local: texts are interned into a vocabulary table.
//
class remote_provider : public token_provider {
public:
    explicit remote_provider(std::string url, remote_options options = {});

    token_distribution next_distribution(const generation_context & ctx) override;
    token_id eos_token() const override { return eos_; }
    std::string token_text(token_id id) const override;
    std::size_t max_context_length() const override { return options_.max_context_length; }
    // Rough estimate (4 bytes per token); the server owns real tokenization.
    std::size_t count_prompt_tokens(std::string_view prompt) const override;
    std::size_t support_size() const override { return options_.top_n; }

    // Parses one response body into (text, logprob) candidates.
    static std::vector<std::pair<std::string, double>> parse_candidates(const nlohmann::json & body);

private:
    token_id intern(const std::string & text);

    std::string scheme_host_;
    std::string path_;
    bool openai_ = false;
    remote_options options_;

    mutable std::mutex vocab_mutex_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, token_id> ids_;
    token_id eos_ = 0;
};

// "scripted:<file>" or "remote:<url>".
std::unique_ptr<token_provider> make_provider(std::string_view spec, const remote_options & options = {});

} // namespace rollgen
