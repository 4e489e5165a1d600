#include "rollgen/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rollgen {

std::string_view to_string(constraint_mode m) {
    switch (m) {
        case constraint_mode::decay: return "decay";
        case constraint_mode::none:  return "none";
        case constraint_mode::block: return "block";
    }
    return "decay";
}

constraint_mode parse_constraint_mode(std::string_view s) {
    for (auto m : {constraint_mode::decay, constraint_mode::none, constraint_mode::block}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw std::invalid_argument("unknown constraint mode '" + std::string(s) + "'");
}

std::string_view to_string(session_status s) {
    switch (s) {
        case session_status::eos:                  return "eos";
        case session_status::budget_exhausted:     return "budget_exhausted";
        case session_status::infrastructure_error: return "infrastructure_error";
    }
    return "eos";
}

std::optional<session_status> parse_session_status(std::string_view s) {
    for (auto v : {session_status::eos, session_status::budget_exhausted, session_status::infrastructure_error}) {
        if (to_string(v) == s) {
            return v;
        }
    }
    return std::nullopt;
}

void session_config::validate() const {
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw std::invalid_argument("lambda must lie in (0, 1)");
    }
    if (budget_multiplier < 1) {
        throw std::invalid_argument("budget multiplier must be >= 1");
    }
    if (max_generation_length < 1) {
        throw std::invalid_argument("max generation length must be >= 1");
    }
    if (repeat_threshold < 1) {
        throw std::invalid_argument("repetition threshold must be >= 1");
    }
    if (timeout_ms < 1 || memory_limit_mb < 1) {
        throw std::invalid_argument("timeout and memory limit must be positive");
    }
}

bool defines_function(std::string_view code, std::string_view name) {
    std::size_t pos = 0;
    while (pos <= code.size()) {
        const std::size_t nl = code.find('\n', pos);
        std::string_view line = code.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (line.starts_with("async ")) {
            line.remove_prefix(6);
            while (line.starts_with(' ')) {
                line.remove_prefix(1);
            }
        }
        if (line.starts_with("def ")) {
            line.remove_prefix(4);
            while (line.starts_with(' ')) {
                line.remove_prefix(1);
            }
            if (line.starts_with(name)) {
                line.remove_prefix(name.size());
                while (line.starts_with(' ')) {
                    line.remove_prefix(1);
                }
                if (line.starts_with('(')) {
                    return true;
                }
            }
        }
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }
    return false;
}

namespace {

class session {
public:
    session(const generation_task & task, token_provider & provider, analyzer & backend, const session_config & config,
            const session_observer & observer)
        : task_(task), provider_(provider), detector_(backend), config_(config), observer_(observer),
          sampler_(config.policy, config.seed) {}

    generation_result run() {
        generation_result result;
        result.status = session_status::budget_exhausted;
        try {
            result.status = loop();
        } catch (const context_overflow & e) {
            result.status  = session_status::budget_exhausted;
            result.message = e.what();
        } catch (const infrastructure_error & e) {
            result.status  = session_status::infrastructure_error;
            result.message = e.what();
        }
        result.final_code      = tree_.final_code();
        result.tokens_consumed = tree_.total_tokens_emitted();
        result.rollback_count  = tree_.rollback_count();
        result.reports.assign(tree_.reports().begin(), tree_.reports().end());
        result.entropies = tree_.entropy_trace();
        notify(session_event::kind::finished);
        return result;
    }

private:
    session_status loop() {
        const std::size_t budget = config_.budget();
        while (true) {
            if (tree_.total_tokens_emitted() >= budget) {
                return session_status::budget_exhausted;
            }

            const generation_context ctx{task_.prompt, tokens_, tree_.active_text()};
            const token_distribution dist        = provider_.next_distribution(ctx);
            const token_distribution constrained = constrain(dist, tree_.child_penalty_vector(tree_.current()));
            const token_id tok                   = sampler_.sample(constrained);
            const std::string text               = provider_.token_text(tok);

            tree_.append_token(tok, text, entropy(dist));
            tokens_.push_back(tok);
            notify(session_event::kind::token);

            const bool eos = tok == provider_.eos_token();
            if (!eos && !segmenter_.push(text)) {
                continue;
            }

            const error_report report = eos ? final_check() : statement_check();
            tree_.add_report(report);
            if (!report.failed()) {
                notify(session_event::kind::accepted, &report);
                if (eos) {
                    return session_status::eos;
                }
                tree_.mark_statement();
                continue;
            }

            notify(session_event::kind::rejected, &report);
            if (tree_.total_tokens_emitted() >= budget) {
                return session_status::budget_exhausted;
            }
            roll_back();
            notify(session_event::kind::rollback, &report);
        }
    }

    detect_options options(bool final) const {
        detect_options o;
        o.timeout_ms      = config_.timeout_ms;
        o.memory_limit_mb = config_.memory_limit_mb;
        o.final           = final;
        return o;
    }

    error_report statement_check() {
        const std::string & code = tree_.active_text();
        const bool execute = config_.run_with_input && !task_.public_tests.empty() && task_.entry_point &&
                             defines_function(code, *task_.entry_point);
        const auto opts = options(false);

        error_report report = detector_.detect(code, execute ? check_phase::run_with_input : check_phase::static_only,
                                               task_.public_tests, opts);
        if (!report.failed() && !detector_.last_was_incomplete()) {
            report = detector_.detect_repetition(code, config_.repeat_threshold, opts);
        }
        return report;
    }

    error_report final_check() {
        const std::string & code = tree_.active_text();
        const auto & tests       = task_.public_tests;
        const bool has_outputs   = std::any_of(tests.begin(), tests.end(),
                                               [](const test_case & t) { return t.expected_output.has_value(); });
        check_phase phase = check_phase::static_only;
        if (has_outputs) {
            phase = check_phase::full_tests;
        } else if (!tests.empty() && config_.run_with_input) {
            phase = check_phase::run_with_input;
        }

        const auto opts     = options(true);
        error_report report = detector_.detect(code, check_phase::static_only, tests, opts);
        if (!report.failed()) {
            report = detector_.detect_repetition(code, config_.repeat_threshold, opts);
        }
        if (!report.failed() && phase != check_phase::static_only) {
            report = detector_.detect(code, phase, tests, opts);
        }
        return report;
    }

    void roll_back() {
        const std::vector<double> trace = tree_.entropy_trace();
        const rollback_point r          = choose_rollback(tree_.reports(), trace, tree_, config_.rollback);
        const node_id r_node            = tree_.rollback_to(r);
        tokens_.resize(tree_.active_length());
        segmenter_.reset(tree_.active_text());

        switch (config_.constraint) {
            case constraint_mode::decay:
                if (!tree_.last_abandoned().empty()) {
                    tree_.apply_penalties(r_node, config_.lambda, config_.exponent_offset);
                }
                break;
            case constraint_mode::block:
                tree_.block_abandoned(r_node);
                break;
            case constraint_mode::none:
                break;
        }
    }

    void notify(session_event::kind what, const error_report * report = nullptr) {
        if (observer_) {
            observer_(session_event{what, tree_, report});
        }
    }

    const generation_task & task_;
    token_provider & provider_;
    error_detector detector_;
    const session_config & config_;
    const session_observer & observer_;
    token_sampler sampler_;
    generation_tree tree_;
    statement_segmenter segmenter_;
    std::vector<token_id> tokens_;
};

} // namespace

generation_result generate(const generation_task & task, token_provider & provider, analyzer & backend,
                           const session_config & config, const session_observer & observer) {
    config.validate();
    session s(task, provider, backend, config, observer);
    return s.run();
}

generation_result generate_plain(const generation_task & task, token_provider & provider,
                                 const sampling_policy & policy, std::uint64_t seed, std::size_t token_limit) {
    generation_result result;
    result.status = session_status::budget_exhausted;
    token_sampler sampler(policy, seed);
    std::vector<token_id> tokens;
    try {
        while (tokens.size() < token_limit) {
            const generation_context ctx{task.prompt, tokens, result.final_code};
            const token_distribution dist = provider.next_distribution(ctx);
            const token_id tok            = sampler.sample(dist);
            tokens.push_back(tok);
            result.entropies.push_back(entropy(dist));
            if (tok == provider.eos_token()) {
                result.status = session_status::eos;
                break;
            }
            result.final_code += provider.token_text(tok);
        }
    } catch (const context_overflow & e) {
        result.status  = session_status::budget_exhausted;
        result.message = e.what();
    } catch (const infrastructure_error & e) {
        result.status  = session_status::infrastructure_error;
        result.message = e.what();
    }
    result.tokens_consumed = tokens.size();
    return result;
}

} // namespace rollgen
