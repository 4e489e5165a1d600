#pragma once

#include "rollgen/analyzer.hpp"
#include "rollgen/decoding.hpp"
#include "rollgen/error_detection.hpp"
#include "rollgen/provider.hpp"
#include "rollgen/rollback.hpp"
#include "rollgen/trie.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rollgen {

// How abandoned paths constrain regeneration.
enum class constraint_mode {
    decay,  // lambda^(t - r) penalties
    none,   // resample without constraints
    block,  // abandoned tokens are driven to the penalty floor
};

std::string_view to_string(constraint_mode m);
constraint_mode parse_constraint_mode(std::string_view s);

struct session_config {
    double lambda = 0.9;
    int budget_multiplier = 2;
    int max_generation_length = 512;
    sampling_policy policy;
    std::uint64_t seed = 0;
    int repeat_threshold = 5;
    int timeout_ms = 2000;
    int memory_limit_mb = 256;
    int exponent_offset = 0;
    constraint_mode constraint = constraint_mode::decay;
    rollback_variant rollback = rollback_variant::strategic;
    // Execute public test inputs after each statement once the entry point exists.
    bool run_with_input = true;

    void validate() const;  // throws std::invalid_argument
    std::size_t budget() const {
        return static_cast<std::size_t>(budget_multiplier) * static_cast<std::size_t>(max_generation_length);
    }
};

// What generation may see of a task: never the private tests.
struct generation_task {
    std::string task_id;
    std::string prompt;
    std::vector<test_case> public_tests;
    std::optional<std::string> entry_point;
};

enum class session_status { eos, budget_exhausted, infrastructure_error };

std::string_view to_string(session_status s);
std::optional<session_status> parse_session_status(std::string_view s);

struct generation_result {
    std::string final_code;
    session_status status = session_status::eos;
    std::size_t tokens_consumed = 0;
    std::size_t rollback_count = 0;
    std::vector<error_report> reports;
    std::vector<double> entropies;  // along the final active path
    std::string message;            // infrastructure failure detail
};

struct session_event {
    enum class kind { token, accepted, rejected, rollback, finished };
    kind what;
    const generation_tree & tree;
    const error_report * report = nullptr;
};

using session_observer = std::function<void(const session_event &)>;

//
// Statement-by-statement generation with incremental checks, rollback and
// constrained regeneration. Stops at an accepted EOS or when the token budget
// (rolled-back tokens included) runs out.
//
generation_result generate(const generation_task & task, token_provider & provider, analyzer & backend,
                           const session_config & config, const session_observer & observer = {});

// Unchecked sampling up to EOS or `token_limit` tokens.
generation_result generate_plain(const generation_task & task, token_provider & provider,
                                 const sampling_policy & policy, std::uint64_t seed, std::size_t token_limit);

// True when `code` has a top-level `def name(`.
bool defines_function(std::string_view code, std::string_view name);

} // namespace rollgen
