#pragma once

#include "rollgen/report.hpp"
#include "rollgen/trie.hpp"

#include <cstddef>
#include <span>
#include <string_view>

namespace rollgen {

// Ablation variants; `strategic` is the full strategy.
enum class rollback_variant {
    strategic,          // error location unless it recurs, then highest-entropy statement
    full_restart,       // always regenerate from scratch
    error_statement,    // start of the line holding the error
    entropy_statement,  // always the highest-entropy statement
};

std::string_view to_string(rollback_variant v);
rollback_variant parse_rollback_variant(std::string_view s);

// Index of the largest entry; ties go to the earliest. Throws on an empty trace.
std::size_t max_entropy_index(std::span<const double> trace);

//
// Chooses where to roll back after a failed check.
//
// `reports` is the report history, oldest first; its last entry must be a
// failure. The error location is used when the report carries a line and
// does not repeat the previous report. Otherwise, and whenever the error
// location would not shorten the active path, the result is the start of the
// line holding the highest-entropy token of `trace` (aligned with the active
// path of `tree`).
//
rollback_point choose_rollback(std::span<const error_report> reports, std::span<const double> trace,
                               const generation_tree & tree,
                               rollback_variant variant = rollback_variant::strategic);

} // namespace rollgen
