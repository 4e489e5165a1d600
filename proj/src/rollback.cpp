#include "rollgen/rollback.hpp"

#include <stdexcept>
#include <string>

namespace rollgen {

std::string_view to_string(rollback_variant v) {
    switch (v) {
        case rollback_variant::strategic:         return "strategic";
        case rollback_variant::full_restart:      return "full_restart";
        case rollback_variant::error_statement:   return "error_statement";
        case rollback_variant::entropy_statement: return "entropy_statement";
    }
    return "strategic";
}

rollback_variant parse_rollback_variant(std::string_view s) {
    for (auto v : {rollback_variant::strategic, rollback_variant::full_restart, rollback_variant::error_statement,
                   rollback_variant::entropy_statement}) {
        if (to_string(v) == s) {
            return v;
        }
    }
    throw std::invalid_argument("unknown rollback variant '" + std::string(s) + "'");
}

std::size_t max_entropy_index(std::span<const double> trace) {
    if (trace.empty()) {
        throw std::invalid_argument("entropy trace is empty");
    }
    std::size_t best = 0;
    for (std::size_t t = 1; t < trace.size(); ++t) {
        if (trace[t] > trace[best]) {
            best = t;
        }
    }
    return best;
}

namespace {

bool shortens_path(const generation_tree & tree, rollback_point r) {
    try {
        return tree.locate(r) != tree.current();
    } catch (const std::out_of_range &) {
        return false;
    }
}

rollback_point entropy_point(std::span<const double> trace, const generation_tree & tree) {
    const std::size_t t = max_entropy_index(trace);
    return rollback_point{tree.token_index_to_lineno(t), 0};
}

} // namespace

rollback_point choose_rollback(std::span<const error_report> reports, std::span<const double> trace,
                               const generation_tree & tree, rollback_variant variant) {
    if (reports.empty() || !reports.back().failed()) {
        throw std::logic_error("choose_rollback: the last report must be a failure");
    }
    if (tree.active_length() == 0) {
        throw infrastructure_error("choose_rollback: nothing has been generated");
    }
    if (trace.size() != tree.active_length()) {
        throw std::invalid_argument("choose_rollback: entropy trace does not match the active path");
    }

    const error_report & last = reports.back();

    switch (variant) {
        case rollback_variant::full_restart:
            return rollback_point{1, 0};
        case rollback_variant::entropy_statement:
            return entropy_point(trace, tree);
        case rollback_variant::error_statement:
            if (last.lineno && shortens_path(tree, {*last.lineno, 0})) {
                return rollback_point{*last.lineno, 0};
            }
            return entropy_point(trace, tree);
        case rollback_variant::strategic:
            break;
    }

    const bool recurs = reports.size() >= 2 && same_error(last, reports[reports.size() - 2]);
    if (last.lineno && !recurs) {
        const rollback_point at_error{*last.lineno, last.offset.value_or(0)};
        if (shortens_path(tree, at_error)) {
            return at_error;
        }
    }

    const rollback_point by_entropy = entropy_point(trace, tree);
    if (recurs && last.lineno && by_entropy == rollback_point{*last.lineno, last.offset.value_or(0)}) {
        // The previous attempt already restarted here; look for the most
        // uncertain token in the lines before it.
        std::size_t limit = 0;
        while (limit < trace.size() && tree.token_index_to_lineno(limit) < by_entropy.lineno) {
            ++limit;
        }
        if (limit > 0) {
            return entropy_point(trace.first(limit), tree);
        }
    }
    return by_entropy;
}

} // namespace rollgen
