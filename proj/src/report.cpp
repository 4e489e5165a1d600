#include "rollgen/report.hpp"

#include <array>
#include <utility>

namespace rollgen {

namespace {

constexpr std::array<std::pair<error_type, std::string_view>, 14> k_error_names = {{
    {error_type::syntax, "syntax"},
    {error_type::type_mismatch, "type_mismatch"},
    {error_type::declaration, "declaration"},
    {error_type::scope, "scope"},
    {error_type::linking, "linking"},
    {error_type::timeout, "timeout"},
    {error_type::recursion, "recursion"},
    {error_type::division_by_zero, "division_by_zero"},
    {error_type::memory_access, "memory_access"},
    {error_type::index_out_of_bounds, "index_out_of_bounds"},
    {error_type::resource_not_found, "resource_not_found"},
    {error_type::assertion_failed, "assertion_failed"},
    {error_type::repetition, "repetition"},
    {error_type::other, "other"},
}};

} // namespace

std::string_view to_string(error_type t) {
    for (const auto & [type, name] : k_error_names) {
        if (type == t) {
            return name;
        }
    }
    return "other";
}

std::optional<error_type> parse_error_type(std::string_view s) {
    for (const auto & [type, name] : k_error_names) {
        if (name == s) {
            return type;
        }
    }
    return std::nullopt;
}

error_report error_report::failure(error_type t, std::optional<int> lineno, std::optional<int> offset,
                                   std::string message) {
    error_report r;
    r.result  = check_result::failure;
    r.type    = t;
    r.lineno  = lineno;
    r.offset  = offset;
    r.message = std::move(message);
    return r;
}

bool same_error(const error_report & a, const error_report & b) {
    return a.result == b.result && a.type == b.type && a.lineno == b.lineno && a.offset == b.offset;
}

std::string describe(const error_report & r) {
    if (!r.failed()) {
        return "success";
    }
    std::string out = "failure ";
    out += to_string(r.type.value_or(error_type::other));
    if (r.lineno) {
        out += " at " + std::to_string(*r.lineno);
        if (r.offset) {
            out += ":" + std::to_string(*r.offset);
        }
    }
    if (!r.message.empty()) {
        out += " (" + r.message + ")";
    }
    return out;
}

} // namespace rollgen
