#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rollgen {

using token_id = std::int32_t;

// Raised for failures of the machinery around generation (provider transport,
// analyzer process, corrupted state). Never used to report a code defect.
class infrastructure_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class check_result { success, failure };

enum class error_type {
    syntax,
    type_mismatch,
    declaration,
    scope,
    linking,
    timeout,
    recursion,
    division_by_zero,
    memory_access,
    index_out_of_bounds,
    resource_not_found,
    assertion_failed,
    repetition,
    other,
};

std::string_view to_string(error_type t);
std::optional<error_type> parse_error_type(std::string_view s);

// Outcome of one analysis pass. A successful report carries no type or location.
struct error_report {
    check_result result = check_result::success;
    std::optional<error_type> type;
    std::optional<int> lineno;  // 1-based
    std::optional<int> offset;  // 0-based column, in code points
    std::string message;

    static error_report ok() { return {}; }
    static error_report failure(error_type t, std::optional<int> lineno = std::nullopt,
                                std::optional<int> offset = std::nullopt, std::string message = {});

    bool failed() const { return result == check_result::failure; }
};

// Field equality on (type, lineno, offset); used to decide whether an error recurs.
bool same_error(const error_report & a, const error_report & b);

std::string describe(const error_report & r);

} // namespace rollgen
