#pragma once

#include "rollgen/analyzer.hpp"

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rollgen {

struct syntax_issue {
    std::string message;
    int lineno;
    int offset;
    bool incomplete;  // only the end of input is missing
};

struct python_outline {
    std::optional<syntax_issue> issue;
    std::vector<stmt_info> stmts;
    std::vector<std::string> top_level_kinds;
};

// Lexical syntax check and statement outline of Python source. Covers the
// common structural errors (brackets, strings, indentation, missing colons,
// juxtaposed operands, misplaced operators and keywords); it is not a full
// parser.
python_outline outline_python(std::string_view code);

//
// Scripted runtime behaviour: when `pattern` matches the code in one of
// `modes`, the run fails with `type` at the line of the first match.
//
struct fault_rule {
    std::string pattern;
    std::regex compiled;
    std::vector<analyze_mode> modes{analyze_mode::run, analyze_mode::run_tests};
    error_type type = error_type::other;
    bool report_offset = false;
    std::optional<std::string> input_pattern;  // restrict to matching test inputs
    std::optional<std::regex> input_compiled;
    std::string message;
};

fault_rule make_fault_rule(std::string pattern, error_type type, std::vector<analyze_mode> modes = {},
                           bool report_offset = false);

//
// Analyzer that honours the wire contract without executing code: syntax via
// `outline_python`, run and test outcomes via fault rules. Used by the test
// suites and as the default analyzer when no sandbox worker is configured.
//
class stub_sandbox {
public:
    stub_sandbox() = default;
    explicit stub_sandbox(std::vector<fault_rule> rules) : rules_(std::move(rules)) {}

    // {"faults": [{"pattern", "type", "modes"?, "offset"?, "input"?, "message"?}]}
    static stub_sandbox from_json(const nlohmann::json & j);
    static stub_sandbox load(const std::string & path);

    analyze_response handle(const analyze_request & request) const;

    // One request line in, one response line out. Malformed requests get an
    // {"error": ...} response.
    std::string handle_line(std::string_view line) const;

private:
    std::vector<fault_rule> rules_;
};

// wire_analyzer bound to a stub_sandbox (the stub must outlive it).
wire_analyzer make_stub_analyzer(const stub_sandbox & stub);

} // namespace rollgen
