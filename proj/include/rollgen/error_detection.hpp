#pragma once

#include "rollgen/analyzer.hpp"
#include "rollgen/report.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rollgen {

enum class language { python };

enum class check_phase { static_only, run_with_input, full_tests };

struct test_case {
    std::string input;
    std::optional<std::string> expected_output;
};

//
// Splits the generated token stream into statements. A boundary fires at a
// newline that closes a non-blank logical line: no open bracket, no open
// triple-quoted string, no trailing backslash. Compound-statement headers
// (`if x:`) end a statement of their own.
//
class statement_segmenter {
public:
    explicit statement_segmenter(language lang = language::python) : lang_(lang) {}

    // Feeds one token; true when a statement ended inside it.
    bool push(std::string_view token_text);

    // Re-derives the state from the full active text (after a rollback).
    void reset(std::string_view text);

    const std::string & pending() const { return pending_; }

private:
    bool closes_statement(std::string_view text_before_newline) const;

    language lang_;
    std::string pending_;  // text since the last boundary
};

struct detect_options {
    int timeout_ms = 2000;
    int memory_limit_mb = 256;
    // A finished program is never downgraded for ending early.
    bool final = false;
};

class error_detector {
public:
    explicit error_detector(analyzer & backend) : backend_(backend) {}

    // Analyzes `code` (accepted statements plus the newest one). Syntax errors
    // that only reflect the input ending early are downgraded to success
    // unless `options.final` is set.
    error_report detect(std::string_view code, check_phase phase, std::span<const test_case> tests,
                        const detect_options & options = {});

    // Runs of more than `threshold` consecutive same-kind statements in one block.
    error_report detect_repetition(std::string_view code, int threshold, const detect_options & options = {});

    // True when the last `detect` call downgraded an incomplete-input error.
    bool last_was_incomplete() const { return last_incomplete_; }

private:
    analyze_response call(analyze_mode mode, std::string_view code, const detect_options & options,
                          const test_case * test = nullptr);

    analyzer & backend_;
    bool last_incomplete_ = false;
};

// Repetition rule over a parsed statement list.
error_report find_repetition(std::span<const stmt_info> stmts, int threshold);

// Last line holding anything but whitespace; 0 for blank text.
int last_content_line(std::string_view code);

} // namespace rollgen
